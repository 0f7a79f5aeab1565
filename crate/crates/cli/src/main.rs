use anyhow::{bail, Context, Result};
use blq_core::report::RunReport;
use blq_core::scenario::Scenario;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "blq", version, about = "Run Brascamp-Lieb scenario files and write JSON/CSV reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario. A bare name such as `c01` is looked up as `scenarios/c01.json`.
    Run {
        scenario: PathBuf,
        /// Output directory (default `blq-out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the task's primary tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run every `*.json` scenario in a directory and print a summary table.
    Suite {
        dir: PathBuf,
        /// Reports go to `<out>/<name>/` (default `blq-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.extension().is_some() {
        return path.to_path_buf();
    }
    Path::new("scenarios").join(path).with_extension("json")
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BLQ_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("BLQ_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("BLQ_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

/// Parses, runs and writes one scenario; a scenario that fails to parse still gets a
/// report carrying the error.
fn run_one(path: &Path, out: &Path, seed: Option<u64>, tol: Option<f64>) -> Result<(RunReport, f64)> {
    let start = Instant::now();
    let report = match Scenario::from_path(path) {
        Ok(mut s) => {
            if seed.is_some() {
                s.seed = seed;
            }
            if tol.is_some() {
                s.tol = tol;
            }
            s.run()
        }
        Err(e) => {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            let mut r = RunReport::new(name, "unknown", seed, serde_json::Value::Null);
            r.error = Some(e.to_string());
            r.finish();
            r
        }
    };
    let secs = start.elapsed().as_secs_f64();
    report.write_to(out).with_context(|| format!("writing report to {}", out.display()))?;
    // wall time is kept out of report.json so reruns are byte-identical
    std::fs::write(out.join("timing.json"), format!("{{\"wall_seconds\": {secs:.3}}}\n"))?;
    Ok((report, secs))
}

fn summary(report: &RunReport) -> String {
    let failed: Vec<&str> = report.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
    match (&report.error, failed.is_empty()) {
        (Some(e), _) => format!("ERROR {e}"),
        (None, true) => format!("{} assertion(s) passed", report.assertions.len()),
        (None, false) => format!("failed: {}", failed.join("; ")),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("blq: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Run { scenario, out, seed, tol } => {
            let path = resolve(&scenario);
            if !path.exists() {
                bail!("no scenario at {}", path.display());
            }
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
            let out = out.unwrap_or_else(|| Path::new("blq-out").join(&name));
            let (report, secs) = run_one(&path, &out, seed, tol)?;
            let status = if report.pass { "PASS" } else { "FAIL" };
            println!("{status} {} ({}) {}", report.name, report.task, summary(&report));
            eprintln!("wall time {secs:.2} s; report in {}", out.display());
            Ok(report.pass)
        }
        Command::Suite { dir, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from("blq-out"));
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .filter(|p| !p.to_string_lossy().ends_with(".schema.json"))
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("no scenario files in {}", dir.display());
            }
            println!("{:<28} {:<18} {:<6} {:>9}  detail", "scenario", "task", "status", "seconds");
            let mut all = true;
            for f in &files {
                let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
                let (report, secs) = run_one(f, &out.join(name), None, None)?;
                all &= report.pass;
                let status = if report.pass { "PASS" } else { "FAIL" };
                println!("{:<28} {:<18} {:<6} {:>9.2}  {}", report.name, report.task, status, secs, summary(&report));
            }
            Ok(all)
        }
    }
}
