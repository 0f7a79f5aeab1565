//! Brascamp-Lieb data, the adjoint exponent relation and the gaussian prefactor.

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A number given either as a JSON float or as an exact rational string such as `"2/3"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    pub fn exact(&self) -> Result<Option<Ratio<i64>>> {
        match self {
            Scalar::Num(x) => {
                if x.fract() == 0.0 && x.abs() < 1e15 {
                    Ok(Some(Ratio::from_integer(*x as i64)))
                } else {
                    Ok(None)
                }
            }
            Scalar::Text(s) => parse_ratio(s).map(Some),
        }
    }

    pub fn value(&self) -> Result<f64> {
        match self {
            Scalar::Num(x) => Ok(*x),
            Scalar::Text(s) => {
                let r = parse_ratio(s)?;
                Ok(*r.numer() as f64 / *r.denom() as f64)
            }
        }
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Num(x)
    }
}

pub fn parse_ratio(s: &str) -> Result<Ratio<i64>> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Ratio::new(n, d))
        }
        None => s.parse::<i64>().map(Ratio::from_integer).map_err(|_| bad()),
    }
}

/// JSON form of a datum: `{"maps": [[[row], ...], ...], "c": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatumSpec {
    pub maps: Vec<Vec<Vec<Scalar>>>,
    pub c: Vec<Scalar>,
}

#[derive(Debug, Clone)]
pub struct BlDatum {
    maps: Vec<DMatrix<f64>>,
    c: Vec<f64>,
    c_exact: Option<Vec<Ratio<i64>>>,
    dim: usize,
}

impl BlDatum {
    pub fn new(maps: Vec<DMatrix<f64>>, c: Vec<f64>) -> Result<Self> {
        Self::build(maps, c, None)
    }

    pub fn with_exact_exponents(maps: Vec<DMatrix<f64>>, c: Vec<Ratio<i64>>) -> Result<Self> {
        let cf = c.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
        Self::build(maps, cf, Some(c))
    }

    fn build(maps: Vec<DMatrix<f64>>, c: Vec<f64>, c_exact: Option<Vec<Ratio<i64>>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidDatum("need at least one map".into()));
        }
        if maps.len() != c.len() {
            return Err(Error::InvalidDatum(format!("{} maps but {} exponents", maps.len(), c.len())));
        }
        let dim = maps[0].ncols();
        if dim == 0 {
            return Err(Error::InvalidDatum("ambient dimension is zero".into()));
        }
        for (i, b) in maps.iter().enumerate() {
            if b.ncols() != dim {
                return Err(Error::DimensionMismatch { index: i, cols: b.ncols(), dim });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDatum(format!("map {i} has non-finite entries")));
            }
            let r = linalg::rank(b);
            if b.nrows() == 0 || r < b.nrows() {
                return Err(Error::NotSurjective { index: i, rank: r, rows: b.nrows() });
            }
        }
        for (i, &ci) in c.iter().enumerate() {
            if !(ci > 0.0 && ci.is_finite()) {
                return Err(Error::InvalidDatum(format!("exponent c_{i} = {ci} is not positive")));
            }
        }
        Ok(BlDatum { maps, c, c_exact, dim })
    }

    pub fn from_spec(spec: &DatumSpec) -> Result<Self> {
        let mut maps = Vec::with_capacity(spec.maps.len());
        for (i, rows) in spec.maps.iter().enumerate() {
            let nr = rows.len();
            let nc = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != nc) {
                return Err(Error::InvalidDatum(format!("map {i} has ragged rows")));
            }
            let mut m = DMatrix::zeros(nr, nc);
            for (r, row) in rows.iter().enumerate() {
                for (col, x) in row.iter().enumerate() {
                    m[(r, col)] = x.value()?;
                }
            }
            maps.push(m);
        }
        let exact: Option<Vec<Ratio<i64>>> = spec
            .c
            .iter()
            .map(|s| s.exact())
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        match exact {
            Some(e) => Self::with_exact_exponents(maps, e),
            None => Self::new(maps, spec.c.iter().map(|s| s.value()).collect::<Result<_>>()?),
        }
    }

    pub fn to_spec(&self) -> DatumSpec {
        let maps = self
            .maps
            .iter()
            .map(|m| (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| Scalar::Num(m[(r, c)])).collect()).collect())
            .collect();
        let c = match &self.c_exact {
            Some(e) => e
                .iter()
                .map(|r| {
                    if *r.denom() == 1 {
                        Scalar::Num(*r.numer() as f64)
                    } else {
                        Scalar::Text(format!("{}/{}", r.numer(), r.denom()))
                    }
                })
                .collect(),
            None => self.c.iter().map(|&x| Scalar::Num(x)).collect(),
        };
        DatumSpec { maps, c }
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn exponents(&self) -> &[f64] {
        &self.c
    }

    pub fn exact_exponents(&self) -> Option<&[Ratio<i64>]> {
        self.c_exact.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn target_dims(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.nrows()).collect()
    }

    /// `d - sum c_i d_i`; zero when the scaling condition holds.
    pub fn scaling_defect(&self) -> f64 {
        self.dim as f64 - self.c.iter().zip(&self.maps).map(|(c, b)| c * b.nrows() as f64).sum::<f64>()
    }

    pub fn scaling_holds(&self) -> bool {
        match &self.c_exact {
            Some(e) => {
                let s: Ratio<i64> = e.iter().zip(&self.maps).map(|(c, b)| c * Ratio::from_integer(b.nrows() as i64)).sum();
                s == Ratio::from_integer(self.dim as i64)
            }
            None => self.scaling_defect().abs() <= 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Every tested subspace passed; the family is not exhaustive.
    FeasibleHeuristic,
    Infeasible,
    /// A numerical rank was too close to call.
    Undetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceTest {
    pub label: String,
    pub dim: usize,
    pub weighted: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub scaling_ok: bool,
    pub tested_subspaces: Vec<SubspaceTest>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy)]
pub struct FeasibilityOptions {
    pub n_random: usize,
    pub seed: u64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        FeasibilityOptions { n_random: 8, seed: 0 }
    }
}

/// Checks the scaling condition and `dim V <= sum c_i dim(B_i V)` on a fixed family of subspaces.
pub fn validate_datum(datum: &BlDatum, opts: FeasibilityOptions) -> FeasibilityReport {
    let d = datum.dim();
    let mut family: Vec<(String, DMatrix<f64>)> = Vec::new();
    family.push(("zero".into(), DMatrix::zeros(d, 0)));
    family.push(("whole".into(), DMatrix::identity(d, d)));
    let kernels: Vec<DMatrix<f64>> = datum.maps().iter().map(linalg::kernel).collect();
    for (i, k) in kernels.iter().enumerate() {
        family.push((format!("ker{i}"), k.clone()));
    }
    for i in 0..kernels.len() {
        for j in i + 1..kernels.len() {
            family.push((format!("ker{i}&ker{j}"), linalg::intersect(&kernels[i], &kernels[j])));
        }
    }
    let subsets: Vec<Vec<usize>> = if d <= 8 {
        (1..(1usize << d) - 1).map(|mask| (0..d).filter(|j| mask >> j & 1 == 1).collect()).collect()
    } else {
        (0..d).flat_map(|j| [vec![j], (0..d).filter(|&l| l != j).collect()]).collect()
    };
    for s in subsets {
        let mut basis = DMatrix::zeros(d, s.len());
        for (col, &j) in s.iter().enumerate() {
            basis[(j, col)] = 1.0;
        }
        let label = format!("coord{}", s.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(","));
        family.push((label, basis));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for m in 1..d {
        for r in 0..opts.n_random {
            family.push((format!("random{m}.{r}"), linalg::haar_frame(&mut rng, d, m)));
        }
    }

    let mut ambiguous = false;
    let mut tested = Vec::with_capacity(family.len());
    for (label, basis) in family {
        let dim_v = basis.ncols();
        let mut weighted = 0.0;
        for (b, c) in datum.maps().iter().zip(datum.exponents()) {
            if dim_v == 0 {
                continue;
            }
            let img = b * &basis;
            let s = linalg::singular_values(&img);
            let smax = s.iter().cloned().fold(0.0, f64::max);
            let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let r = if smax <= 1e-12 * scale { 0 } else { s.iter().filter(|&&x| x > linalg::RANK_TOL * smax).count() };
            if smax > 0.0 && s.iter().any(|&x| x > linalg::RANK_TOL * smax && x < 1e-6 * smax) {
                ambiguous = true;
            }
            weighted += c * r as f64;
        }
        let pass = dim_v as f64 <= weighted + 1e-9;
        tested.push(SubspaceTest { label, dim: dim_v, weighted, pass });
    }
    let scaling_ok = datum.scaling_holds();
    let verdict = if !scaling_ok || tested.iter().any(|t| !t.pass) {
        Verdict::Infeasible
    } else if ambiguous {
        Verdict::Undetermined
    } else {
        Verdict::FeasibleHeuristic
    };
    FeasibilityReport { scaling_ok, tested_subspaces: tested, verdict }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjointParams {
    pub theta: Vec<f64>,
    pub p: f64,
    pub p_i: Vec<f64>,
    pub mode: Mode,
}

impl AdjointParams {
    /// Largest residual of `c_i (1 - 1/p) = theta_i (1 - 1/p_i)`.
    pub fn residual(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(&self.theta)
            .zip(&self.p_i)
            .map(|((ci, ti), pi)| (ci * (1.0 - 1.0 / self.p) - ti * (1.0 - 1.0 / pi)).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `c_i (1 - 1/p) = theta_i (1 - 1/p_i)` for each `p_i`.
pub fn derive_adjoint_exponents(datum: &BlDatum, theta: &[f64], p: f64, mode: Mode) -> Result<AdjointParams> {
    adjoint_exponents(datum.exponents(), theta, p, mode)
}

/// [`derive_adjoint_exponents`] from the exponents alone, for group data.
pub fn adjoint_exponents(c: &[f64], theta: &[f64], p: f64, mode: Mode) -> Result<AdjointParams> {
    if theta.len() != c.len() {
        return Err(Error::InvalidParams(format!("{} weights for {} maps", theta.len(), c.len())));
    }
    let sum: f64 = theta.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParams(format!("weights sum to {sum}, not 1")));
    }
    match mode {
        Mode::Forward => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParams(format!("forward mode needs 0 < p <= 1, got {p}")));
            }
            if let Some(i) = theta.iter().position(|&t| !(t > 0.0)) {
                return Err(Error::ParameterDomain { index: i, reason: "forward mode needs theta_i > 0".into() });
            }
        }
        Mode::Reverse => {
            if !(p >= 1.0) {
                return Err(Error::InvalidParams(format!("reverse mode needs p >= 1, got {p}")));
            }
            if theta.iter().filter(|&&t| t > 0.0).count() != 1 {
                return Err(Error::InvalidParams("reverse mode needs exactly one positive weight".into()));
            }
            if let Some(i) = theta.iter().position(|&t| t == 0.0 || !t.is_finite()) {
                return Err(Error::ParameterDomain { index: i, reason: "weight must be nonzero".into() });
            }
        }
    }
    let inv_p = 1.0 / p;
    let mut p_i = Vec::with_capacity(c.len());
    for (i, (&ci, &ti)) in c.iter().zip(theta).enumerate() {
        let denom = 1.0 + (ci / ti) * (inv_p - 1.0);
        let pi = if denom > 0.0 {
            1.0 / denom
        } else if denom == 0.0 && mode == Mode::Reverse {
            f64::INFINITY
        } else {
            return Err(Error::ParameterDomain { index: i, reason: format!("p_{i} is not positive (1/p_{i} = {denom})") });
        };
        if mode == Mode::Forward && !(pi > 0.0 && pi <= 1.0 + 1e-15) {
            return Err(Error::ParameterDomain { index: i, reason: format!("p_{i} = {pi} outside (0,1]") });
        }
        p_i.push(if mode == Mode::Forward { pi.min(1.0) } else { pi });
    }
    Ok(AdjointParams { theta: theta.to_vec(), p, p_i, mode })
}

/// `x^e` in log form with the convention `0^0 = inf^0 = 1`.
fn log_pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * x.ln()
    }
}

/// `p^{-d/2p} prod p_i^{theta_i d_i / 2 p_i}`.
pub fn adjoint_gaussian_prefactor(params: &AdjointParams, dims: &[usize], d: usize) -> f64 {
    log_adjoint_gaussian_prefactor(params, dims, d).exp()
}

pub fn log_adjoint_gaussian_prefactor(params: &AdjointParams, dims: &[usize], d: usize) -> f64 {
    let p = params.p;
    let mut acc = log_pow(p, -(d as f64) / (2.0 * p));
    for ((&ti, &pi), &di) in params.theta.iter().zip(&params.p_i).zip(dims) {
        acc += log_pow(pi, ti * di as f64 / (2.0 * pi));
    }
    acc
}
