//! Non-negative functions on uniform box grids: mass-deposit pushforwards, L^p
//! quasi-norms and direct checks of the forward and reverse adjoint inequalities.
//!
//! Values are cell samples in row-major order (last axis fastest). A grid function
//! is read as the piecewise-constant function on its cells.

use crate::datum::{AdjointParams, BlDatum, Mode};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

/// Values below this are treated as zero wherever a negative power is taken.
pub const FLUSH: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != n.len() {
            return Err(Error::InvalidGrid("box bounds and resolution must have equal, positive length".into()));
        }
        for a in 0..lo.len() {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() || n[a] == 0 {
                return Err(Error::InvalidGrid(format!("axis {a}: need lo < hi and n > 0")));
            }
        }
        Ok(GridSpec { lo, hi, n })
    }

    pub fn cube(d: usize, lo: f64, hi: f64, n: usize) -> Self {
        GridSpec::new(vec![lo; d], vec![hi; d], vec![n; d]).expect("valid cube")
    }

    /// Default box for gaussian inputs: `[-8, 8]^d`, 256 cells per axis for `d <= 2`, else 64.
    pub fn default_for(d: usize) -> Self {
        GridSpec::cube(d, -8.0, 8.0, if d <= 2 { 256 } else { 64 })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| (self.hi[a] - self.lo[a]) / self.n[a] as f64).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn refined(&self) -> GridSpec {
        GridSpec { lo: self.lo.clone(), hi: self.hi.clone(), n: self.n.iter().map(|n| 2 * n).collect() }
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.n[a];
            idx /= self.n[a];
        }
    }

    pub fn center_of(&self, multi: &[usize], out: &mut [f64]) {
        for a in 0..self.dim() {
            let h = (self.hi[a] - self.lo[a]) / self.n[a] as f64;
            out[a] = self.lo[a] + (multi[a] as f64 + 0.5) * h;
        }
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mut m = vec![0; self.dim()];
        let mut x = vec![0.0; self.dim()];
        self.unravel(idx, &mut m);
        self.center_of(&m, &mut x);
        x
    }

    /// Flat index of the cell containing `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim() {
            let t = (x[a] - self.lo[a]) / (self.hi[a] - self.lo[a]) * self.n[a] as f64;
            if !(t >= 0.0) || t >= self.n[a] as f64 {
                return None;
            }
            idx = idx * self.n[a] + t as usize;
        }
        Some(idx)
    }

    /// Target grid for the image under `B`. A row with one nonzero coefficient reuses the
    /// scaled source axis, so centers map to centers; any other row gets bins as wide as the
    /// projected cell diagonal plus one padding bin per side.
    pub fn image_grid(&self, b: &DMatrix<f64>) -> GridSpec {
        let widths = self.widths();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut n = Vec::new();
        for r in 0..b.nrows() {
            let row: Vec<f64> = (0..b.ncols()).map(|c| b[(r, c)]).collect();
            let nz: Vec<usize> = (0..row.len()).filter(|&c| row[c] != 0.0).collect();
            if let Some(j) = single_axis(&row) {
                let (a, z) = (row[j] * self.lo[j], row[j] * self.hi[j]);
                lo.push(a.min(z));
                hi.push(a.max(z));
                n.push(self.n[j]);
                continue;
            }
            let (mut m0, mut m1, mut h2) = (0.0, 0.0, 0.0);
            for &c in &nz {
                let (a, z) = (row[c] * self.lo[c], row[c] * self.hi[c]);
                m0 += a.min(z);
                m1 += a.max(z);
                h2 += (widths[c] * row[c]).powi(2);
            }
            let h = h2.sqrt();
            let cells = ((m1 - m0) / h).ceil() as usize + 2;
            lo.push(m0 - h);
            hi.push(m0 - h + cells as f64 * h);
            n.push(cells);
        }
        GridSpec { lo, hi, n }
    }
}

fn single_axis(row: &[f64]) -> Option<usize> {
    let mut nz = (0..row.len()).filter(|&c| row[c] != 0.0);
    match (nz.next(), nz.next()) {
        (Some(j), None) => Some(j),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!("{} values for {} cells", values.len(), spec.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidGrid(format!("value at cell {i} is negative or not finite: {}", values[i])));
        }
        Ok(GridFunction { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        GridFunction { spec, values: vec![0.0; n] }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = spec.dim();
        let mut m = vec![0; d];
        let mut x = vec![0.0; d];
        let values = (0..spec.len())
            .map(|i| {
                spec.unravel(i, &mut m);
                spec.center_of(&m, &mut x);
                f(&x)
            })
            .collect();
        GridFunction::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spec.cell_volume()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        GridFunction { spec: self.spec.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// Same piecewise-constant function on the grid with every cell split in two per axis.
    pub fn refined(&self) -> GridFunction {
        let spec = self.spec.refined();
        let d = spec.dim();
        let mut m = vec![0; d];
        let values = (0..spec.len())
            .map(|i| {
                spec.unravel(i, &mut m);
                let mut src = 0;
                for a in 0..d {
                    src = src * self.spec.n[a] + m[a] / 2;
                }
                self.values[src]
            })
            .collect();
        GridFunction { spec, values }
    }

    /// Flat view as a matrix for `d = 2` (rows = first axis).
    pub fn as_matrix(&self) -> Option<DMatrix<f64>> {
        (self.dim() == 2).then(|| DMatrix::from_row_slice(self.spec.n[0], self.spec.n[1], &self.values))
    }
}

/// Pushforward of the piecewise-constant `f` under `B`, as a density on `target`.
///
/// When every row of `B` reads one source axis and the matching target axis is that axis
/// scaled, cell centers land on target centers and each cell's mass is deposited whole.
/// Otherwise each cell is split into sub-cells whose images are at most half a target bin
/// apart, and each sub-cell's mass is shared among neighbouring bins with multilinear
/// (cloud-in-cell) weights.
pub fn grid_pushforward(f: &GridFunction, b: &DMatrix<f64>, target: &GridSpec) -> Result<GridFunction> {
    let d = f.dim();
    let k = b.nrows();
    if b.ncols() != d || k != target.dim() {
        return Err(Error::InvalidGrid(format!(
            "map is {}x{}, source dimension {d}, target dimension {}",
            b.nrows(),
            b.ncols(),
            target.dim()
        )));
    }
    let spec = f.spec();
    let widths = spec.widths();
    let tw = target.widths();
    let aligned = (0..k).all(|r| {
        let row: Vec<f64> = (0..d).map(|c| b[(r, c)]).collect();
        single_axis(&row).is_some_and(|j| {
            let (a, z) = (row[j] * spec.lo[j], row[j] * spec.hi[j]);
            let tol = 1e-12 * (spec.hi[j] - spec.lo[j]).abs() * row[j].abs();
            target.n[r] == spec.n[j] && (target.lo[r] - a.min(z)).abs() <= tol && (target.hi[r] - a.max(z)).abs() <= tol
        })
    });
    // sub-cells per source axis
    let sub: Vec<usize> = (0..d)
        .map(|c| {
            if aligned {
                return 1;
            }
            let s = (0..k).map(|r| 2.0 * (b[(r, c)] * widths[c]).abs() / tw[r]).fold(1.0, f64::max);
            (s.ceil() as usize).min(64)
        })
        .collect();
    let nsub: usize = sub.iter().product();
    let vol = spec.cell_volume();
    let mut out = vec![0.0; target.len()];
    let mut escaped = 0.0;
    let mut total = 0.0;
    let mut m = vec![0; d];
    let mut x = vec![0.0; d];
    let mut sm = vec![0; d];
    let mut y = vec![0.0; k];
    let mut base = vec![0i64; k];
    let mut frac = vec![0.0; k];
    for (i, &v) in f.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        total += v;
        spec.unravel(i, &mut m);
        if aligned {
            spec.center_of(&m, &mut x);
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = (0..d).map(|c| b[(r, c)] * x[c]).sum();
            }
            match target.locate(&y) {
                Some(t) => out[t] += v,
                None => escaped += v,
            }
            continue;
        }
        let share = v / nsub as f64;
        for s in 0..nsub {
            let mut rest = s;
            for c in (0..d).rev() {
                sm[c] = rest % sub[c];
                rest /= sub[c];
            }
            for c in 0..d {
                x[c] = spec.lo[c] + (m[c] as f64 + (sm[c] as f64 + 0.5) / sub[c] as f64) * widths[c];
            }
            for r in 0..k {
                let yr: f64 = (0..d).map(|c| b[(r, c)] * x[c]).sum();
                // position in units of bins, measured from the first bin center
                let t = (yr - target.lo[r]) / tw[r] - 0.5;
                let fl = t.floor();
                base[r] = fl as i64;
                frac[r] = t - fl;
            }
            for corner in 0..1usize << k {
                let mut w = share;
                let mut idx = 0usize;
                let mut inside = true;
                for r in 0..k {
                    let up = corner >> r & 1 == 1;
                    let j = base[r] + i64::from(up);
                    w *= if up { frac[r] } else { 1.0 - frac[r] };
                    if j < 0 || j >= target.n[r] as i64 {
                        inside = false;
                    } else {
                        idx = idx * target.n[r] + j as usize;
                    }
                }
                if w == 0.0 {
                    continue;
                }
                if inside {
                    out[idx] += w;
                } else {
                    escaped += w;
                }
            }
        }
    }
    if escaped > 1e-12 * total {
        return Err(Error::Coverage { fraction: escaped / total });
    }
    let scale = vol / target.cell_volume();
    out.iter_mut().for_each(|v| *v *= scale);
    GridFunction::new(target.clone(), out)
}

/// `(sum f^p vol)^{1/p}`; `p = inf` gives the maximum.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    log_lp_norm(f, p).exp()
}

pub fn log_lp_norm(f: &GridFunction, p: f64) -> f64 {
    log_lp_norm_values(f.values(), f.cell_volume(), p)
}

pub fn log_lp_norm_values(values: &[f64], vol: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().cloned().fold(0.0, f64::max).ln();
    }
    let s: f64 = values.iter().filter(|&&v| v > 0.0).map(|&v| v.powf(p)).sum();
    (s * vol).ln() / p
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InequalityMargin {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub relative_margin: f64,
    pub quadrature_estimate: f64,
}

impl InequalityMargin {
    /// `margin >= -quadrature_estimate`.
    pub fn holds(&self) -> bool {
        self.margin >= -self.quadrature_estimate
    }

    pub fn from_sides(lhs: f64, rhs: f64, mode: Mode, estimate: f64) -> Self {
        let margin = match mode {
            Mode::Forward => rhs - lhs,
            Mode::Reverse => lhs - rhs,
        };
        InequalityMargin { lhs, rhs, margin, relative_margin: margin / lhs.max(rhs), quadrature_estimate: estimate }
    }
}

/// Roundoff allowance added to every refinement-based estimate.
pub const ROUNDOFF: f64 = 1e-12;

fn adjoint_sides(f: &GridFunction, datum: &BlDatum, params: &AdjointParams, bl_value: f64) -> Result<(f64, f64)> {
    let lhs = log_lp_norm(f, params.p);
    let mut rhs = (1.0 / params.p - 1.0) * bl_value.ln();
    for ((b, &t), &pi) in datum.maps().iter().zip(&params.theta).zip(&params.p_i) {
        let target = f.spec().image_grid(b);
        let fi = grid_pushforward(f, b, &target)?;
        rhs += t * log_lp_norm(&fi, pi);
    }
    Ok((lhs.exp(), rhs.exp()))
}

/// Compares `||f||_p` with `BL^{1/p-1} prod ||(B_i)_* f||_{p_i}^{theta_i}` on the grid and on
/// one dyadic refinement; the estimate is their difference plus a roundoff allowance.
pub fn adjoint_margin(
    f: &GridFunction,
    datum: &BlDatum,
    params: &AdjointParams,
    bl_value: f64,
    mode: Mode,
) -> Result<InequalityMargin> {
    if f.dim() != datum.dim() {
        return Err(Error::InvalidGrid(format!("grid dimension {} but datum dimension {}", f.dim(), datum.dim())));
    }
    if params.mode != mode {
        return Err(Error::InvalidParams("parameters were derived for the other mode".into()));
    }
    if f.mass() <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let (l0, r0) = adjoint_sides(f, datum, params, bl_value)?;
    let (l1, r1) = adjoint_sides(&f.refined(), datum, params, bl_value)?;
    let base = InequalityMargin::from_sides(l0, r0, mode, 0.0);
    let fine = InequalityMargin::from_sides(l1, r1, mode, 0.0);
    let estimate = (fine.margin - base.margin).abs() + ROUNDOFF * l1.max(r1);
    Ok(InequalityMargin { quadrature_estimate: estimate, ..fine })
}

/// Relative Frobenius distance of a 2-d grid function from its best rank-one approximation.
pub fn tensor_distance(f: &GridFunction) -> Option<f64> {
    let m = f.as_matrix()?;
    let s = crate::linalg::singular_values(&m);
    let total: f64 = s.iter().map(|x| x * x).sum();
    let top = s.iter().cloned().fold(0.0, f64::max);
    Some(((total - top * top).max(0.0) / total).sqrt())
}

/// Random non-negative piecewise-constant function constant on `blocks^d` equal sub-boxes.
/// Roughly a quarter of the blocks are zero.
pub fn random_piecewise<R: Rng + ?Sized>(spec: &GridSpec, blocks: usize, rng: &mut R) -> GridFunction {
    let d = spec.dim();
    let nb = blocks.pow(d as u32);
    let coarse: Vec<f64> = (0..nb).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
    let mut m = vec![0; d];
    let values = (0..spec.len())
        .map(|i| {
            spec.unravel(i, &mut m);
            let mut idx = 0;
            for a in 0..d {
                idx = idx * blocks + m[a] * blocks / spec.n[a];
            }
            coarse[idx]
        })
        .collect();
    GridFunction { spec: spec.clone(), values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Little-endian IEEE-754 doubles.
    F64le,
    /// One decimal value per line.
    Csv,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    format: String,
    version: u32,
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
    encoding: Encoding,
}

/// Writes a one-line JSON header followed by the row-major payload.
pub fn write_grid<W: Write>(f: &GridFunction, encoding: Encoding, mut w: W) -> Result<()> {
    let header = GridHeader {
        format: "blq-grid".into(),
        version: 1,
        lo: f.spec.lo.clone(),
        hi: f.spec.hi.clone(),
        n: f.spec.n.clone(),
        encoding,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    match encoding {
        Encoding::F64le => {
            for v in &f.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Encoding::Csv => {
            for v in &f.values {
                writeln!(w, "{v:e}")?;
            }
        }
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: R) -> Result<GridFunction> {
    let mut r = std::io::BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: GridHeader = serde_json::from_str(line.trim_end())?;
    if header.format != "blq-grid" {
        return Err(Error::Parse(format!("unknown grid format {:?}", header.format)));
    }
    let spec = GridSpec::new(header.lo, header.hi, header.n)?;
    let values = match header.encoding {
        Encoding::F64le => {
            let mut buf = Vec::new();
            r.read_to_end(&mut buf)?;
            if buf.len() != 8 * spec.len() {
                return Err(Error::Parse(format!("payload has {} bytes, expected {}", buf.len(), 8 * spec.len())));
            }
            buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        }
        Encoding::Csv => {
            let mut out = Vec::with_capacity(spec.len());
            for l in r.lines() {
                let l = l?;
                let t = l.trim();
                if t.is_empty() {
                    continue;
                }
                out.push(t.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {t:?}")))?);
            }
            out
        }
    };
    GridFunction::new(spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::derive_adjoint_exponents;
    use crate::families;
    use crate::gaussian::gaussian_pushforward;
    use crate::spd::SpdMatrix;
    use approx::assert_relative_eq;

    fn gauss(x: &[f64]) -> f64 {
        (-std::f64::consts::PI * x.iter().map(|t| t * t).sum::<f64>()).exp()
    }

    #[test]
    fn identity_pushforward_is_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let spec = GridSpec::cube(2, 0.0, 1.0, 16);
        let f = random_piecewise(&spec, 4, &mut rng);
        let g = grid_pushforward(&f, &DMatrix::identity(2, 2), &spec).unwrap();
        assert_eq!(f.values(), g.values());
    }

    #[test]
    fn unit_square_marginal() {
        let f = GridFunction::from_fn(GridSpec::cube(2, 0.0, 1.0, 32), |_| 1.0).unwrap();
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let g = grid_pushforward(&f, &b, &f.spec().image_grid(&b)).unwrap();
        assert_eq!(g.spec().n, vec![32]);
        for v in g.values() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sum_of_coordinates_gives_triangle() {
        // 1 on the unit square pushed by (x, y) -> x + y has density min(t, 2 - t) on [0, 2]
        let f = GridFunction::from_fn(GridSpec::cube(2, 0.0, 1.0, 64), |_| 1.0).unwrap();
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = grid_pushforward(&f, &b, &f.spec().image_grid(&b)).unwrap();
        assert_relative_eq!(g.mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(lp_norm(&g, 0.5), 16.0 / 9.0, max_relative = 3e-3);
        assert_relative_eq!(lp_norm(&g, 2.0), (2.0f64 / 3.0).sqrt(), max_relative = 1e-3);
        // a scaled axis is exact
        let c = DMatrix::from_row_slice(1, 2, &[0.0, -2.0]);
        let h = grid_pushforward(&f, &c, &f.spec().image_grid(&c)).unwrap();
        for v in h.values() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn gaussian_marginal_matches_closed_form() {
        let f = GridFunction::from_fn(GridSpec::cube(2, -6.0, 6.0, 256), gauss).unwrap();
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let g = grid_pushforward(&f, &b, &f.spec().image_grid(&b)).unwrap();
        let (amp, ai) = gaussian_pushforward(&SpdMatrix::identity(2), &b).unwrap();
        let a = ai.matrix()[(0, 0)];
        for (i, v) in g.values().iter().enumerate() {
            let y = g.spec().center(i)[0];
            let exact = amp * (-std::f64::consts::PI * a * y * y).exp();
            if exact > 1e-6 {
                assert_relative_eq!(*v, exact, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn coverage_error_reports_fraction() {
        let f = GridFunction::from_fn(GridSpec::cube(1, 0.0, 1.0, 10), |_| 1.0).unwrap();
        let target = GridSpec::cube(1, 0.0, 0.5, 5);
        match grid_pushforward(&f, &DMatrix::identity(1, 1), &target) {
            // the unaligned target shares edge sub-cells with a bin outside the box
            Err(Error::Coverage { fraction }) => assert_relative_eq!(fraction, 0.5125, epsilon = 1e-12),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn norms_of_simple_functions() {
        let f = GridFunction::from_fn(GridSpec::cube(2, 0.0, 1.0, 8), |_| 1.0).unwrap();
        for p in [0.3, 1.0, 2.5, f64::INFINITY] {
            assert_relative_eq!(lp_norm(&f, p), 1.0, epsilon = 1e-13);
        }
        let g = GridFunction::from_fn(GridSpec::cube(1, 0.0, 1.0, 10), |_| 2.0).unwrap();
        assert_relative_eq!(lp_norm(&g, 0.5), 2.0, epsilon = 1e-13);
        let h = GridFunction::from_fn(GridSpec::cube(1, -8.0, 8.0, 4096), gauss).unwrap();
        for p in [0.25, 0.5, 2.0] {
            assert_relative_eq!(lp_norm(&h, p), p.powf(-0.5 / p), max_relative = 1e-4);
        }
    }

    #[test]
    fn gaussian_margin_ratio_is_prefactor() {
        let lw = families::loomis_whitney(2);
        let ap = derive_adjoint_exponents(&lw, &[0.5, 0.5], 0.5, Mode::Forward).unwrap();
        let f = GridFunction::from_fn(GridSpec::cube(2, -8.0, 8.0, 256), gauss).unwrap();
        let m = adjoint_margin(&f, &lw, &ap, 1.0, Mode::Forward).unwrap();
        assert_relative_eq!(m.lhs / m.rhs, 4.0 * (1.0f64 / 3.0).powf(1.5), max_relative = 1e-4);
        assert!(m.margin > 0.0);
    }

    #[test]
    fn p_one_and_product_indicator_are_equalities() {
        let lw = families::loomis_whitney(2);
        let spec = GridSpec::cube(2, -1.0, 2.0, 30);
        let f = GridFunction::from_fn(spec, |x| if (0.0..1.0).contains(&x[0]) && (0.0..1.0).contains(&x[1]) { 1.0 } else { 0.0 })
            .unwrap();
        let ap = derive_adjoint_exponents(&lw, &[0.5, 0.5], 0.5, Mode::Forward).unwrap();
        let m = adjoint_margin(&f, &lw, &ap, 1.0, Mode::Forward).unwrap();
        assert!(m.margin.abs() <= m.quadrature_estimate, "{m:?}");
        let ap1 = derive_adjoint_exponents(&lw, &[0.3, 0.7], 1.0, Mode::Forward).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = random_piecewise(&GridSpec::cube(2, 0.0, 1.0, 16), 4, &mut rng);
        let m1 = adjoint_margin(&g, &lw, &ap1, 1.0, Mode::Forward).unwrap();
        assert!(m1.margin.abs() <= m1.quadrature_estimate);
    }

    #[test]
    fn grid_file_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f = random_piecewise(&GridSpec::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![3, 5]).unwrap(), 2, &mut rng);
        for enc in [Encoding::F64le, Encoding::Csv] {
            let mut buf = Vec::new();
            write_grid(&f, enc, &mut buf).unwrap();
            assert_eq!(read_grid(&buf[..]).unwrap(), f);
        }
    }

    use rand::SeedableRng;
}
