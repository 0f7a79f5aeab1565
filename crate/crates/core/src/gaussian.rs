//! Gaussian Brascamp-Lieb and adjoint constants by optimization over SPD matrices.

use crate::ascent::{self, AscentOptions};
use crate::datum::{self, AdjointParams, BlDatum};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spd::SpdMatrix;
use nalgebra::DMatrix;
use serde::Serialize;

/// Pushforward of `exp(-pi <Ax,x>)` under `B`: amplitude and the new quadratic form `A_i`.
pub fn gaussian_pushforward(a: &SpdMatrix, b: &DMatrix<f64>) -> Result<(f64, SpdMatrix)> {
    if b.ncols() != a.dim() {
        return Err(Error::DimensionMismatch { index: 0, cols: b.ncols(), dim: a.dim() });
    }
    let s = linalg::symmetrize(&(b * a.inverse() * b.transpose()));
    let rcond = linalg::rcond_sym(&s);
    if !(rcond > 1e-14) {
        return Err(Error::IllConditioned { rcond });
    }
    let s = SpdMatrix::new(s)?;
    let ai = SpdMatrix::new(s.inverse())?;
    let amplitude = (0.5 * ai.log_det() - 0.5 * a.log_det()).exp();
    Ok((amplitude, ai))
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub guard: f64,
    pub ascent: AscentOptions,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        GaussianOptions { tol: 1e-10, max_iter: 10_000, guard: 1e100, ascent: AscentOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedPoint,
    Ascent,
    Closed,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianOptResult {
    pub value: f64,
    pub log_value: f64,
    pub argmax: Vec<SpdMatrix>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub diverged: bool,
    pub method: Method,
}

/// `M = sum c_i B_i^T A_i B_i`.
fn weighted_sum(datum: &BlDatum, blocks: &[SpdMatrix]) -> DMatrix<f64> {
    let d = datum.dim();
    let mut m = DMatrix::zeros(d, d);
    for ((b, c), a) in datum.maps().iter().zip(datum.exponents()).zip(blocks) {
        m += b.transpose() * a.matrix() * b * *c;
    }
    linalg::symmetrize(&m)
}

/// `(1/2)(sum c_i log det A_i - log det M)` and its gradient in each `A_i`.
pub fn log_bl_objective(datum: &BlDatum, blocks: &[SpdMatrix]) -> Option<(f64, Vec<DMatrix<f64>>)> {
    let m = SpdMatrix::new(weighted_sum(datum, blocks)).ok()?;
    let minv = m.inverse();
    let mut v = -m.log_det();
    let mut grads = Vec::with_capacity(blocks.len());
    for ((b, &c), a) in datum.maps().iter().zip(datum.exponents()).zip(blocks) {
        v += c * a.log_det();
        let g = (a.inverse() - b * &minv * b.transpose()) * (0.5 * c);
        grads.push(linalg::symmetrize(&g));
    }
    Some((0.5 * v, grads))
}

/// `log det A - sum c_i log det(B_i A B_i^T)` and its gradient; the right side of the identity.
pub fn log_right_objective(datum: &BlDatum, a: &SpdMatrix) -> Option<(f64, DMatrix<f64>)> {
    let mut v = a.log_det();
    let mut g = a.inverse();
    for (b, &c) in datum.maps().iter().zip(datum.exponents()) {
        let s = SpdMatrix::new(linalg::symmetrize(&(b * a.matrix() * b.transpose()))).ok()?;
        v -= c * s.log_det();
        g -= b.transpose() * s.inverse() * b * c;
    }
    Some((v, linalg::symmetrize(&g)))
}

/// Log of `det(A)^{1/2 - 1/2p} / prod det(A_i)^{theta_i/2 - theta_i/2p_i}` with
/// `A_i^{-1} = B_i A^{-1} B_i^T`, and its gradient in `A`.
pub fn log_abl_objective(datum: &BlDatum, params: &AdjointParams, a: &SpdMatrix) -> Option<(f64, DMatrix<f64>)> {
    let alpha = 0.5 - 0.5 / params.p;
    let ainv = a.inverse();
    let mut v = alpha * a.log_det();
    let mut g = &ainv * alpha;
    for ((b, &t), &pi) in datum.maps().iter().zip(&params.theta).zip(&params.p_i) {
        let beta = t * (0.5 - 0.5 / pi);
        let s = SpdMatrix::new(linalg::symmetrize(&(b * &ainv * b.transpose()))).ok()?;
        // log det A_i = -log det S_i
        v += beta * s.log_det();
        g -= &ainv * b.transpose() * s.inverse() * b * &ainv * beta;
    }
    Some((v, linalg::symmetrize(&g)))
}

fn initial_blocks(datum: &BlDatum) -> Vec<SpdMatrix> {
    datum.target_dims().iter().map(|&n| SpdMatrix::identity(n)).collect()
}

/// Gaussian Brascamp-Lieb constant: fixed-point iteration with an ascent fallback.
pub fn bl_gaussian_constant(datum: &BlDatum, opts: &GaussianOptions) -> GaussianOptResult {
    let log_guard = opts.guard.ln();
    let mut blocks = initial_blocks(datum);
    let Some((mut value, _)) = log_bl_objective(datum, &blocks) else {
        // common kernel: the quadratic form is singular for every tuple
        return GaussianOptResult {
            value: f64::INFINITY,
            log_value: f64::INFINITY,
            argmax: blocks,
            iterations: 0,
            converged: false,
            residual: f64::NAN,
            diverged: true,
            method: Method::FixedPoint,
        };
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut diverged = false;
    let mut m = weighted_sum(datum, &blocks);
    for it in 1..=opts.max_iter {
        iterations = it;
        let Ok(mspd) = SpdMatrix::new(m.clone()) else { break };
        let minv = mspd.inverse();
        let next: Option<Vec<SpdMatrix>> = datum
            .maps()
            .iter()
            .map(|b| {
                let s = SpdMatrix::new(linalg::symmetrize(&(b * &minv * b.transpose()))).ok()?;
                SpdMatrix::new(s.inverse()).ok()
            })
            .collect();
        let Some(mut next) = next else { break };
        let Some((mut v, _)) = log_bl_objective(datum, &next) else { break };
        if v < value - 1e-13 * (1.0 + value.abs()) {
            let damped: Option<Vec<SpdMatrix>> = blocks
                .iter()
                .zip(&next)
                .map(|(a, n)| SpdMatrix::new((a.matrix() + n.matrix()) * 0.5).ok())
                .collect();
            if let Some(dm) = damped {
                if let Some((dv, _)) = log_bl_objective(datum, &dm) {
                    next = dm;
                    v = dv;
                }
            }
        }
        let m_next = weighted_sum(datum, &next);
        residual = linalg::frobenius(&(&m_next - &m)) / linalg::frobenius(&m);
        blocks = next;
        value = v;
        m = m_next;
        if value > log_guard || !value.is_finite() {
            diverged = true;
            break;
        }
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    let mut method = Method::FixedPoint;
    if !converged && !diverged {
        let obj = |b: &[SpdMatrix]| log_bl_objective(datum, b);
        if let Some(r) = ascent::maximize(blocks.clone(), &obj, opts.ascent) {
            iterations += r.iterations;
            if r.value >= value {
                value = r.value;
                blocks = r.blocks;
                method = Method::Ascent;
                converged = r.converged;
                residual = fixed_point_residual(datum, &blocks).unwrap_or(f64::NAN);
            }
            if value > log_guard {
                diverged = true;
                converged = false;
            }
        }
    }
    GaussianOptResult { value: value.exp(), log_value: value, argmax: blocks, iterations, converged, residual, diverged, method }
}

/// Largest relative deviation of `A_i^{-1}` from `B_i M^{-1} B_i^T`.
pub fn fixed_point_residual(datum: &BlDatum, blocks: &[SpdMatrix]) -> Option<f64> {
    let m = SpdMatrix::new(weighted_sum(datum, blocks)).ok()?;
    let minv = m.inverse();
    let mut worst: f64 = 0.0;
    for (b, a) in datum.maps().iter().zip(blocks) {
        let lhs = a.inverse();
        let rhs = b * &minv * b.transpose();
        worst = worst.max(linalg::frobenius(&(&lhs - &rhs)) / linalg::frobenius(&lhs));
    }
    Some(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblResult {
    pub value: f64,
    pub log_value: f64,
    pub prefactor: f64,
    pub cross_check: f64,
    pub relative_difference: f64,
    pub argmax: Vec<SpdMatrix>,
    pub iterations: usize,
    pub converged: bool,
    pub bl: GaussianOptResult,
}

/// Adjoint gaussian constant by ascent over `A`, with the cross-check `prefactor * BLg^{1/p - 1}`.
pub fn abl_gaussian_constant(datum: &BlDatum, params: &AdjointParams, opts: &GaussianOptions) -> Result<AblResult> {
    if params.theta.len() != datum.len() {
        return Err(Error::InvalidParams("weights do not match the datum".into()));
    }
    let bl = bl_gaussian_constant(datum, opts);
    let prefactor = datum::adjoint_gaussian_prefactor(params, &datum.target_dims(), datum.dim());
    let log_cross = prefactor.ln() + (1.0 / params.p - 1.0) * bl.log_value;
    if params.p == 1.0 {
        return Ok(AblResult {
            value: 1.0,
            log_value: 0.0,
            prefactor,
            cross_check: log_cross.exp(),
            relative_difference: (log_cross.exp() - 1.0).abs(),
            argmax: vec![SpdMatrix::identity(datum.dim())],
            iterations: 0,
            converged: true,
            bl,
        });
    }
    let obj = |b: &[SpdMatrix]| log_abl_objective(datum, params, &b[0]).map(|(v, g)| (v, vec![g]));
    let r = ascent::maximize(vec![SpdMatrix::identity(datum.dim())], &obj, opts.ascent)
        .ok_or_else(|| Error::InvalidDatum("adjoint objective undefined at the identity".into()))?;
    let log_value = prefactor.ln() + r.value;
    let value = log_value.exp();
    let cross_check = log_cross.exp();
    Ok(AblResult {
        value,
        log_value,
        prefactor,
        cross_check,
        relative_difference: (log_value - log_cross).exp_m1().abs(),
        argmax: r.blocks,
        iterations: r.iterations,
        converged: r.converged,
        bl,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub log_left: f64,
    pub log_right: f64,
    pub residual: f64,
    pub left_converged: bool,
    pub right_converged: bool,
}

/// Optimizes both sides of the tuple/single-matrix identity separately and compares their logs.
pub fn identity_ai_residual(datum: &BlDatum, opts: &GaussianOptions) -> Result<IdentityResidual> {
    if !datum.scaling_holds() {
        return Err(Error::InvalidDatum("scaling condition fails; both sides are infinite".into()));
    }
    let left = bl_gaussian_constant(datum, opts);
    let obj = |b: &[SpdMatrix]| log_right_objective(datum, &b[0]).map(|(v, g)| (v, vec![g]));
    let right = ascent::maximize(vec![SpdMatrix::identity(datum.dim())], &obj, opts.ascent)
        .ok_or_else(|| Error::InvalidDatum("right side undefined at the identity".into()))?;
    let log_left = 2.0 * left.log_value;
    Ok(IdentityResidual {
        log_left,
        log_right: right.value,
        residual: (log_left - right.value).abs(),
        left_converged: left.converged,
        right_converged: right.converged,
    })
}
