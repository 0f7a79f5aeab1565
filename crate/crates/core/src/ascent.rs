//! Gradient ascent over tuples of SPD matrices in a moving Cholesky chart.
//!
//! At the iterate `A = L L^T` a step is `A' = L C C^T L^T` with `C` lower triangular,
//! `C_jj = exp(delta_jj)`, `C_jk = delta_jk` below the diagonal. The gradient of the
//! objective with respect to `delta` at zero is `2 lower(L^T G L)` for the Euclidean
//! gradient `G`, which keeps the step affine-invariant and every iterate SPD.

use crate::spd::SpdMatrix;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { max_iter: 20_000, grad_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub blocks: Vec<SpdMatrix>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Objective returning the value and the Euclidean gradient per block, `None` off the domain.
pub type Objective<'a> = dyn Fn(&[SpdMatrix]) -> Option<(f64, Vec<DMatrix<f64>>)> + 'a;

fn chart_gradient(blocks: &[SpdMatrix], grads: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    blocks
        .iter()
        .zip(grads)
        .map(|(b, g)| {
            let l = b.factor();
            let m = l.transpose() * g * l;
            let mut d = m * 2.0;
            d.fill_upper_triangle(0.0, 1);
            d
        })
        .collect()
}

fn step(blocks: &[SpdMatrix], dirs: &[DMatrix<f64>], alpha: f64) -> Option<Vec<SpdMatrix>> {
    blocks
        .iter()
        .zip(dirs)
        .map(|(b, dir)| {
            let mut c = dir * alpha;
            for j in 0..c.nrows() {
                c[(j, j)] = c[(j, j)].exp();
            }
            SpdMatrix::from_factor(b.factor() * c).ok()
        })
        .collect()
}

pub fn maximize(init: Vec<SpdMatrix>, objective: &Objective<'_>, opts: AscentOptions) -> Option<AscentResult> {
    let mut blocks = init;
    let (mut value, mut grads) = objective(&blocks)?;
    let mut alpha = 0.1;
    let mut grad_norm = f64::INFINITY;
    let mut stalls = 0;
    for it in 0..opts.max_iter {
        let dirs = chart_gradient(&blocks, &grads);
        let g2: f64 = dirs.iter().map(|d| d.iter().map(|x| x * x).sum::<f64>()).sum();
        grad_norm = g2.sqrt();
        if grad_norm < opts.grad_tol {
            return Some(AscentResult { blocks, value, iterations: it, converged: true, grad_norm });
        }
        let mut accepted = None;
        let mut a = alpha;
        while a > 1e-18 {
            if let Some(cand) = step(&blocks, &dirs, a) {
                if let Some((v, g)) = objective(&cand) {
                    if v.is_finite() && v >= value + 1e-4 * a * g2 {
                        accepted = Some((cand, v, g));
                        break;
                    }
                }
            }
            a *= 0.5;
        }
        match accepted {
            Some((cand, v, g)) => {
                let gain = v - value;
                blocks = cand;
                value = v;
                grads = g;
                alpha = (a * 2.0).min(1e3);
                if gain <= 1e-15 * (1.0 + value.abs()) {
                    stalls += 1;
                    if stalls >= 20 {
                        return Some(AscentResult { blocks, value, iterations: it + 1, converged: grad_norm < 1e-6, grad_norm });
                    }
                } else {
                    stalls = 0;
                }
            }
            None => {
                return Some(AscentResult { blocks, value, iterations: it, converged: grad_norm < 1e-6, grad_norm });
            }
        }
    }
    Some(AscentResult { blocks, value, iterations: opts.max_iter, converged: false, grad_norm })
}
