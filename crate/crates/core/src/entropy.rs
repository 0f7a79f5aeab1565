//! Shannon and Rényi entropies of densities against a reference measure, the entropic
//! form of the Brascamp-Lieb inequality and its Rényi analogue, and escort-entropy probes.
//!
//! Entropies are in nats with `0 log 0 = 0`.

use crate::datum::{derive_adjoint_exponents, AdjointParams, BlDatum, Mode};
use crate::error::{Error, Result};
use crate::grid::{grid_pushforward, GridFunction};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

/// Non-negative values against reference weights (cell volumes, counting measure, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    values: Vec<f64>,
    measure: Vec<f64>,
}

impl DiscreteDensity {
    pub fn new(values: Vec<f64>, measure: Vec<f64>) -> Result<Self> {
        if values.len() != measure.len() {
            return Err(Error::InvalidParams("values and measure differ in length".into()));
        }
        if values.iter().chain(&measure).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams("values and measure must be finite and non-negative".into()));
        }
        Ok(DiscreteDensity { values, measure })
    }

    pub fn counting(values: Vec<f64>) -> Result<Self> {
        let m = vec![1.0; values.len()];
        DiscreteDensity::new(values, m)
    }

    pub fn uniform(values: Vec<f64>, weight: f64) -> Result<Self> {
        let m = vec![weight; values.len()];
        DiscreteDensity::new(values, m)
    }

    pub fn from_grid(f: &GridFunction) -> Self {
        DiscreteDensity { values: f.values().to_vec(), measure: vec![f.cell_volume(); f.values().len()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().zip(&self.measure).map(|(v, m)| v * m).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let s = self.mass();
        if !(s > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(DiscreteDensity { values: self.values.iter().map(|v| v / s).collect(), measure: self.measure.clone() })
    }

    /// `sum f^p m`.
    pub fn power_sum(&self, p: f64) -> f64 {
        self.values.iter().zip(&self.measure).filter(|(v, _)| **v > 0.0).map(|(v, m)| v.powf(p) * m).sum()
    }

    /// The escort density `f^p / ||f||_p^p`.
    pub fn escort(&self, p: f64) -> Result<Self> {
        let s = self.power_sum(p);
        if !(s > 0.0) {
            return Err(Error::ZeroMass);
        }
        let values = self.values.iter().map(|&v| if v > 0.0 { v.powf(p) / s } else { 0.0 }).collect();
        Ok(DiscreteDensity { values, measure: self.measure.clone() })
    }
}

/// `-sum f log f m` after normalizing.
pub fn shannon_entropy(f: &DiscreteDensity) -> Result<f64> {
    let g = f.normalized()?;
    Ok(-g.values.iter().zip(&g.measure).filter(|(v, _)| **v > 0.0).map(|(v, m)| v * v.ln() * m).sum::<f64>())
}

/// `(p / (1-p)) log ||f||_p` after normalizing; `p = 1` gives the Shannon entropy.
pub fn renyi_entropy(f: &DiscreteDensity, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParams(format!("Renyi order must be positive, got {p}")));
    }
    if p == 1.0 {
        return shannon_entropy(f);
    }
    let g = f.normalized()?;
    Ok(g.power_sum(p).ln() / (1.0 - p))
}

pub fn escort_entropy(f: &DiscreteDensity, p: f64) -> Result<f64> {
    shannon_entropy(&f.escort(p)?)
}

/// Variance of `log g` under the escort density `g`; equals `-p dH/dp` of the escort entropy.
pub fn escort_variance(f: &DiscreteDensity, p: f64) -> Result<f64> {
    let g = f.escort(p)?;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (v, m) in g.values.iter().zip(&g.measure) {
        if *v > 0.0 {
            let l = v.ln();
            m1 += v * l * m;
            m2 += v * l * l * m;
        }
    }
    Ok(m2 - m1 * m1)
}

fn marginals(f: &GridFunction, datum: &BlDatum) -> Result<Vec<DiscreteDensity>> {
    if f.dim() != datum.dim() {
        return Err(Error::InvalidGrid(format!("grid dimension {} but datum dimension {}", f.dim(), datum.dim())));
    }
    datum
        .maps()
        .iter()
        .map(|b| Ok(DiscreteDensity::from_grid(&grid_pushforward(f, b, &f.spec().image_grid(b))?)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RenyiPoint {
    pub p: f64,
    pub margin: f64,
    /// `(margin - shannon margin) / (1 - p)`.
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropicMargin {
    pub entropy: f64,
    pub marginal_entropies: Vec<f64>,
    /// `sum c_i H(f_i) + log BL - H(f)`.
    pub margin: f64,
    pub renyi: Vec<RenyiPoint>,
}

/// `sum c_i H_{p_i}((B_i)_* f) + log BL - H_p(f)`, the logarithmic form of the adjoint
/// inequality with the constant bounded by `BL^{1/p-1}`.
pub fn renyi_bl_margin(f: &GridFunction, datum: &BlDatum, params: &AdjointParams, bl_value: f64) -> Result<f64> {
    let fd = DiscreteDensity::from_grid(f);
    let mut m = bl_value.ln() - renyi_entropy(&fd, params.p)?;
    for ((g, &c), &pi) in marginals(f, datum)?.iter().zip(datum.exponents()).zip(&params.p_i) {
        m += c * renyi_entropy(g, pi)?;
    }
    Ok(m)
}

/// Shannon margin plus Rényi margins at `p = 1 - eps` (equal weights) for each `eps`.
pub fn entropic_bl_margin(f: &GridFunction, datum: &BlDatum, bl_value: f64, eps: &[f64]) -> Result<EntropicMargin> {
    let fd = DiscreteDensity::from_grid(f);
    let entropy = shannon_entropy(&fd)?;
    let marginal_entropies = marginals(f, datum)?.iter().map(shannon_entropy).collect::<Result<Vec<_>>>()?;
    let margin =
        marginal_entropies.iter().zip(datum.exponents()).map(|(h, c)| c * h).sum::<f64>() + bl_value.ln() - entropy;
    let k = datum.len();
    let theta = vec![1.0 / k as f64; k];
    let renyi = eps
        .iter()
        .map(|&e| {
            let params = derive_adjoint_exponents(datum, &theta, 1.0 - e, Mode::Forward)?;
            let m = renyi_bl_margin(f, datum, &params, bl_value)?;
            Ok(RenyiPoint { p: 1.0 - e, margin: m, slope: (m - margin) / e })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropicMargin { entropy, marginal_entropies, margin, renyi })
}

/// `H(f^p/||f||_p^p) - sum c_i H(f_i^{p_i}/||f_i||_{p_i}^{p_i}) - log BL`. Non-positive for
/// indicators; may be positive in general.
pub fn p_entropy_probe(f: &GridFunction, datum: &BlDatum, params: &AdjointParams, bl_value: f64) -> Result<f64> {
    let mut v = escort_entropy(&DiscreteDensity::from_grid(f), params.p)? - bl_value.ln();
    for ((g, &c), &pi) in marginals(f, datum)?.iter().zip(datum.exponents()).zip(&params.p_i) {
        v -= c * escort_entropy(g, pi)?;
    }
    Ok(v)
}

/// `log Lambda(p) = log ||f||_p - (1/p - 1) log BL - sum theta_i log ||f_i||_{p_i}`.
pub fn log_lambda(f: &GridFunction, datum: &BlDatum, theta: &[f64], p: f64, bl_value: f64) -> Result<f64> {
    let params = derive_adjoint_exponents(datum, theta, p, Mode::Forward)?;
    let fd = DiscreteDensity::from_grid(f);
    let mut v = fd.power_sum(p).ln() / p - (1.0 / p - 1.0) * bl_value.ln();
    for ((g, &t), &pi) in marginals(f, datum)?.iter().zip(theta).zip(&params.p_i) {
        v -= t * g.power_sum(pi).ln() / pi;
    }
    Ok(v)
}

/// Both sides of `p^2 d/dp log Lambda = log BL - H(escort_p f) + sum c_i H(escort_{p_i} f_i)`:
/// the left by a central difference with step `h`.
pub fn lambda_derivative_identity(
    f: &GridFunction,
    datum: &BlDatum,
    theta: &[f64],
    p: f64,
    bl_value: f64,
    h: f64,
) -> Result<(f64, f64)> {
    let fd = (log_lambda(f, datum, theta, p + h, bl_value)? - log_lambda(f, datum, theta, p - h, bl_value)?) / (2.0 * h);
    let params = derive_adjoint_exponents(datum, theta, p, Mode::Forward)?;
    let rhs = -p_entropy_probe(f, datum, &params, bl_value)?;
    Ok((p * p * fd, rhs))
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `q^2 / (1+q)^2`, whose convexity in `q` is what the escort-entropy inequality for tensor
/// data would need.
pub fn q_profile(q: &BigRational) -> BigRational {
    let one = BigRational::one();
    let s = &one + q;
    (q * q) / (&s * &s)
}

/// Second derivative of [`q_profile`] at `q` by exact central differences with steps
/// `2^-3 .. 2^-(2+levels)` and Richardson extrapolation in `h^2`.
pub fn q_profile_curvature(q: &BigRational, levels: usize) -> f64 {
    let mut table: Vec<BigRational> = (0..levels)
        .map(|k| {
            let h = ratio(1, 8 << k);
            let two = ratio(2, 1);
            (q_profile(&(q + &h)) - two * q_profile(q) + q_profile(&(q - &h))) / (&h * &h)
        })
        .collect();
    let mut four = ratio(4, 1);
    for _ in 1..levels {
        let next: Vec<BigRational> =
            table.windows(2).map(|w| (&four * &w[1] - &w[0]) / (&four - BigRational::one())).collect();
        table = next;
        four = &four * ratio(4, 1);
    }
    table[0].to_f64().unwrap_or(f64::NAN)
}

/// Escort entropy of `g = 1_{[0,1]} (1 + amp sqrt2 cos 2 pi x)` on `n` cells, rescaled by
/// `-2 / amp^2` so that it tends to `p^2` as `amp -> 0`, as a function of `q = p/(1-p)`.
pub fn perturbed_indicator_profile(q: f64, amp: f64, n: usize) -> Result<f64> {
    let h = 1.0 / n as f64;
    let values =
        (0..n).map(|i| 1.0 + amp * 2f64.sqrt() * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) * h).cos()).collect();
    let g = DiscreteDensity::uniform(values, h)?;
    let p = q / (1.0 + q);
    Ok(-2.0 * escort_entropy(&g, p)? / (amp * amp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    #[test]
    fn uniform_and_two_point() {
        let u = DiscreteDensity::counting(vec![1.0; 7]).unwrap();
        for p in [0.2, 0.5, 1.0, 3.0] {
            assert_relative_eq!(renyi_entropy(&u, p).unwrap(), 7f64.ln(), epsilon = 1e-14);
        }
        let t = DiscreteDensity::counting(vec![0.5, 0.5, 0.0]).unwrap();
        assert_relative_eq!(renyi_entropy(&t, 0.3).unwrap(), 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn gaussian_differential_entropy() {
        let spec = GridSpec::cube(2, -9.0, 9.0, 360);
        let f = GridFunction::from_fn(spec, |x| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
        let h = shannon_entropy(&DiscreteDensity::from_grid(&f)).unwrap();
        assert_relative_eq!(h, (2.0 * PI * std::f64::consts::E).ln(), max_relative = 1e-3);
        let d = DiscreteDensity::from_grid(&f);
        for e in [1e-2, 1e-3] {
            let up = renyi_entropy(&d, 1.0 + e).unwrap();
            let down = renyi_entropy(&d, 1.0 - e).unwrap();
            assert!((up - h).abs() < 2.0 * e && (down - h).abs() < 2.0 * e);
        }
    }

    #[test]
    fn escort_entropy_decreases_at_the_variance_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = crate::grid::random_piecewise(&GridSpec::cube(2, 0.0, 1.0, 16), 4, &mut rng);
        let d = DiscreteDensity::from_grid(&f);
        for p in [0.3, 0.6, 0.9] {
            let h = 1e-5;
            let slope = (escort_entropy(&d, p + h).unwrap() - escort_entropy(&d, p - h).unwrap()) / (2.0 * h);
            let var = escort_variance(&d, p).unwrap();
            assert!(slope <= 0.0);
            assert_relative_eq!(-p * slope, var, max_relative = 1e-5);
        }
    }

    #[test]
    fn product_gaussian_is_an_equality_and_correlation_helps() {
        let lw = families::loomis_whitney(2);
        let spec = GridSpec::cube(2, -6.0, 6.0, 240);
        let prod = GridFunction::from_fn(spec.clone(), |x| (-PI * (x[0] * x[0] + 2.0 * x[1] * x[1])).exp()).unwrap();
        let m = entropic_bl_margin(&prod, &lw, 1.0, &[]).unwrap();
        assert!(m.margin.abs() < 1e-3, "{m:?}");
        // covariance [[1, .5], [.5, 1]]: margin = log(1 / sqrt(1 - rho^2))
        let corr = GridFunction::from_fn(spec, |x| (-(x[0] * x[0] - x[0] * x[1] + x[1] * x[1]) / 1.5).exp()).unwrap();
        let m = entropic_bl_margin(&corr, &lw, 1.0, &[]).unwrap();
        assert_relative_eq!(m.margin, -0.5 * 0.75f64.ln(), max_relative = 1e-3);
        let h = families::holder(&[1.0], 2);
        let m = entropic_bl_margin(&corr, &h, 1.0, &[]).unwrap();
        assert!(m.margin.abs() < 1e-9);
    }

    #[test]
    fn indicator_probe_is_non_positive() {
        let lw = families::loomis_whitney(2);
        let spec = GridSpec::cube(2, -0.5, 2.0, 40);
        let f = GridFunction::from_fn(spec, |x| f64::from((0.0..1.0).contains(&x[0]) && (0.0..1.5).contains(&x[1]))).unwrap();
        let ap = derive_adjoint_exponents(&lw, &[0.5, 0.5], 0.5, Mode::Forward).unwrap();
        assert!(p_entropy_probe(&f, &lw, &ap, 1.0).unwrap() <= 1e-9);
    }

    #[test]
    fn curvature_of_q_profile() {
        let q = ratio(1, 4);
        assert_relative_eq!(q_profile_curvature(&q, 6), 0.4096, epsilon = 1e-12);
        // the escort entropy of a slightly perturbed indicator has the same curvature
        let dq = 0.05;
        let phi = |q: f64| perturbed_indicator_profile(q, 1e-3, 4096).unwrap();
        let second = (phi(0.25 + dq) - 2.0 * phi(0.25) + phi(0.25 - dq)) / (dq * dq);
        assert_relative_eq!(second, 0.4096, max_relative = 2e-2);
    }
}
