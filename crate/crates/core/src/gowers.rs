//! Gowers uniformity norms on the cyclic group `Z_N` with Haar measure `lambda * counting`,
//! their log-convexity in the order, and the parallelogram/parallelepiped count.
//!
//! `||f||_{U^d}^{2^d} = sum_{h_1..h_{d-1}} (sum_x prod_{w in {0,1}^{d-1}} f(x + w.h))^2`,
//! which for `d = 1` is `(sum f)^2`. Measure weight `lambda` contributes `lambda^{d+1}`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Largest `N` accepted for order `d`: the cost is `N^d 2^{d-1}`.
pub fn default_cap(d: usize) -> usize {
    match d {
        0 | 1 | 2 => 1 << 16,
        3 => 256,
        4 => 64,
        5 => 24,
        _ => 12,
    }
}

/// `||f||_{U^d}^{2^d}` for real `f` on `Z_N` with counting measure.
pub fn gowers_power(f: &[f64], d: usize, cap: usize) -> Result<f64> {
    let n = f.len();
    if d == 0 {
        return Err(Error::InvalidParams("Gowers order must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Empty("empty function".into()));
    }
    if n > cap {
        return Err(Error::CapExceeded { order: n, cap });
    }
    if d == 1 {
        let s: f64 = f.iter().sum();
        return Ok(s * s);
    }
    let k = d - 1;
    let mut h = vec![0usize; k];
    let mut corner = vec![0usize; 1 << k];
    let mut total = 0.0;
    loop {
        for (w, c) in corner.iter_mut().enumerate() {
            *c = (0..k).filter(|&b| w >> b & 1 == 1).map(|b| h[b]).sum::<usize>() % n;
        }
        let mut inner = 0.0;
        for x in 0..n {
            let mut prod = 1.0;
            for &c in &corner {
                prod *= f[(x + c) % n];
                if prod == 0.0 {
                    break;
                }
            }
            inner += prod;
        }
        total += inner * inner;
        // odometer over the shifts
        let mut i = 0;
        loop {
            if i == k {
                return Ok(total);
            }
            h[i] += 1;
            if h[i] < n {
                break;
            }
            h[i] = 0;
            i += 1;
        }
    }
}

/// `||f||_{U^d}` with Haar measure `lambda` times counting measure.
pub fn gowers_norm_weighted(f: &[f64], d: usize, lambda: f64, cap: usize) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams(format!("measure weight must be positive, got {lambda}")));
    }
    let e = 1 << d;
    let pw = gowers_power(f, d, cap)?;
    Ok((pw.max(0.0) * lambda.powi(d as i32 + 1)).powf(1.0 / e as f64))
}

pub fn gowers_norm(f: &[f64], d: usize) -> Result<f64> {
    gowers_norm_weighted(f, d, 1.0, default_cap(d))
}

/// `||f||_{U^{d-1}}^theta ||f||_{U^{d+1}}^{1-theta} - ||f||_{U^d}` with `theta = d/(3d-2)`.
pub fn log_convexity_margin(f: &[f64], d: usize, lambda: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidParams("log-convexity needs d >= 2".into()));
    }
    let theta = d as f64 / (3 * d - 2) as f64;
    let lo = gowers_norm_weighted(f, d - 1, lambda, default_cap(d - 1))?;
    let mid = gowers_norm_weighted(f, d, lambda, default_cap(d))?;
    let hi = gowers_norm_weighted(f, d + 1, lambda, default_cap(d + 1))?;
    Ok(lo.powf(theta) * hi.powf(1.0 - theta) - mid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfigurationCount {
    pub size: u64,
    pub parallelograms: u64,
    pub parallelepipeds: u64,
}

impl ConfigurationCount {
    /// `#parallelepipeds * |A|^8 >= #parallelograms^4`, i.e. at least `delta^4 |A|^4`
    /// parallelepipeds when there are `delta |A|^3` parallelograms.
    pub fn bound_holds(&self) -> bool {
        let a8 = (self.size as u128).pow(8);
        (self.parallelepipeds as u128) * a8 >= (self.parallelograms as u128).pow(4)
    }

    pub fn density(&self) -> f64 {
        self.parallelograms as f64 / (self.size as f64).powi(3)
    }
}

/// Counts `(x, h, k)` with all four of `x, x+h, x+k, x+h+k` in `A`, and the analogous
/// eight-point configurations, by direct membership tests.
pub fn count_configurations(members: &[bool]) -> ConfigurationCount {
    let n = members.len();
    let at = |i: usize| members[i % n];
    let size = members.iter().filter(|&&b| b).count() as u64;
    let mut pg = 0u64;
    let mut pp = 0u64;
    for x in 0..n {
        if !at(x) {
            continue;
        }
        for h in 0..n {
            if !at(x + h) {
                continue;
            }
            for k in 0..n {
                if !(at(x + k) && at(x + h + k)) {
                    continue;
                }
                pg += 1;
                for l in 0..n {
                    if at(x + l) && at(x + h + l) && at(x + k + l) && at(x + h + k + l) {
                        pp += 1;
                    }
                }
            }
        }
    }
    ConfigurationCount { size, parallelograms: pg, parallelepipeds: pp }
}

/// `||f||_{U^d}` for `d = 1..=max_d` together with the abscissa `(d+1)/2^d` at which
/// `log ||f||_{U^d}` is convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GowersProfile {
    pub orders: Vec<usize>,
    pub norms: Vec<f64>,
}

impl GowersProfile {
    pub fn compute(f: &[f64], max_d: usize, lambda: f64) -> Result<Self> {
        let orders: Vec<usize> = (1..=max_d).collect();
        let norms = orders.iter().map(|&d| gowers_norm_weighted(f, d, lambda, default_cap(d))).collect::<Result<_>>()?;
        Ok(GowersProfile { orders, norms })
    }

    pub fn abscissa(d: usize) -> f64 {
        (d + 1) as f64 / (1u64 << d) as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d,abscissa,norm,log_norm")?;
        for (&d, &v) in self.orders.iter().zip(&self.norms) {
            writeln!(w, "{d},{:.17e},{:.17e},{:.17e}", Self::abscissa(d), v, v.ln())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut orders = Vec::new();
        let mut norms = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns", i + 1)));
            }
            orders.push(cols[0].parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?);
            norms.push(cols[2].parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?);
        }
        Ok(GowersProfile { orders, norms })
    }
}

/// Ratio `||f||_{U^2} / (||f||_{U^1}^{1/2} ||f||_{U^3}^{1/2})` for samples of a function on
/// the line with step `h`, zero-padded so the cyclic shifts never wrap. Values above one would
/// indicate a failure of log-convexity for the real-line norms.
pub fn line_ratio(samples: &[f64], h: f64) -> Result<f64> {
    let mut f = samples.to_vec();
    f.resize(samples.len() * 3, 0.0);
    let u1 = gowers_norm_weighted(&f, 1, h, usize::MAX)?;
    let u2 = gowers_norm_weighted(&f, 2, h, usize::MAX)?;
    let u3 = gowers_norm_weighted(&f, 3, h, usize::MAX)?;
    Ok(u2 / (u1 * u3).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `sum |f^(xi)|^4 / N` with a naive DFT.
    fn fourier_u2(f: &[f64]) -> f64 {
        let n = f.len();
        let mut s = 0.0;
        for k in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, v) in f.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * x) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            s += (re * re + im * im).powi(2);
        }
        s / n as f64
    }

    #[test]
    fn u2_matches_fourier() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [5, 12, 31] {
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_relative_eq!(gowers_power(&f, 2, 1000).unwrap(), fourier_u2(&f), max_relative = 1e-11);
        }
    }

    #[test]
    fn constants_and_characters() {
        // constant 1 on Z_N: U^d power is N^{d+1}
        let one = vec![1.0; 6];
        for d in 1..=4 {
            assert_relative_eq!(gowers_power(&one, d, 64).unwrap(), 6f64.powi(d as i32 + 1), max_relative = 1e-14);
        }
        // a point mass has U^d power 1 for every d
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        for d in 1..=4 {
            assert_relative_eq!(gowers_power(&delta, d, 64).unwrap(), 1.0);
        }
    }

    #[test]
    fn log_convexity_on_random_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(3..14);
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            for d in 2..=3 {
                assert!(log_convexity_margin(&f, d, 1.0).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn configuration_counts_match_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<bool> = (0..32).map(|_| rng.gen_bool(0.4)).collect();
        let f: Vec<f64> = a.iter().map(|&b| f64::from(u8::from(b))).collect();
        let c = count_configurations(&a);
        assert_eq!(c.parallelograms as f64, gowers_power(&f, 2, 64).unwrap());
        assert_eq!(c.parallelepipeds as f64, gowers_power(&f, 3, 64).unwrap());
        assert!(c.bound_holds());
    }

    #[test]
    fn caps_are_enforced() {
        assert!(matches!(gowers_power(&vec![1.0; 65], 4, default_cap(4)), Err(Error::CapExceeded { .. })));
        assert!(gowers_power(&[], 2, 10).is_err());
    }

    #[test]
    fn profile_csv_round_trip() {
        let f = [0.2, 1.0, 0.5, 0.0, 0.7];
        let p = GowersProfile::compute(&f, 4, 0.5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = GowersProfile::read_csv(&buf[..]).unwrap();
        assert_eq!(p.orders, q.orders);
        for (a, b) in p.norms.iter().zip(&q.norms) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }
}
