//! Standard data with known constants, and a seeded generator of transformed copies.
//!
//! Under `B_i -> U_i B_i W` the constant changes by `1 / (|det W| prod |det U_i|^{c_i})`,
//! so every generated datum carries an exact reference value.

use crate::datum::BlDatum;
use crate::linalg;
use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::Rng;

/// Coordinate projection onto the listed axes.
pub fn coordinate_projection(d: usize, axes: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(axes.len(), d);
    for (r, &j) in axes.iter().enumerate() {
        m[(r, j)] = 1.0;
    }
    m
}

/// `B_i x = (x_1, .., x_{i-1}, x_{i+1}, .., x_d)`, `c_i = 1/(d-1)`; constant 1.
pub fn loomis_whitney(d: usize) -> BlDatum {
    assert!(d >= 2);
    let maps = (0..d)
        .map(|i| coordinate_projection(d, &(0..d).filter(|&j| j != i).collect::<Vec<_>>()))
        .collect();
    BlDatum::with_exact_exponents(maps, vec![Ratio::new(1, d as i64 - 1); d]).expect("valid datum")
}

/// Copies of the identity on `R^d` with exponents summing to one; constant 1.
pub fn holder(c: &[f64], d: usize) -> BlDatum {
    BlDatum::new(vec![DMatrix::identity(d, d); c.len()], c.to_vec()).expect("valid datum")
}

/// Maps `x`, `y`, `x - y` on `R^2`.
pub fn young(c: [f64; 3]) -> BlDatum {
    let maps = vec![
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
    ];
    BlDatum::new(maps, c.to_vec()).expect("valid datum")
}

pub fn young_exact(c: [Ratio<i64>; 3]) -> BlDatum {
    let maps = vec![
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
    ];
    BlDatum::with_exact_exponents(maps, c.to_vec()).expect("valid datum")
}

/// Sharp constant for Young's inequality on the line, `c_i in (0,1]`, `sum c_i = 2`.
pub fn young_constant(c: [f64; 3]) -> f64 {
    let term = |x: f64| {
        let a = if x < 1.0 { (1.0 - x) * (1.0 - x).ln() } else { 0.0 };
        a - x * x.ln()
    };
    (0.5 * c.iter().map(|&x| term(x)).sum::<f64>()).exp()
}

/// Coordinate projections onto the sets `S_i` with `sum_i c_i 1_{S_i}(j) = 1`; constant 1.
pub fn finner(d: usize, sets: &[Vec<usize>], c: &[f64]) -> BlDatum {
    let maps = sets.iter().map(|s| coordinate_projection(d, s)).collect();
    BlDatum::new(maps, c.to_vec()).expect("valid datum")
}

/// Applies `B_i -> U_i B_i W`; returns the datum and the factor multiplying the constant.
pub fn transform(datum: &BlDatum, w: &DMatrix<f64>, us: &[DMatrix<f64>]) -> (BlDatum, f64) {
    let maps: Vec<DMatrix<f64>> = datum.maps().iter().zip(us).map(|(b, u)| u * b * w).collect();
    let mut log_factor = -w.determinant().abs().ln();
    for (u, c) in us.iter().zip(datum.exponents()) {
        log_factor -= c * u.determinant().abs().ln();
    }
    let out = match datum.exact_exponents() {
        Some(e) => BlDatum::with_exact_exponents(maps, e.to_vec()),
        None => BlDatum::new(maps, datum.exponents().to_vec()),
    }
    .expect("invertible transform keeps surjectivity");
    (out, log_factor.exp())
}

/// A seeded feasible datum with `d <= 4`, `k <= 4`, and its exact constant.
#[derive(Debug, Clone)]
pub struct KnownDatum {
    pub name: String,
    pub datum: BlDatum,
    pub bl: f64,
}

fn well_conditioned<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    loop {
        let m = linalg::gaussian_matrix(rng, n, n);
        let s = linalg::singular_values(&m);
        let smax = s.iter().cloned().fold(0.0, f64::max);
        let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin > 0.0 && smax / smin < 20.0 {
            return m;
        }
    }
}

/// Base data before the random change of variables.
pub fn base_family<R: Rng + ?Sized>(rng: &mut R) -> KnownDatum {
    match rng.gen_range(0..7) {
        0 => {
            let d = rng.gen_range(2..=4);
            KnownDatum { name: format!("loomis-whitney-{d}"), datum: loomis_whitney(d), bl: 1.0 }
        }
        1 => loop {
            let c1: f64 = rng.gen_range(0.3..0.95);
            let c2: f64 = rng.gen_range(0.3..0.95);
            let c3 = 2.0 - c1 - c2;
            if (0.3..0.95).contains(&c3) {
                let c = [c1, c2, c3];
                break KnownDatum { name: "young".into(), datum: young(c), bl: young_constant(c) };
            }
        },
        2 => {
            let t: f64 = rng.gen_range(0.1..0.45);
            let sets = vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]];
            KnownDatum { name: "finner-3".into(), datum: finner(3, &sets, &[t, t, t, 1.0 - 2.0 * t]), bl: 1.0 }
        }
        3 => {
            let t: f64 = rng.gen_range(0.1..0.9);
            let sets = vec![vec![0], vec![1], vec![0, 1]];
            KnownDatum { name: "finner-2".into(), datum: finner(2, &sets, &[t, t, 1.0 - t]), bl: 1.0 }
        }
        4 => {
            let d = rng.gen_range(1..=3);
            let k = rng.gen_range(2..=3);
            let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            KnownDatum { name: format!("holder-{d}x{k}"), datum: holder(&w, d), bl: 1.0 }
        }
        5 => {
            let sets = vec![vec![0, 1], vec![2, 3], vec![0, 2], vec![1, 3]];
            KnownDatum { name: "finner-4-pairs".into(), datum: finner(4, &sets, &[0.5; 4]), bl: 1.0 }
        }
        _ => {
            let t: f64 = rng.gen_range(0.1..0.9);
            let sets = vec![vec![0, 1], vec![2, 3], vec![0, 1, 2, 3]];
            KnownDatum { name: "finner-4-blocks".into(), datum: finner(4, &sets, &[t, t, 1.0 - t]), bl: 1.0 }
        }
    }
}

/// A base datum under a random well-conditioned change of variables on both sides.
pub fn random_feasible<R: Rng + ?Sized>(rng: &mut R) -> KnownDatum {
    let base = base_family(rng);
    let d = base.datum.dim();
    let w = well_conditioned(rng, d);
    let us: Vec<DMatrix<f64>> = base.datum.target_dims().iter().map(|&di| well_conditioned(rng, di)).collect();
    let (datum, factor) = transform(&base.datum, &w, &us);
    KnownDatum { name: format!("{}-transformed", base.name), datum, bl: base.bl * factor }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn young_constant_at_two_thirds() {
        assert_relative_eq!(young_constant([2.0 / 3.0; 3]), 3.0f64.sqrt() / 2.0, epsilon = 1e-14);
        // endpoint c = (1, 1, 0+) degenerates to 1
        assert_relative_eq!(young_constant([1.0, 1.0, 1e-300]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn generated_data_satisfy_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let k = random_feasible(&mut rng);
            assert!(k.datum.scaling_defect().abs() < 1e-12, "{}", k.name);
            assert!(k.datum.dim() <= 4 && k.datum.len() <= 4);
            assert!(k.bl.is_finite() && k.bl > 0.0);
        }
    }
}
