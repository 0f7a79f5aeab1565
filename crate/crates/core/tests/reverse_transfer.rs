//! Marginal transfer bound in three dimensions: for `||f||_inf = 1`,
//! `||f_3||_{6/5} <= (||f_1||_{2/3} ||f_2||_{2/3})^{1/3}`, where `f_i` integrates out `x_i`.

use blq_core::datum::{derive_adjoint_exponents, Mode};
use blq_core::families::loomis_whitney;
use blq_core::grid::{adjoint_margin, random_piecewise, GridFunction, GridSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Marginal dropping `axis`, summed cell by cell; independent of the pushforward code.
fn marginal(f: &GridFunction, axis: usize) -> Vec<f64> {
    let spec = f.spec();
    let n = spec.n[0];
    let h = spec.widths()[axis];
    let mut out = vec![0.0; n * n];
    let mut m = vec![0; 3];
    for (i, &v) in f.values().iter().enumerate() {
        spec.unravel(i, &mut m);
        let rest: Vec<usize> = (0..3).filter(|&a| a != axis).map(|a| m[a]).collect();
        out[rest[0] * n + rest[1]] += v * h;
    }
    out
}

fn norm(values: &[f64], area: f64, p: f64) -> f64 {
    (values.iter().map(|v| v.powf(p)).sum::<f64>() * area).powf(1.0 / p)
}

#[test]
fn reverse_transfer_holds_on_random_functions() {
    let spec = GridSpec::cube(3, 0.0, 1.0, 12);
    let area = spec.widths()[0] * spec.widths()[1];
    let lw = loomis_whitney(3);
    let params = derive_adjoint_exponents(&lw, &[-1.0, -1.0, 3.0], f64::INFINITY, Mode::Reverse).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let f = random_piecewise(&spec, 3, &mut rng);
        let f = f.scaled(1.0 / f.max());
        let lhs = norm(&marginal(&f, 2), area, 1.2);
        let rhs = (norm(&marginal(&f, 0), area, 2.0 / 3.0) * norm(&marginal(&f, 1), area, 2.0 / 3.0)).powf(1.0 / 3.0);
        worst = worst.min((rhs - lhs) / rhs);

        // the library's reverse-mode margin agrees in sign
        let m = adjoint_margin(&f, &lw, &params, 1.0, Mode::Reverse).unwrap();
        assert!(m.holds(), "reverse margin {} below -{}", m.margin, m.quadrature_estimate);
    }
    assert!(worst >= -1e-12, "transfer bound violated: relative margin {worst}");
}
