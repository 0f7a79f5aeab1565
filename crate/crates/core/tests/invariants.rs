use blq_core::datum::{adjoint_exponents, derive_adjoint_exponents, Mode};
use blq_core::families::loomis_whitney;
use blq_core::gowers::{self, GowersProfile};
use blq_core::grid::{adjoint_margin, grid_pushforward, GridFunction, GridSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn weights(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponents_solve_the_coupling(
        c in prop::collection::vec(0.05f64..1.0, 2..5),
        raw in prop::collection::vec(0.05f64..1.0, 4),
        p in 0.05f64..1.0,
    ) {
        let theta = weights(&raw[..c.len()]);
        let ap = adjoint_exponents(&c, &theta, p, Mode::Forward).unwrap();
        prop_assert!(ap.residual(&c) < 1e-12);
        for ((&ci, &ti), &pi) in c.iter().zip(&theta).zip(&ap.p_i) {
            prop_assert!(pi > 0.0 && pi <= 1.0);
            // 1/p_i - 1 = (c_i/theta_i)(1/p - 1), so p_i >= p when c_i <= theta_i
            if ci <= ti {
                prop_assert!(pi >= p - 1e-15);
            }
        }
    }

    #[test]
    fn pushforward_keeps_mass(
        vals in prop::collection::vec(0.0f64..1.0, 64),
        b0 in -2.0f64..2.0,
        b1 in -2.0f64..2.0,
    ) {
        prop_assume!(b0.abs() + b1.abs() > 0.1);
        let spec = GridSpec::cube(2, -1.0, 1.0, 8);
        let f = GridFunction::new(spec.clone(), vals).unwrap();
        prop_assume!(f.mass() > 0.0);
        let b = DMatrix::from_row_slice(1, 2, &[b0, b1]);
        let g = grid_pushforward(&f, &b, &spec.image_grid(&b)).unwrap();
        prop_assert!((g.mass() - f.mass()).abs() <= 1e-10 * f.mass());
    }

    #[test]
    fn loomis_whitney_adjoint_margin_holds(
        vals in prop::collection::vec(0.0f64..1.0, 100),
        t in 0.1f64..0.9,
        p in 0.1f64..0.95,
    ) {
        let spec = GridSpec::cube(2, 0.0, 1.0, 10);
        let f = GridFunction::new(spec, vals).unwrap();
        prop_assume!(f.mass() > 1e-3);
        let lw = loomis_whitney(2);
        let ap = derive_adjoint_exponents(&lw, &[t, 1.0 - t], p, Mode::Forward).unwrap();
        let m = adjoint_margin(&f, &lw, &ap, 1.0, Mode::Forward).unwrap();
        prop_assert!(m.holds(), "margin {} estimate {}", m.margin, m.quadrature_estimate);
    }

    #[test]
    fn gowers_log_convexity(f in prop::collection::vec(0.0f64..1.0, 16)) {
        prop_assume!(f.iter().any(|&x| x > 0.0));
        let m = gowers::log_convexity_margin(&f, 2, 1.0 / 16.0).unwrap();
        prop_assert!(m >= -1e-12, "margin {m}");
    }
}

#[test]
fn gowers_profile_csv_round_trip() {
    let f: Vec<f64> = (0..32).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
    let prof = GowersProfile::compute(&f, 4, 1.0 / 32.0).unwrap();
    let mut buf = Vec::new();
    prof.write_csv(&mut buf).unwrap();
    let back = GowersProfile::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, prof);
}
