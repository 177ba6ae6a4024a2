use gmsdg::adaptive::{choose_s, dorfler_mark};
use gmsdg::dg_form::DgForm;
use gmsdg::io::fmt_f64;
use gmsdg::local_fem::{BlockOperators, Patch};
use gmsdg::snapshots::split_harmonic_interior;
use gmsdg::{Grid, PermeabilityField};
use proptest::prelude::*;

fn kappa_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(1.0), 1.0..10.0f64, Just(1e4)], n * n)
}

fn block(nf: usize, kappa: Vec<f64>) -> BlockOperators {
    let patch = Patch::new(nf, nf, 1.0 / nf as f64, [0.0, 0.0], kappa).unwrap();
    BlockOperators::from_patch(0, patch).unwrap()
}

fn energy(ops: &BlockOperators, u: &[f64]) -> f64 {
    ops.stiffness.quadratic(u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stiffness_is_symmetric_psd_and_kills_constants(
        kappa in kappa_strategy(3),
        u in prop::collection::vec(-1.0..1.0f64, 16),
        c in -5.0..5.0f64,
    ) {
        let ops = block(3, kappa);
        prop_assert_eq!(ops.stiffness.max_asymmetry(), 0.0);
        prop_assert!(energy(&ops, &u) >= -1e-12);
        let k = ops.stiffness.mul_vec(&[c; 16]);
        prop_assert!(k.iter().all(|v| v.abs() < 1e-9 * ops.stiffness.max_abs()));
    }

    #[test]
    fn harmonic_energy_scales_quadratically(
        kappa in kappa_strategy(4),
        g in prop::collection::vec(-1.0..1.0f64, 16),
        alpha in -3.0..3.0f64,
    ) {
        let ops = block(4, kappa);
        let e1 = energy(&ops, &ops.harmonic_extend(&g));
        let scaled: Vec<f64> = g.iter().map(|v| alpha * v).collect();
        let e2 = energy(&ops, &ops.harmonic_extend(&scaled));
        prop_assert!((e2 - alpha * alpha * e1).abs() <= 1e-9 * e1.max(1e-12) * alpha.abs().max(1.0).powi(2));
    }

    #[test]
    fn normal_flux_has_zero_total(
        kappa in kappa_strategy(4),
        u in prop::collection::vec(-1.0..1.0f64, 25),
    ) {
        let ops = block(4, kappa);
        let f = ops.normal_flux(&u);
        let scale: f64 = f.iter().map(|v| v.abs()).sum();
        prop_assert!(f.iter().sum::<f64>().abs() <= 1e-10 * scale.max(1e-12));
    }

    #[test]
    fn harmonic_interior_split_is_exact_and_energy_orthogonal(
        kappa in kappa_strategy(4),
        u in prop::collection::vec(-1.0..1.0f64, 25),
    ) {
        let ops = block(4, kappa);
        let (u1, u2) = split_harmonic_interior(&ops, &u);
        for k in 0..u.len() {
            prop_assert!((u1[k] + u2[k] - u[k]).abs() < 1e-12);
        }
        for &b in ops.boundary() {
            prop_assert_eq!(u2[b], 0.0);
        }
        let cross = ops.stiffness.bilinear(&u1, &u2);
        let scale = (energy(&ops, &u1) * energy(&ops, &u2)).sqrt();
        prop_assert!(cross.abs() <= 1e-10 * scale.max(1e-12));
    }

    #[test]
    fn dg_matrix_is_symmetric(kappa in kappa_strategy(4), gamma in 1.0..50.0f64) {
        let grid = Grid::unit(2, 2).unwrap();
        let field = PermeabilityField::new(4, 4, kappa).unwrap();
        let dg = DgForm::new(grid, &field, gamma).unwrap();
        let s = dg.assemble();
        prop_assert!(s.max_asymmetry() <= 1e-12 * s.max_abs());
    }

    #[test]
    fn dorfler_prefix_is_minimal(mut eta2 in prop::collection::vec(0.0..10.0f64, 1..40), theta in 0.05..1.0f64) {
        eta2.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = eta2.iter().sum();
        let k = dorfler_mark(&eta2, theta);
        if total == 0.0 {
            prop_assert_eq!(k, 0);
        } else {
            prop_assert!(k >= 1);
            prop_assert!(eta2[..k].iter().sum::<f64>() >= theta * total * (1.0 - 1e-12));
            prop_assert!(eta2[..k - 1].iter().sum::<f64>() < theta * total);
        }
    }

    #[test]
    fn s_rule_reaches_the_ratio_target(
        steps in prop::collection::vec(0.0..2.0f64, 2..30),
        l_frac in 0.0..1.0f64,
        delta0 in 0.1..0.95f64,
    ) {
        let mut values = vec![0.0];
        for s in &steps {
            let last = *values.last().unwrap();
            values.push(last + s);
        }
        let l = ((values.len() - 1) as f64 * l_frac) as usize;
        let s = choose_s(&values, l, delta0);
        prop_assert!(s >= 1 && l + s <= values.len());
        if l + s < values.len() {
            prop_assert!(values[l] <= delta0 * values[l + s]);
            // minimal
            for t in 1..s {
                prop_assert!(values[l + t] < values[l] / delta0);
            }
        }
    }

    #[test]
    fn csv_floats_round_trip(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}
