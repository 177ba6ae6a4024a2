use faer::Mat;
use gmsdg::indicators::{
    compute_indicators, exact_local_indicator, residual_components, residual_dual_norm, zeta_correlations, Indicator,
    IndicatorSet,
};
use gmsdg::spectral::BlockSpace;
use gmsdg::{Discretization, Family, Grid, OfflineSpaces, OfflineState, PermeabilityField, Problem, SpectralOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (Discretization, OfflineSpaces) {
    let grid = Grid::unit(3, 4).unwrap();
    let kappa = PermeabilityField::channels(12, 1e4, 8).unwrap();
    let d = Discretization::new(&Problem::new(grid, kappa)).unwrap();
    let spaces = d.build_spaces(SpectralOptions::default()).unwrap();
    (d, spaces)
}

fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[test]
fn fine_solution_has_no_residual() {
    let (d, spaces) = setup();
    let uh = d.solve_fine().unwrap();
    let rho = d.residual(&uh.fine);
    let scale = max_abs(d.load());
    for b in &spaces.blocks {
        for fam in Family::BOTH {
            let r = residual_components(&d, b, fam, &rho);
            assert!(max_abs(&r) < 1e-9 * scale.max(1.0));
            let cands: Vec<usize> = (0..b.spectrum_len(fam)).collect();
            let z = zeta_correlations(&d, b, fam, &rho, &cands).unwrap();
            assert!(z.iter().all(|&v| v < 1e-18 * scale.max(1.0)));
        }
    }
    let ex = exact_local_indicator(&d, &uh.fine, &uh.fine);
    assert!(ex.iter().all(|&v| v == 0.0));
}

#[test]
fn residual_vanishes_on_the_offline_space() {
    let (d, spaces) = setup();
    let state = OfflineState::initial(&spaces, 4, 2);
    let u = d.solve_coarse(&spaces, &state).unwrap();
    let rho = d.residual(&u.fine);
    let scale = max_abs(d.load());
    for b in &spaces.blocks {
        for fam in Family::BOTH {
            let active = state.active(b.block, fam).to_vec();
            let z = zeta_correlations(&d, b, fam, &rho, &active).unwrap();
            assert!(z.iter().all(|&v| v.sqrt() < 1e-9 * scale), "{z:?}");
        }
    }
}

#[test]
fn dual_norm_examples() {
    let (_, spaces) = setup();
    let b: &BlockSpace = spaces.block(4);
    for fam in Family::BOTH {
        let n = b.gram(fam).unwrap().nrows();
        assert_eq!(residual_dual_norm(b, fam, &vec![0.0; n]).unwrap(), 0.0);
        // r = c G e with e of unit G-norm gives ‖R‖ = |c|
        let g = to_na(b.gram(fam).unwrap());
        let eig = SymmetricEigen::new(g.clone());
        let e = eig.eigenvectors.column(0) / eig.eigenvalues[0].sqrt();
        let r: Vec<f64> = (&g * e * -3.5).iter().copied().collect();
        let got = residual_dual_norm(b, fam, &r).unwrap();
        assert!((got - 3.5).abs() < 1e-9, "{got}");
    }
}

#[test]
fn dual_norm_dominates_random_rayleigh_samples() {
    let (d, spaces) = setup();
    let u = d.solve_coarse(&spaces, &OfflineState::initial(&spaces, 2, 0)).unwrap();
    let rho = d.residual(&u.fine);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for b in &spaces.blocks {
        for fam in Family::BOTH {
            let r = residual_components(&d, b, fam, &rho);
            let dual = residual_dual_norm(b, fam, &r).unwrap();
            let g = to_na(b.gram(fam).unwrap());
            for _ in 0..200 {
                let v: Vec<f64> = (0..r.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let vv = nalgebra::DVector::from_vec(v.clone());
                let num: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                let den = vv.dot(&(&g * &vv)).sqrt();
                assert!(num.abs() / den <= dual * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn indicators_are_consistent_and_sorted() {
    let (d, spaces) = setup();
    let state = OfflineState::initial(&spaces, 3, 1);
    let u = d.solve_coarse(&spaces, &state).unwrap();
    let rho = d.residual(&u.fine);
    let set = compute_indicators(&d, &spaces, &state, &rho, &Family::BOTH).unwrap();
    assert_eq!(set.entries.len(), 2 * spaces.num_blocks());
    assert!(set.eta2().windows(2).all(|w| w[0] >= w[1]));
    for e in &set.entries {
        assert!(e.eta2 >= 0.0 && e.dual_norm2 >= 0.0);
        assert!((e.s() * e.s() - e.eta2).abs() <= 4.0 * f64::EPSILON * e.eta2);
        let l = e.lambda_next.unwrap();
        assert!((e.eta2 - e.dual_norm2 / l).abs() <= 1e-14 * e.eta2.max(1e-300));
    }
    let total: f64 = set.eta2().iter().sum();
    assert!((set.total() - total).abs() <= 1e-14 * total);
}

#[test]
fn full_offline_space_has_zero_indicators() {
    let grid = Grid::unit(2, 4).unwrap();
    let kappa = PermeabilityField::channels(8, 1e4, 2).unwrap();
    let d = Discretization::new(&Problem::new(grid, kappa)).unwrap();
    let spaces = d
        .build_spaces(SpectralOptions {
            family2: true,
            m_max: None,
            oversampling: None,
        })
        .unwrap();
    let state = OfflineState::full(&spaces, &Family::BOTH);
    let u = d.solve_coarse(&spaces, &state).unwrap();
    let set = compute_indicators(&d, &spaces, &state, &d.residual(&u.fine), &Family::BOTH).unwrap();
    assert!(set.entries.iter().all(|e| e.eta2 == 0.0 && e.lambda_next.is_none()));
}

#[test]
fn smaller_next_eigenvalue_gives_larger_indicator() {
    let mk = |lambda: f64| Indicator {
        block: 0,
        family: Family::One,
        dual_norm2: 2.0,
        lambda_next: Some(lambda),
        eta2: 2.0 / lambda,
    };
    let set = IndicatorSet::new(vec![mk(4.0), mk(0.5)]);
    assert_eq!(set.entries[0].lambda_next, Some(0.5));
}

#[test]
fn exact_local_errors_sum_to_global_energy() {
    let (d, spaces) = setup();
    let uh = d.solve_fine().unwrap();
    let u = d.solve_coarse(&spaces, &OfflineState::initial(&spaces, 4, 0)).unwrap();
    let local = exact_local_indicator(&d, &uh.fine, &u.fine);
    let sum: f64 = local.iter().map(|v| v * v).sum();
    let e: Vec<f64> = uh.fine.iter().zip(&u.fine).map(|(a, b)| a - b).collect();
    let global = d.a_norm2(&e);
    assert!((sum - global).abs() <= 1e-10 * global, "{sum} vs {global}");
}

#[test]
fn residual_annihilates_projections_onto_the_active_space() {
    // R(P v) = 0 for P the projection onto active eigenfunctions
    let (d, spaces) = setup();
    let l = 3;
    let state = OfflineState::initial(&spaces, l, l);
    let u = d.solve_coarse(&spaces, &state).unwrap();
    let rho = d.residual(&u.fine);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for b in &spaces.blocks {
        for fam in Family::BOTH {
            let eig = b.eigen(fam).unwrap();
            let r = residual_components(&d, b, fam, &rho);
            let g = to_na(b.gram(fam).unwrap());
            let x = to_na(&eig.coeffs);
            let scale = if fam == Family::One { b.coarse_h } else { b.coarse_h * b.coarse_h };
            for _ in 0..10 {
                let v = nalgebra::DVector::from_fn(r.len(), |_, _| rng.random_range(-1.0..1.0));
                let c = x.columns(0, l).transpose() * (&g * &v) * scale;
                let pv = x.columns(0, l) * c;
                let val: f64 = r.iter().zip(pv.iter()).map(|(a, b)| a * b).sum();
                let size = r.iter().map(|a| a * a).sum::<f64>().sqrt() * pv.norm();
                assert!(val.abs() <= 1e-9 * size.max(1e-300), "{val} vs {size}");
            }
        }
    }
}
