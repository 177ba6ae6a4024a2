use gmsdg::solve::{Gamma, SpaceTag};
use gmsdg::spectral::build_offline_space;
use gmsdg::{BoundaryData, Discretization, Family, Grid, OfflineState, PermeabilityField, Problem, SourceField, SpectralOptions};
use nalgebra::{DMatrix, DVector};

fn disc(nc: usize, nf: usize, seed: u64) -> Discretization {
    let grid = Grid::unit(nc, nf).unwrap();
    let kappa = PermeabilityField::channels(nc * nf, 1e4, seed).unwrap();
    Discretization::new(&Problem::new(grid, kappa)).unwrap()
}

#[test]
fn zero_data_gives_zero_solution() {
    let grid = Grid::unit(2, 4).unwrap();
    let kappa = PermeabilityField::channels(8, 1e3, 0).unwrap();
    let p = Problem::new(grid, kappa)
        .with_source(SourceField::constant(8, 0.0))
        .with_boundary(BoundaryData::Zero);
    let u = Discretization::new(&p).unwrap().solve_fine().unwrap();
    assert_eq!(u.space, SpaceTag::Fine);
    assert!(u.fine.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn fine_solution_matches_dense_oracle() {
    let d = disc(2, 4, 6);
    let s = d.matrix();
    let a = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s.get(i, j));
    let b = DVector::from_column_slice(d.load());
    let x = a.cholesky().unwrap().solve(&b);
    let u = d.solve_fine().unwrap();
    let err = u.fine.iter().zip(x.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9 * x.amax(), "{err}");
}

#[test]
fn reflected_problem_has_reflected_solution() {
    // κ ≡ 1, f = 1, g = 0 is invariant under x <-> y, which maps the fixed
    // diagonal onto itself
    let (nc, nf) = (2, 4);
    let grid = Grid::unit(nc, nf).unwrap();
    let kappa = PermeabilityField::constant(nc * nf, 1.0).unwrap();
    let p = Problem::new(grid.clone(), kappa).with_boundary(BoundaryData::Zero);
    let u = Discretization::new(&p).unwrap().solve_fine().unwrap();
    let npb = grid.nodes_per_block();
    let n1 = nf + 1;
    for b in 0..grid.num_blocks() {
        let (bx, by) = grid.block_coords(b);
        let rb = grid.block_index(by, bx);
        for iy in 0..n1 {
            for ix in 0..n1 {
                let a = u.fine[b * npb + iy * n1 + ix];
                let r = u.fine[rb * npb + ix * n1 + iy];
                assert!((a - r).abs() < 1e-12, "{a} vs {r}");
            }
        }
    }
}

#[test]
fn full_offline_space_reproduces_fine_solution() {
    let d = disc(2, 4, 1);
    let uh = d.solve_fine().unwrap();
    let spaces = d
        .build_spaces(SpectralOptions {
            family2: true,
            m_max: None,
            oversampling: None,
        })
        .unwrap();
    let u = d.solve_coarse(&spaces, &OfflineState::full(&spaces, &Family::BOTH)).unwrap();
    let (e2, ea) = d.relative_errors(&u.fine, &uh.fine).unwrap();
    assert!(ea < 1e-9 && e2 < 1e-9, "{e2} {ea}");
    // the harmonic snapshot space contains every family-1 offline space
    let snap = d.solve_snapshot(&spaces).unwrap();
    assert_eq!(snap.space, SpaceTag::Snapshot);
    let snap_ea = d.relative_errors(&snap.fine, &uh.fine).unwrap().1;
    let part = d.solve_coarse(&spaces, &OfflineState::initial(&spaces, 4, 0)).unwrap();
    assert!(snap_ea <= d.relative_errors(&part.fine, &uh.fine).unwrap().1 * (1.0 + 1e-12));
}

#[test]
fn relative_error_examples() {
    let d = disc(2, 4, 2);
    let uh = d.solve_fine().unwrap();
    assert_eq!(d.relative_errors(&uh.fine, &uh.fine).unwrap(), (0.0, 0.0));
    let zero = vec![0.0; uh.fine.len()];
    let (e2, ea) = d.relative_errors(&zero, &uh.fine).unwrap();
    assert!((e2 - 1.0).abs() < 1e-15 && (ea - 1.0).abs() < 1e-15);
    assert!(d.relative_errors(&uh.fine, &zero).is_err());
}

#[test]
fn coarse_solution_is_consistent_and_galerkin_orthogonal() {
    let d = disc(3, 4, 3);
    let uh = d.solve_fine().unwrap();
    let spaces = d.build_spaces(SpectralOptions::default()).unwrap();
    let state = OfflineState::initial(&spaces, 3, 1);
    let u = d.solve_coarse(&spaces, &state).unwrap();
    assert_eq!(u.space, SpaceTag::Offline);
    assert_eq!(u.layout, state.layout());

    // fine representation equals basis times coefficients
    let bases = build_offline_space(&spaces, &state).unwrap();
    let npb = d.grid().nodes_per_block();
    let mut rebuilt = vec![0.0; u.fine.len()];
    let mut c = u.coefficients.iter();
    for (i, b) in bases.iter().enumerate() {
        for j in 0..b.ncols() {
            let a = c.next().unwrap();
            for r in 0..npb {
                rebuilt[i * npb + r] += a * b[(r, j)];
            }
        }
    }
    let scale = u.fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(rebuilt.iter().zip(&u.fine).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));

    // a_DG(u_h - u_H, v) = 0 for every offline basis function
    let e: Vec<f64> = uh.fine.iter().zip(&u.fine).map(|(a, b)| a - b).collect();
    let se = d.matrix().mul_vec(&e);
    let norm = d.a_norm2(&e).sqrt();
    for (i, b) in bases.iter().enumerate() {
        for j in 0..b.ncols() {
            let v: f64 = (0..npb).map(|r| se[i * npb + r] * b[(r, j)]).sum();
            let vn: f64 = {
                let mut w = vec![0.0; e.len()];
                for r in 0..npb {
                    w[i * npb + r] = b[(r, j)];
                }
                d.a_norm2(&w).sqrt()
            };
            assert!(v.abs() <= 1e-9 * norm * vn, "block {i} fn {j}: {v}");
        }
    }
}

#[test]
fn nested_spaces_satisfy_the_energy_identity() {
    let d = disc(3, 4, 4);
    let uh = d.solve_fine().unwrap();
    let spaces = d.build_spaces(SpectralOptions::default()).unwrap();
    let mut prev: Option<Vec<f64>> = None;
    for l in 1..=6 {
        let u = d.solve_coarse(&spaces, &OfflineState::initial(&spaces, l, l / 2)).unwrap();
        if let Some(p) = prev {
            let err = |v: &[f64]| d.a_norm2(&uh.fine.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>());
            let step = d.a_norm2(&u.fine.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
            let lhs = err(&p) - err(&u.fine);
            assert!(lhs >= -1e-12 * err(&p));
            assert!((lhs - step).abs() <= 1e-8 * err(&p), "{lhs} vs {step}");
        }
        prev = Some(u.fine);
    }
}

#[test]
fn automatic_penalty_is_coercive() {
    let grid = Grid::unit(3, 4).unwrap();
    let kappa = PermeabilityField::channels(12, 1e4, 0).unwrap();
    let p = Problem::new(grid, kappa).with_gamma(Gamma::Auto { alpha: 2.0 });
    let d = Discretization::new(&p).unwrap();
    assert!(d.gamma() > 0.0);
    assert!(d.solve_fine().is_ok());
}
