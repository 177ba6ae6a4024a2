use faer::Mat;
use gmsdg::dg_form::DgForm;
use gmsdg::solve::Gamma;
use gmsdg::{BoundaryData, Discretization, Grid, PermeabilityField, Problem, SourceField};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(m: &gmsdg::sparse::CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m.get(i, j))
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn dg_norm_matches_dense_quadratic_form() {
    let grid = Grid::unit(2, 2).unwrap();
    let kappa = PermeabilityField::channels(4, 100.0, 3).unwrap();
    let dg = DgForm::new(grid, &kappa, 8.0).unwrap();
    let m = dense(&dg.volume_matrix()) + dense(&dg.penalty_matrix());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let u = random_vec(dg.grid().num_fine_dofs(), &mut rng);
        let v = DVector::from_vec(u.clone());
        let oracle = v.dot(&(&m * &v));
        let got = dg.dg_norm2(&u);
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}

#[test]
fn zero_has_zero_norm() {
    let grid = Grid::unit(2, 2).unwrap();
    let kappa = PermeabilityField::constant(4, 1.0).unwrap();
    let dg = DgForm::new(grid, &kappa, 8.0).unwrap();
    assert_eq!(dg.dg_norm(&vec![0.0; dg.grid().num_fine_dofs()]), 0.0);
}

#[test]
fn continuous_function_has_no_interior_jump_penalty() {
    // sample a globally continuous function blockwise
    let grid = Grid::unit(2, 4).unwrap();
    let kappa = PermeabilityField::constant(8, 1.0).unwrap();
    let dg = DgForm::new(grid.clone(), &kappa, 8.0).unwrap();
    let npb = grid.nodes_per_block();
    let mut u = vec![0.0; grid.num_fine_dofs()];
    for b in 0..grid.num_blocks() {
        for n in 0..npb {
            let [x, y] = grid.node_coords(b, n);
            u[b * npb + n] = (x * 3.0).sin() + x * y;
        }
    }
    for e in grid.edges().iter().filter(|e| e.is_interior()) {
        let j = dg.jump(e, &u);
        assert!(j.iter().all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn assembled_matrix_is_symmetric_and_positive_definite() {
    let grid = Grid::unit(3, 4).unwrap();
    let kappa = PermeabilityField::channels(12, 1e4, 5).unwrap();
    let d = Discretization::new(&Problem::new(grid, kappa)).unwrap();
    let s = dense(d.matrix());
    let asym = (&s - s.transpose()).abs().max();
    assert!(asym <= 1e-12 * s.abs().max());
    let eig = SymmetricEigen::new(s);
    assert!(eig.eigenvalues.min() > 0.0);
}

#[test]
fn a_norm_of_eigenvector_is_root_eigenvalue() {
    let grid = Grid::unit(2, 2).unwrap();
    let kappa = PermeabilityField::constant(4, 1.0).unwrap();
    let d = Discretization::new(&Problem::new(grid.clone(), kappa)).unwrap();
    let npb = grid.nodes_per_block();
    let bases: Vec<Mat<f64>> = (0..grid.num_blocks()).map(|_| Mat::identity(npb, npb)).collect();
    let sys = d.galerkin(&bases).unwrap();
    let eig = SymmetricEigen::new(dense(&sys.matrix));
    for k in 0..sys.dim() {
        let c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let n = sys.a_norm(&c).unwrap();
        assert!((n - eig.eigenvalues[k].sqrt()).abs() < 1e-10);
    }
    assert_eq!(sys.a_norm(&vec![0.0; sys.dim()]).unwrap(), 0.0);
}

#[test]
fn full_nodal_basis_reproduces_fine_solution() {
    let grid = Grid::unit(2, 4).unwrap();
    let kappa = PermeabilityField::inclusions(8, 50.0, 2).unwrap();
    let d = Discretization::new(&Problem::new(grid.clone(), kappa)).unwrap();
    let npb = grid.nodes_per_block();
    let bases: Vec<Mat<f64>> = (0..grid.num_blocks()).map(|_| Mat::identity(npb, npb)).collect();
    let (_, fine) = d.solve_in_basis(&bases).unwrap();
    let uh = d.solve_fine().unwrap();
    let err = fine.iter().zip(&uh.fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn bilinear_boundary_data_is_reproduced_on_one_block() {
    let nf = 4;
    let grid = Grid::unit(1, nf).unwrap();
    let kappa = PermeabilityField::constant(nf, 1.0).unwrap();
    let problem = Problem::new(grid.clone(), kappa)
        .with_source(SourceField::constant(nf, 0.0))
        .with_boundary(BoundaryData::Bilinear)
        .with_gamma(Gamma::Fixed(1e4));
    let d = Discretization::new(&problem).unwrap();
    let u = d.solve_fine().unwrap();
    let mut worst: f64 = 0.0;
    for n in 0..grid.nodes_per_block() {
        let [x, y] = grid.node_coords(0, n);
        worst = worst.max((u.fine[n] - x * y).abs());
    }
    // xy is not P1 on triangles, so only discretization accuracy is expected
    assert!(worst < 0.02, "max nodal deviation {worst}");
}

#[test]
fn load_matches_dense_galerkin_of_source() {
    // with g = 0 the load is the P1 mass applied to f per block
    let grid = Grid::unit(2, 2).unwrap();
    let kappa = PermeabilityField::constant(4, 1.0).unwrap();
    let dg = DgForm::new(grid.clone(), &kappa, 8.0).unwrap();
    let b = dg.load(&SourceField::constant(4, 1.0), &BoundaryData::Zero).unwrap();
    let total: f64 = b.iter().sum();
    assert!((total - 1.0).abs() < 1e-13, "{total}");
}
