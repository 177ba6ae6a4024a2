use gmsdg::local_fem::BlockOperators;
use gmsdg::snapshots::{build_snapshot1, build_snapshot2};
use gmsdg::{Grid, PermeabilityField};
use nalgebra::{DMatrix, DVector};

#[test]
fn grid_and_topology_counts() {
    let g = Grid::unit(16, 32).unwrap();
    assert_eq!(g.num_blocks(), 256);
    assert_eq!(g.fine_cells_per_axis(), 512);
    let t = g.topology(37).unwrap();
    assert_eq!((t.boundary.len(), t.interior.len()), (128, 961));

    let g = Grid::unit(2, 2).unwrap();
    assert_eq!(g.num_interior_edges(), 4);
    let t = g.topology(0).unwrap();
    assert_eq!((t.n_nodes, t.boundary.len(), t.interior.len()), (9, 8, 1));
    for e in g.edges().iter().filter(|e| e.is_interior()) {
        assert!(e.plus.block < e.minus.unwrap().block);
    }
    assert!(Grid::unit(2, 4).unwrap().topology(3).unwrap().boundary.len() == 16);
}

#[test]
fn harmonic_extension_matches_dense_interior_solve() {
    let nf = 4;
    let grid = Grid::unit(1, nf).unwrap();
    let kappa = PermeabilityField::channels(nf, 1e3, 2).unwrap();
    let ops = BlockOperators::new(&grid, &kappa, 0).unwrap();
    let a = &ops.stiffness;
    let (b, i) = (ops.boundary().to_vec(), ops.interior().to_vec());
    let aii = DMatrix::from_fn(i.len(), i.len(), |r, c| a.get(i[r], i[c]));
    let aib = DMatrix::from_fn(i.len(), b.len(), |r, c| a.get(i[r], b[c]));
    let trace: Vec<f64> = (0..b.len()).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
    let rhs = -(aib * DVector::from_vec(trace.clone()));
    let oracle = aii.lu().solve(&rhs).unwrap();
    let u = ops.harmonic_extend(&trace);
    for (k, &n) in i.iter().enumerate() {
        assert!((u[n] - oracle[k]).abs() < 1e-10, "{} vs {}", u[n], oracle[k]);
    }
    for (k, &n) in b.iter().enumerate() {
        assert_eq!(u[n], trace[k]);
    }
}

#[test]
fn normal_flux_of_harmonic_function_is_boundary_rows_of_stiffness() {
    let nf = 4;
    let grid = Grid::unit(1, nf).unwrap();
    let kappa = PermeabilityField::inclusions(nf, 50.0, 1).unwrap();
    let ops = BlockOperators::new(&grid, &kappa, 0).unwrap();
    let trace: Vec<f64> = (0..ops.n_boundary()).map(|k| (k as f64 * 0.37).sin()).collect();
    let u = ops.harmonic_extend(&trace);
    let au = ops.stiffness.mul_vec(&u);
    let f = ops.normal_flux(&u);
    for (k, &n) in ops.boundary().iter().enumerate() {
        assert!((f[k] - au[n]).abs() < 1e-10, "{} vs {}", f[k], au[n]);
    }
}

#[test]
fn snapshot_dimensions() {
    for (nf, n1, n2) in [(2, 8, 1), (4, 16, 9)] {
        let grid = Grid::unit(1, nf).unwrap();
        let kappa = PermeabilityField::constant(nf, 1.0).unwrap();
        let ops = BlockOperators::new(&grid, &kappa, 0).unwrap();
        assert_eq!(build_snapshot1(&ops).len(), n1);
        assert_eq!(build_snapshot2(&ops).len(), n2);
    }
}
