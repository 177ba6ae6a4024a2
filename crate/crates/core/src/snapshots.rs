//! Per-block snapshot spaces.
//!
//! Type 1 collects the discrete harmonic extensions of every boundary nodal
//! indicator, type 2 the interior nodal functions. The oversampled variant
//! builds harmonic functions on an enlarged patch, compresses them with a
//! POD and re-extends their traces harmonically inside the block.

use faer::Mat;

use crate::dense::{self, DROP_TOL};
use crate::error::{invalid, Result};
use crate::field::PermeabilityField;
use crate::grid::Grid;
use crate::local_fem::{BlockOperators, HarmonicExtension, Patch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    Harmonic,
    Interior,
    Oversampled,
}

impl SnapshotKind {
    pub fn code(self) -> u64 {
        match self {
            SnapshotKind::Harmonic => 1,
            SnapshotKind::Interior => 2,
            SnapshotKind::Oversampled => 3,
        }
    }

    pub fn from_code(c: u64) -> Option<Self> {
        match c {
            1 => Some(SnapshotKind::Harmonic),
            2 => Some(SnapshotKind::Interior),
            3 => Some(SnapshotKind::Oversampled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SnapshotSpace {
    pub block: usize,
    pub kind: SnapshotKind,
    /// Columns are fine coefficient vectors on the block.
    pub basis: Mat<f64>,
    /// POD eigenvalues of the kept modes, descending (oversampled only).
    pub pod_values: Vec<f64>,
    /// POD eigenvalues that were discarded by truncation.
    pub pod_tail: Vec<f64>,
}

impl SnapshotSpace {
    pub fn len(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of the basis at the boundary loop nodes.
    pub fn traces(&self, ops: &BlockOperators) -> Mat<f64> {
        let b = ops.boundary();
        Mat::from_fn(b.len(), self.len(), |r, c| self.basis[(b[r], c)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Oversampling {
    /// Enlargement in coarse blocks on every side.
    pub halo: usize,
    /// Number of POD modes kept per block.
    pub n_pod: usize,
}

impl Default for Oversampling {
    fn default() -> Self {
        Self { halo: 1, n_pod: 40 }
    }
}

pub fn build_snapshot1(ops: &BlockOperators) -> SnapshotSpace {
    SnapshotSpace {
        block: ops.block,
        kind: SnapshotKind::Harmonic,
        basis: ops.harmonic_basis(),
        pod_values: Vec::new(),
        pod_tail: Vec::new(),
    }
}

pub fn build_snapshot2(ops: &BlockOperators) -> SnapshotSpace {
    let interior = ops.interior();
    let mut basis = Mat::<f64>::zeros(ops.n_nodes(), interior.len());
    for (k, &n) in interior.iter().enumerate() {
        basis[(n, k)] = 1.0;
    }
    SnapshotSpace {
        block: ops.block,
        kind: SnapshotKind::Interior,
        basis,
        pod_values: Vec::new(),
        pod_tail: Vec::new(),
    }
}

/// Oversampled snapshots for `ops.block` (`K_i`), built on the patch of
/// blocks within `halo` of it, clipped at the domain boundary.
pub fn build_oversampled_snapshots(
    grid: &Grid,
    kappa: &PermeabilityField,
    ops: &BlockOperators,
    opts: Oversampling,
) -> Result<SnapshotSpace> {
    if opts.halo == 0 {
        return Err(invalid("oversampling halo must be at least 1"));
    }
    if opts.n_pod == 0 {
        return Err(invalid("at least one POD mode is required"));
    }
    let nf = grid.nf();
    let nc = grid.nc();
    let (bx, by) = grid.block_coords(ops.block);
    let (bx0, by0) = (bx.saturating_sub(opts.halo), by.saturating_sub(opts.halo));
    let (bx1, by1) = ((bx + opts.halo).min(nc - 1), (by + opts.halo).min(nc - 1));
    let patch = Patch::region(grid, kappa, bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1)?;
    let stiffness = patch.stiffness();
    let loop_plus = patch.boundary_loop();
    let nb_plus = loop_plus.len();
    let ext = HarmonicExtension::new(&stiffness, loop_plus, patch.interior())?;
    let full = ext.extend(Mat::<f64>::identity(nb_plus, nb_plus).as_ref());

    // restrict to the nodes of K_i
    let (sx, sy) = ((bx - bx0) * nf, (by - by0) * nf);
    let w = nf + 1;
    let npb = ops.n_nodes();
    let ci = Mat::from_fn(npb, nb_plus, |r, c| full[(patch.node(sx + r % w, sy + r / w), c)]);

    let a_pod = ci.transpose() * ops.mass.mul_dense(ci.as_ref());
    let b_pod = patch.loop_mass();
    let ge = dense::generalized_eigen(a_pod.as_ref(), b_pod.as_ref(), DROP_TOL)?;
    let avail = ge.values.len();
    let n_pod = if opts.n_pod > avail {
        log::warn!(
            "block {}: requested {} POD modes but only {avail} are available",
            ops.block,
            opts.n_pod
        );
        avail
    } else {
        opts.n_pod
    };
    let keep: Vec<usize> = (0..avail).rev().take(n_pod).collect();
    let pod_values: Vec<f64> = keep.iter().map(|&k| ge.values[k]).collect();
    let pod_tail: Vec<f64> = (0..avail - n_pod).rev().map(|k| ge.values[k]).collect();

    // traces on ∂K_i of the kept modes
    let bnd = ops.boundary();
    let modes = Mat::from_fn(nb_plus, keep.len(), |r, c| ge.vectors[(r, keep[c])]);
    let on_block = &ci * &modes;
    let traces = Mat::from_fn(bnd.len(), keep.len(), |r, c| on_block[(bnd[r], c)]);

    // drop dependent traces in the ∂K_i inner product
    let gram = traces.transpose() * &ops.loop_mass * &traces;
    let t = dense::orthonormalizer(gram.as_ref(), DROP_TOL)?;
    let traces = &traces * &t;

    Ok(SnapshotSpace {
        block: ops.block,
        kind: SnapshotKind::Oversampled,
        basis: ops.harmonic.extend(traces.as_ref()),
        pod_values,
        pod_tail,
    })
}

/// Split a block function into its harmonic part and an interior bubble.
pub fn split_harmonic_interior(ops: &BlockOperators, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let u1 = ops.harmonic_extend(&ops.trace(u));
    let u2 = u.iter().zip(&u1).map(|(a, b)| a - b).collect();
    (u1, u2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops(nc: usize, nf: usize, kappa: &PermeabilityField, block: usize) -> (Grid, BlockOperators) {
        let g = Grid::unit(nc, nf).unwrap();
        let o = BlockOperators::new(&g, kappa, block).unwrap();
        (g, o)
    }

    #[test]
    fn harmonic_snapshots() {
        let k = PermeabilityField::constant(4, 1.0).unwrap();
        let (_, o) = ops(2, 2, &k, 0);
        let s = build_snapshot1(&o);
        assert_eq!(s.len(), 8);
        for r in 0..o.n_nodes() {
            let sum: f64 = (0..s.len()).map(|c| s.basis[(r, c)]).sum();
            assert!((sum - 1.0).abs() < 1e-13);
        }
        let res = o.stiffness.mul_dense(s.basis.as_ref());
        for &n in o.interior() {
            for c in 0..s.len() {
                assert!(res[(n, c)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interior_snapshots() {
        let k = PermeabilityField::constant(8, 1.0).unwrap();
        assert_eq!(build_snapshot2(&ops(4, 2, &k, 0).1).len(), 1);
        let (_, o) = ops(2, 4, &k, 1);
        let s = build_snapshot2(&o);
        assert_eq!(s.len(), 9);
        for &n in o.boundary() {
            assert!((0..9).all(|c| s.basis[(n, c)] == 0.0));
        }
    }

    #[test]
    fn split_is_exact_and_energy_orthogonal() {
        let k = PermeabilityField::inclusions(8, 1e3, 5).unwrap();
        let (_, o) = ops(2, 4, &k, 2);
        let u: Vec<f64> = (0..o.n_nodes()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let (u1, u2) = split_harmonic_interior(&o, &u);
        for i in 0..u.len() {
            assert!((u1[i] + u2[i] - u[i]).abs() < 1e-12);
        }
        assert!(o.trace(&u2).iter().all(|v| v.abs() < 1e-14));
        let cross = o.energy(&u1, &u2);
        let scale = o.energy(&u, &u);
        assert!(cross.abs() < 1e-10 * scale);
    }

    #[test]
    fn single_block_oversampling_spans_all_traces() {
        let k = PermeabilityField::inclusions(4, 10.0, 1).unwrap();
        let (g, o) = ops(1, 4, &k, 0);
        let s = build_oversampled_snapshots(&g, &k, &o, Oversampling { halo: 1, n_pod: 100 }).unwrap();
        assert_eq!(s.len(), o.n_boundary());
        assert_eq!(s.kind, SnapshotKind::Oversampled);
        assert!(s.pod_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn oversampled_columns_are_harmonic_and_independent() {
        let k = PermeabilityField::channels(24, 1e4, 3).unwrap();
        let (g, o) = ops(3, 8, &k, 4);
        let s = build_oversampled_snapshots(&g, &k, &o, Oversampling { halo: 1, n_pod: 20 }).unwrap();
        assert!(s.len() <= 20 && s.len() > 10);
        let res = o.stiffness.mul_dense(s.basis.as_ref());
        for &n in o.interior() {
            for c in 0..s.len() {
                assert!(res[(n, c)].abs() < 1e-8 * (1.0 + o.kappa_max));
            }
        }
        let tr = s.traces(&o);
        let gram = tr.transpose() * &o.loop_mass * &tr;
        for i in 0..s.len() {
            for j in 0..s.len() {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - id).abs() < 1e-9);
            }
        }
    }
}
