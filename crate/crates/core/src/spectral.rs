//! Local spectral problems and offline-space bookkeeping.
//!
//! Family 1 lives on the harmonic snapshot space and solves
//! `a_K(φ, v) = (λ/H) ∫_∂K κ̃ φ v`; family 2 lives on interior functions and
//! solves `a_K(ξ, v) = (λ/H²) ∫_K κ ξ v`. Eigenfunctions are normalized in
//! the respective mass inner product.

use faer::Mat;
use rayon::prelude::*;

use crate::dense::{self, SpdSolver, DROP_TOL};
use crate::dg_form::DgForm;
use crate::error::{invalid, Error, Result};
use crate::field::PermeabilityField;
use crate::local_fem::BlockOperators;
use crate::snapshots::{build_oversampled_snapshots, build_snapshot1, Oversampling, SnapshotSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    One,
    Two,
}

impl Family {
    pub const BOTH: [Family; 2] = [Family::One, Family::Two];

    pub fn index(self) -> usize {
        match self {
            Family::One => 0,
            Family::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// Eigenpairs of one local spectral problem, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenData {
    pub block: usize,
    pub family: Family,
    pub values: Vec<f64>,
    /// Eigenvectors in snapshot coordinates (interior nodal values for family 2).
    pub coeffs: Mat<f64>,
    /// Eigenfunctions as fine coefficient vectors on the block.
    pub functions: Mat<f64>,
}

impl EigenData {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Solve the family-1 problem on a snapshot space.
pub fn solve_spectral1(ops: &BlockOperators, snap: &SnapshotSpace, kappa_tilde: f64, coarse_h: f64) -> Result<EigenData> {
    let (a1, m1) = family1_matrices(ops, snap, kappa_tilde);
    let ge = dense::generalized_eigen(a1.as_ref(), m1.as_ref(), DROP_TOL)?;
    // round-off can push the zero eigenvalue slightly negative
    let values = ge.values.iter().map(|&mu| (mu * coarse_h).max(0.0)).collect();
    let functions = &snap.basis * &ge.vectors;
    Ok(EigenData {
        block: ops.block,
        family: Family::One,
        values,
        coeffs: ge.vectors,
        functions,
    })
}

/// Stiffness and `κ̃`-weighted trace mass of a snapshot space.
pub fn family1_matrices(ops: &BlockOperators, snap: &SnapshotSpace, kappa_tilde: f64) -> (Mat<f64>, Mat<f64>) {
    let mut a1 = snap.basis.transpose() * ops.stiffness.mul_dense(snap.basis.as_ref());
    dense::symmetrize(&mut a1);
    let tr = snap.traces(ops);
    let mut m1 = tr.transpose() * &ops.loop_mass * &tr;
    for j in 0..m1.ncols() {
        for i in 0..m1.nrows() {
            m1[(i, j)] *= kappa_tilde;
        }
    }
    dense::symmetrize(&mut m1);
    (a1, m1)
}

/// Solve the family-2 problem, keeping the first `m_max` eigenpairs
/// (all of them when `None`).
pub fn solve_spectral2(ops: &BlockOperators, coarse_h: f64, m_max: Option<usize>) -> Result<EigenData> {
    let a = ops.interior_stiffness();
    let m = ops.interior_mass_kappa();
    let n_int = a.nrows();
    if n_int == 0 {
        return Err(invalid("block has no interior nodes"));
    }
    let keep = match m_max {
        Some(k) if k > n_int => {
            log::debug!("m_max = {k} exceeds the {n_int} interior nodes of block {}; clamping", ops.block);
            n_int
        }
        Some(k) => k,
        None => n_int,
    };
    let ge = dense::generalized_eigen(a.as_ref(), m.as_ref(), DROP_TOL)?;
    let h2 = coarse_h * coarse_h;
    let values = ge.values[..keep].iter().map(|&mu| (mu * h2).max(0.0)).collect();
    let coeffs = Mat::from_fn(n_int, keep, |r, c| ge.vectors[(r, c)]);
    let mut functions = Mat::<f64>::zeros(ops.n_nodes(), keep);
    for (k, &n) in ops.interior().iter().enumerate() {
        for c in 0..keep {
            functions[(n, c)] = coeffs[(k, c)];
        }
    }
    Ok(EigenData {
        block: ops.block,
        family: Family::Two,
        values,
        coeffs,
        functions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    /// Compute the family-2 (interior) spectrum.
    pub family2: bool,
    /// Number of family-2 eigenpairs kept; `None` keeps all.
    pub m_max: Option<usize>,
    pub oversampling: Option<Oversampling>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            family2: true,
            m_max: Some(64),
            oversampling: None,
        }
    }
}

/// Everything the solver needs about one block's multiscale space.
#[derive(Debug)]
pub struct BlockSpace {
    pub block: usize,
    pub snapshot: SnapshotSpace,
    pub eig1: EigenData,
    pub eig2: Option<EigenData>,
    /// Family-1 stiffness in snapshot coordinates.
    pub a1: Mat<f64>,
    /// Family-1 norm gram `H⁻¹ ∫_∂K κ̃ u v` in snapshot coordinates.
    pub gram1: Mat<f64>,
    gram1_solver: SpdSolver,
    /// Family-2 norm gram `H⁻² ∫_K κ u v` on interior nodes.
    pub gram2: Option<Mat<f64>>,
    gram2_solver: Option<SpdSolver>,
    /// Interior stiffness (family 2 only).
    pub a2: Option<Mat<f64>>,
    pub coarse_h: f64,
}

impl BlockSpace {
    pub fn build(
        ops: &BlockOperators,
        snapshot: SnapshotSpace,
        kappa_tilde: f64,
        coarse_h: f64,
        opts: &SpectralOptions,
    ) -> Result<Self> {
        let eig1 = solve_spectral1(ops, &snapshot, kappa_tilde, coarse_h)?;
        let (a1, m1) = family1_matrices(ops, &snapshot, kappa_tilde);
        let gram1 = Mat::from_fn(m1.nrows(), m1.ncols(), |i, j| m1[(i, j)] / coarse_h);
        let gram1_solver = SpdSolver::new(gram1.as_ref())?;
        let (eig2, gram2, gram2_solver, a2) = if opts.family2 && !ops.interior().is_empty() {
            let e = solve_spectral2(ops, coarse_h, opts.m_max)?;
            let m = ops.interior_mass_kappa();
            let h2 = coarse_h * coarse_h;
            let g = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / h2);
            let s = SpdSolver::new(g.as_ref())?;
            (Some(e), Some(g), Some(s), Some(ops.interior_stiffness()))
        } else {
            (None, None, None, None)
        };
        Ok(Self {
            block: ops.block,
            snapshot,
            eig1,
            eig2,
            a1,
            gram1,
            gram1_solver,
            gram2,
            gram2_solver,
            a2,
            coarse_h,
        })
    }

    pub fn eigen(&self, family: Family) -> Option<&EigenData> {
        match family {
            Family::One => Some(&self.eig1),
            Family::Two => self.eig2.as_ref(),
        }
    }

    /// Number of computed eigenfunctions of a family.
    pub fn spectrum_len(&self, family: Family) -> usize {
        self.eigen(family).map_or(0, |e| e.len())
    }

    pub fn gram(&self, family: Family) -> Option<&Mat<f64>> {
        match family {
            Family::One => Some(&self.gram1),
            Family::Two => self.gram2.as_ref(),
        }
    }

    pub fn gram_solver(&self, family: Family) -> Option<&SpdSolver> {
        match family {
            Family::One => Some(&self.gram1_solver),
            Family::Two => self.gram2_solver.as_ref(),
        }
    }
}

/// Offline spaces of all blocks.
#[derive(Debug)]
pub struct OfflineSpaces {
    pub blocks: Vec<BlockSpace>,
    pub coarse_h: f64,
    pub options: SpectralOptions,
}

impl OfflineSpaces {
    pub fn build(dg: &DgForm, kappa: &PermeabilityField, options: SpectralOptions) -> Result<Self> {
        let grid = dg.grid();
        let h = grid.coarse_h();
        let blocks = (0..grid.num_blocks())
            .into_par_iter()
            .map(|i| {
                let ops = dg.block(i);
                let snap = match options.oversampling {
                    Some(o) => build_oversampled_snapshots(grid, kappa, ops, o)?,
                    None => build_snapshot1(ops),
                };
                BlockSpace::build(ops, snap, dg.coupling().kappa_tilde[i], h, &options)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            blocks,
            coarse_h: h,
            options,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &BlockSpace {
        &self.blocks[i]
    }

    /// Largest family-1 eigenvalue over all blocks.
    pub fn lambda_max(&self) -> f64 {
        self.blocks.iter().map(|b| b.eig1.lambda_max()).fold(0.0, f64::max)
    }
}

/// Per-block active eigen-indices of both families.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OfflineState {
    active: Vec<[Vec<usize>; 2]>,
}

impl OfflineState {
    /// The first `l1` family-1 and `l2` family-2 eigenfunctions of every
    /// block, clamped to the available spectra.
    pub fn initial(spaces: &OfflineSpaces, l1: usize, l2: usize) -> Self {
        let active = spaces
            .blocks
            .iter()
            .map(|b| {
                [
                    (0..l1.min(b.spectrum_len(Family::One))).collect(),
                    (0..l2.min(b.spectrum_len(Family::Two))).collect(),
                ]
            })
            .collect();
        Self { active }
    }

    /// Explicit index sets, validated against the spectra.
    pub fn from_sets(spaces: &OfflineSpaces, sets: Vec<[Vec<usize>; 2]>) -> Result<Self> {
        if sets.len() != spaces.num_blocks() {
            return Err(invalid("one pair of index sets per block is required"));
        }
        let mut active = Vec::with_capacity(sets.len());
        for (i, [mut s1, mut s2]) in sets.into_iter().enumerate() {
            s1.sort_unstable();
            s1.dedup();
            s2.sort_unstable();
            s2.dedup();
            for (fam, s) in [(Family::One, &s1), (Family::Two, &s2)] {
                let len = spaces.block(i).spectrum_len(fam);
                if let Some(&bad) = s.iter().find(|&&k| k >= len) {
                    return Err(Error::OutOfRange { index: bad, len });
                }
            }
            active.push([s1, s2]);
        }
        Ok(Self { active })
    }

    /// Every computed eigenfunction of the given families.
    pub fn full(spaces: &OfflineSpaces, families: &[Family]) -> Self {
        let active = spaces
            .blocks
            .iter()
            .map(|b| {
                let f = |fam: Family| {
                    if families.contains(&fam) {
                        (0..b.spectrum_len(fam)).collect()
                    } else {
                        Vec::new()
                    }
                };
                [f(Family::One), f(Family::Two)]
            })
            .collect();
        Self { active }
    }

    pub fn num_blocks(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self, block: usize, family: Family) -> &[usize] {
        &self.active[block][family.index()]
    }

    pub fn dof(&self) -> usize {
        self.active.iter().map(|a| a[0].len() + a[1].len()).sum()
    }

    pub fn block_dof(&self, block: usize) -> usize {
        self.active[block][0].len() + self.active[block][1].len()
    }

    pub fn contains(&self, block: usize, family: Family, index: usize) -> bool {
        self.active(block, family).binary_search(&index).is_ok()
    }

    /// One past the largest active index, i.e. the position of `λ_{l+1}`.
    pub fn frontier(&self, block: usize, family: Family) -> usize {
        self.active(block, family).last().map_or(0, |&k| k + 1)
    }

    /// Returns whether the index was newly inserted.
    pub fn insert(&mut self, block: usize, family: Family, index: usize) -> bool {
        let set = &mut self.active[block][family.index()];
        match set.binary_search(&index) {
            Ok(_) => false,
            Err(p) => {
                set.insert(p, index);
                true
            }
        }
    }

    pub fn remove(&mut self, block: usize, family: Family, index: usize) -> bool {
        let set = &mut self.active[block][family.index()];
        match set.binary_search(&index) {
            Ok(p) => {
                set.remove(p);
                true
            }
            Err(_) => false,
        }
    }

    /// Whether every active set is a prefix `{0, .., l-1}`.
    pub fn is_prefix(&self) -> bool {
        self.active
            .iter()
            .all(|a| a.iter().all(|s| s.iter().enumerate().all(|(k, &v)| k == v)))
    }

    /// `(block, family, eigen-index)` of every basis function, in the order
    /// used by [`build_offline_space`] and the coarse solution vector.
    pub fn layout(&self) -> Vec<(usize, Family, usize)> {
        let mut out = Vec::with_capacity(self.dof());
        for (i, a) in self.active.iter().enumerate() {
            for fam in Family::BOTH {
                out.extend(a[fam.index()].iter().map(|&k| (i, fam, k)));
            }
        }
        out
    }

    pub fn sets(&self) -> &[[Vec<usize>; 2]] {
        &self.active
    }
}

/// Per-block basis matrices of the active eigenfunctions.
pub fn build_offline_space(spaces: &OfflineSpaces, state: &OfflineState) -> Result<Vec<Mat<f64>>> {
    if state.num_blocks() != spaces.num_blocks() {
        return Err(invalid("offline state does not match the spaces"));
    }
    if state.dof() == 0 {
        return Err(invalid("offline space is empty"));
    }
    spaces
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let s1 = state.active(i, Family::One);
            let s2 = state.active(i, Family::Two);
            let e1 = &b.eig1.functions;
            let n = e1.nrows();
            let e2 = b.eig2.as_ref().map(|e| &e.functions);
            if !s2.is_empty() && e2.is_none() {
                return Err(invalid(format!("block {i}: family-2 spectrum was not computed")));
            }
            Ok(Mat::from_fn(n, s1.len() + s2.len(), |r, c| {
                if c < s1.len() {
                    e1[(r, s1[c])]
                } else {
                    e2.unwrap()[(r, s2[c - s1.len()])]
                }
            }))
        })
        .collect()
}

/// Truncation diagnostics for one snapshot function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionDiagnostics {
    /// `‖v - P_l v‖` in the family norm.
    pub residual: f64,
    /// `λ_{l+1}^{-1/2} a_K(v, v)^{1/2}`.
    pub bound: f64,
    /// `a_K(P_l v, P_l v)^{1/2} / ‖v‖` in the family norm.
    pub stability: f64,
}

/// Project `v` (snapshot coordinates, interior nodal values for family 2)
/// onto the first `l` eigenfunctions and compare the remainder with the
/// spectral bound.
pub fn projection_diagnostics(space: &BlockSpace, family: Family, v: &[f64], l: usize) -> Result<ProjectionDiagnostics> {
    let eig = space
        .eigen(family)
        .ok_or_else(|| invalid("family spectrum was not computed"))?;
    if l >= eig.len() {
        return Err(Error::OutOfRange { index: l, len: eig.len() });
    }
    let h = space.coarse_h;
    let (gram, stiff, scale) = match family {
        Family::One => (&space.gram1, &space.a1, h),
        Family::Two => (space.gram2.as_ref().unwrap(), space.a2.as_ref().unwrap(), h * h),
    };
    // eigenvectors are orthonormal in `scale * gram`
    let x = &eig.coeffs;
    if v.len() != x.nrows() {
        return Err(invalid(format!("expected {} coordinates, got {}", x.nrows(), v.len())));
    }
    let gv = dense::mat_vec(gram.as_ref(), v);
    let mut pv = vec![0.0; v.len()];
    for k in 0..l {
        let c: f64 = (0..x.nrows()).map(|r| x[(r, k)] * gv[r]).sum::<f64>() * scale;
        for (r, p) in pv.iter_mut().enumerate() {
            *p += c * x[(r, k)];
        }
    }
    let rem: Vec<f64> = v.iter().zip(&pv).map(|(a, b)| a - b).collect();
    let norm_v = dense::quadratic(gram.as_ref(), v).max(0.0).sqrt();
    let residual = dense::quadratic(gram.as_ref(), &rem).max(0.0).sqrt();
    let energy = dense::quadratic(stiff.as_ref(), v).max(0.0);
    let bound = (energy / eig.values[l]).sqrt();
    let pe = dense::quadratic(stiff.as_ref(), &pv).max(0.0).sqrt();
    let stability = if norm_v > 0.0 { pe / norm_v } else { 0.0 };
    Ok(ProjectionDiagnostics {
        residual,
        bound,
        stability,
    })
}
