//! Fine-grid reference solve, Galerkin solves in offline spaces, and the
//! relative error measures.

use faer::Mat;

use crate::dense::{self, SpdSolver};
use crate::dg_form::{build_blocks, Coupling, DgForm, DgSystem, DEFAULT_GAMMA};
use crate::error::{invalid, Error, Result};
use crate::field::{BoundaryData, PermeabilityField, SourceField};
use crate::grid::Grid;
use crate::sparse::{CsrMatrix, SparseCholesky};
use crate::spectral::{build_offline_space, Family, OfflineSpaces, OfflineState};

/// Penalty parameter choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    /// `γ = α C_κ h max_K Λ_K`, with `Λ_K` the largest eigenvalue of
    /// `a_K(v̂, v̂) ≤ Λ κ̃ ∫_∂K v²` over harmonic `v̂`.
    Auto { alpha: f64 },
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::Fixed(DEFAULT_GAMMA)
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub kappa: PermeabilityField,
    pub source: SourceField,
    pub boundary: BoundaryData,
    pub gamma: Gamma,
}

impl Problem {
    /// `f = 1`, `g = x y`, default penalty.
    pub fn new(grid: Grid, kappa: PermeabilityField) -> Self {
        let n = grid.fine_cells_per_axis();
        Self {
            grid,
            kappa,
            source: SourceField::constant(n, 1.0),
            boundary: BoundaryData::Bilinear,
            gamma: Gamma::default(),
        }
    }

    pub fn with_source(mut self, source: SourceField) -> Self {
        self.source = source;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryData) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_gamma(mut self, gamma: Gamma) -> Self {
        self.gamma = gamma;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    Fine,
    Offline,
    Snapshot,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub space: SpaceTag,
    /// Coefficients in the basis of `space` (equal to `fine` for fine solves).
    pub coefficients: Vec<f64>,
    /// Block-wise fine nodal values.
    pub fine: Vec<f64>,
    /// Owner of each coefficient for offline solves.
    pub layout: Vec<(usize, Family, usize)>,
}

/// A discretized problem: block operators, the fine DG matrix and the load.
#[derive(Debug)]
pub struct Discretization {
    dg: DgForm,
    kappa: PermeabilityField,
    matrix: CsrMatrix,
    load: Vec<f64>,
}

impl Discretization {
    pub fn new(problem: &Problem) -> Result<Self> {
        let grid = problem.grid.clone();
        problem.kappa.check_grid(&grid)?;
        problem.source.check_grid(&grid)?;
        let blocks = build_blocks(&grid, &problem.kappa)?;
        let gamma = match problem.gamma {
            Gamma::Fixed(g) => g,
            Gamma::Auto { alpha } => {
                let coupling = Coupling::new(&grid, blocks.iter().map(|b| b.kappa_max).collect());
                auto_gamma(&grid, &blocks, &coupling, alpha)?
            }
        };
        let dg = DgForm::from_blocks(grid, blocks, gamma)?;
        let matrix = dg.assemble();
        let load = dg.load(&problem.source, &problem.boundary)?;
        Ok(Self {
            dg,
            kappa: problem.kappa.clone(),
            matrix,
            load,
        })
    }

    pub fn dg(&self) -> &DgForm {
        &self.dg
    }

    pub fn grid(&self) -> &Grid {
        self.dg.grid()
    }

    pub fn kappa(&self) -> &PermeabilityField {
        &self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.dg.gamma()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Replace the right-hand side, e.g. with `S u` for a manufactured `u`.
    pub fn set_load(&mut self, load: Vec<f64>) -> Result<()> {
        if load.len() != self.matrix.nrows() {
            return Err(invalid("load vector has the wrong length"));
        }
        self.load = load;
        Ok(())
    }

    pub fn build_spaces(&self, options: crate::spectral::SpectralOptions) -> Result<OfflineSpaces> {
        OfflineSpaces::build(&self.dg, &self.kappa, options)
    }

    /// Solve the fine DG system.
    pub fn solve_fine(&self) -> Result<Solution> {
        let chol = SparseCholesky::factor(&self.matrix).map_err(|e| {
            Error::Factorization(format!(
                "fine DG matrix is not positive definite; the penalty γ = {} is likely too small ({e})",
                self.gamma()
            ))
        })?;
        let u = chol.solve(&self.load);
        Ok(Solution {
            space: SpaceTag::Fine,
            coefficients: u.clone(),
            fine: u,
            layout: Vec::new(),
        })
    }

    /// Galerkin system for per-block bases.
    pub fn galerkin(&self, bases: &[Mat<f64>]) -> Result<DgSystem> {
        self.dg.galerkin(&self.matrix, &self.load, bases)
    }

    /// Solve in the span of per-block bases, returning the coefficients
    /// and the fine representation.
    pub fn solve_in_basis(&self, bases: &[Mat<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let sys = self.galerkin(bases)?;
        let c = solve_reduced(&sys)?;
        let fine = self.expand(bases, &sys.offsets, &c);
        Ok((c, fine))
    }

    /// Solve in the offline space selected by `state`.
    pub fn solve_coarse(&self, spaces: &OfflineSpaces, state: &OfflineState) -> Result<Solution> {
        let bases = build_offline_space(spaces, state)?;
        let (c, fine) = self.solve_in_basis(&bases)?;
        Ok(Solution {
            space: SpaceTag::Offline,
            coefficients: c,
            fine,
            layout: state.layout(),
        })
    }

    /// Solution with every family-1 eigenfunction active.
    pub fn solve_snapshot(&self, spaces: &OfflineSpaces) -> Result<Solution> {
        let state = OfflineState::full(spaces, &[Family::One]);
        let mut s = self.solve_coarse(spaces, &state)?;
        s.space = SpaceTag::Snapshot;
        Ok(s)
    }

    fn expand(&self, bases: &[Mat<f64>], offsets: &[usize], c: &[f64]) -> Vec<f64> {
        let npb = self.grid().nodes_per_block();
        let mut out = vec![0.0; self.grid().num_fine_dofs()];
        for (i, b) in bases.iter().enumerate() {
            let ci = &c[offsets[i]..offsets[i] + b.ncols()];
            let v = dense::mat_vec(b.as_ref(), ci);
            out[i * npb..(i + 1) * npb].copy_from_slice(&v);
        }
        out
    }

    pub fn a_norm2(&self, u: &[f64]) -> f64 {
        self.matrix.quadratic(u)
    }

    pub fn l2_norm2(&self, u: &[f64]) -> f64 {
        self.dg.l2_dot(u, u)
    }

    /// `b - S u`.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let su = self.matrix.mul_vec(u);
        self.load.iter().zip(&su).map(|(b, s)| b - s).collect()
    }

    /// Relative L² and energy errors `(e2, ea)` of `u` against `reference`.
    pub fn relative_errors(&self, u: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
        let d: Vec<f64> = u.iter().zip(reference).map(|(a, b)| a - b).collect();
        let r2 = self.l2_norm2(reference);
        let ra = self.a_norm2(reference);
        if r2 <= 0.0 || ra <= 0.0 {
            return Err(invalid("reference solution has zero norm"));
        }
        let e2 = (self.l2_norm2(&d).max(0.0) / r2).sqrt();
        let ea = (self.a_norm2(&d).max(0.0) / ra).sqrt();
        Ok((e2, ea))
    }
}

/// Solve a reduced system by sparse Cholesky, falling back to a dense
/// pseudo-inverse when the basis is numerically dependent.
pub fn solve_reduced(sys: &DgSystem) -> Result<Vec<f64>> {
    match SparseCholesky::factor(&sys.matrix) {
        Ok(ch) => Ok(ch.solve(&sys.rhs)),
        Err(e) => {
            log::warn!("reduced system not positive definite ({e}); using an orthogonalized basis");
            let dense = sys.matrix.to_dense();
            let s = SpdSolver::pseudo(dense.as_ref())?;
            Ok(s.solve(&sys.rhs))
        }
    }
}

/// Largest eigenvalue of `Σ_K v = Λ κ̃ M_∂ v` for every block.
pub fn trace_constants(blocks: &[crate::local_fem::BlockOperators], coupling: &Coupling) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    blocks
        .par_iter()
        .map(|b| {
            let m = b.boundary_mass(coupling.kappa_tilde[b.block])?;
            let ge = dense::generalized_eigen(b.schur.as_ref(), m.as_ref(), dense::DROP_TOL)?;
            Ok(ge.values.last().copied().unwrap_or(0.0))
        })
        .collect()
}

fn auto_gamma(grid: &Grid, blocks: &[crate::local_fem::BlockOperators], coupling: &Coupling, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(invalid("gamma.alpha must be positive"));
    }
    let lam = trace_constants(blocks, coupling)?.into_iter().fold(0.0, f64::max);
    let gamma = alpha * coupling.c_kappa(grid) * grid.fine_h() * lam;
    log::info!("automatic penalty γ = {gamma:.6e}");
    Ok(gamma)
}
