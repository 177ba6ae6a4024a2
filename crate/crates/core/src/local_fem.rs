//! P1 kernels on rectangular lattices of fine cells: κ-weighted stiffness,
//! mass matrices, discrete harmonic extension and the variational normal
//! flux of a block.

use faer::Mat;
use faer::MatRef;

use crate::dense;
use crate::error::{Error, Result};
use crate::field::PermeabilityField;
use crate::grid::{lattice_boundary_loop, lattice_interior, Grid};
use crate::sparse::{CsrMatrix, SparseCholesky, TripletBuilder};

/// Element stiffness of a P1 triangle with unit coefficient.
pub fn p1_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * area2.abs();
    // gradient of barycentric i is the rotated opposite edge over 2|T|
    let grad = |i: usize| {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2]
    };
    let g = [grad(0), grad(1), grad(2)];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Element mass of a P1 triangle of the given area.
pub fn p1_mass(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// A lattice of `ncx × ncy` square cells of side `h`, each split along its
/// lower-left to upper-right diagonal, with κ constant per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub ncx: usize,
    pub ncy: usize,
    pub h: f64,
    pub origin: [f64; 2],
    kappa: Vec<f64>,
}

impl Patch {
    pub fn new(ncx: usize, ncy: usize, h: f64, origin: [f64; 2], kappa: Vec<f64>) -> Result<Self> {
        assert_eq!(kappa.len(), ncx * ncy);
        if let Some((cell, &value)) = kappa.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidKappa { cell, value });
        }
        Ok(Self {
            ncx,
            ncy,
            h,
            origin,
            kappa,
        })
    }

    /// Patch covering the blocks `bx0..bx0+nbx` × `by0..by0+nby`.
    pub fn region(grid: &Grid, kappa: &PermeabilityField, bx0: usize, by0: usize, nbx: usize, nby: usize) -> Result<Self> {
        kappa.check_grid(grid)?;
        let nf = grid.nf();
        let (ncx, ncy) = (nbx * nf, nby * nf);
        let (cx0, cy0) = (bx0 * nf, by0 * nf);
        let mut k = Vec::with_capacity(ncx * ncy);
        for cy in 0..ncy {
            for cx in 0..ncx {
                k.push(kappa.at(cx0 + cx, cy0 + cy));
            }
        }
        let d = grid.domain();
        let origin = [d.x0 + bx0 as f64 * grid.coarse_h(), d.y0 + by0 as f64 * grid.coarse_h()];
        Self::new(ncx, ncy, grid.fine_h(), origin, k)
    }

    pub fn block(grid: &Grid, kappa: &PermeabilityField, block: usize) -> Result<Self> {
        let (bx, by) = grid.block_coords(block);
        Self::region(grid, kappa, bx, by, 1, 1)
    }

    pub fn n_nodes(&self) -> usize {
        (self.ncx + 1) * (self.ncy + 1)
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        iy * (self.ncx + 1) + ix
    }

    pub fn node_coords(&self, n: usize) -> [f64; 2] {
        let w = self.ncx + 1;
        [self.origin[0] + (n % w) as f64 * self.h, self.origin[1] + (n / w) as f64 * self.h]
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa.iter().cloned().fold(0.0, f64::max)
    }

    pub fn boundary_loop(&self) -> Vec<usize> {
        lattice_boundary_loop(self.ncx, self.ncy)
    }

    pub fn interior(&self) -> Vec<usize> {
        lattice_interior(self.ncx, self.ncy)
    }

    /// Calls `f(cell, nodes, coords)` for both triangles of every cell.
    fn for_each_triangle(&self, mut f: impl FnMut(usize, [usize; 3], [[f64; 2]; 3])) {
        let h = self.h;
        for cy in 0..self.ncy {
            for cx in 0..self.ncx {
                let cell = cy * self.ncx + cx;
                let v00 = self.node(cx, cy);
                let v10 = v00 + 1;
                let v01 = v00 + self.ncx + 1;
                let v11 = v01 + 1;
                let (x, y) = (cx as f64 * h, cy as f64 * h);
                f(cell, [v00, v10, v11], [[x, y], [x + h, y], [x + h, y + h]]);
                f(cell, [v00, v11, v01], [[x, y], [x + h, y + h], [x, y + h]]);
            }
        }
    }

    /// κ-weighted P1 stiffness over all patch nodes.
    pub fn stiffness(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.n_nodes(), self.n_nodes(), 18 * self.ncx * self.ncy);
        self.for_each_triangle(|cell, nodes, p| {
            let k = p1_stiffness(p);
            let c = self.kappa[cell];
            for i in 0..3 {
                for j in 0..3 {
                    b.push(nodes[i], nodes[j], c * k[i][j]);
                }
            }
        });
        b.build()
    }

    /// P1 mass over all patch nodes, κ-weighted when `weighted` is set.
    pub fn mass(&self, weighted: bool) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.n_nodes(), self.n_nodes(), 18 * self.ncx * self.ncy);
        let m = p1_mass(0.5 * self.h * self.h);
        self.for_each_triangle(|cell, nodes, _| {
            let c = if weighted { self.kappa[cell] } else { 1.0 };
            for i in 0..3 {
                for j in 0..3 {
                    b.push(nodes[i], nodes[j], c * m[i][j]);
                }
            }
        });
        b.build()
    }

    /// Exact P1 load `∫ f φ_k` for cell-wise constant `f` (local cell order).
    pub fn load(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.ncx * self.ncy);
        let mut out = vec![0.0; self.n_nodes()];
        let third = self.h * self.h / 6.0;
        self.for_each_triangle(|cell, nodes, _| {
            for n in nodes {
                out[n] += f[cell] * third;
            }
        });
        out
    }

    /// Unweighted 1D P1 mass along the closed boundary loop.
    pub fn loop_mass(&self) -> Mat<f64> {
        loop_mass(2 * (self.ncx + self.ncy), self.h)
    }
}

/// Mass matrix of the periodic P1 space on `n` loop nodes with segment length `h`.
pub fn loop_mass(n: usize, h: f64) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        let l = (k + 1) % n;
        m[(k, k)] += h / 3.0;
        m[(l, l)] += h / 3.0;
        m[(k, l)] += h / 6.0;
        m[(l, k)] += h / 6.0;
    }
    m
}

/// Mass matrix of the P1 space on an open segment of `n_seg` pieces of length `h`.
pub fn edge_mass(n_seg: usize, h: f64) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(n_seg + 1, n_seg + 1);
    for k in 0..n_seg {
        m[(k, k)] += h / 3.0;
        m[(k + 1, k + 1)] += h / 3.0;
        m[(k, k + 1)] += h / 6.0;
        m[(k + 1, k)] += h / 6.0;
    }
    m
}

/// Discrete harmonic extension on a patch: given boundary-loop values,
/// solve `A_ii u_i = -A_ib u_b` with a cached sparse Cholesky factor.
pub struct HarmonicExtension {
    boundary: Vec<usize>,
    interior: Vec<usize>,
    n_nodes: usize,
    a_ib: CsrMatrix,
    chol: Option<SparseCholesky>,
}

impl std::fmt::Debug for HarmonicExtension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HarmonicExtension")
            .field("n_boundary", &self.boundary.len())
            .field("n_interior", &self.interior.len())
            .finish()
    }
}

impl HarmonicExtension {
    pub fn new(stiffness: &CsrMatrix, boundary: Vec<usize>, interior: Vec<usize>) -> Result<Self> {
        let a_ib = stiffness.sparse_submatrix(&interior, &boundary);
        let chol = if interior.is_empty() {
            None
        } else {
            let a_ii = stiffness.sparse_submatrix(&interior, &interior);
            Some(SparseCholesky::factor(&a_ii).map_err(|e| {
                Error::Factorization(format!("interior stiffness is singular, check that κ > 0 ({e})"))
            })?)
        };
        Ok(Self {
            boundary,
            interior,
            n_nodes: stiffness.nrows(),
            a_ib,
            chol,
        })
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Interior values (rows follow [`Self::interior`]) for each trace column.
    pub fn extend_interior(&self, traces: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(traces.nrows(), self.boundary.len());
        let mut rhs = self.a_ib.mul_dense(traces);
        for j in 0..rhs.ncols() {
            for i in 0..rhs.nrows() {
                rhs[(i, j)] = -rhs[(i, j)];
            }
        }
        if let Some(chol) = &self.chol {
            chol.solve_in_place(rhs.as_mut());
        }
        rhs
    }

    /// Full patch vectors for each trace column.
    pub fn extend(&self, traces: MatRef<'_, f64>) -> Mat<f64> {
        let inner = self.extend_interior(traces);
        let mut out = Mat::<f64>::zeros(self.n_nodes, traces.ncols());
        for j in 0..traces.ncols() {
            for (k, &n) in self.boundary.iter().enumerate() {
                out[(n, j)] = traces[(k, j)];
            }
            for (k, &n) in self.interior.iter().enumerate() {
                out[(n, j)] = inner[(k, j)];
            }
        }
        out
    }

    pub fn solve_interior(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(c) => c.solve(rhs),
            None => Vec::new(),
        }
    }
}

/// All per-block operators, built once and reused by every later stage.
#[derive(Debug)]
pub struct BlockOperators {
    pub block: usize,
    pub patch: Patch,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub mass_kappa: CsrMatrix,
    pub harmonic: HarmonicExtension,
    /// Harmonic extension of every boundary nodal indicator (`n_int × n_b`).
    pub ext: Mat<f64>,
    /// Schur complement `A_bb + A_bi ext` (`n_b × n_b`).
    pub schur: Mat<f64>,
    pub loop_mass: Mat<f64>,
    /// Maps boundary values to the normal flux function `M_∂⁻¹ Σ`.
    pub flux: Mat<f64>,
    pub kappa_max: f64,
}

impl BlockOperators {
    pub fn new(grid: &Grid, kappa: &PermeabilityField, block: usize) -> Result<Self> {
        let patch = Patch::block(grid, kappa, block)?;
        Self::from_patch(block, patch)
    }

    pub fn from_patch(block: usize, patch: Patch) -> Result<Self> {
        let stiffness = patch.stiffness();
        let mass = patch.mass(false);
        let mass_kappa = patch.mass(true);
        let boundary = patch.boundary_loop();
        let interior = patch.interior();
        let nb = boundary.len();
        let harmonic = HarmonicExtension::new(&stiffness, boundary, interior)?;
        let ext = harmonic.extend_interior(Mat::<f64>::identity(nb, nb).as_ref());
        let full = harmonic.extend(Mat::<f64>::identity(nb, nb).as_ref());
        let mut schur = full.transpose() * stiffness.mul_dense(full.as_ref());
        dense::symmetrize(&mut schur);
        let loop_mass = patch.loop_mass();
        let flux = dense::solve_spd(loop_mass.as_ref(), schur.as_ref())?;
        let kappa_max = patch.kappa_max();
        Ok(Self {
            block,
            patch,
            stiffness,
            mass,
            mass_kappa,
            harmonic,
            ext,
            schur,
            loop_mass,
            flux,
            kappa_max,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.patch.n_nodes()
    }

    pub fn boundary(&self) -> &[usize] {
        self.harmonic.boundary()
    }

    pub fn interior(&self) -> &[usize] {
        self.harmonic.interior()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary().len()
    }

    pub fn trace(&self, u: &[f64]) -> Vec<f64> {
        self.boundary().iter().map(|&n| u[n]).collect()
    }

    /// Harmonic extension of boundary-loop values to all block nodes.
    pub fn harmonic_extend(&self, trace: &[f64]) -> Vec<f64> {
        assert_eq!(trace.len(), self.n_boundary());
        let mut out = vec![0.0; self.n_nodes()];
        for (k, &n) in self.boundary().iter().enumerate() {
            out[n] = trace[k];
        }
        let inner = dense::mat_vec(self.ext.as_ref(), trace);
        for (k, &n) in self.interior().iter().enumerate() {
            out[n] = inner[k];
        }
        out
    }

    /// Harmonic snapshot basis: column `k` is the extension of the `k`-th
    /// boundary nodal indicator.
    pub fn harmonic_basis(&self) -> Mat<f64> {
        let nb = self.n_boundary();
        let mut out = Mat::<f64>::zeros(self.n_nodes(), nb);
        for (k, &n) in self.boundary().iter().enumerate() {
            out[(n, k)] = 1.0;
        }
        for (k, &n) in self.interior().iter().enumerate() {
            for j in 0..nb {
                out[(n, j)] = self.ext[(k, j)];
            }
        }
        out
    }

    /// Variational normal flux as a functional on boundary nodal traces:
    /// `F_k = a_K(u, ψ_k)` with `ψ_k` the harmonic snapshot functions.
    pub fn normal_flux(&self, u: &[f64]) -> Vec<f64> {
        let au = self.stiffness.mul_vec(u);
        let mut f: Vec<f64> = self.boundary().iter().map(|&n| au[n]).collect();
        let inner: Vec<f64> = self.interior().iter().map(|&n| au[n]).collect();
        let add = dense::mat_t_vec(self.ext.as_ref(), &inner);
        for (a, b) in f.iter_mut().zip(&add) {
            *a += b;
        }
        f
    }

    /// Flux function on the boundary loop, `M_∂⁻¹ F`.
    pub fn flux_function(&self, u: &[f64]) -> Vec<f64> {
        dense::mat_vec(self.flux.as_ref(), &self.trace(u))
    }

    /// Boundary-trace mass with constant weight.
    pub fn boundary_mass(&self, weight: f64) -> Result<Mat<f64>> {
        if !(weight > 0.0) {
            return Err(crate::error::invalid("boundary mass weight must be positive"));
        }
        Ok(Mat::from_fn(self.loop_mass.nrows(), self.loop_mass.ncols(), |i, j| weight * self.loop_mass[(i, j)]))
    }

    /// Interior-interior block of the κ-weighted mass.
    pub fn interior_mass_kappa(&self) -> Mat<f64> {
        self.mass_kappa.submatrix(self.interior(), self.interior())
    }

    pub fn interior_stiffness(&self) -> Mat<f64> {
        self.stiffness.submatrix(self.interior(), self.interior())
    }

    /// Block energy `∫_K κ ∇u·∇v`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.stiffness.bilinear(u, v)
    }
}
