//! Symmetric interior penalty DG coupling of the blocks.
//!
//! On a coarse edge `E` with unit normal `n_E` (from K⁺ to K⁻, outward on
//! the boundary) the bilinear form is
//!
//! ```text
//! a_DG(u, v) = Σ_K ∫_K κ ∇u·∇v
//!            - Σ_E ∫_E ({κ∇u·n_E} [v] + {κ∇v·n_E} [u])
//!            + Σ_E (γ/h) ∫_E κ̄ [u][v]
//! ```
//!
//! where the normal flux of each block is the variational flux computed by
//! [`BlockOperators::flux_function`] and `h` is the fine mesh size.

use faer::Mat;
use rayon::prelude::*;

use crate::dense;
use crate::error::{invalid, Result};
use crate::field::{BoundaryData, PermeabilityField, SourceField};
use crate::grid::{CoarseEdge, Face, Grid};
use crate::local_fem::{edge_mass, BlockOperators};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Default penalty parameter.
pub const DEFAULT_GAMMA: f64 = 16.0;

/// Edge coefficients derived from block maxima of κ.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// `κ_K`, the maximum of κ over each block.
    pub kappa_block: Vec<f64>,
    /// `κ̄_E` per coarse edge.
    pub kappa_bar: Vec<f64>,
    /// `κ̃_K`, the maximum of `κ̄` over the edges of each block.
    pub kappa_tilde: Vec<f64>,
}

impl Coupling {
    pub fn new(grid: &Grid, kappa_block: Vec<f64>) -> Self {
        let kappa_bar: Vec<f64> = grid
            .edges()
            .iter()
            .map(|e| match e.minus {
                Some(m) => 0.5 * (kappa_block[e.plus.block] + kappa_block[m.block]),
                None => kappa_block[e.plus.block],
            })
            .collect();
        let kappa_tilde = (0..grid.num_blocks())
            .map(|i| grid.block_edges(i).iter().map(|&e| kappa_bar[e]).fold(0.0, f64::max))
            .collect();
        Self {
            kappa_block,
            kappa_bar,
            kappa_tilde,
        }
    }

    /// `max_K max_E κ̄ / min_E κ̄` over the edges of each block.
    pub fn c_kappa(&self, grid: &Grid) -> f64 {
        (0..grid.num_blocks())
            .map(|i| {
                let vals = grid.block_edges(i).map(|e| self.kappa_bar[e]);
                let mx = vals.iter().cloned().fold(0.0, f64::max);
                let mn = vals.iter().cloned().fold(f64::MAX, f64::min);
                mx / mn
            })
            .fold(1.0, f64::max)
    }
}

/// Face node lists and loop positions shared by all blocks of a grid.
#[derive(Debug, Clone)]
pub struct FaceMaps {
    pub nodes: [Vec<usize>; 4],
    pub loop_pos: [Vec<usize>; 4],
    pub edge_mass: Mat<f64>,
}

impl FaceMaps {
    pub fn new(grid: &Grid) -> Self {
        Self {
            nodes: Face::ALL.map(|f| grid.face_nodes(f)),
            loop_pos: Face::ALL.map(|f| grid.face_loop_positions(f)),
            edge_mass: edge_mass(grid.nf(), grid.fine_h()),
        }
    }
}

/// One side of a coarse edge as seen by the assembly.
#[derive(Debug, Clone, Copy)]
struct Side {
    block: usize,
    face: Face,
    /// Jump sign.
    tau: f64,
    /// Weight in the flux average (normal orientation included).
    omega: f64,
}

fn sides(edge: &CoarseEdge) -> Vec<Side> {
    match edge.minus {
        Some(m) => vec![
            Side {
                block: edge.plus.block,
                face: edge.plus.face,
                tau: 1.0,
                omega: 0.5,
            },
            Side {
                block: m.block,
                face: m.face,
                tau: -1.0,
                omega: -0.5,
            },
        ],
        None => vec![Side {
            block: edge.plus.block,
            face: edge.plus.face,
            tau: 1.0,
            omega: 1.0,
        }],
    }
}

/// Build the operators of every block, in parallel.
pub fn build_blocks(grid: &Grid, kappa: &PermeabilityField) -> Result<Vec<BlockOperators>> {
    kappa.check_grid(grid)?;
    (0..grid.num_blocks())
        .into_par_iter()
        .map(|i| BlockOperators::new(grid, kappa, i))
        .collect()
}

/// The DG form on a fixed grid and permeability.
#[derive(Debug)]
pub struct DgForm {
    grid: Grid,
    blocks: Vec<BlockOperators>,
    coupling: Coupling,
    faces: FaceMaps,
    gamma: f64,
}

impl DgForm {
    pub fn new(grid: Grid, kappa: &PermeabilityField, gamma: f64) -> Result<Self> {
        let blocks = build_blocks(&grid, kappa)?;
        Self::from_blocks(grid, blocks, gamma)
    }

    pub fn from_blocks(grid: Grid, blocks: Vec<BlockOperators>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        assert_eq!(blocks.len(), grid.num_blocks());
        let coupling = Coupling::new(&grid, blocks.iter().map(|b| b.kappa_max).collect());
        let faces = FaceMaps::new(&grid);
        Ok(Self {
            grid,
            blocks,
            coupling,
            faces,
            gamma,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn blocks(&self) -> &[BlockOperators] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &BlockOperators {
        &self.blocks[i]
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn faces(&self) -> &FaceMaps {
        &self.faces
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(())
    }

    fn penalty(&self, edge: usize) -> f64 {
        self.gamma / self.grid.fine_h() * self.coupling.kappa_bar[edge]
    }

    /// Rows of the block flux operator at the nodes of one face
    /// (`(nf + 1) × n_b`, columns follow the boundary loop).
    fn face_flux(&self, block: usize, face: Face) -> Mat<f64> {
        let q = &self.blocks[block].flux;
        let pos = &self.faces.loop_pos[face.index()];
        Mat::from_fn(pos.len(), q.ncols(), |r, c| q[(pos[r], c)])
    }

    fn face_global(&self, block: usize, face: Face) -> Vec<usize> {
        let off = self.grid.block_offset(block);
        self.faces.nodes[face.index()].iter().map(|&n| off + n).collect()
    }

    fn loop_global(&self, block: usize) -> Vec<usize> {
        let off = self.grid.block_offset(block);
        self.blocks[block].boundary().iter().map(|&n| off + n).collect()
    }

    fn edge_triplets(&self, edge: &CoarseEdge) -> TripletBuilder {
        let n = self.grid.num_fine_dofs();
        let mut t = TripletBuilder::new(n, n);
        let me = &self.faces.edge_mass;
        let pen = self.penalty(edge.id);
        let ss = sides(edge);
        for b in &ss {
            let rows_b = self.face_global(b.block, b.face);
            for a in &ss {
                let mfl = me * self.face_flux(a.block, a.face);
                let cols_a = self.loop_global(a.block);
                // -∫ {q(u)} [v] and its transpose
                t.add_block(&rows_b, &cols_a, mfl.as_ref(), -b.tau * a.omega);
                t.add_block(&cols_a, &rows_b, mfl.transpose(), -b.tau * a.omega);
                let rows_a = self.face_global(a.block, a.face);
                t.add_block(&rows_b, &rows_a, me.as_ref(), pen * a.tau * b.tau);
            }
        }
        t
    }

    /// Block-diagonal volume part `Σ_K a_K`.
    pub fn volume_matrix(&self) -> CsrMatrix {
        let n = self.grid.num_fine_dofs();
        let mut t = TripletBuilder::new(n, n);
        for (i, ops) in self.blocks.iter().enumerate() {
            push_block_csr(&mut t, &ops.stiffness, self.grid.block_offset(i));
        }
        t.build()
    }

    /// Penalty part `Σ_E (γ/h) ∫_E κ̄ [u][v]`.
    pub fn penalty_matrix(&self) -> CsrMatrix {
        let n = self.grid.num_fine_dofs();
        let mut t = TripletBuilder::new(n, n);
        let me = &self.faces.edge_mass;
        for edge in self.grid.edges() {
            let pen = self.penalty(edge.id);
            let ss = sides(edge);
            for b in &ss {
                for a in &ss {
                    t.add_block(
                        &self.face_global(b.block, b.face),
                        &self.face_global(a.block, a.face),
                        me.as_ref(),
                        pen * a.tau * b.tau,
                    );
                }
            }
        }
        t.build()
    }

    /// The fine-grid DG matrix in the nodal basis of all blocks.
    pub fn assemble(&self) -> CsrMatrix {
        let n = self.grid.num_fine_dofs();
        let mut t = TripletBuilder::new(n, n);
        for (i, ops) in self.blocks.iter().enumerate() {
            push_block_csr(&mut t, &ops.stiffness, self.grid.block_offset(i));
        }
        let parts: Vec<TripletBuilder> = self.grid.edges().par_iter().map(|e| self.edge_triplets(e)).collect();
        for p in parts {
            t.extend(p);
        }
        t.build()
    }

    /// Load vector `(f, v)` plus the weakly imposed Dirichlet terms
    /// `-∫_∂D (κ∇v·n) g + (γ/h) ∫_∂D κ̄ g v`.
    pub fn load(&self, f: &SourceField, g: &BoundaryData) -> Result<Vec<f64>> {
        f.check_grid(&self.grid)?;
        let nf = self.grid.nf();
        let mut out = vec![0.0; self.grid.num_fine_dofs()];
        for (i, ops) in self.blocks.iter().enumerate() {
            let mut fl = Vec::with_capacity(nf * nf);
            for cy in 0..nf {
                for cx in 0..nf {
                    fl.push(f.values()[self.grid.cell_index(i, cx, cy)]);
                }
            }
            let off = self.grid.block_offset(i);
            for (k, v) in ops.patch.load(&fl).into_iter().enumerate() {
                out[off + k] += v;
            }
        }
        if g.is_zero() {
            return Ok(out);
        }
        let me = &self.faces.edge_mass;
        for edge in self.grid.edges().iter().filter(|e| !e.is_interior()) {
            let (blk, face) = (edge.plus.block, edge.plus.face);
            let gv: Vec<f64> = self.faces.nodes[face.index()]
                .iter()
                .map(|&n| {
                    let p = self.grid.node_coords(blk, n);
                    g.eval(p[0], p[1])
                })
                .collect();
            let mg = dense::mat_vec(me.as_ref(), &gv);
            let flux_part = dense::mat_t_vec(self.face_flux(blk, face).as_ref(), &mg);
            for (k, idx) in self.loop_global(blk).into_iter().enumerate() {
                out[idx] -= flux_part[k];
            }
            let pen = self.penalty(edge.id);
            for (k, idx) in self.face_global(blk, face).into_iter().enumerate() {
                out[idx] += pen * mg[k];
            }
        }
        Ok(out)
    }

    fn block_slice<'a>(&self, u: &'a [f64], block: usize) -> &'a [f64] {
        let off = self.grid.block_offset(block);
        &u[off..off + self.grid.nodes_per_block()]
    }

    fn face_values(&self, u: &[f64], block: usize, face: Face) -> Vec<f64> {
        let ub = self.block_slice(u, block);
        self.faces.nodes[face.index()].iter().map(|&n| ub[n]).collect()
    }

    /// Jump `[u]` at the face nodes of an edge.
    pub fn jump(&self, edge: &CoarseEdge, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.nf() + 1];
        for s in sides(edge) {
            for (o, v) in out.iter_mut().zip(self.face_values(u, s.block, s.face)) {
                *o += s.tau * v;
            }
        }
        out
    }

    /// Average normal flux `{κ∇u·n_E}` at the face nodes of an edge.
    pub fn average_flux(&self, edge: &CoarseEdge, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.nf() + 1];
        for s in sides(edge) {
            let q = self.blocks[s.block].flux_function(self.block_slice(u, s.block));
            for (o, &p) in out.iter_mut().zip(&self.faces.loop_pos[s.face.index()]) {
                *o += s.omega * q[p];
            }
        }
        out
    }

    /// `a_DG(u, v)` evaluated edge by edge, without the assembled matrix.
    pub fn apply(&self, u: &[f64], v: &[f64]) -> f64 {
        let me = self.faces.edge_mass.as_ref();
        let vol: f64 = (0..self.grid.num_blocks())
            .map(|i| self.blocks[i].energy(self.block_slice(u, i), self.block_slice(v, i)))
            .sum();
        let edges: f64 = self
            .grid
            .edges()
            .iter()
            .map(|e| {
                let (ju, jv) = (self.jump(e, u), self.jump(e, v));
                let (qu, qv) = (self.average_flux(e, u), self.average_flux(e, v));
                let mju = dense::mat_vec(me, &ju);
                -dense::dot(&qu, &dense::mat_vec(me, &jv)) - dense::dot(&qv, &mju) + self.penalty(e.id) * dense::dot(&jv, &mju)
            })
            .sum();
        vol + edges
    }

    /// `‖u‖²_DG = a_H(u, u) + Σ_E (γ/h) ∫_E κ̄ [u]²`.
    pub fn dg_norm2(&self, u: &[f64]) -> f64 {
        let me = self.faces.edge_mass.as_ref();
        let vol: f64 = (0..self.grid.num_blocks())
            .map(|i| {
                let ub = self.block_slice(u, i);
                self.blocks[i].energy(ub, ub)
            })
            .sum();
        let pen: f64 = self
            .grid
            .edges()
            .iter()
            .map(|e| self.penalty(e.id) * dense::quadratic(me, &self.jump(e, u)))
            .sum();
        vol + pen
    }

    pub fn dg_norm(&self, u: &[f64]) -> f64 {
        self.dg_norm2(u).max(0.0).sqrt()
    }

    /// Localized `a_DG(e, e)`: each block gets its volume energy and its share
    /// of the edge terms (one half on interior edges). The values sum to
    /// `a_DG(e, e)` exactly.
    pub fn local_energy(&self, e: &[f64]) -> Vec<f64> {
        let me = self.faces.edge_mass.as_ref();
        let mut out: Vec<f64> = (0..self.grid.num_blocks())
            .map(|i| {
                let eb = self.block_slice(e, i);
                self.blocks[i].energy(eb, eb)
            })
            .collect();
        for edge in self.grid.edges() {
            let j = self.jump(edge, e);
            let q = self.average_flux(edge, e);
            let mj = dense::mat_vec(me, &j);
            let t = dense::dot(&q, &mj);
            let p = dense::dot(&j, &mj);
            let term = 2.0 * t - self.penalty(edge.id) * p;
            match edge.minus {
                Some(m) => {
                    out[edge.plus.block] -= 0.5 * term;
                    out[m.block] -= 0.5 * term;
                }
                None => out[edge.plus.block] -= term,
            }
        }
        out
    }

    /// Block-wise unweighted L² inner product.
    pub fn l2_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.grid.num_blocks())
            .map(|i| self.blocks[i].mass.bilinear(self.block_slice(u, i), self.block_slice(v, i)))
            .sum()
    }

    /// Galerkin projection of the fine system onto per-block bases.
    /// `bases[i]` holds fine coefficient columns on block `i`.
    pub fn galerkin(&self, s: &CsrMatrix, load: &[f64], bases: &[Mat<f64>]) -> Result<DgSystem> {
        galerkin(&self.grid, s, load, bases, self.gamma)
    }

    /// Assemble the system for an explicit list of basis vectors.
    pub fn assemble_dg_system(&self, basis: &[BasisVector], f: &SourceField, g: &BoundaryData) -> Result<DgSystem> {
        let npb = self.grid.nodes_per_block();
        let mut cols: Vec<Vec<&BasisVector>> = vec![Vec::new(); self.grid.num_blocks()];
        for b in basis {
            if b.block >= self.grid.num_blocks() || b.coeffs.len() != npb {
                return Err(invalid("basis vector does not match a block of the grid"));
            }
            cols[b.block].push(b);
        }
        let bases: Vec<Mat<f64>> = cols
            .iter()
            .map(|v| Mat::from_fn(npb, v.len(), |r, c| v[c].coeffs[r]))
            .collect();
        let s = self.assemble();
        let load = self.load(f, g)?;
        let mut sys = self.galerkin(&s, &load, &bases)?;
        // restore the caller's ordering
        let mut order = Vec::with_capacity(basis.len());
        let mut seen = vec![0usize; self.grid.num_blocks()];
        for b in basis {
            order.push(sys.offsets[b.block] + seen[b.block]);
            seen[b.block] += 1;
        }
        sys = sys.permuted(&order);
        Ok(sys)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid(format!("penalty parameter must be positive, got {gamma}")));
    }
    Ok(())
}

fn push_block_csr(t: &mut TripletBuilder, a: &CsrMatrix, off: usize) {
    for r in 0..a.nrows() {
        let (cs, vs) = a.row(r);
        for (&c, &v) in cs.iter().zip(vs) {
            t.push(off + r, off + c, v);
        }
    }
}

/// A basis function supported on a single block.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    pub block: usize,
    pub coeffs: Vec<f64>,
}

impl BasisVector {
    /// Split a global fine vector; fails when it is supported on more than one block.
    pub fn from_global(grid: &Grid, v: &[f64]) -> Result<Self> {
        let npb = grid.nodes_per_block();
        if v.len() != grid.num_fine_dofs() {
            return Err(invalid("global vector has the wrong length"));
        }
        let support: Vec<usize> = (0..grid.num_blocks())
            .filter(|&i| v[i * npb..(i + 1) * npb].iter().any(|&x| x != 0.0))
            .collect();
        match support.as_slice() {
            [] => Ok(Self {
                block: 0,
                coeffs: v[..npb].to_vec(),
            }),
            [i] => Ok(Self {
                block: *i,
                coeffs: v[i * npb..(i + 1) * npb].to_vec(),
            }),
            _ => Err(invalid(format!("basis vector spans blocks {support:?}"))),
        }
    }
}

/// Galerkin system in a block-local basis.
#[derive(Debug, Clone)]
pub struct DgSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub gamma: f64,
    /// Owning block of each basis function.
    pub owners: Vec<usize>,
    /// First index of each block's functions (for the assembly order).
    pub offsets: Vec<usize>,
}

impl DgSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `sqrt(cᵀ S c)`; errors when the quadratic form is negative.
    pub fn a_norm(&self, c: &[f64]) -> Result<f64> {
        let q = self.matrix.quadratic(c);
        let scale = self.matrix.max_abs() * dense::dot(c, c);
        if q < -1e-12 * scale {
            return Err(invalid(format!(
                "negative energy {q}: penalty parameter below the coercivity threshold"
            )));
        }
        Ok(q.max(0.0).sqrt())
    }

    fn permuted(self, order: &[usize]) -> Self {
        let n = order.len();
        let mut inv = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let mut t = TripletBuilder::new(n, n);
        for r in 0..n {
            let (cs, vs) = self.matrix.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                t.push(inv[r], inv[c], v);
            }
        }
        Self {
            matrix: t.build(),
            rhs: order.iter().map(|&o| self.rhs[o]).collect(),
            gamma: self.gamma,
            owners: order.iter().map(|&o| self.owners[o]).collect(),
            offsets: self.offsets,
        }
    }
}

/// `Bᵀ S B` and `Bᵀ b` for a block-diagonal `B`, computed one block row at a time.
pub fn galerkin(grid: &Grid, s: &CsrMatrix, load: &[f64], bases: &[Mat<f64>], gamma: f64) -> Result<DgSystem> {
    let nblk = grid.num_blocks();
    let npb = grid.nodes_per_block();
    if bases.len() != nblk {
        return Err(invalid("one basis matrix per block is required"));
    }
    if let Some(b) = bases.iter().find(|b| b.nrows() != npb) {
        return Err(invalid(format!("basis has {} rows, expected {npb}", b.nrows())));
    }
    let mut offsets = Vec::with_capacity(nblk + 1);
    let mut acc = 0;
    for b in bases {
        offsets.push(acc);
        acc += b.ncols();
    }
    offsets.push(acc);
    let dim = acc;
    if dim == 0 {
        return Err(invalid("empty basis"));
    }

    let rows: Vec<(TripletBuilder, Vec<f64>)> = (0..nblk)
        .into_par_iter()
        .map(|i| {
            let mut t = TripletBuilder::new(dim, dim);
            let bi = &bases[i];
            let off = i * npb;
            let rhs_i = dense::mat_t_vec(bi.as_ref(), &load[off..off + npb]);
            if bi.ncols() == 0 {
                return (t, rhs_i);
            }
            let nbrs = grid.neighbors(i);
            let mut w: Vec<Mat<f64>> = nbrs.iter().map(|&j| Mat::zeros(npb, bases[j].ncols())).collect();
            for r in 0..npb {
                let (cs, vs) = s.row(off + r);
                for (&c, &v) in cs.iter().zip(vs) {
                    let j = c / npb;
                    let cl = c - j * npb;
                    let k = nbrs.binary_search(&j).expect("coupling outside the block neighborhood");
                    let bj = &bases[j];
                    let wk = &mut w[k];
                    for q in 0..bj.ncols() {
                        wk[(r, q)] += v * bj[(cl, q)];
                    }
                }
            }
            for (k, &j) in nbrs.iter().enumerate() {
                if bases[j].ncols() == 0 {
                    continue;
                }
                let rij = bi.transpose() * &w[k];
                for q in 0..rij.ncols() {
                    for p in 0..rij.nrows() {
                        t.push(offsets[i] + p, offsets[j] + q, rij[(p, q)]);
                    }
                }
            }
            (t, rhs_i)
        })
        .collect();

    let mut t = TripletBuilder::new(dim, dim);
    let mut rhs = Vec::with_capacity(dim);
    for (ti, ri) in rows {
        t.extend(ti);
        rhs.extend(ri);
    }
    let owners = (0..nblk).flat_map(|i| std::iter::repeat_n(i, bases[i].ncols())).collect();
    Ok(DgSystem {
        matrix: t.build(),
        rhs,
        gamma,
        owners,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(nc: usize, nf: usize, kappa: PermeabilityField) -> DgForm {
        DgForm::new(Grid::unit(nc, nf).unwrap(), &kappa, DEFAULT_GAMMA).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn coupling_bounds() {
        let g = Grid::unit(4, 4).unwrap();
        let k = PermeabilityField::channels(16, 1e3, 2).unwrap();
        let d = DgForm::new(g.clone(), &k, 16.0).unwrap();
        let c = d.coupling();
        for i in 0..g.num_blocks() {
            for e in g.block_edges(i) {
                assert!(c.kappa_tilde[i] >= c.kappa_bar[e]);
                assert!(c.kappa_bar[e] >= 1.0);
            }
        }
        assert!(c.c_kappa(&g) >= 1.0);
    }

    #[test]
    fn assembled_matrix_is_symmetric_and_matches_matrix_free() {
        let d = form(2, 3, PermeabilityField::channels(6, 50.0, 4).unwrap());
        let s = d.assemble();
        assert!(s.max_asymmetry() <= 1e-12 * s.max_abs());
        let n = d.grid().num_fine_dofs();
        let u = pseudo_random(n, 1);
        let v = pseudo_random(n, 2);
        let a = s.bilinear(&u, &v);
        let b = d.apply(&u, &v);
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        let g = Grid::unit(1, 2).unwrap();
        let k = PermeabilityField::constant(2, 1.0).unwrap();
        assert!(DgForm::new(g.clone(), &k, 0.0).is_err());
        assert!(DgForm::new(g, &k, -1.0).is_err());
    }

    #[test]
    fn dg_norm_matches_volume_plus_penalty() {
        let d = form(2, 2, PermeabilityField::constant(4, 1.0).unwrap());
        let n = d.grid().num_fine_dofs();
        let u = pseudo_random(n, 5);
        let oracle = d.volume_matrix().quadratic(&u) + d.penalty_matrix().quadratic(&u);
        assert!((d.dg_norm2(&u) - oracle).abs() < 1e-10 * oracle);
        assert_eq!(d.dg_norm(&vec![0.0; n]), 0.0);
    }

    #[test]
    fn local_energy_sums_to_global() {
        let d = form(3, 4, PermeabilityField::inclusions(12, 1e3, 3).unwrap());
        let s = d.assemble();
        let u = pseudo_random(d.grid().num_fine_dofs(), 9);
        let total: f64 = d.local_energy(&u).iter().sum();
        let q = s.quadratic(&u);
        assert!((total - q).abs() < 1e-9 * q.abs());
    }

    #[test]
    fn galerkin_of_identity_is_fine_matrix() {
        let d = form(2, 2, PermeabilityField::constant(4, 3.0).unwrap());
        let s = d.assemble();
        let npb = d.grid().nodes_per_block();
        let load = pseudo_random(d.grid().num_fine_dofs(), 3);
        let bases: Vec<Mat<f64>> = (0..4).map(|_| Mat::identity(npb, npb)).collect();
        let sys = d.galerkin(&s, &load, &bases).unwrap();
        let n = s.nrows();
        for i in 0..n {
            for j in 0..n {
                assert!((sys.matrix.get(i, j) - s.get(i, j)).abs() < 1e-13 * s.max_abs());
            }
        }
        assert_eq!(sys.rhs, load);
    }
}
