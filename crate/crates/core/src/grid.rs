//! Structured coarse grid of square blocks, each refined into an `nf × nf`
//! lattice of fine squares split into two P1 triangles along the
//! lower-left to upper-right diagonal.
//!
//! Blocks are numbered row-major, `i = by * nc + bx`. Block-local fine nodes
//! are numbered lexicographically, `iy * (nf + 1) + ix`. The boundary loop of
//! a block runs counterclockwise from its lower-left corner.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl Domain {
    pub fn unit() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            side: 1.0,
        }
    }

    /// Axis-aligned square `[x0, x1] × [y0, y1]`.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let (w, h) = (x1 - x0, y1 - y0);
        if !(w.is_finite() && h.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(invalid(format!("degenerate domain [{x0}, {x1}] x [{y0}, {y1}]")));
        }
        if (w - h).abs() > 1e-12 * w.max(h) {
            return Err(invalid("domain must be square (blocks are square)"));
        }
        Ok(Self { x0, y0, side: w })
    }
}

impl Default for Domain {
    fn default() -> Self {
        Self::unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    Bottom,
    Right,
    Top,
    Left,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Bottom, Face::Right, Face::Top, Face::Left];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Face::Bottom => [0.0, -1.0],
            Face::Right => [1.0, 0.0],
            Face::Top => [0.0, 1.0],
            Face::Left => [-1.0, 0.0],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSide {
    pub block: usize,
    pub face: Face,
}

/// A coarse edge. `plus` is the lower-indexed block; the unit normal points
/// from `plus` to `minus`, or outward for boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEdge {
    pub id: usize,
    pub plus: EdgeSide,
    pub minus: Option<EdgeSide>,
    pub normal: [f64; 2],
}

impl CoarseEdge {
    pub fn is_interior(&self) -> bool {
        self.minus.is_some()
    }

    /// Adjacent sides paired with their jump sign (`+1` for K⁺, `-1` for K⁻).
    pub fn sides(&self) -> impl Iterator<Item = (EdgeSide, f64)> + '_ {
        std::iter::once((self.plus, 1.0)).chain(self.minus.map(|s| (s, -1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRef {
    pub edge: usize,
    pub face: Face,
    pub is_plus: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTopology {
    pub block: usize,
    pub n_nodes: usize,
    /// Boundary nodes in loop order.
    pub boundary: Vec<usize>,
    pub interior: Vec<usize>,
    /// Coarse edges indexed by [`Face::index`].
    pub edges: [EdgeRef; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    nc: usize,
    nf: usize,
    coarse_h: f64,
    fine_h: f64,
    edges: Vec<CoarseEdge>,
    block_edges: Vec<[usize; 4]>,
}

impl Grid {
    pub fn new(nc: usize, nf: usize, domain: Domain) -> Result<Self> {
        if nc == 0 {
            return Err(invalid("number of coarse blocks per axis must be positive"));
        }
        if nf < 2 {
            return Err(invalid("fine cells per block axis must be at least 2"));
        }
        if !(domain.side.is_finite() && domain.side > 0.0) {
            return Err(invalid("degenerate domain"));
        }
        let coarse_h = domain.side / nc as f64;
        let fine_h = coarse_h / nf as f64;

        let n = nc * nc;
        let mut edges = Vec::new();
        let mut block_edges = vec![[usize::MAX; 4]; n];
        for i in 0..n {
            let (bx, by) = (i % nc, i / nc);
            for face in Face::ALL {
                let neighbor = match face {
                    Face::Bottom => (by > 0).then(|| i - nc),
                    Face::Left => (bx > 0).then(|| i - 1),
                    Face::Right => (bx + 1 < nc).then(|| i + 1),
                    Face::Top => (by + 1 < nc).then(|| i + nc),
                };
                match neighbor {
                    None => {
                        let id = edges.len();
                        edges.push(CoarseEdge {
                            id,
                            plus: EdgeSide { block: i, face },
                            minus: None,
                            normal: face.outward_normal(),
                        });
                        block_edges[i][face.index()] = id;
                    }
                    Some(j) if j > i => {
                        let id = edges.len();
                        let opposite = if face == Face::Right { Face::Left } else { Face::Bottom };
                        edges.push(CoarseEdge {
                            id,
                            plus: EdgeSide { block: i, face },
                            minus: Some(EdgeSide {
                                block: j,
                                face: opposite,
                            }),
                            normal: face.outward_normal(),
                        });
                        block_edges[i][face.index()] = id;
                        block_edges[j][opposite.index()] = id;
                    }
                    Some(_) => {} // created by the lower-indexed neighbor
                }
            }
        }
        Ok(Self {
            domain,
            nc,
            nf,
            coarse_h,
            fine_h,
            edges,
            block_edges,
        })
    }

    pub fn unit(nc: usize, nf: usize) -> Result<Self> {
        Self::new(nc, nf, Domain::unit())
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Coarse blocks per axis.
    pub fn nc(&self) -> usize {
        self.nc
    }

    /// Fine cells per block axis.
    pub fn nf(&self) -> usize {
        self.nf
    }

    pub fn coarse_h(&self) -> f64 {
        self.coarse_h
    }

    pub fn fine_h(&self) -> f64 {
        self.fine_h
    }

    pub fn num_blocks(&self) -> usize {
        self.nc * self.nc
    }

    /// Fine cells per domain axis.
    pub fn fine_cells_per_axis(&self) -> usize {
        self.nc * self.nf
    }

    pub fn nodes_per_block(&self) -> usize {
        (self.nf + 1) * (self.nf + 1)
    }

    /// Total DG degrees of freedom on the fine grid.
    pub fn num_fine_dofs(&self) -> usize {
        self.num_blocks() * self.nodes_per_block()
    }

    pub fn block_offset(&self, block: usize) -> usize {
        block * self.nodes_per_block()
    }

    pub fn edges(&self) -> &[CoarseEdge] {
        &self.edges
    }

    pub fn num_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_interior()).count()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.edges.len() - self.num_interior_edges()
    }

    pub fn block_coords(&self, block: usize) -> (usize, usize) {
        (block % self.nc, block / self.nc)
    }

    pub fn block_index(&self, bx: usize, by: usize) -> usize {
        by * self.nc + bx
    }

    pub fn block_origin(&self, block: usize) -> [f64; 2] {
        let (bx, by) = self.block_coords(block);
        [
            self.domain.x0 + bx as f64 * self.coarse_h,
            self.domain.y0 + by as f64 * self.coarse_h,
        ]
    }

    pub fn node_coords(&self, block: usize, local: usize) -> [f64; 2] {
        let o = self.block_origin(block);
        let (ix, iy) = (local % (self.nf + 1), local / (self.nf + 1));
        [o[0] + ix as f64 * self.fine_h, o[1] + iy as f64 * self.fine_h]
    }

    /// Global cell index (row-major over the whole fine grid) of block-local cell `(cx, cy)`.
    pub fn cell_index(&self, block: usize, cx: usize, cy: usize) -> usize {
        let (bx, by) = self.block_coords(block);
        (by * self.nf + cy) * self.fine_cells_per_axis() + bx * self.nf + cx
    }

    /// Edge ids of a block indexed by [`Face::index`].
    pub fn block_edges(&self, block: usize) -> [usize; 4] {
        self.block_edges[block]
    }

    /// Blocks sharing an edge with `block`, plus `block` itself, ascending.
    pub fn neighbors(&self, block: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.block_edges[block]
            .iter()
            .filter_map(|&e| {
                let edge = &self.edges[e];
                edge.minus.map(|m| if m.block == block { edge.plus.block } else { m.block })
            })
            .collect();
        out.push(block);
        out.sort_unstable();
        out
    }

    /// Local nodes of a face in increasing coordinate order (`nf + 1` nodes).
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        lattice_face_nodes(self.nf, self.nf, face)
    }

    /// Positions of the face nodes inside the boundary loop.
    pub fn face_loop_positions(&self, face: Face) -> Vec<usize> {
        lattice_face_loop_positions(self.nf, self.nf, face)
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        lattice_boundary_loop(self.nf, self.nf)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        lattice_interior(self.nf, self.nf)
    }

    pub fn topology(&self, block: usize) -> Result<BlockTopology> {
        if block >= self.num_blocks() {
            return Err(Error::OutOfRange {
                index: block,
                len: self.num_blocks(),
            });
        }
        let ids = self.block_edges[block];
        let edges = Face::ALL.map(|face| {
            let edge = ids[face.index()];
            EdgeRef {
                edge,
                face,
                is_plus: self.edges[edge].plus.block == block,
            }
        });
        Ok(BlockTopology {
            block,
            n_nodes: self.nodes_per_block(),
            boundary: self.boundary_nodes(),
            interior: self.interior_nodes(),
            edges,
        })
    }
}

/// Counterclockwise boundary loop of an `ncx × ncy` cell lattice, starting at
/// the lower-left corner.
pub fn lattice_boundary_loop(ncx: usize, ncy: usize) -> Vec<usize> {
    let w = ncx + 1;
    let mut out = Vec::with_capacity(2 * (ncx + ncy));
    for ix in 0..ncx {
        out.push(ix);
    }
    for iy in 0..ncy {
        out.push(iy * w + ncx);
    }
    for ix in (1..=ncx).rev() {
        out.push(ncy * w + ix);
    }
    for iy in (1..=ncy).rev() {
        out.push(iy * w);
    }
    out
}

pub fn lattice_interior(ncx: usize, ncy: usize) -> Vec<usize> {
    let w = ncx + 1;
    let mut out = Vec::with_capacity((ncx.saturating_sub(1)) * (ncy.saturating_sub(1)));
    for iy in 1..ncy {
        for ix in 1..ncx {
            out.push(iy * w + ix);
        }
    }
    out
}

pub fn lattice_face_nodes(ncx: usize, ncy: usize, face: Face) -> Vec<usize> {
    let w = ncx + 1;
    match face {
        Face::Bottom => (0..=ncx).collect(),
        Face::Top => (0..=ncx).map(|ix| ncy * w + ix).collect(),
        Face::Left => (0..=ncy).map(|iy| iy * w).collect(),
        Face::Right => (0..=ncy).map(|iy| iy * w + ncx).collect(),
    }
}

pub fn lattice_face_loop_positions(ncx: usize, ncy: usize, face: Face) -> Vec<usize> {
    let n = 2 * (ncx + ncy);
    match face {
        Face::Bottom => (0..=ncx).collect(),
        Face::Right => (0..=ncy).map(|iy| ncx + iy).collect(),
        // top loop runs right-to-left starting at ncx + ncy
        Face::Top => (0..=ncx).map(|ix| ncx + ncy + (ncx - ix)).collect(),
        Face::Left => (0..=ncy).map(|iy| (2 * ncx + ncy + (ncy - iy)) % n).collect(),
    }
}
