//! Compressed sparse row storage and a sparse SPD direct solver.
//!
//! Assembly goes through [`TripletBuilder`], which sums duplicate entries in a
//! fixed order so that repeated assemblies are bit-identical.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut, MatRef, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    /// Scatter a dense block: `block[(r, c)]` lands at `(rows[r], cols[c])`.
    pub fn add_block(&mut self, rows: &[usize], cols: &[usize], block: MatRef<'_, f64>, scale: f64) {
        debug_assert_eq!(rows.len(), block.nrows());
        debug_assert_eq!(cols.len(), block.ncols());
        for (c, &gc) in cols.iter().enumerate() {
            for (r, &gr) in rows.iter().enumerate() {
                let v = block[(r, c)];
                if v != 0.0 {
                    self.push(gr, gc, scale * v);
                }
            }
        }
    }

    pub fn extend(&mut self, other: TripletBuilder) {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.entries.extend(other.entries);
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps the summation order of duplicates deterministic
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_rows);
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Product with a dense matrix.
    pub fn mul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(x.nrows(), self.n_cols);
        let mut out = Mat::<f64>::zeros(self.n_rows, x.ncols());
        for j in 0..x.ncols() {
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                let mut s = 0.0;
                for (&c, &v) in cols.iter().zip(vals) {
                    s += v * x[(c, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Dense copy of the submatrix selected by `rows` × `cols`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Mat<f64> {
        let mut pos = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let mut out = Mat::<f64>::zeros(rows.len(), cols.len());
        for (r, &gi) in rows.iter().enumerate() {
            let (cs, vs) = self.row(gi);
            for (&c, &v) in cs.iter().zip(vs) {
                let k = pos[c];
                if k != usize::MAX {
                    out[(r, k)] = v;
                }
            }
        }
        out
    }

    /// Sparse submatrix selected by `rows` × `cols`, reindexed.
    pub fn sparse_submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut pos = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (r, &gi) in rows.iter().enumerate() {
            let (cs, vs) = self.row(gi);
            for (&c, &v) in cs.iter().zip(vs) {
                let k = pos[c];
                if k != usize::MAX {
                    b.push(r, k, v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cs, vs) = self.row(i);
            for (&c, &v) in cs.iter().zip(vs) {
                out[(i, c)] = v;
            }
        }
        out
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cs, vs) = self.row(i);
            for (&c, &v) in cs.iter().zip(vs) {
                worst = worst.max((v - self.get(c, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cs, vs) = self.row(i);
            for (&c, &v) in cs.iter().zip(vs) {
                trip.push(Triplet::new(i, c, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &trip)
            .map_err(|e| Error::Factorization(format!("sparse conversion: {e:?}")))
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix
/// (fill-reducing ordering chosen by the backend).
pub struct SparseCholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("n", &self.n).finish()
    }
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Factorization("matrix is not square".into()));
        }
        if a.nrows() == 0 {
            return Err(Error::Factorization("empty matrix".into()));
        }
        let m = a.to_faer()?;
        let llt = m
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("matrix is not positive definite ({e:?})")))?;
        Ok(Self { n: a.nrows(), llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        assert_eq!(rhs.nrows(), self.n);
        self.llt.solve_in_place(rhs);
    }
}
