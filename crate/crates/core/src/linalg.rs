//! Thin sparse/dense linear algebra layer over `faer`.
//!
//! Assembly produces [`SparseMatrix`] (CSR, duplicates summed); factorizations
//! go through `faer`'s sparse LU / Cholesky.

use faer::linalg::solvers::Solve;
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::{lu, SupernodalThreshold};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: Vec<(usize, usize, f64)>) -> Self {
        // bucket by row, then sort and merge each row
        let mut start = vec![0usize; nrows + 1];
        for &(r, c, _) in &triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds {nrows}x{ncols}");
            start[r + 1] += 1;
        }
        for i in 0..nrows {
            start[i + 1] += start[i];
        }
        let mut next = start.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for (r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(bucket.len());
        let mut values: Vec<f64> = Vec::with_capacity(bucket.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut bucket[start[r]..start[r + 1]];
            row.sort_unstable_by_key(|e| e.0);
            let first = col_idx.len();
            for &(c, v) in row.iter() {
                if col_idx.len() > first && col_idx[col_idx.len() - 1] == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// Entry lookup; zero if not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// `selfᵀ · x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, c, v) in self.triplets() {
            out[c] += v * x[r];
        }
        out
    }

    /// `xᵀ · self · y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn transpose(&self) -> Self {
        let mut row_ptr = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.ncols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.triplets() {
            col_idx[next[c]] = r;
            values[next[c]] = v;
            next[c] += 1;
        }
        SparseMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Sum of scaled matrices of identical shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut trips = Vec::new();
        for (alpha, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            trips.extend(m.triplets().map(|(r, c, v)| (r, c, alpha * v)));
        }
        Self::from_triplets(nrows, ncols, trips)
    }

    /// Lifts a scalar matrix to the block diagonal `diag(S, S, S)`.
    pub fn block_diag3(&self) -> Self {
        let mut trips = Vec::with_capacity(3 * self.nnz());
        for b in 0..3 {
            trips.extend(self.triplets().map(|(r, c, v)| (r + b * self.nrows, c + b * self.ncols, v)));
        }
        Self::from_triplets(3 * self.nrows, 3 * self.ncols, trips)
    }

    /// Saddle-point matrix `[A Bᵀ; B 0]`.
    pub fn saddle(a: &SparseMatrix, b: &SparseMatrix) -> Self {
        let n = a.nrows;
        assert_eq!(a.ncols, n);
        assert_eq!(b.ncols, n);
        let m = b.nrows;
        let bt = b.transpose();
        let mut row_ptr = Vec::with_capacity(n + m + 1);
        let mut col_idx = Vec::with_capacity(a.nnz() + 2 * b.nnz());
        let mut values = Vec::with_capacity(col_idx.capacity());
        row_ptr.push(0);
        for r in 0..n {
            let (ka, kb) = (a.row_ptr[r]..a.row_ptr[r + 1], bt.row_ptr[r]..bt.row_ptr[r + 1]);
            col_idx.extend_from_slice(&a.col_idx[ka.clone()]);
            values.extend_from_slice(&a.values[ka]);
            col_idx.extend(bt.col_idx[kb.clone()].iter().map(|c| n + c));
            values.extend_from_slice(&bt.values[kb]);
            row_ptr.push(col_idx.len());
        }
        for r in 0..m {
            let k = b.row_ptr[r]..b.row_ptr[r + 1];
            col_idx.extend_from_slice(&b.col_idx[k.clone()]);
            values.extend_from_slice(&b.values[k]);
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { nrows: n + m, ncols: n + m, row_ptr, col_idx, values }
    }

    /// Largest entrywise asymmetry relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// `self · dense`
    pub fn mul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = Mat::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            for r in 0..self.nrows {
                let mut acc = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * x[(self.col_idx[k], j)];
                }
                out[(r, j)] = acc;
            }
        }
        out
    }

    fn to_faer(&self) -> SparseColMat<usize, f64> {
        // CSR of the transpose is CSC of the matrix itself
        let t = self.transpose();
        let symbolic = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, t.row_ptr, None, t.col_idx);
        SparseColMat::new(symbolic, t.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a + s·b`
pub fn axpy(s: f64, b: &[f64], a: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn col_to_vec(m: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn vec_to_col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// `mᵀ · v` for a dense matrix and a slice.
pub fn tr_mul(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(m.nrows(), v.len());
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)] * v[i]).sum()).collect()
}

/// `m · c` for a dense matrix and a coefficient slice.
pub fn mul(m: MatRef<'_, f64>, c: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), c.len());
    let mut out = vec![0.0; m.nrows()];
    for (j, cj) in c.iter().enumerate() {
        if *cj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * cj;
        }
    }
    out
}

/// Fill-reducing ordering and symbolic LU of a sparsity pattern, reusable
/// across matrices with the same pattern.
#[derive(Clone)]
pub struct LuPattern {
    symbolic: Arc<lu::SymbolicLu<usize>>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl LuPattern {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch(format!("LU of {}x{} matrix", a.nrows, a.ncols)));
        }
        // the supernodal kernel is markedly faster on the saddle systems even at small sizes
        let params = lu::LuSymbolicParams { supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL, ..Default::default() };
        let symbolic = lu::factorize_symbolic_lu(a.to_faer().symbolic(), params)
            .map_err(|e| Error::Factorization(format!("symbolic LU: {e:?}")))?;
        Ok(LuPattern { symbolic: Arc::new(symbolic), row_ptr: a.row_ptr.clone(), col_idx: a.col_idx.clone() })
    }

    pub fn matches(&self, a: &SparseMatrix) -> bool {
        self.row_ptr == a.row_ptr && self.col_idx == a.col_idx
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    symbolic: Arc<lu::SymbolicLu<usize>>,
    numeric: lu::NumericLu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::with_pattern(a, &LuPattern::new(a)?)
    }

    /// Numeric factorization reusing the symbolic analysis of `pattern`.
    pub fn with_pattern(a: &SparseMatrix, pattern: &LuPattern) -> Result<Self> {
        if !pattern.matches(a) {
            return Err(Error::DimensionMismatch("sparsity pattern differs from the analysed one".into()));
        }
        let symbolic = pattern.symbolic.clone();
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()));
        let mut numeric = lu::NumericLu::new();
        symbolic
            .factorize_numeric_lu(&mut numeric, a.to_faer().as_ref(), Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(|e| Error::Factorization(format!("sparse LU: {e:?}")))?;
        Ok(SparseLu { symbolic, numeric, n: a.nrows })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut x = vec_to_col(rhs);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        lu::LuRef::new_unchecked(&self.symbolic, &self.numeric).solve_in_place_with_conj(
            Conj::No,
            x.as_mut(),
            Par::Seq,
            MemStack::new(&mut buf),
        );
        col_to_vec(x.as_ref(), 0)
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SparseCholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("n", &self.n).finish()
    }
}

impl SparseCholesky {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("sparse Cholesky: {e:?}")))?;
        Ok(SparseCholesky { llt, n: a.nrows })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let x = self.llt.solve(vec_to_col(rhs));
        col_to_vec(x.as_ref(), 0)
    }

    pub fn solve_mat(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(rhs)
    }
}

/// Dense lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn dense_cholesky_lower(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Factorization(format!("dense Cholesky: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// Solves `L X = B` for lower triangular `L`.
pub fn solve_lower(l: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut x = b.to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), faer::Par::Seq);
    x
}

/// Solves `Lᵀ X = B` for lower triangular `L`.
pub fn solve_lower_transpose(l: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut x = b.to_owned();
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), x.as_mut(), faer::Par::Seq);
    x
}

/// Dense LU solve with partial pivoting that refuses near-singular pivots.
///
/// A pivot is rejected when `|u_ii| < pivot_tol · max_j |u_jj|`.
pub fn dense_solve_checked(a: MatRef<'_, f64>, rhs: &[f64], pivot_tol: f64) -> std::result::Result<Vec<f64>, String> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let max_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    let min_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(max_pivot > 0.0) || min_pivot < pivot_tol * max_pivot || !min_pivot.is_finite() {
        return Err(format!("pivot ratio {:.3e} below {:.1e}", min_pivot / max_pivot, pivot_tol));
    }
    let x = lu.solve(vec_to_col(rhs));
    Ok(col_to_vec(x.as_ref(), 0))
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric dense matrix.
pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let vals: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Singular values (descending) of a dense matrix.
pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(|e| Error::Eigen(format!("SVD: {e:?}")))
}

/// Thin SVD `A = U Σ Vᵀ`; returns `U` and the singular values.
pub fn thin_svd_u(a: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>)> {
    let svd = a.thin_svd().map_err(|e| Error::Eigen(format!("SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    Ok((svd.U().to_owned(), (0..s.nrows()).map(|i| s[i]).collect()))
}
