//! Row-compressed sparse matrices and direct factorizations.
//!
//! Matrices are assembled here as CSR with sorted column indices. The LU and
//! Cholesky factorizations are delegated to `faer`. [`SparseLu::factor`] uses
//! the simplicial left-looking kernel with a COLAMD column ordering so that
//! the diagonal of `U` (the pivots) stays inspectable;
//! [`SparseLu::factor_fast`] lets `faer` pick a supernodal kernel for large
//! systems and reports no pivots.

use std::io::Write;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::sparse::linalg::colamd;
use faer::sparse::linalg::lu::simplicial::{
    factorize_simplicial_numeric_lu, factorize_simplicial_numeric_lu_scratch, SimplicialLu,
};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. Duplicates are added in input order, so the
    /// result is reproducible for a fixed triplet sequence.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `A^T x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.n_cols,
            self.n_rows,
            self.triplets().map(|(i, j, v)| (j, i, v)).collect(),
        )
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Entrywise `self + c * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, c: f64) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, c * v)));
        Self::from_triplets(self.n_rows, self.n_cols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        self.add_scaled(other, -1.0).max_abs()
    }

    /// Max-norm of `A - A^T`.
    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    /// Keeps the rows and columns with `index[k] = Some(new)`.
    pub fn restrict(&self, index: &[Option<usize>], n: usize) -> Self {
        assert_eq!(index.len(), self.n_rows);
        assert_eq!(index.len(), self.n_cols);
        let t = self
            .triplets()
            .filter_map(|(i, j, v)| Some((index[i]?, index[j]?, v)))
            .collect();
        Self::from_triplets(n, n, t)
    }

    /// Zeros the stored values of row `i`, keeping its pattern.
    pub fn zero_row(&mut self, i: usize) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.values[range].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub(crate) fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &t)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    /// Coordinate text: header `% rows cols nnz`, then `i j value` per entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "% {} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

struct Simplicial {
    lu: SimplicialLu<usize, f64>,
    row_perm: Vec<usize>,
    row_perm_inv: Vec<usize>,
    col_perm: Vec<usize>,
    col_perm_inv: Vec<usize>,
    min_pivot: f64,
    max_pivot: f64,
}

enum Backend {
    Simplicial(Simplicial),
    General(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

/// Sparse LU with row partial pivoting and a fill-reducing column ordering.
pub struct SparseLu {
    n: usize,
    backend: Backend,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu")
            .field("n", &self.n)
            .field("pivot_ratio", &self.pivot_ratio())
            .finish()
    }
}

impl SparseLu {
    /// Factorization whose pivots are recorded; see [`SparseLu::pivot_ratio`].
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return invalid("LU needs a square matrix");
        }
        let n = a.n_rows;
        let csc = a.to_faer()?;
        let mut col_perm = vec![0usize; n];
        let mut col_perm_inv = vec![0usize; n];
        let mut mem = MemBuffer::new(colamd::order_scratch::<usize>(n, n, csc.compute_nnz()));
        colamd::order(
            &mut col_perm,
            &mut col_perm_inv,
            csc.symbolic(),
            Default::default(),
            MemStack::new(&mut mem),
        )
        .map_err(|e| Error::Factorization(format!("column ordering: {e:?}")))?;

        let mut row_perm = vec![0usize; n];
        let mut row_perm_inv = vec![0usize; n];
        let mut lu = SimplicialLu::<usize, f64>::new();
        let mut mem = MemBuffer::new(factorize_simplicial_numeric_lu_scratch::<usize, f64>(n, n));
        factorize_simplicial_numeric_lu(
            &mut row_perm,
            &mut row_perm_inv,
            &mut lu,
            csc.as_ref(),
            PermRef::new_checked(&col_perm, &col_perm_inv, n),
            MemStack::new(&mut mem),
        )
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;

        let u = lu.u_factor_unsorted();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0_f64;
        for j in 0..n {
            let diag = u
                .row_idx_of_col(j)
                .zip(u.val_of_col(j))
                .find(|(i, _)| *i == j)
                .map_or(0.0, |(_, v)| v.abs());
            let diag = if diag.is_finite() { diag } else { 0.0 };
            min_pivot = min_pivot.min(diag);
            max_pivot = max_pivot.max(diag);
        }
        if n == 0 {
            min_pivot = 0.0;
        }
        Ok(SparseLu {
            n,
            backend: Backend::Simplicial(Simplicial {
                lu,
                row_perm,
                row_perm_inv,
                col_perm,
                col_perm_inv,
                min_pivot,
                max_pivot,
            }),
        })
    }

    /// Factorization with `faer`'s automatic kernel choice. Much faster on
    /// large systems; pivots are not available.
    pub fn factor_fast(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return invalid("LU needs a square matrix");
        }
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SparseLu {
            n: a.n_rows,
            backend: Backend::General(lu),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest over largest pivot magnitude of `U`, when recorded.
    pub fn pivot_ratio(&self) -> Option<f64> {
        match &self.backend {
            Backend::Simplicial(s) if s.max_pivot > 0.0 => Some(s.min_pivot / s.max_pivot),
            Backend::Simplicial(_) => Some(0.0),
            Backend::General(_) => None,
        }
    }

    fn run(&self, rhs: &[f64], transpose: bool) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        match &self.backend {
            Backend::Simplicial(s) => {
                let row_perm = PermRef::new_checked(&s.row_perm, &s.row_perm_inv, self.n);
                let col_perm = PermRef::new_checked(&s.col_perm, &s.col_perm_inv, self.n);
                let mut mem = MemBuffer::new(faer::perm::permute_rows_in_place_scratch::<usize, f64>(self.n, 1));
                let stack = MemStack::new(&mut mem);
                if transpose {
                    s.lu.solve_transpose_in_place_with_conj(row_perm, col_perm, Conj::No, x.as_mut(), Par::Seq, stack);
                } else {
                    s.lu.solve_in_place_with_conj(row_perm, col_perm, Conj::No, x.as_mut(), Par::Seq, stack);
                }
            }
            Backend::General(lu) => {
                if transpose {
                    lu.solve_transpose_in_place(x.as_mut());
                } else {
                    lu.solve_in_place(x.as_mut());
                }
            }
        }
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.run(b, false)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        self.run(b, true)
    }
}

/// Sparse Cholesky `A = L L^T` of a symmetric positive definite matrix.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("n", &self.n).finish()
    }
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return invalid("Cholesky needs a square matrix");
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("Cholesky: {e:?}")))?;
        Ok(SparseCholesky { n: a.n_rows, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let x = self.llt.solve(Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]));
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
