//! Row-compressed symmetric sparse matrices.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Anything that can multiply a vector. The Krylov solver only needs this.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y <- A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Induced 1-norm (maximum absolute column sum).
    fn norm_one(&self) -> f64;
}

/// Rows above this size are multiplied in parallel. Every row is still
/// summed sequentially in column order, so the result does not depend on
/// the thread count.
const PAR_MATVEC_MIN_DIM: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    pub fn zero(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Assembles row by row. `fill(row, buf)` pushes `(col, value)` pairs in
    /// any order; duplicates are summed and exact zeros dropped, so the stored
    /// layout is canonical.
    pub fn from_rows<F>(dim: usize, mut fill: F) -> Self
    where
        F: FnMut(usize, &mut Vec<(usize, f64)>),
    {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut buf = Vec::new();
        row_ptr.push(0);
        for row in 0..dim {
            buf.clear();
            fill(row, &mut buf);
            buf.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < buf.len() {
                let c = buf[i].0;
                let mut v = 0.0;
                while i < buf.len() && buf[i].0 == c {
                    v += buf[i].1;
                    i += 1;
                }
                debug_assert!(c < dim);
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_rows(m.nrows(), |r, buf| {
            buf.extend((0..m.ncols()).map(|c| (c, m[(r, c)])));
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `true` when every stored entry has a mirror within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// The block indexed by `keep` (rows and columns), in the given order.
    pub fn principal_submatrix(&self, keep: &[usize]) -> SparseOperator {
        let mut pos = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        SparseOperator::from_rows(keep.len(), |r, buf| {
            for (c, v) in self.row(keep[r]) {
                if pos[c] != usize::MAX {
                    buf.push((pos[c], v));
                }
            }
        })
    }

    /// Coordinate triplets `row col value`, one per line, 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# dim {} nnz {}", self.dim, self.nnz())?;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                writeln!(w, "{r} {c} {v:.16e}")?;
            }
        }
        Ok(())
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| v * x[c])
            .sum()
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        if self.dim >= PAR_MATVEC_MIN_DIM && rayon::current_num_threads() > 1 {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, yr)| *yr = self.row_dot(r, x));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.row_dot(r, x);
            }
        }
    }

    fn norm_one(&self) -> f64 {
        let mut col_sums = vec![0.0; self.dim];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            col_sums[*c] += v.abs();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }
}
