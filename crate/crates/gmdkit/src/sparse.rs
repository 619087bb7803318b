//! Compressed-row storage for square symmetric matrices.
//!
//! Symmetry is enforced structurally: the builder takes each unordered pair
//! {i, j} once and mirrors it into both triangles, so `get(i, j) == get(j, i)`
//! holds exactly, not up to rounding.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Square symmetric sparse matrix in CSR form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates one triangle of a symmetric matrix; duplicate entries sum.
#[derive(Debug, Default)]
pub struct SymmetricBuilder {
    dim: usize,
    // keyed by (min(i,j), max(i,j))
    upper: BTreeMap<(usize, usize), f64>,
}

impl SymmetricBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            upper: BTreeMap::new(),
        }
    }

    /// Adds `value` to the symmetric pair {i, j}. The pair is stored once
    /// regardless of argument order.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        let key = (i.min(j), i.max(j));
        *self.upper.entry(key).or_insert(0.0) += value;
    }

    pub fn build(self) -> CsrMatrix {
        let dim = self.dim;
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); dim];
        for ((i, j), v) in self.upper {
            if v == 0.0 {
                continue;
            }
            rows[i].insert(j, v);
            if i != j {
                rows[j].insert(i, v);
            }
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            dim,
            indptr,
            indices,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut b = SymmetricBuilder::new(dim);
        for i in 0..dim {
            b.add(i, i, 1.0);
        }
        b.build()
    }

    /// Builds from a dense symmetric matrix, dropping exact zeros. The upper
    /// triangle is taken as authoritative so rounding asymmetry cannot leak in.
    pub fn from_dense_symmetric(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut b = SymmetricBuilder::new(m.nrows());
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
        Ok(b.build())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates the nonzero entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn is_diagonal(&self) -> bool {
        self.iter().all(|(i, j, _)| i == j)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// y = A x
    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let mut y = DVector::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Y = A X (A sparse, X dense)
    pub fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(x.nrows(), self.dim);
        let mut y = DMatrix::zeros(self.dim, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.dim {
                let mut acc = 0.0;
                for (j, v) in self.row(i) {
                    acc += v * col[j];
                }
                y[(i, c)] = acc;
            }
        }
        y
    }

    /// Y = X A (A sparse and symmetric, X dense). Column j of the result is a
    /// combination of columns of X weighted by row j of A.
    pub fn right_apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(x.ncols(), self.dim);
        let mut y = DMatrix::zeros(x.nrows(), self.dim);
        for j in 0..self.dim {
            for (k, v) in self.row(j) {
                let src = x.column(k);
                let mut dst = y.column_mut(j);
                dst.axpy(v, &src, 1.0);
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_symmetric(dim: usize, density: f64, rng: &mut StdRng) -> CsrMatrix {
        let mut b = SymmetricBuilder::new(dim);
        for i in 0..dim {
            for j in i..dim {
                if rng.gen::<f64>() < density {
                    b.add(i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        b.build()
    }

    #[test]
    fn mirror_is_exact() {
        let mut b = SymmetricBuilder::new(3);
        b.add(2, 0, 0.1 + 0.2); // deliberately inexact value
        b.add(1, 1, -4.0);
        let m = b.build();
        assert_eq!(m.get(0, 2).to_bits(), m.get(2, 0).to_bits());
        assert_eq!(m.get(1, 1), -4.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn duplicates_sum_and_columns_sorted() {
        let mut b = SymmetricBuilder::new(4);
        b.add(0, 3, 1.0);
        b.add(3, 0, 2.0);
        b.add(0, 1, 5.0);
        let m = b.build();
        assert_eq!(m.get(0, 3), 3.0);
        let cols: Vec<usize> = m.row(0).map(|(j, _)| j).collect();
        assert_eq!(cols, vec![1, 3]);
    }

    #[test]
    fn apply_matches_dense_reference() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_symmetric(50, 0.15, &mut rng);
        let dense = a.to_dense();
        let x = DVector::from_fn(50, |_, _| rng.gen_range(-1.0..1.0));
        let xs = DMatrix::from_fn(50, 6, |_, _| rng.gen_range(-1.0..1.0));
        assert_relative_eq!(a.apply_vec(&x), &dense * &x, epsilon = 1e-12);
        assert_relative_eq!(a.apply_mat(&xs), &dense * &xs, epsilon = 1e-12);
        let wide = DMatrix::from_fn(8, 50, |_, _| rng.gen_range(-1.0..1.0));
        assert_relative_eq!(a.right_apply_mat(&wide), &wide * &dense, epsilon = 1e-12);
    }

    #[test]
    fn identity_pattern() {
        let id = CsrMatrix::identity(5);
        assert_eq!(id.nnz(), 5);
        assert!(id.is_diagonal());
        for i in 0..5 {
            assert_eq!(id.get(i, i), 1.0);
        }
    }
}
