//! Dense data matrix with centering state.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// An n x p data matrix. Storage is column-major f64 (nalgebra's layout).
/// `centered` records whether double centering has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    centered: bool,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidDimension(
                "data matrix must have positive dimensions".into(),
            ));
        }
        Ok(Self {
            values,
            centered: false,
        })
    }

    pub fn from_parts(values: DMatrix<f64>, centered: bool) -> Result<Self> {
        let mut m = Self::new(values)?;
        m.centered = centered;
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    /// Double centering: subtract row means then column means, twice.
    /// One row-then-column pass is exact in exact arithmetic; the second
    /// pass mops up floating-point drift.
    pub fn center(mut self) -> Self {
        for _ in 0..2 {
            let n = self.values.nrows() as f64;
            let p = self.values.ncols() as f64;
            for i in 0..self.values.nrows() {
                let mean = self.values.row(i).sum() / p;
                for j in 0..self.values.ncols() {
                    self.values[(i, j)] -= mean;
                }
            }
            for j in 0..self.values.ncols() {
                let mean = self.values.column(j).sum() / n;
                for i in 0..self.values.nrows() {
                    self.values[(i, j)] -= mean;
                }
            }
        }
        self.centered = true;
        self
    }

    /// Largest absolute row or column mean; 0 for a perfectly centered matrix.
    pub fn max_mean_residual(&self) -> f64 {
        let n = self.values.nrows() as f64;
        let p = self.values.ncols() as f64;
        let mut worst = 0.0_f64;
        for i in 0..self.values.nrows() {
            worst = worst.max((self.values.row(i).sum() / p).abs());
        }
        for j in 0..self.values.ncols() {
            worst = worst.max((self.values.column(j).sum() / n).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rejects_empty() {
        assert!(DataMatrix::new(DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn double_centering_zeroes_means() {
        let mut rng = StdRng::seed_from_u64(11);
        let x = DMatrix::from_fn(17, 9, |_, _| rng.gen_range(-5.0..5.0) + 3.0);
        let centered = DataMatrix::new(x).unwrap().center();
        assert!(centered.centered());
        assert!(centered.max_mean_residual() < 1e-8);
    }
}
