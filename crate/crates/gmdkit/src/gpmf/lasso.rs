//! Soft thresholding and the R-norm lasso.
//!
//! The R-norm lasso minimizes 1/2 ||y - v||_R^2 + lambda ||v||_1. For
//! diagonal R the solution is a single vector soft-threshold; for general R
//! it is solved by coordinate descent with warm starts and active-set sweeps.

use crate::error::{Error, Result};
use crate::quadop::QuadraticOperator;
use nalgebra::DVector;

/// sign(x) (|x| - t)_+ with t >= 0.
pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    debug_assert!(threshold >= 0.0, "negative soft-threshold");
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

/// Elementwise shrinkage with a per-coordinate threshold vector.
pub fn soft_threshold_vec(x: &DVector<f64>, threshold: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != threshold.len() {
        return Err(Error::DimensionMismatch(format!(
            "value length {} vs threshold length {}",
            x.len(),
            threshold.len()
        )));
    }
    if threshold.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParameter(
            "soft threshold must be non-negative".into(),
        ));
    }
    Ok(DVector::from_fn(x.len(), |i, _| {
        soft_threshold(x[i], threshold[i])
    }))
}

#[derive(Debug, Clone)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub v: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

/// 1/2 ||y - v||_R^2 + lambda ||v||_1, the objective the solver minimizes.
pub fn rnorm_lasso_objective(
    y: &DVector<f64>,
    r: &QuadraticOperator,
    lambda: f64,
    v: &DVector<f64>,
) -> Result<f64> {
    let diff = y - v;
    let rd = r.apply_vec(&diff)?;
    Ok(0.5 * diff.dot(&rd) + lambda * v.iter().map(|x| x.abs()).sum::<f64>())
}

/// Solves the R-norm lasso.
///
/// Coordinates with a zero diagonal in R are pinned at zero (the objective
/// does not depend on them beyond the penalty). When R is diagonal the
/// closed-form vector soft-threshold is used. Non-convergence within
/// `max_sweeps` returns the current iterate with `converged = false`.
pub fn rnorm_lasso(
    y: &DVector<f64>,
    r: &QuadraticOperator,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    let p = y.len();
    if r.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "R dim {} vs y length {}",
            r.dim(),
            p
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lasso penalty must be non-negative, got {lambda}"
        )));
    }

    if r.is_diagonal() {
        // v_j = S(y_j, lambda / R_jj); R_jj = 0 pins the coordinate
        let mut v = DVector::zeros(p);
        for j in 0..p {
            let rjj = r.entry(j, j);
            if rjj > 0.0 {
                v[j] = soft_threshold(y[j], lambda / rjj);
            }
        }
        return Ok(LassoSolution {
            v,
            converged: true,
            sweeps: 0,
        });
    }

    let ry = r.apply_vec(y)?;
    let active_coords: Vec<usize> = (0..p).filter(|&j| r.entry(j, j) > 0.0).collect();

    let mut v = match warm {
        Some(w) if w.len() == p => w.clone(),
        _ => DVector::zeros(p),
    };
    // pin excluded coordinates
    for j in 0..p {
        if r.entry(j, j) <= 0.0 {
            v[j] = 0.0;
        }
    }
    let mut rv = r.apply_vec(&v)?;

    let mut sweeps = 0;
    let mut converged = false;
    let scale = y.amax().max(1.0);

    // One pass of coordinate updates over `coords`; returns the largest change.
    let sweep = |coords: &[usize], v: &mut DVector<f64>, rv: &mut DVector<f64>| -> f64 {
        let mut max_change = 0.0_f64;
        for &j in coords {
            let rjj = r.entry(j, j);
            let z = ry[j] - (rv[j] - rjj * v[j]);
            let new = soft_threshold(z, lambda) / rjj;
            let delta = new - v[j];
            if delta != 0.0 {
                for (col, val) in r.matrix().row(j) {
                    rv[col] += delta * val;
                }
                v[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        max_change
    };

    while sweeps < opts.max_sweeps {
        // full pass establishes/refreshes the active set
        sweeps += 1;
        let full_change = sweep(&active_coords, &mut v, &mut rv);
        let active: Vec<usize> = active_coords
            .iter()
            .copied()
            .filter(|&j| v[j] != 0.0)
            .collect();
        if full_change < opts.tol * scale {
            converged = true;
            break;
        }
        // iterate the active set until it stabilizes
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let change = sweep(&active, &mut v, &mut rv);
            if change < opts.tol * scale {
                break;
            }
        }
    }

    if !converged {
        log::warn!("rnorm_lasso hit max_sweeps = {} without converging", opts.max_sweeps);
    }
    Ok(LassoSolution {
        v,
        converged,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{CsrMatrix, SymmetricBuilder};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn soft_threshold_formula() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        let x = DVector::from_vec(vec![1.5, -0.2, 0.0]);
        let t0 = DVector::zeros(3);
        assert_eq!(soft_threshold_vec(&x, &t0).unwrap(), x);
        let bad = DVector::from_vec(vec![-0.1, 0.0, 0.0]);
        assert!(soft_threshold_vec(&x, &bad).is_err());
    }

    fn diag_op(values: &[f64]) -> QuadraticOperator {
        let mut b = SymmetricBuilder::new(values.len());
        for (i, &v) in values.iter().enumerate() {
            b.add(i, i, v);
        }
        QuadraticOperator::custom(b.build(), None)
    }

    #[test]
    fn diagonal_closed_form() {
        let r = diag_op(&[2.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let sol = rnorm_lasso(&y, &r, 1.0, None, &LassoOptions::default()).unwrap();
        assert_relative_eq!(sol.v[0], 0.5, epsilon = 1e-15);
        assert_eq!(sol.v[1], 0.0);
    }

    #[test]
    fn identity_r_equals_plain_soft_threshold() {
        let mut rng = StdRng::seed_from_u64(10);
        let y = DVector::from_fn(20, |_, _| rng.gen_range(-2.0..2.0));
        let r = QuadraticOperator::identity(20).unwrap();
        let sol = rnorm_lasso(&y, &r, 0.7, None, &LassoOptions::default()).unwrap();
        for j in 0..20 {
            assert_eq!(sol.v[j], soft_threshold(y[j], 0.7));
        }
    }

    #[test]
    fn unpenalized_full_rank_recovers_y() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &a * a.transpose() + DMatrix::identity(8, 8);
        let r = QuadraticOperator::custom(CsrMatrix::from_dense_symmetric(&psd).unwrap(), None);
        let y = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let sol = rnorm_lasso(&y, &r, 0.0, None, &LassoOptions::default()).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.v, y, epsilon = 1e-8);
    }

    #[test]
    fn kkt_conditions_hold_at_solution() {
        let mut rng = StdRng::seed_from_u64(12);
        let a = DMatrix::from_fn(12, 12, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &a * a.transpose() + DMatrix::identity(12, 12) * 0.5;
        let r = QuadraticOperator::custom(CsrMatrix::from_dense_symmetric(&psd).unwrap(), None);
        let y = DVector::from_fn(12, |_, _| rng.gen_range(-2.0..2.0));
        let lambda = 0.3;
        let sol = rnorm_lasso(&y, &r, lambda, None, &LassoOptions::default()).unwrap();
        // gradient of the smooth part is R(v - y); KKT: |grad_j| <= lambda,
        // with equality and correct sign on the support
        let grad = r.apply_vec(&(&sol.v - &y)).unwrap();
        for j in 0..12 {
            if sol.v[j] != 0.0 {
                assert_relative_eq!(grad[j], -lambda * sol.v[j].signum(), epsilon = 1e-6);
            } else {
                assert!(grad[j].abs() <= lambda + 1e-8);
            }
        }
    }

    #[test]
    fn homogeneity_of_solution_path() {
        let mut rng = StdRng::seed_from_u64(13);
        let a = DMatrix::from_fn(10, 10, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &a * a.transpose() + DMatrix::identity(10, 10) * 0.4;
        let r = QuadraticOperator::custom(CsrMatrix::from_dense_symmetric(&psd).unwrap(), None);
        let y = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
        let lambda = 0.25;
        let c = 3.7;
        let base = rnorm_lasso(&y, &r, lambda, None, &LassoOptions::default()).unwrap();
        let scaled = rnorm_lasso(&(&y * c), &r, lambda * c, None, &LassoOptions::default())
            .unwrap();
        assert_relative_eq!(scaled.v, &base.v * c, epsilon = 1e-8);
    }

    #[test]
    fn zero_diagonal_coordinates_stay_zero() {
        // R = diag(1, 0, 2): middle coordinate is excluded
        let r = diag_op(&[1.0, 0.0, 2.0]);
        let y = DVector::from_vec(vec![5.0, 5.0, 5.0]);
        let sol = rnorm_lasso(&y, &r, 1.0, None, &LassoOptions::default()).unwrap();
        assert_eq!(sol.v[1], 0.0);
        assert_relative_eq!(sol.v[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(sol.v[2], 4.5, epsilon = 1e-12);
    }
}
