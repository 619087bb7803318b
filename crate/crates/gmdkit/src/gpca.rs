//! Generalized principal components: scores and variance accounting.
//!
//! For unregularized factors the proportion of variance explained by
//! component k is d_k^2 / ||X||_{Q,R}^2. Regularized factors are no longer
//! Q,R-orthogonal, so the cumulative share is computed by projecting the
//! data onto the fitted factor spaces.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gmd::GmdFactors;
use crate::linalg;
use crate::quadop::{qr_trace, QuadraticOperator};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VarianceReport {
    pub per_component: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub total_qr_norm_sq: f64,
}

/// Component scores Z = X R V (n x K).
pub fn gpc_scores(
    x: &DataMatrix,
    r: &QuadraticOperator,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if v.nrows() != x.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "V has {} rows but data has {} cols",
            v.nrows(),
            x.n_cols()
        )));
    }
    let rv = r.apply_mat(v)?;
    Ok(x.as_matrix() * rv)
}

/// Per-component and cumulative variance explained by unregularized factors.
pub fn variance_explained(
    factors: &GmdFactors,
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
) -> Result<VarianceReport> {
    let total = qr_trace(x.as_matrix(), q, r)?;
    if total <= 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let per_component: Vec<f64> = factors.d.iter().map(|d| d * d / total).collect();
    let mut cumulative = Vec::with_capacity(per_component.len());
    let mut acc = 0.0;
    for v in &per_component {
        acc += v;
        cumulative.push(acc);
    }
    Ok(VarianceReport {
        per_component,
        cumulative,
        total_qr_norm_sq: total,
    })
}

/// Inverse of a small symmetric PSD Gram matrix; a diagonal ridge of 1e-12 is
/// added when the condition number exceeds 1e12.
fn gram_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = linalg::sym_eigen_desc(g);
    let k = vals.len();
    let max = vals[0].max(0.0);
    let min = vals[k - 1];
    let ridge = if min <= 0.0 || max / min > 1e12 {
        1e-12
    } else {
        0.0
    };
    let mut inv = DMatrix::zeros(k, k);
    for c in 0..k {
        let lam = vals[c] + ridge;
        if lam <= 0.0 {
            return Err(Error::Numerical(
                "factor Gram matrix is numerically singular".into(),
            ));
        }
        let col = vecs.column(c);
        for i in 0..k {
            for j in 0..k {
                inv[(i, j)] += col[i] * col[j] / lam;
            }
        }
    }
    Ok(inv)
}

/// Drops columns whose norm is numerically zero, warning about each.
fn drop_zero_columns(m: &DMatrix<f64>, label: &str) -> DMatrix<f64> {
    let keep: Vec<usize> = (0..m.ncols())
        .filter(|&j| {
            let nz = m.column(j).norm() > 1e-12;
            if !nz {
                log::warn!("dropping zero {label} factor column {j} from variance projection");
            }
            nz
        })
        .collect();
    let mut out = DMatrix::zeros(m.nrows(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        out.set_column(dst, &m.column(src));
    }
    out
}

/// Cumulative proportion of variance explained by the first k (possibly
/// regularized) factor pairs:
/// tr(Q X_k R X_k^T) / tr(Q X R X^T) with
/// X_k = P_U Q X R P_V, P_U = U (U^T Q U)^{-1} U^T and P_V analogous.
pub fn cumulative_variance_regularized(
    u_k: &DMatrix<f64>,
    v_k: &DMatrix<f64>,
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
) -> Result<f64> {
    let total = qr_trace(x.as_matrix(), q, r)?;
    if total <= 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let u = drop_zero_columns(u_k, "left");
    let v = drop_zero_columns(v_k, "right");
    if u.ncols() == 0 || v.ncols() == 0 {
        return Ok(0.0);
    }
    if u.nrows() != x.n_rows() || v.nrows() != x.n_cols() {
        return Err(Error::DimensionMismatch(
            "factor matrices do not match data dimensions".into(),
        ));
    }

    let qu = q.apply_mat(&u)?;
    let rv = r.apply_mat(&v)?;
    let gram_u_inv = gram_inverse(&(u.transpose() * &qu))?;
    let gram_v_inv = gram_inverse(&(v.transpose() * &rv))?;

    // X_k = U Gu^{-1} (QU)^T X (RV) Gv^{-1} V^T, assembled left to right
    let core = qu.transpose() * x.as_matrix() * &rv;
    let x_k = &u * gram_u_inv * core * gram_v_inv * v.transpose();
    let explained = qr_trace(&x_k, q, r)?;
    Ok(explained / total)
}

/// Cor.-5-style running sums for unregularized factors; used as the
/// cross-check for the projection route.
pub fn cumulative_from_values(d: &DVector<f64>, total_sq: f64) -> Vec<f64> {
    let mut acc = 0.0;
    d.iter()
        .map(|v| {
            acc += v * v / total_sq;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmd::{gmd_oracle, gmd_power, GmdOptions};
    use crate::quadop::qr_norm;
    use crate::sparse::CsrMatrix;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_psd_op(dim: usize, rng: &mut StdRng) -> QuadraticOperator {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.3;
        QuadraticOperator::custom(CsrMatrix::from_dense_symmetric(&psd).unwrap(), Some(dim))
    }

    #[test]
    fn scores_reduce_to_classical_pcs() {
        let mut rng = StdRng::seed_from_u64(1);
        let xm = DMatrix::from_fn(10, 6, |_, _| rng.gen_range(-1.0..1.0));
        let x = DataMatrix::new(xm.clone()).unwrap();
        let q = QuadraticOperator::identity(10).unwrap();
        let r = QuadraticOperator::identity(6).unwrap();
        let f = gmd_oracle(&x, &q, &r, 3).unwrap();
        let z = gpc_scores(&x, &r, &f.v).unwrap();
        let expected = &xm * &f.v;
        assert_relative_eq!(z, expected, epsilon = 1e-12);
    }

    #[test]
    fn score_of_null_space_loading_is_zero() {
        let x = DataMatrix::new(DMatrix::from_fn(4, 3, |i, j| (i + j) as f64)).unwrap();
        let lap = crate::quadop::build_chain_laplacian(3).unwrap();
        let v = DMatrix::from_element(3, 1, 1.0); // constant vector in null(R)
        let z = gpc_scores(&x, &lap, &v).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn score_variance_consistent_with_values() {
        let mut rng = StdRng::seed_from_u64(2);
        let x = DataMatrix::new(DMatrix::from_fn(12, 9, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(12, &mut rng);
        let r = random_psd_op(9, &mut rng);
        let f = gmd_oracle(&x, &q, &r, 4).unwrap();
        let z = gpc_scores(&x, &r, &f.v).unwrap();
        // z_k^T Q z_k = d_k^2
        let qz = q.apply_mat(&z).unwrap();
        for k in 0..4 {
            let quad = z.column(k).dot(&qz.column(k));
            assert_relative_eq!(quad, f.d[k] * f.d[k], max_relative = 1e-8);
        }
    }

    #[test]
    fn rank_one_explains_everything() {
        let mut rng = StdRng::seed_from_u64(3);
        let u = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let x = DataMatrix::new(&u * v.transpose()).unwrap();
        let q = random_psd_op(8, &mut rng);
        let r = random_psd_op(5, &mut rng);
        let f = gmd_oracle(&x, &q, &r, 1).unwrap();
        let report = variance_explained(&f, &x, &q, &r).unwrap();
        assert_relative_eq!(report.per_component[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn full_rank_cumulative_reaches_one() {
        let mut rng = StdRng::seed_from_u64(4);
        let x = DataMatrix::new(DMatrix::from_fn(7, 5, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(7, &mut rng);
        let r = random_psd_op(5, &mut rng);
        let f = gmd_oracle(&x, &q, &r, 5).unwrap();
        let report = variance_explained(&f, &x, &q, &r).unwrap();
        let last = report.cumulative.last().unwrap();
        assert_relative_eq!(*last, 1.0, epsilon = 1e-8);
        for w in report.cumulative.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for v in &report.per_component {
            assert!((0.0..=1.0 + 1e-8).contains(v));
        }
        // Pythagoras: ||X||^2 = sum d_k^2 + ||residual||^2
        let recon = crate::gmd::reconstruct(&f, 5);
        let resid = DataMatrix::new(x.as_matrix() - recon.as_matrix()).unwrap();
        let total = qr_norm(&x, &q, &r).unwrap().powi(2);
        let d_sq: f64 = f.d.iter().map(|d| d * d).sum();
        let r_sq = qr_norm(&resid, &q, &r).unwrap().powi(2);
        assert_relative_eq!(total, d_sq + r_sq, max_relative = 1e-8);
    }

    #[test]
    fn undefined_variance_errors() {
        let x = DataMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        let q = QuadraticOperator::identity(4).unwrap();
        let r = QuadraticOperator::identity(3).unwrap();
        let f = GmdFactors {
            u: DMatrix::zeros(4, 1),
            d: DVector::zeros(1),
            v: DMatrix::zeros(3, 1),
            iterations: vec![0],
            converged: vec![false],
        };
        assert!(matches!(
            variance_explained(&f, &x, &q, &r),
            Err(Error::UndefinedVariance)
        ));
    }

    #[test]
    fn projection_route_matches_running_sums_for_gmd_factors() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = DataMatrix::new(DMatrix::from_fn(11, 8, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(11, &mut rng);
        let r = random_psd_op(8, &mut rng);
        let f = gmd_power(&x, &q, &r, 3, &GmdOptions::default()).unwrap();
        let report = variance_explained(&f, &x, &q, &r).unwrap();
        for k in 1..=3 {
            let uk = f.u.columns(0, k).into_owned();
            let vk = f.v.columns(0, k).into_owned();
            let got = cumulative_variance_regularized(&uk, &vk, &x, &q, &r).unwrap();
            assert_relative_eq!(got, report.cumulative[k - 1], max_relative = 1e-8);
        }
    }

    #[test]
    fn projection_route_zero_and_scale_invariance() {
        let mut rng = StdRng::seed_from_u64(6);
        let x = DataMatrix::new(DMatrix::from_fn(9, 7, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(9, &mut rng);
        let r = random_psd_op(7, &mut rng);
        let f = gmd_power(&x, &q, &r, 2, &GmdOptions::default()).unwrap();

        // k = 0: empty factor sets explain nothing
        let empty_u = DMatrix::zeros(9, 0);
        let empty_v = DMatrix::zeros(7, 0);
        assert_eq!(
            cumulative_variance_regularized(&empty_u, &empty_v, &x, &q, &r).unwrap(),
            0.0
        );

        // scale invariance of the projections
        let base =
            cumulative_variance_regularized(&f.u.clone(), &f.v.clone(), &x, &q, &r).unwrap();
        let mut u_scaled = f.u.clone();
        u_scaled.column_mut(1).scale_mut(37.5);
        let mut v_scaled = f.v.clone();
        v_scaled.column_mut(0).scale_mut(-0.004);
        let scaled =
            cumulative_variance_regularized(&u_scaled, &v_scaled, &x, &q, &r).unwrap();
        assert_relative_eq!(base, scaled, epsilon = 1e-10);
    }
}
