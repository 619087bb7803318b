//! Dense eigendecomposition / SVD helpers with a fixed ordering convention.
//!
//! Everything downstream (whitening, operator factorization, oracles) assumes
//! eigenvalues and singular values sorted in decreasing order, which nalgebra
//! does not guarantee, so the sorting lives here in one place.

use nalgebra::{DMatrix, DVector};

/// Symmetric eigendecomposition with eigenvalues sorted decreasing and
/// eigenvector columns permuted to match.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Thin SVD `m = U diag(s) V^T` with singular values sorted decreasing.
pub fn svd_desc(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let s = svd.singular_values;
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let values = DVector::from_fn(k, |i, _| s[order[i]]);
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut v_sorted = DMatrix::zeros(vt.ncols(), k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &vt.transpose().column(src));
    }
    (u_sorted, values, v_sorted)
}

/// Count of eigenvalues above `rel_tol * max(|eigenvalue|)`; the effective
/// numerical rank used when truncating PSD factorizations.
pub fn rank_above(eigenvalues: &DVector<f64>, rel_tol: f64) -> usize {
    let max = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    eigenvalues.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen_desc(m);
    vals[vals.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn eigen_reconstructs_and_sorted() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = DMatrix::from_fn(12, 12, |_, _| rng.gen_range(-1.0..1.0));
        let sym = &a * a.transpose();
        let (vals, vecs) = sym_eigen_desc(&sym);
        for i in 1..vals.len() {
            assert!(vals[i - 1] >= vals[i]);
        }
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(rebuilt, sym, epsilon = 1e-9);
    }

    #[test]
    fn svd_reconstructs_and_sorted() {
        let mut rng = StdRng::seed_from_u64(4);
        let a = DMatrix::from_fn(9, 6, |_, _| rng.gen_range(-1.0..1.0));
        let (u, s, v) = svd_desc(&a);
        for i in 1..s.len() {
            assert!(s[i - 1] >= s[i]);
        }
        let rebuilt = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert_relative_eq!(rebuilt, a, epsilon = 1e-9);
    }
}
