//! Symmetric positive semi-definite quadratic operators and the norms they
//! induce.
//!
//! Operators weight the rows (Q) and columns (R) of a data matrix in the
//! transposable quadratic norm `||X||_{Q,R} = sqrt(tr(Q X R X^T))`. They are
//! immutable after construction and applying them never densifies.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sparse::{CsrMatrix, SymmetricBuilder};
use nalgebra::{DMatrix, DVector};

/// Largest dimension for which we are willing to run dense eigendecomposition
/// or dense inversion during operator construction.
pub const DENSE_CAP: usize = 10_000;

/// Negative-trace tolerance: quadratic forms of PSD operators may round
/// slightly below zero; anything below this is treated as a real PSD failure.
const TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    Laplacian,
    KernelSmoother,
    ArPrecision,
    Custom,
}

/// AR(1) precision layout: a chain over one index, or a grid where the
/// covariance decays with Manhattan distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArMode {
    Chain,
    GridManhattan,
}

/// Sparse symmetric PSD matrix with provenance and an optional known rank.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOperator {
    kind: OperatorKind,
    matrix: CsrMatrix,
    rank_hint: Option<usize>,
}

impl QuadraticOperator {
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("identity of dimension 0".into()));
        }
        Ok(Self {
            kind: OperatorKind::Identity,
            matrix: CsrMatrix::identity(dim),
            rank_hint: Some(dim),
        })
    }

    /// Wraps caller-provided symmetric storage. The PSD invariant is the
    /// caller's responsibility; loaders and tests spot-check it.
    pub fn custom(matrix: CsrMatrix, rank_hint: Option<usize>) -> Self {
        Self {
            kind: OperatorKind::Custom,
            matrix,
            rank_hint,
        }
    }

    pub(crate) fn from_parts(
        kind: OperatorKind,
        matrix: CsrMatrix,
        rank_hint: Option<usize>,
    ) -> Self {
        Self {
            kind,
            matrix,
            rank_hint,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn rank_hint(&self) -> Option<usize> {
        self.rank_hint
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn is_identity(&self) -> bool {
        self.kind == OperatorKind::Identity
    }

    pub fn is_diagonal(&self) -> bool {
        self.kind == OperatorKind::Identity || self.matrix.is_diagonal()
    }

    /// M x
    pub fn apply_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator dim {} applied to vector of length {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(self.matrix.apply_vec(x))
    }

    /// M X
    pub fn apply_mat(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator dim {} applied to matrix with {} rows",
                self.dim(),
                x.nrows()
            )));
        }
        Ok(self.matrix.apply_mat(x))
    }

    /// X M (uses symmetry of M)
    pub fn right_apply_mat(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator dim {} right-applied to matrix with {} cols",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(self.matrix.right_apply_mat(x))
    }

    /// Dense copy; only intended for oracle paths and small operators.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }
}

/// Tridiagonal Laplacian of the path graph on p nodes (degree minus
/// adjacency). Rank is p-1: the constant vector spans the null space.
pub fn build_chain_laplacian(p: usize) -> Result<QuadraticOperator> {
    if p < 2 {
        return Err(Error::InvalidDimension(format!(
            "chain Laplacian needs p >= 2, got {p}"
        )));
    }
    let mut b = SymmetricBuilder::new(p);
    for i in 0..p - 1 {
        b.add(i, i, 1.0);
        b.add(i + 1, i + 1, 1.0);
        b.add(i, i + 1, -1.0);
    }
    Ok(QuadraticOperator::from_parts(
        OperatorKind::Laplacian,
        b.build(),
        Some(p - 1),
    ))
}

/// Laplacian of the m1 x m2 lattice with 4-neighbor connectivity.
pub fn build_grid_laplacian(m1: usize, m2: usize) -> Result<QuadraticOperator> {
    if m1 < 2 || m2 < 2 {
        return Err(Error::InvalidDimension(format!(
            "grid Laplacian needs m1, m2 >= 2, got {m1}x{m2}"
        )));
    }
    let dim = m1
        .checked_mul(m2)
        .ok_or_else(|| Error::InvalidDimension("grid dimension overflow".into()))?;
    let idx = |r: usize, c: usize| r * m2 + c;
    let mut b = SymmetricBuilder::new(dim);
    for r in 0..m1 {
        for c in 0..m2 {
            let i = idx(r, c);
            if c + 1 < m2 {
                let j = idx(r, c + 1);
                b.add(i, i, 1.0);
                b.add(j, j, 1.0);
                b.add(i, j, -1.0);
            }
            if r + 1 < m1 {
                let j = idx(r + 1, c);
                b.add(i, i, 1.0);
                b.add(j, j, 1.0);
                b.add(i, j, -1.0);
            }
        }
    }
    Ok(QuadraticOperator::from_parts(
        OperatorKind::Laplacian,
        b.build(),
        Some(dim - 1),
    ))
}

/// Epanechnikov kernel weight on the normalized offset u in [-1, 1].
fn epanechnikov(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.75 * (1.0 - u * u)
    }
}

/// Local-averaging kernel smoother on p ordered points.
///
/// `window` is the total neighbor span; the half-width is h = window / 2 and
/// offset o gets weight 0.75 (1 - (o/h)^2), so offsets |o| < h contribute.
/// Each row is normalized to sum to one, the matrix is symmetrized as
/// (S + S^T)/2, and if the smallest eigenvalue falls below -1e-10 the
/// diagonal is shifted up by its magnitude so the result is PSD.
pub fn build_kernel_smoother(p: usize, window: usize) -> Result<QuadraticOperator> {
    if p < 2 {
        return Err(Error::InvalidDimension(format!(
            "kernel smoother needs p >= 2, got {p}"
        )));
    }
    if window == 0 || window > p {
        return Err(Error::InvalidDimension(format!(
            "kernel smoother needs 0 < window <= p, got window {window}, p {p}"
        )));
    }
    let half = (window / 2).max(1) as i64;
    let mut rows = DMatrix::zeros(p, p);
    for i in 0..p as i64 {
        let mut sum = 0.0;
        for o in -(half - 1)..half {
            let j = i + o;
            if j < 0 || j >= p as i64 {
                continue;
            }
            sum += epanechnikov(o as f64 / half as f64);
        }
        for o in -(half - 1)..half {
            let j = i + o;
            if j < 0 || j >= p as i64 {
                continue;
            }
            rows[(i as usize, j as usize)] = epanechnikov(o as f64 / half as f64) / sum;
        }
    }
    let mut sym = (&rows + rows.transpose()) * 0.5;
    let min_eig = linalg::min_eigenvalue(&sym);
    if min_eig < -1e-10 {
        for i in 0..p {
            sym[(i, i)] += min_eig.abs();
        }
    }
    let matrix = CsrMatrix::from_dense_symmetric(&sym)?;
    Ok(QuadraticOperator::from_parts(
        OperatorKind::KernelSmoother,
        matrix,
        None,
    ))
}

/// Gram matrix D^T D of the second-difference operator on p ordered points,
/// the usual roughness penalty for functional factors. Its null space is the
/// affine functions, so the rank is p - 2.
pub fn build_second_difference_gram(p: usize) -> Result<QuadraticOperator> {
    if p < 3 {
        return Err(Error::InvalidDimension(format!(
            "second differences need p >= 3, got {p}"
        )));
    }
    let mut b = SymmetricBuilder::new(p);
    // row i of D is (.., 1, -2, 1, ..); accumulate D^T D one difference at a time
    for i in 0..p - 2 {
        let cols = [i, i + 1, i + 2];
        let coef = [1.0, -2.0, 1.0];
        for a in 0..3 {
            for bidx in a..3 {
                b.add(cols[a], cols[bidx], coef[a] * coef[bidx]);
            }
        }
    }
    Ok(QuadraticOperator::from_parts(
        OperatorKind::Custom,
        b.build(),
        Some(p - 2),
    ))
}

/// AR(1) precision matrix.
///
/// Chain mode gives the exact tridiagonal precision of a unit-variance AR(1)
/// with lag-one correlation rho. Grid mode treats `dims = [m1, m2]` as a
/// lattice, builds the covariance rho^{Manhattan distance}, and inverts it
/// densely (capped at dimension 10 000).
pub fn build_ar_precision(dims: &[usize], rho: f64, mode: ArMode) -> Result<QuadraticOperator> {
    if !rho.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "AR correlation must satisfy |rho| < 1, got {rho}"
        )));
    }
    match mode {
        ArMode::Chain => {
            let [p] = dims else {
                return Err(Error::InvalidDimension(
                    "chain AR precision takes exactly one dimension".into(),
                ));
            };
            let p = *p;
            if p < 2 {
                return Err(Error::InvalidDimension(format!(
                    "chain AR precision needs p >= 2, got {p}"
                )));
            }
            let scale = 1.0 / (1.0 - rho * rho);
            let mut b = SymmetricBuilder::new(p);
            for i in 0..p {
                let diag = if i == 0 || i == p - 1 {
                    1.0
                } else {
                    1.0 + rho * rho
                };
                b.add(i, i, scale * diag);
                if i + 1 < p {
                    b.add(i, i + 1, -scale * rho);
                }
            }
            Ok(QuadraticOperator::from_parts(
                OperatorKind::ArPrecision,
                b.build(),
                Some(p),
            ))
        }
        ArMode::GridManhattan => {
            let [m1, m2] = dims else {
                return Err(Error::InvalidDimension(
                    "grid AR precision takes exactly two dimensions".into(),
                ));
            };
            let dim = m1
                .checked_mul(*m2)
                .ok_or_else(|| Error::InvalidDimension("grid dimension overflow".into()))?;
            if dim > DENSE_CAP {
                return Err(Error::InvalidDimension(format!(
                    "grid AR precision requires dense inversion; dim {dim} exceeds cap {DENSE_CAP}"
                )));
            }
            let cov = ar_grid_covariance(*m1, *m2, rho);
            let chol = cov.clone().cholesky().ok_or_else(|| {
                Error::NotPositiveSemiDefinite("grid AR covariance is not positive definite".into())
            })?;
            let mut prec = chol.inverse();
            // symmetrize away inversion rounding
            prec = (&prec + prec.transpose()) * 0.5;
            let matrix = CsrMatrix::from_dense_symmetric(&prec)?;
            Ok(QuadraticOperator::from_parts(
                OperatorKind::ArPrecision,
                matrix,
                Some(dim),
            ))
        }
    }
}

/// Covariance rho^{|i-j|} of a unit-variance AR(1) chain.
pub fn ar_chain_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Covariance rho^{Manhattan distance} on an m1 x m2 lattice.
pub fn ar_grid_covariance(m1: usize, m2: usize, rho: f64) -> DMatrix<f64> {
    let dim = m1 * m2;
    let mut cov = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let (ra, ca) = (a / m2, a % m2);
        for bb in a..dim {
            let (rb, cb) = (bb / m2, bb % m2);
            let dist = ra.abs_diff(rb) + ca.abs_diff(cb);
            let v = rho.powi(dist as i32);
            cov[(a, bb)] = v;
            cov[(bb, a)] = v;
        }
    }
    cov
}

/// tr(Q X R X^T), computed as the entrywise inner product of QX and XR.
/// Never forms an n x n or p x p dense product.
pub fn qr_trace(x: &DMatrix<f64>, q: &QuadraticOperator, r: &QuadraticOperator) -> Result<f64> {
    if q.dim() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Q dim {} vs {} data rows",
            q.dim(),
            x.nrows()
        )));
    }
    if r.dim() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "R dim {} vs {} data cols",
            r.dim(),
            x.ncols()
        )));
    }
    let qx = q.apply_mat(x)?;
    let xr = r.right_apply_mat(x)?;
    Ok(qx.iter().zip(xr.iter()).map(|(a, b)| a * b).sum())
}

/// The Q,R-(semi-)norm sqrt(tr(Q X R X^T)). Traces in (-1e-10, 0) clamp to
/// zero; anything lower is reported as a PSD violation.
pub fn qr_norm(x: &DataMatrix, q: &QuadraticOperator, r: &QuadraticOperator) -> Result<f64> {
    let trace = qr_trace(x.as_matrix(), q, r)?;
    if trace < -TRACE_TOL {
        return Err(Error::NotPositiveSemiDefinite(format!(
            "tr(QXRX^T) = {trace} is negative beyond tolerance"
        )));
    }
    Ok(trace.max(0.0).sqrt())
}

/// Vector norm sqrt(x^T M x) with the same clamping as `qr_norm`.
pub fn q_norm_vec(x: &DVector<f64>, m: &QuadraticOperator) -> Result<f64> {
    let mx = m.apply_vec(x)?;
    let quad = x.dot(&mx);
    if quad < -TRACE_TOL {
        return Err(Error::NotPositiveSemiDefinite(format!(
            "x^T M x = {quad} is negative beyond tolerance"
        )));
    }
    Ok(quad.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_psd(dim: usize, rng: &mut StdRng) -> QuadraticOperator {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
        QuadraticOperator::custom(CsrMatrix::from_dense_symmetric(&psd).unwrap(), Some(dim))
    }

    fn psd_spot_check(op: &QuadraticOperator, rng: &mut StdRng) {
        let scale = op.matrix().max_abs().max(1.0);
        for _ in 0..20 {
            let x = DVector::from_fn(op.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let quad = x.dot(&op.apply_vec(&x).unwrap());
            assert!(
                quad >= -1e-10 * scale * x.norm_squared(),
                "quadratic form {quad} negative beyond tolerance"
            );
        }
    }

    #[test]
    fn chain_laplacian_small_cases() {
        let l3 = build_chain_laplacian(3).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0],
        );
        assert_eq!(l3.to_dense(), expected);
        assert_eq!(l3.rank_hint(), Some(2));

        let l2 = build_chain_laplacian(2).unwrap();
        assert_eq!(
            l2.to_dense(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert!(build_chain_laplacian(1).is_err());
    }

    #[test]
    fn chain_laplacian_null_space() {
        let l5 = build_chain_laplacian(5).unwrap();
        let ones = DVector::from_element(5, 1.0);
        let out = l5.apply_vec(&ones).unwrap();
        assert_eq!(out, DVector::zeros(5));
        for i in 0..5 {
            let row_sum: f64 = l5.matrix().row(i).map(|(_, v)| v).sum();
            assert_eq!(row_sum, 0.0);
        }
    }

    #[test]
    fn grid_laplacian_shapes_and_degrees() {
        let l22 = build_grid_laplacian(2, 2).unwrap();
        for i in 0..4 {
            assert_eq!(l22.entry(i, i), 2.0, "2x2 lattice is the 4-cycle");
        }

        let l23 = build_grid_laplacian(2, 3).unwrap();
        assert_eq!(l23.entry(0, 0), 2.0, "corner degree");
        assert_eq!(l23.entry(1, 1), 3.0, "edge midpoint degree");

        let l16 = build_grid_laplacian(16, 16).unwrap();
        assert_eq!(l16.dim(), 256);
        assert_eq!(l16.rank_hint(), Some(255));
        let ones = DVector::from_element(256, 1.0);
        assert_eq!(l16.apply_vec(&ones).unwrap(), DVector::zeros(256));
    }

    #[test]
    fn kernel_smoother_weights_and_rows() {
        // window 5 -> half-width 2: interior row has neighbors at offsets
        // -1, 0, 1 with kernel arguments -1/2, 0, 1/2.
        let s = build_kernel_smoother(5, 5).unwrap();
        let w0 = 0.75 * (1.0 - 0.25);
        let w1 = 0.75;
        let total = 2.0 * w0 + w1;
        // row 2 is symmetric, so symmetrization leaves it intact except for
        // boundary-driven asymmetry in neighbors; check against the
        // symmetrized reference instead of raw weights.
        let mut raw = DMatrix::zeros(5, 5);
        for i in 0..5_i64 {
            let mut entries = vec![];
            for o in -1..=1_i64 {
                let j = i + o;
                if (0..5).contains(&j) {
                    entries.push((j as usize, if o == 0 { w1 } else { w0 }));
                }
            }
            let sum: f64 = entries.iter().map(|(_, w)| w).sum();
            for (j, w) in entries {
                raw[(i as usize, j)] = w / sum;
            }
        }
        let reference = (&raw + raw.transpose()) * 0.5;
        assert_relative_eq!(s.to_dense(), reference, epsilon = 1e-12);
        assert_relative_eq!(s.entry(2, 1), (w0 / total), epsilon = 1e-12);

        // pre-symmetrization rows sum to 1
        for i in 0..5 {
            let row_sum: f64 = raw.row(i).sum();
            assert_relative_eq!(row_sum, 1.0, epsilon = 1e-12);
        }

        let s200 = build_kernel_smoother(200, 10).unwrap();
        assert_eq!(s200.dim(), 200);
        assert!(build_kernel_smoother(5, 5).is_ok());
        assert!(build_kernel_smoother(5, 6).is_err());
    }

    #[test]
    fn ar_chain_closed_form() {
        let id_like = build_ar_precision(&[3], 0.0, ArMode::Chain).unwrap();
        assert_relative_eq!(id_like.to_dense(), DMatrix::identity(3, 3), epsilon = 1e-15);

        let p = build_ar_precision(&[3], 0.8, ArMode::Chain).unwrap();
        let s = 1.0 / (1.0 - 0.64);
        assert_relative_eq!(p.entry(0, 1), -0.8 * s, epsilon = 1e-12);
        assert_relative_eq!(p.entry(1, 1), (1.0 + 0.64) * s, epsilon = 1e-12);
        assert_relative_eq!(p.entry(0, 0), s, epsilon = 1e-12);

        assert!(build_ar_precision(&[3], 1.0, ArMode::Chain).is_err());
        assert!(build_ar_precision(&[3], -1.2, ArMode::Chain).is_err());
    }

    #[test]
    fn ar_chain_inverts_ar1_covariance() {
        let p = 7;
        let rho = 0.6;
        let prec = build_ar_precision(&[p], rho, ArMode::Chain).unwrap();
        let mut cov = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] = rho.powi(i.abs_diff(j) as i32);
            }
        }
        let prod = prec.to_dense() * cov;
        assert_relative_eq!(prod, DMatrix::identity(p, p), epsilon = 1e-10);
    }

    #[test]
    fn ar_grid_covariance_is_psd_and_unit_diagonal() {
        let cov = ar_grid_covariance(16, 16, 0.9);
        for i in 0..256 {
            assert_eq!(cov[(i, i)], 1.0);
        }
        // oracle eigensolver check on the dense covariance
        let min = linalg::min_eigenvalue(&cov);
        assert!(min > 0.0, "smallest eigenvalue {min} should be positive");

        let prec = build_ar_precision(&[16, 16], 0.9, ArMode::GridManhattan).unwrap();
        assert_eq!(prec.dim(), 256);
        let prod = prec.to_dense() * &cov;
        assert_relative_eq!(prod, DMatrix::identity(256, 256), epsilon = 1e-7);
    }

    #[test]
    fn constructors_pass_randomized_psd_check() {
        let mut rng = StdRng::seed_from_u64(42);
        psd_spot_check(&build_chain_laplacian(17).unwrap(), &mut rng);
        psd_spot_check(&build_grid_laplacian(5, 7).unwrap(), &mut rng);
        psd_spot_check(&build_kernel_smoother(40, 10).unwrap(), &mut rng);
        psd_spot_check(
            &build_ar_precision(&[25], 0.8, ArMode::Chain).unwrap(),
            &mut rng,
        );
        psd_spot_check(
            &build_ar_precision(&[5, 5], 0.9, ArMode::GridManhattan).unwrap(),
            &mut rng,
        );
        psd_spot_check(&QuadraticOperator::identity(12).unwrap(), &mut rng);
    }

    #[test]
    fn apply_identity_and_null_space() {
        let id = QuadraticOperator::identity(4).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(id.apply_vec(&x).unwrap(), x);

        let l = build_chain_laplacian(3).unwrap();
        let ones = DVector::from_element(3, 1.0);
        assert_eq!(l.apply_vec(&ones).unwrap(), DVector::zeros(3));

        assert!(id.apply_vec(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn qr_norm_examples() {
        let x = DataMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let q = QuadraticOperator::identity(2).unwrap();
        let r = QuadraticOperator::identity(2).unwrap();
        assert_relative_eq!(qr_norm(&x, &q, &r).unwrap(), 2.0_f64.sqrt(), epsilon = 1e-15);

        // rows in null(Q) give a zero semi-norm
        let lap = build_chain_laplacian(3).unwrap();
        let xx = DataMatrix::new(DMatrix::from_fn(3, 2, |_, j| (j + 1) as f64)).unwrap();
        let rr = QuadraticOperator::identity(2).unwrap();
        assert_eq!(qr_norm(&xx, &lap, &rr).unwrap(), 0.0);
    }

    #[test]
    fn qr_norm_matches_dense_trace_oracle() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = DMatrix::from_fn(8, 6, |_, _| rng.gen_range(-2.0..2.0));
        let q = random_psd(8, &mut rng);
        let r = random_psd(6, &mut rng);
        let dense_trace = (q.to_dense() * &x * r.to_dense() * x.transpose()).trace();
        let ours = qr_norm(&DataMatrix::new(x).unwrap(), &q, &r).unwrap();
        assert_relative_eq!(ours, dense_trace.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn q_norm_vec_cases() {
        let id = QuadraticOperator::identity(3).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(q_norm_vec(&e1, &id).unwrap(), 1.0);

        let lap = build_chain_laplacian(4).unwrap();
        let ones = DVector::from_element(4, 1.0);
        assert_eq!(q_norm_vec(&ones, &lap).unwrap(), 0.0);

        let mut rng = StdRng::seed_from_u64(9);
        let m = random_psd(6, &mut rng);
        let x = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let dense = (x.transpose() * m.to_dense() * &x)[(0, 0)];
        assert_relative_eq!(q_norm_vec(&x, &m).unwrap(), dense.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn frobenius_reduction_and_homogeneity() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..5 {
            let x = DMatrix::from_fn(7, 5, |_, _| rng.gen_range(-3.0..3.0));
            let q = QuadraticOperator::identity(7).unwrap();
            let r = QuadraticOperator::identity(5).unwrap();
            let dm = DataMatrix::new(x.clone()).unwrap();
            assert_relative_eq!(qr_norm(&dm, &q, &r).unwrap(), x.norm(), max_relative = 1e-12);

            let c = rng.gen_range(-4.0..4.0);
            let scaled = DataMatrix::new(&x * c).unwrap();
            assert_relative_eq!(
                qr_norm(&scaled, &q, &r).unwrap(),
                c.abs() * qr_norm(&dm, &q, &r).unwrap(),
                max_relative = 1e-12
            );
        }
    }
}
