//! Generalized least squares matrix decomposition.
//!
//! `gmd_power` is the production solver: an inverse-free power method that
//! alternates the two generalized least squares updates and deflates one
//! factor at a time. `gmd_oracle` solves the same problem through the dense
//! whitening route (eigendecompose Q and R, SVD the transformed data, map
//! back) and exists to validate the power method and to cover rank-deficient
//! corner cases exactly.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadop::{q_norm_vec, QuadraticOperator};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dimension cap for the dense oracle path.
pub const ORACLE_CAP: usize = 2000;

/// Relative eigenvalue cutoff used when truncating rank in whitening.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GmdOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for GmdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1000,
            seed: 0,
        }
    }
}

/// Left factors U (n x K), GMD values d (K), right factors V (p x K), plus
/// per-factor convergence diagnostics. Nonzero factor columns satisfy
/// u^T Q u = 1 and v^T R v = 1; d is non-negative and non-increasing.
#[derive(Debug, Clone)]
pub struct GmdFactors {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl GmdFactors {
    pub fn k(&self) -> usize {
        self.d.len()
    }
}

/// Half factorizations Q = Q_half Q_half^T and R = R_half R_half^T together
/// with the transformed data and the left inverses used to map factors back.
#[derive(Debug, Clone)]
pub struct WhitenedForm {
    /// n x l, full column rank l = rank(Q)
    pub q_half: DMatrix<f64>,
    /// p x m, full column rank m = rank(R)
    pub r_half: DMatrix<f64>,
    /// l x m transformed data
    pub x_tilde: DMatrix<f64>,
    /// n x l, satisfies left_pinv^T q_half = I_l
    pub left_pinv: DMatrix<f64>,
    /// p x m, satisfies right_pinv^T r_half = I_m
    pub right_pinv: DMatrix<f64>,
}

impl WhitenedForm {
    /// Eigendecomposes Q and R (dense) and computes the rank-truncated half
    /// factors, their left inverses, and the transformed data.
    pub fn new(
        x: &DataMatrix,
        q: &QuadraticOperator,
        r: &QuadraticOperator,
    ) -> Result<WhitenedForm> {
        let (n, p) = (x.n_rows(), x.n_cols());
        if n > ORACLE_CAP || p > ORACLE_CAP {
            return Err(Error::InvalidDimension(format!(
                "dense whitening capped at {ORACLE_CAP}, got {n}x{p}"
            )));
        }
        if q.dim() != n || r.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "Q dim {} and R dim {} vs data {}x{}",
                q.dim(),
                r.dim(),
                n,
                p
            )));
        }
        let (q_half, q_pinv) = half_factor(q)?;
        let (r_half, r_pinv) = half_factor(r)?;
        let x_tilde = q_half.transpose() * x.as_matrix() * &r_half;
        Ok(WhitenedForm {
            q_half,
            r_half,
            x_tilde,
            left_pinv: q_pinv,
            right_pinv: r_pinv,
        })
    }
}

/// Returns (half, pinv) with half = Gamma_1 Lambda_1^{1/2} and
/// pinv = Gamma_1 Lambda_1^{-1/2}, truncated to the numerical rank.
fn half_factor(op: &QuadraticOperator) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dense = op.to_dense();
    let (vals, vecs) = linalg::sym_eigen_desc(&dense);
    let max = vals.iter().fold(0.0_f64, |m, &v| m.max(v));
    if vals[vals.len() - 1] < -1e-8 * max.max(1.0) {
        return Err(Error::NotPositiveSemiDefinite(format!(
            "operator has eigenvalue {}",
            vals[vals.len() - 1]
        )));
    }
    let rank = linalg::rank_above(&vals, RANK_TOL);
    let dim = op.dim();
    let mut half = DMatrix::zeros(dim, rank);
    let mut pinv = DMatrix::zeros(dim, rank);
    for c in 0..rank {
        let sq = vals[c].sqrt();
        for i in 0..dim {
            half[(i, c)] = vecs[(i, c)] * sq;
            pinv[(i, c)] = vecs[(i, c)] / sq;
        }
    }
    Ok((half, pinv))
}

/// Flips factor pair signs so the largest-magnitude entry of each v column is
/// positive.
fn apply_sign_convention(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for k in 0..v.ncols() {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for i in 0..v.nrows() {
            let a = v[(i, k)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if v[(best, k)] < 0.0 {
            v.column_mut(k).neg_mut();
            u.column_mut(k).neg_mut();
        }
    }
}

/// Sorts factors by decreasing d, keeping columns and diagnostics aligned.
fn sort_by_values(f: &mut GmdFactors) {
    let k = f.k();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| f.d[b].total_cmp(&f.d[a]));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return;
    }
    let u = f.u.clone();
    let v = f.v.clone();
    let d = f.d.clone();
    let iters = f.iterations.clone();
    let conv = f.converged.clone();
    for (dst, &src) in order.iter().enumerate() {
        f.u.set_column(dst, &u.column(src));
        f.v.set_column(dst, &v.column(src));
        f.d[dst] = d[src];
        f.iterations[dst] = iters[src];
        f.converged[dst] = conv[src];
    }
}

/// GMD by the power method.
///
/// For each factor: alternate u <- X R v / ||X R v||_Q and
/// v <- X^T Q u / ||X^T Q u||_R until the relative change of d = u^T Q X R v
/// and the R-norm change of v both fall below `tol`, then deflate
/// X <- X - u d v^T. Initialization draws v from a seeded standard normal;
/// a degenerate start (zero Q-norm image) is reseeded up to five times
/// before emitting a zero factor.
pub fn gmd_power(
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    k: usize,
    opts: &GmdOptions,
) -> Result<GmdFactors> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if k == 0 || k > n.min(p) {
        return Err(Error::InvalidDimension(format!(
            "K must satisfy 1 <= K <= min(n, p) = {}, got {k}",
            n.min(p)
        )));
    }
    if q.dim() != n || r.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "Q dim {} and R dim {} vs data {}x{}",
            q.dim(),
            r.dim(),
            n,
            p
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut xhat = x.as_matrix().clone();
    let scale = xhat.norm().max(1.0);
    let zero_tol = 1e-14 * scale;

    let mut u_all = DMatrix::zeros(n, k);
    let mut v_all = DMatrix::zeros(p, k);
    let mut d_all = DVector::zeros(k);
    let mut iterations = vec![0usize; k];
    let mut converged = vec![false; k];

    for factor in 0..k {
        let mut outcome = None;
        for _reseed in 0..5 {
            match power_single(&xhat, q, r, opts, zero_tol, &mut rng)? {
                SingleOutcome::Degenerate => continue,
                ok => {
                    outcome = Some(ok);
                    break;
                }
            }
        }
        match outcome {
            Some(SingleOutcome::Factor {
                u,
                v,
                d,
                iters,
                conv,
            }) => {
                // deflate before the sign flip; u d v^T is sign-invariant
                let update = &u * v.transpose() * d;
                xhat -= update;
                u_all.set_column(factor, &u);
                v_all.set_column(factor, &v);
                d_all[factor] = d;
                iterations[factor] = iters;
                converged[factor] = conv;
            }
            _ => {
                // exhausted reseeds: zero factor, nothing to deflate
                iterations[factor] = 0;
                converged[factor] = false;
            }
        }
    }

    apply_sign_convention(&mut u_all, &mut v_all);
    let mut factors = GmdFactors {
        u: u_all,
        d: d_all,
        v: v_all,
        iterations,
        converged,
    };
    sort_by_values(&mut factors);
    Ok(factors)
}

enum SingleOutcome {
    Factor {
        u: DVector<f64>,
        v: DVector<f64>,
        d: f64,
        iters: usize,
        conv: bool,
    },
    Degenerate,
}

fn power_single(
    xhat: &DMatrix<f64>,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    opts: &GmdOptions,
    zero_tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SingleOutcome> {
    let p = xhat.ncols();

    let mut v: DVector<f64> = DVector::from_fn(p, |_, _| standard_normal(rng));
    let v_norm = q_norm_vec(&v, r)?;
    if v_norm <= zero_tol {
        return Ok(SingleOutcome::Degenerate);
    }
    v /= v_norm;

    let mut u = DVector::zeros(xhat.nrows());
    let mut d_prev = f64::INFINITY;
    let mut conv = false;
    let mut iters = 0;

    for it in 1..=opts.max_iter {
        iters = it;
        // u-update
        let xrv = xhat * r.apply_vec(&v)?;
        let u_norm = q_norm_vec(&xrv, q)?;
        if !u_norm.is_finite() {
            return Err(Error::Numerical("NaN in power iteration".into()));
        }
        if u_norm <= zero_tol {
            return Ok(SingleOutcome::Degenerate);
        }
        u = xrv / u_norm;

        // v-update
        let xtqu = xhat.transpose() * q.apply_vec(&u)?;
        let new_norm = q_norm_vec(&xtqu, r)?;
        if !new_norm.is_finite() {
            return Err(Error::Numerical("NaN in power iteration".into()));
        }
        if new_norm <= zero_tol {
            return Ok(SingleOutcome::Degenerate);
        }
        let v_new = xtqu / new_norm;

        // d = u^T Q X R v reduces to ||X^T Q u||_R after the v-update
        let d = new_norm;
        let d_change = if d_prev.is_finite() {
            (d - d_prev).abs() / d.max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        let v_change = q_norm_vec(&(&v_new - &v), r)?;
        v = v_new;
        d_prev = d;
        if d_change < opts.tol && v_change < opts.tol {
            conv = true;
            break;
        }
    }

    if !d_prev.is_finite() {
        return Ok(SingleOutcome::Degenerate);
    }
    Ok(SingleOutcome::Factor {
        u,
        v,
        d: d_prev,
        iters,
        conv,
    })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniform draws
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Exact GMD through the whitening route: eigendecompose Q and R, SVD the
/// transformed data, and map the singular vectors back through the left
/// inverses. Dense; capped at 2000 per side.
pub fn gmd_oracle(
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    k: usize,
) -> Result<GmdFactors> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if k == 0 {
        return Err(Error::InvalidDimension("K must be at least 1".into()));
    }
    let wf = WhitenedForm::new(x, q, r)?;
    let (u_t, d_t, v_t) = linalg::svd_desc(&wf.x_tilde);
    let avail = d_t.len().min(k);

    let mut u = DMatrix::zeros(n, k);
    let mut v = DMatrix::zeros(p, k);
    let mut d = DVector::zeros(k);
    let u_back = &wf.left_pinv * u_t.columns(0, avail);
    let v_back = &wf.right_pinv * v_t.columns(0, avail);
    for c in 0..avail {
        u.set_column(c, &u_back.column(c));
        v.set_column(c, &v_back.column(c));
        d[c] = d_t[c];
    }
    apply_sign_convention(&mut u, &mut v);
    Ok(GmdFactors {
        u,
        d,
        v,
        iterations: vec![0; k],
        converged: vec![true; k],
    })
}

/// Rank-k reconstruction: sum of the first k rank-one terms u_j d_j v_j^T.
pub fn reconstruct(f: &GmdFactors, k: usize) -> DataMatrix {
    let k = k.min(f.k());
    let n = f.u.nrows();
    let p = f.v.nrows();
    let mut out = DMatrix::zeros(n, p);
    for j in 0..k {
        let uj = f.u.column(j);
        let vj = f.v.column(j);
        let dj = f.d[j];
        for c in 0..p {
            let vc = vj[c] * dj;
            if vc != 0.0 {
                out.column_mut(c).axpy(vc, &uj, 1.0);
            }
        }
    }
    DataMatrix::from_parts(out, false).expect("factor dims are positive")
}
