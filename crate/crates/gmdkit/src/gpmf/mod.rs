//! Two-way regularized matrix factorization.
//!
//! A single factor pair is fit by block coordinate ascent on
//! u^T Q X R v - lambda_v P1(v) - lambda_u P2(u) subject to unit Q-/R-norm
//! balls: each half-step solves a penalized regression (lasso or Omega-norm,
//! or plain normalization when unpenalized) and rescales, with the zero
//! branch killing the factor when the rescale target has zero norm.
//! Multi-factor fits deflate greedily; subsequent factors are not
//! Q,R-orthogonal to earlier ones.

mod lasso;
mod omega;

pub use lasso::{
    rnorm_lasso, rnorm_lasso_objective, soft_threshold, soft_threshold_vec, LassoOptions,
    LassoSolution,
};
pub use omega::{
    omega_factorize, omega_norm_regression, omega_objective, OmegaFactorization, OmegaRegOptions,
    OmegaRegSolution,
};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gmd::{self, GmdFactors, GmdOptions};
use crate::quadop::{q_norm_vec, QuadraticOperator};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    Lasso,
    Omega,
}

/// Penalty on one side of the factorization: a kind, its weight, and the
/// penalty matrix when the kind is `Omega`.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    kind: PenaltyKind,
    lambda: f64,
    omega: Option<QuadraticOperator>,
}

impl PenaltySpec {
    pub fn none() -> Self {
        Self {
            kind: PenaltyKind::None,
            lambda: 0.0,
            omega: None,
        }
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lasso penalty must be non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            kind: PenaltyKind::Lasso,
            lambda,
            omega: None,
        })
    }

    pub fn omega(lambda: f64, omega: QuadraticOperator) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega penalty must be non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            kind: PenaltyKind::Omega,
            lambda,
            omega: Some(omega),
        })
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega_operator(&self) -> Option<&QuadraticOperator> {
        self.omega.as_ref()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            kind: self.kind,
            lambda,
            omega: self.omega.clone(),
        }
    }
}

/// Penalty with the Omega factorization precomputed, reusable across factors
/// and lambda grids.
#[derive(Debug, Clone)]
pub(crate) enum Prepared {
    None,
    Lasso(f64),
    Omega { lambda: f64, fac: OmegaFactorization },
}

impl Prepared {
    pub(crate) fn new(spec: &PenaltySpec, side_dim: usize) -> Result<Self> {
        match spec.kind {
            PenaltyKind::None => Ok(Prepared::None),
            PenaltyKind::Lasso => Ok(Prepared::Lasso(spec.lambda)),
            PenaltyKind::Omega => {
                let op = spec.omega.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("omega penalty requires a penalty matrix".into())
                })?;
                if op.dim() != side_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "omega penalty dim {} vs factor length {}",
                        op.dim(),
                        side_dim
                    )));
                }
                Ok(Prepared::Omega {
                    lambda: spec.lambda,
                    fac: omega_factorize(op)?,
                })
            }
        }
    }

    fn lambda(&self) -> f64 {
        match self {
            Prepared::None => 0.0,
            Prepared::Lasso(l) => *l,
            Prepared::Omega { lambda, .. } => *lambda,
        }
    }

    /// Penalty value P(x) for the objective.
    fn penalty_value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Prepared::None => 0.0,
            Prepared::Lasso(_) => x.iter().map(|v| v.abs()).sum(),
            Prepared::Omega { fac, .. } => fac.omega_norm(x),
        }
    }

    /// Solves argmin 1/2 ||y - x||_M^2 + lambda P(x).
    fn solve(
        &self,
        y: &DVector<f64>,
        metric: &QuadraticOperator,
        warm: Option<&DVector<f64>>,
        opts: &GpmfOptions,
    ) -> Result<DVector<f64>> {
        let lambda = self.lambda();
        self.solve_with_lambda(lambda, y, metric, warm, opts)
    }

    /// Same subproblem at an overridden lambda; reuses the factorization, so
    /// grid searches do not re-decompose the penalty matrix.
    pub(crate) fn solve_with_lambda(
        &self,
        lambda: f64,
        y: &DVector<f64>,
        metric: &QuadraticOperator,
        warm: Option<&DVector<f64>>,
        opts: &GpmfOptions,
    ) -> Result<DVector<f64>> {
        match self {
            Prepared::None => Ok(y.clone()),
            Prepared::Lasso(_) => Ok(rnorm_lasso(y, metric, lambda, warm, &opts.lasso)?.v),
            Prepared::Omega { fac, .. } => {
                Ok(omega_norm_regression(y, metric, fac, lambda, warm, &opts.omega)?.v)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpmfOptions {
    /// relative tolerance on the ascent objective
    pub tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    pub gmd: GmdOptions,
    pub lasso: LassoOptions,
    pub omega: OmegaRegOptions,
}

impl Default for GpmfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_outer: 500,
            seed: 0,
            gmd: GmdOptions::default(),
            lasso: LassoOptions::default(),
            omega: OmegaRegOptions::default(),
        }
    }
}

impl GpmfOptions {
    pub fn with_seed(seed: u64) -> Self {
        let mut o = Self::default();
        o.seed = seed;
        o.gmd.seed = seed;
        o
    }
}

/// One factor pair with its diagnostics.
#[derive(Debug, Clone)]
pub struct SingleFactor {
    pub u: DVector<f64>,
    pub d: f64,
    pub v: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub zero_factor: bool,
    /// Eq.-4 objective after each half-step, starting from the initializer.
    pub objective_trace: Vec<f64>,
}

/// Per-factor penalty diagnostics of a multi-factor fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FactorInfo {
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub nnz_u: usize,
    pub nnz_v: usize,
    /// v^T Omega v when the v side carries an omega penalty
    pub omega_quad_v: Option<f64>,
    /// u^T Omega u when the u side carries an omega penalty
    pub omega_quad_u: Option<f64>,
    pub zero_factor: bool,
}

#[derive(Debug, Clone)]
pub struct GpmfResult {
    pub factors: GmdFactors,
    pub info: Vec<FactorInfo>,
}

/// Entrywise support size at the shared 1e-12 threshold.
pub fn nonzero_count(x: &DVector<f64>) -> usize {
    x.iter().filter(|v| v.abs() > 1e-12).count()
}

fn eq4_objective(
    xhat: &DMatrix<f64>,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    u: &DVector<f64>,
    v: &DVector<f64>,
    pen_u: &Prepared,
    pen_v: &Prepared,
) -> Result<f64> {
    let qu = q.apply_vec(u)?;
    let rv = r.apply_vec(v)?;
    let bilinear = qu.dot(&(xhat * rv));
    Ok(bilinear - pen_v.lambda() * pen_v.penalty_value(v) - pen_u.lambda() * pen_u.penalty_value(u))
}

/// Fits one penalized factor pair on the residual `xhat`.
pub fn gpmf_single_factor(
    xhat: &DMatrix<f64>,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    pen_u: &PenaltySpec,
    pen_v: &PenaltySpec,
    opts: &GpmfOptions,
) -> Result<SingleFactor> {
    let prepared_u = Prepared::new(pen_u, xhat.nrows())?;
    let prepared_v = Prepared::new(pen_v, xhat.ncols())?;
    gpmf_single_factor_prepared(xhat, q, r, &prepared_u, &prepared_v, opts)
}

pub(crate) fn gpmf_single_factor_prepared(
    xhat: &DMatrix<f64>,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    pen_u: &Prepared,
    pen_v: &Prepared,
    opts: &GpmfOptions,
) -> Result<SingleFactor> {
    let (n, p) = (xhat.nrows(), xhat.ncols());
    if q.dim() != n || r.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "Q dim {} and R dim {} vs residual {}x{}",
            q.dim(),
            r.dim(),
            n,
            p
        )));
    }

    // initialize from the unpenalized GMD factor
    let mut init_opts = opts.gmd.clone();
    init_opts.seed = opts.seed;
    let init = gmd::gmd_power(
        &DataMatrix::from_parts(xhat.clone(), false)?,
        q,
        r,
        1,
        &init_opts,
    )?;
    let mut u = DVector::from_column_slice(init.u.column(0).as_slice());
    let mut v = DVector::from_column_slice(init.v.column(0).as_slice());

    if init.d[0] <= 0.0 {
        // residual is (numerically) zero in the Q,R geometry
        return Ok(SingleFactor {
            u: DVector::zeros(n),
            d: 0.0,
            v: DVector::zeros(p),
            iterations: 0,
            converged: false,
            zero_factor: true,
            objective_trace: vec![0.0],
        });
    }

    // unpenalized on both sides: the GMD factor already is the solution
    if matches!((pen_u, pen_v), (Prepared::None, Prepared::None)) {
        let obj = eq4_objective(xhat, q, r, &u, &v, pen_u, pen_v)?;
        return Ok(SingleFactor {
            u,
            d: init.d[0],
            v,
            iterations: init.iterations[0],
            converged: init.converged[0],
            zero_factor: false,
            objective_trace: vec![obj],
        });
    }

    let mut trace = vec![eq4_objective(xhat, q, r, &u, &v, pen_u, pen_v)?];
    let mut warm_v: Option<DVector<f64>> = None;
    let mut warm_u: Option<DVector<f64>> = None;
    let mut best_obj = trace[0];
    let mut best = (u.clone(), v.clone());
    let mut stalled = 0usize;
    let mut converged = false;
    let mut zero_factor = false;
    let mut iterations = 0;

    for it in 1..=opts.max_outer {
        iterations = it;

        // v half-step
        let y_v = xhat.transpose() * q.apply_vec(&u)?;
        let v_hat = pen_v.solve(&y_v, r, warm_v.as_ref(), opts)?;
        let v_norm = q_norm_vec(&v_hat, r)?;
        if v_norm <= 1e-14 * y_v.norm().max(1.0) {
            v = DVector::zeros(p);
            zero_factor = true;
            converged = true;
            break;
        }
        warm_v = Some(v_hat.clone());
        v = v_hat / v_norm;
        trace.push(eq4_objective(xhat, q, r, &u, &v, pen_u, pen_v)?);

        // u half-step
        let y_u = xhat * r.apply_vec(&v)?;
        let u_hat = pen_u.solve(&y_u, q, warm_u.as_ref(), opts)?;
        let u_norm = q_norm_vec(&u_hat, q)?;
        if u_norm <= 1e-14 * y_u.norm().max(1.0) {
            u = DVector::zeros(n);
            zero_factor = true;
            converged = true;
            break;
        }
        warm_u = Some(u_hat.clone());
        u = u_hat / u_norm;
        let obj = eq4_objective(xhat, q, r, &u, &v, pen_u, pen_v)?;
        if !obj.is_finite() {
            return Err(Error::Numerical("GPMF objective is not finite".into()));
        }
        trace.push(obj);

        if obj > best_obj + 1e-12 * (1.0 + best_obj.abs()) {
            best_obj = obj;
            best = (u.clone(), v.clone());
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 50 {
                log::warn!("GPMF factor oscillated for 50 outer iterations; returning best iterate");
                u = best.0;
                v = best.1;
                converged = false;
                break;
            }
        }

        let prev = trace[trace.len() - 3];
        if (obj - prev).abs() < opts.tol * (1.0 + obj.abs()) {
            converged = true;
            break;
        }
    }

    let d = if zero_factor {
        0.0
    } else {
        let qu = q.apply_vec(&u)?;
        let rv = r.apply_vec(&v)?;
        qu.dot(&(xhat * rv))
    };
    Ok(SingleFactor {
        u,
        d: d.max(0.0),
        v,
        iterations,
        converged,
        zero_factor,
        objective_trace: trace,
    })
}

/// Multi-factor GPMF with greedy deflation. The same penalty pair applies to
/// every factor; use `select::gpmf_auto` for per-factor penalty selection.
pub fn gpmf(
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    k: usize,
    pen_u: &PenaltySpec,
    pen_v: &PenaltySpec,
    opts: &GpmfOptions,
) -> Result<GpmfResult> {
    if k == 0 {
        return Err(Error::InvalidDimension("K must be at least 1".into()));
    }
    let (n, p) = (x.n_rows(), x.n_cols());
    let prepared_u = Prepared::new(pen_u, n)?;
    let prepared_v = Prepared::new(pen_v, p)?;

    let mut xhat = x.as_matrix().clone();
    let mut u_all = DMatrix::zeros(n, k);
    let mut v_all = DMatrix::zeros(p, k);
    let mut d_all = DVector::zeros(k);
    let mut iterations = Vec::with_capacity(k);
    let mut converged = Vec::with_capacity(k);
    let mut info = Vec::with_capacity(k);

    for factor in 0..k {
        let single =
            gpmf_single_factor_prepared(&xhat, q, r, &prepared_u, &prepared_v, opts)?;
        if !single.zero_factor && single.d > 0.0 {
            let update = &single.u * single.v.transpose() * single.d;
            xhat -= update;
        }
        info.push(factor_info(&single, &prepared_u, &prepared_v));
        u_all.set_column(factor, &single.u);
        v_all.set_column(factor, &single.v);
        d_all[factor] = single.d;
        iterations.push(single.iterations);
        converged.push(single.converged);
    }

    Ok(GpmfResult {
        factors: GmdFactors {
            u: u_all,
            d: d_all,
            v: v_all,
            iterations,
            converged,
        },
        info,
    })
}

pub(crate) fn factor_info(
    single: &SingleFactor,
    pen_u: &Prepared,
    pen_v: &Prepared,
) -> FactorInfo {
    let omega_quad = |pen: &Prepared, x: &DVector<f64>| match pen {
        Prepared::Omega { fac, .. } => Some(fac.omega_norm(x).powi(2)),
        _ => None,
    };
    FactorInfo {
        lambda_u: pen_u.lambda(),
        lambda_v: pen_v.lambda(),
        nnz_u: nonzero_count(&single.u),
        nnz_v: nonzero_count(&single.v),
        omega_quad_v: omega_quad(pen_v, &single.v),
        omega_quad_u: omega_quad(pen_u, &single.u),
        zero_factor: single.zero_factor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmd::gmd_power;
    use crate::sparse::CsrMatrix;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_psd_op(dim: usize, rng: &mut StdRng) -> QuadraticOperator {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let psd = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
        QuadraticOperator::custom(CsrMatrix::from_dense_symmetric(&psd).unwrap(), Some(dim))
    }

    #[test]
    fn unpenalized_single_factor_is_gmd() {
        let mut rng = StdRng::seed_from_u64(31);
        let x = DataMatrix::new(DMatrix::from_fn(14, 10, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(14, &mut rng);
        let r = random_psd_op(10, &mut rng);
        let opts = GpmfOptions::with_seed(3);
        let single = gpmf_single_factor(
            x.as_matrix(),
            &q,
            &r,
            &PenaltySpec::none(),
            &PenaltySpec::none(),
            &opts,
        )
        .unwrap();
        let gmd = gmd_power(&x, &q, &r, 1, &opts.gmd).unwrap();
        assert_relative_eq!(single.d, gmd.d[0], epsilon = 1e-6);
        for i in 0..14 {
            assert_relative_eq!(single.u[i].abs(), gmd.u[(i, 0)].abs(), epsilon = 1e-6);
        }
    }

    #[test]
    fn huge_penalty_gives_zero_factor() {
        let mut rng = StdRng::seed_from_u64(32);
        let x = DataMatrix::new(DMatrix::from_fn(10, 8, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = QuadraticOperator::identity(10).unwrap();
        let r = QuadraticOperator::identity(8).unwrap();
        let single = gpmf_single_factor(
            x.as_matrix(),
            &q,
            &r,
            &PenaltySpec::none(),
            &PenaltySpec::lasso(1e9).unwrap(),
            &GpmfOptions::with_seed(1),
        )
        .unwrap();
        assert!(single.zero_factor);
        assert_eq!(single.d, 0.0);
        assert_eq!(single.v.norm(), 0.0);
    }

    #[test]
    fn ascent_objective_is_monotone() {
        let mut rng = StdRng::seed_from_u64(33);
        for trial in 0..5 {
            let x = DataMatrix::new(DMatrix::from_fn(12, 9, |_, _| rng.gen_range(-1.0..1.0)))
                .unwrap();
            let q = random_psd_op(12, &mut rng);
            let r = random_psd_op(9, &mut rng);
            let mut opts = GpmfOptions::with_seed(trial);
            opts.lasso.tol = 1e-12;
            let single = gpmf_single_factor(
                x.as_matrix(),
                &q,
                &r,
                &PenaltySpec::lasso(0.05).unwrap(),
                &PenaltySpec::lasso(0.1).unwrap(),
                &opts,
            )
            .unwrap();
            for w in single.objective_trace.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-10,
                    "objective decreased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn kkt_fixed_point_with_lasso() {
        let mut rng = StdRng::seed_from_u64(34);
        let x = DataMatrix::new(DMatrix::from_fn(15, 11, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(15, &mut rng);
        let r = random_psd_op(11, &mut rng);
        let mut opts = GpmfOptions::with_seed(9);
        opts.tol = 1e-12;
        opts.lasso.tol = 1e-13;
        opts.max_outer = 2000;
        let lambda = 0.15;
        let single = gpmf_single_factor(
            x.as_matrix(),
            &q,
            &r,
            &PenaltySpec::none(),
            &PenaltySpec::lasso(lambda).unwrap(),
            &opts,
        )
        .unwrap();
        assert!(!single.zero_factor);

        // v is the rescaled solution of the penalized regression at the fixed
        // point; check the subproblem KKT residual at the pre-rescale scale
        let y = x.as_matrix().transpose() * q.apply_vec(&single.u).unwrap();
        let vhat = rnorm_lasso(&y, &r, lambda, Some(&single.v), &opts.lasso)
            .unwrap()
            .v;
        let grad = r.apply_vec(&(&vhat - &y)).unwrap();
        for j in 0..11 {
            if vhat[j] != 0.0 {
                assert!((grad[j] + lambda * vhat[j].signum()).abs() < 1e-6);
            } else {
                assert!(grad[j].abs() <= lambda + 1e-6);
            }
        }
        let vnorm = q_norm_vec(&single.v, &r).unwrap();
        assert_relative_eq!(vnorm, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn multi_factor_unpenalized_matches_gmd() {
        let mut rng = StdRng::seed_from_u64(35);
        let x = DataMatrix::new(DMatrix::from_fn(13, 9, |_, _| rng.gen_range(-1.0..1.0)))
            .unwrap();
        let q = random_psd_op(13, &mut rng);
        let r = random_psd_op(9, &mut rng);
        let opts = GpmfOptions::with_seed(5);
        let res = gpmf(
            &x,
            &q,
            &r,
            3,
            &PenaltySpec::none(),
            &PenaltySpec::none(),
            &opts,
        )
        .unwrap();
        let gmd = gmd_power(&x, &q, &r, 3, &opts.gmd).unwrap();
        for k in 0..3 {
            assert_relative_eq!(res.factors.d[k], gmd.d[k], epsilon = 1e-6);
        }
        assert_eq!(res.info.len(), 3);
        assert!(res.info.iter().all(|i| !i.zero_factor));
    }

    #[test]
    fn penalty_spec_validation() {
        assert!(PenaltySpec::lasso(-0.1).is_err());
        assert!(PenaltySpec::lasso(f64::NAN).is_err());
        let omega = crate::quadop::build_chain_laplacian(5).unwrap();
        let spec = PenaltySpec::omega(1.0, omega).unwrap();
        assert_eq!(spec.kind(), PenaltyKind::Omega);
        // dimension mismatch surfaces at preparation
        assert!(Prepared::new(&spec, 7).is_err());
    }
}
