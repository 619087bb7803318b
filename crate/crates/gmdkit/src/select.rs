//! BIC-based penalty parameter selection over a lambda grid.
//!
//! The score for a candidate factor is
//! log(||X - d u v||_{Q,R}^2 / np) + log(np)/np * df(lambda),
//! evaluated with the other factor and the scale fixed at their converged
//! unpenalized values ("post-convergence" selection). Selecting for the u
//! side reuses the same code on the transposed problem, swapping Q and R.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gmd::{self, GmdFactors};
use crate::gpmf::{
    factor_info, gpmf_single_factor_prepared, nonzero_count, FactorInfo, GpmfOptions,
    GpmfResult, PenaltyKind, PenaltySpec, Prepared,
};
use crate::quadop::{q_norm_vec, qr_trace, QuadraticOperator};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectStrategy {
    /// Score single penalized updates from the converged unpenalized factor.
    PostConvergence,
}

#[derive(Debug, Clone, Serialize)]
pub struct BicReport {
    pub lambdas: Vec<f64>,
    pub scores: Vec<f64>,
    /// index of the minimizing score, ties toward larger lambda
    pub chosen: usize,
    pub df_estimates: Vec<f64>,
    /// true when every candidate fit collapsed to the zero factor
    pub all_zero: bool,
}

impl BicReport {
    pub fn chosen_lambda(&self) -> f64 {
        self.lambdas[self.chosen]
    }
}

/// Degrees of freedom of a lasso fit: the support size of the estimate.
pub fn lasso_df(v_hat: &DVector<f64>) -> usize {
    nonzero_count(v_hat)
}

/// Smallest lasso penalty that zeroes the unpenalized update, ||y||_inf.
pub fn lasso_lambda_max(y: &DVector<f64>) -> f64 {
    y.amax()
}

/// 30 log-spaced values from lambda_max down to 1e-4 * lambda_max.
pub fn default_lambda_grid(lambda_max: f64) -> Vec<f64> {
    let lambda_max = if lambda_max > 0.0 { lambda_max } else { 1.0 };
    let lo = (1e-4 * lambda_max).ln();
    let hi = lambda_max.ln();
    (0..30)
        .map(|i| (hi + (lo - hi) * i as f64 / 29.0).exp())
        .collect()
}

/// The BIC criterion for a candidate factor (u, d, v_hat) with `df` estimated
/// degrees of freedom. The residual norm is floored at 1e-12 * np so a
/// perfect fit cannot send the log to -inf.
pub fn bic_score(
    x: &DMatrix<f64>,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    u: &DVector<f64>,
    d: f64,
    v_hat: &DVector<f64>,
    df: f64,
) -> Result<f64> {
    let np = (x.nrows() * x.ncols()) as f64;
    let resid = x - &(u * v_hat.transpose() * d);
    let norm_sq = qr_trace(&resid, q, r)?.max(1e-12 * np);
    Ok((norm_sq / np).ln() + np.ln() / np * df)
}

fn argmin_ties_to_larger_lambda(scores: &[f64], lambdas: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i] < scores[best]
            || (scores[i] == scores[best] && lambdas[i] > lambdas[best]);
        if better {
            best = i;
        }
    }
    best
}

/// Candidate solution of the penalized regression at one lambda: the raw
/// minimizer, its rescaled factor, and the df estimate.
fn candidate_at_lambda(
    pen: &Prepared,
    y: &DVector<f64>,
    metric: &QuadraticOperator,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    opts: &GpmfOptions,
) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let raw = pen.solve_with_lambda(lambda, y, metric, warm, opts)?;
    let norm = q_norm_vec(&raw, metric)?;
    let rescaled = if norm > 1e-14 * y.norm().max(1.0) {
        &raw / norm
    } else {
        DVector::zeros(raw.len())
    };
    let df = match pen {
        Prepared::Omega { fac, .. } => {
            // group-lasso convention: unpenalized null-space dims plus one
            // when the penalized block survives
            let w_alive = fac.omega_half() * &rescaled;
            fac.null_dim() as f64 + if w_alive.norm() > 1e-12 { 1.0 } else { 0.0 }
        }
        _ => lasso_df(&rescaled) as f64,
    };
    Ok((raw, rescaled, df))
}

/// Scores the lambda grid for the v side of the factor (u, d) on residual
/// data `x`, fitting single penalized updates from the converged unpenalized
/// warm start. For the u side, call with the transposed residual and Q, R
/// swapped.
pub fn select_penalty(
    x: &DMatrix<f64>,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    u: &DVector<f64>,
    d: f64,
    pen: &PenaltySpec,
    lambda_grid: &[f64],
    _strategy: SelectStrategy,
) -> Result<BicReport> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    if pen.kind() == PenaltyKind::None {
        return Err(Error::InvalidParameter(
            "penalty selection requires a penalized side".into(),
        ));
    }
    let prepared = Prepared::new(pen, x.ncols())?;
    let opts = GpmfOptions::default();
    let y = x.transpose() * q.apply_vec(u)?;

    // evaluate largest lambda first so warm starts flow down the path
    let mut order: Vec<usize> = (0..lambda_grid.len()).collect();
    order.sort_by(|&a, &b| lambda_grid[b].total_cmp(&lambda_grid[a]));

    let mut scores = vec![0.0; lambda_grid.len()];
    let mut dfs = vec![0.0; lambda_grid.len()];
    let mut any_nonzero = false;
    let mut warm: Option<DVector<f64>> = None;
    for &i in &order {
        let (raw, rescaled, df) =
            candidate_at_lambda(&prepared, &y, r, lambda_grid[i], warm.as_ref(), &opts)?;
        warm = Some(raw);
        if rescaled.norm() > 0.0 {
            any_nonzero = true;
        }
        scores[i] = bic_score(x, q, r, u, d, &rescaled, df)?;
        dfs[i] = df;
    }
    if !any_nonzero {
        log::warn!("all candidate fits on the lambda grid are zero factors");
    }
    Ok(BicReport {
        lambdas: lambda_grid.to_vec(),
        scores: scores.clone(),
        chosen: argmin_ties_to_larger_lambda(&scores, lambda_grid),
        df_estimates: dfs,
        all_zero: !any_nonzero,
    })
}

/// How the penalty weight for one side is determined.
#[derive(Debug, Clone)]
pub enum LambdaChoice {
    Fixed(f64),
    /// BIC over the given grid, or the default grid when absent.
    Bic { grid: Option<Vec<f64>> },
}

/// One side of a GPMF fit: penalty kind, optional penalty matrix, and the
/// lambda policy.
#[derive(Debug, Clone)]
pub struct SidePenalty {
    pub kind: PenaltyKind,
    pub omega: Option<QuadraticOperator>,
    pub choice: LambdaChoice,
}

impl SidePenalty {
    pub fn none() -> Self {
        Self {
            kind: PenaltyKind::None,
            omega: None,
            choice: LambdaChoice::Fixed(0.0),
        }
    }

    pub fn lasso(choice: LambdaChoice) -> Self {
        Self {
            kind: PenaltyKind::Lasso,
            omega: None,
            choice,
        }
    }

    pub fn omega(omega: QuadraticOperator, choice: LambdaChoice) -> Self {
        Self {
            kind: PenaltyKind::Omega,
            omega: Some(omega),
            choice,
        }
    }

    fn spec_with_lambda(&self, lambda: f64) -> Result<PenaltySpec> {
        match self.kind {
            PenaltyKind::None => Ok(PenaltySpec::none()),
            PenaltyKind::Lasso => PenaltySpec::lasso(lambda),
            PenaltyKind::Omega => {
                let omega = self.omega.clone().ok_or_else(|| {
                    Error::InvalidParameter("omega penalty requires a penalty matrix".into())
                })?;
                PenaltySpec::omega(lambda, omega)
            }
        }
    }
}

/// Per-factor selection diagnostics from `gpmf_auto`.
#[derive(Debug, Clone, Serialize)]
pub struct FactorSelection {
    pub factor: usize,
    pub report_u: Option<BicReport>,
    pub report_v: Option<BicReport>,
}

/// Grid for one side: the caller's grid if given, else the default grid
/// anchored at the side's kill threshold.
fn side_grid(choice: &LambdaChoice, kill: f64) -> Option<Vec<f64>> {
    match choice {
        LambdaChoice::Fixed(_) => None,
        LambdaChoice::Bic { grid } => Some(match grid {
            Some(g) => g.clone(),
            None => default_lambda_grid(kill),
        }),
    }
}

/// Multi-factor GPMF where each factor's penalty weights may be selected by
/// BIC on its own deflated residual before the penalized fit runs.
pub fn gpmf_auto(
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    k: usize,
    side_u: &SidePenalty,
    side_v: &SidePenalty,
    opts: &GpmfOptions,
) -> Result<(GpmfResult, Vec<FactorSelection>)> {
    if k == 0 {
        return Err(Error::InvalidDimension("K must be at least 1".into()));
    }
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut xhat = x.as_matrix().clone();
    let mut u_all = DMatrix::zeros(n, k);
    let mut v_all = DMatrix::zeros(p, k);
    let mut d_all = DVector::zeros(k);
    let mut iterations = Vec::with_capacity(k);
    let mut converged = Vec::with_capacity(k);
    let mut info: Vec<FactorInfo> = Vec::with_capacity(k);
    let mut selections = Vec::with_capacity(k);

    for factor in 0..k {
        // converged unpenalized factor: warm start and selection anchor
        let mut init_opts = opts.gmd.clone();
        init_opts.seed = opts.seed;
        let init = gmd::gmd_power(
            &DataMatrix::from_parts(xhat.clone(), false)?,
            q,
            r,
            1,
            &init_opts,
        )?;
        let u0 = DVector::from_column_slice(init.u.column(0).as_slice());
        let v0 = DVector::from_column_slice(init.v.column(0).as_slice());
        let d0 = init.d[0];

        let mut report_u = None;
        let mut report_v = None;

        let lambda_v = match (&side_v.kind, &side_v.choice) {
            (PenaltyKind::None, _) => 0.0,
            (_, LambdaChoice::Fixed(l)) => *l,
            (_, LambdaChoice::Bic { .. }) => {
                let y_v = xhat.transpose() * q.apply_vec(&u0)?;
                let kill = kill_threshold(side_v, &y_v, r)?;
                let grid = side_grid(&side_v.choice, kill).expect("bic side has a grid");
                let spec = side_v.spec_with_lambda(0.0)?;
                let rep = select_penalty(
                    &xhat,
                    q,
                    r,
                    &u0,
                    d0,
                    &spec,
                    &grid,
                    SelectStrategy::PostConvergence,
                )?;
                let lambda = rep.chosen_lambda();
                report_v = Some(rep);
                lambda
            }
        };

        let lambda_u = match (&side_u.kind, &side_u.choice) {
            (PenaltyKind::None, _) => 0.0,
            (_, LambdaChoice::Fixed(l)) => *l,
            (_, LambdaChoice::Bic { .. }) => {
                // transposed problem: select for u with v0 fixed
                let xt = xhat.transpose();
                let y_u = &xhat * r.apply_vec(&v0)?;
                let kill = kill_threshold(side_u, &y_u, q)?;
                let grid = side_grid(&side_u.choice, kill).expect("bic side has a grid");
                let spec = side_u.spec_with_lambda(0.0)?;
                let rep = select_penalty(
                    &xt,
                    r,
                    q,
                    &v0,
                    d0,
                    &spec,
                    &grid,
                    SelectStrategy::PostConvergence,
                )?;
                let lambda = rep.chosen_lambda();
                report_u = Some(rep);
                lambda
            }
        };

        let pen_u = side_u.spec_with_lambda(lambda_u)?;
        let pen_v = side_v.spec_with_lambda(lambda_v)?;
        let prepared_u = Prepared::new(&pen_u, n)?;
        let prepared_v = Prepared::new(&pen_v, p)?;
        let single = gpmf_single_factor_prepared(&xhat, q, r, &prepared_u, &prepared_v, opts)?;

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
        selections.push(FactorSelection {
            factor,
            report_u,
            report_v,
        });
    }

    Ok((
        GpmfResult {
            factors: GmdFactors {
                u: u_all,
                d: d_all,
                v: v_all,
                iterations,
                converged,
            },
            info,
        },
        selections,
    ))
}

/// Smallest lambda that kills the penalized update: ||y||_inf for the lasso,
/// and the norm of the penalized-block gradient at the null-space fit for the
/// omega penalty.
fn kill_threshold(
    side: &SidePenalty,
    y: &DVector<f64>,
    metric: &QuadraticOperator,
) -> Result<f64> {
    match side.kind {
        PenaltyKind::None => Ok(0.0),
        PenaltyKind::Lasso => Ok(lasso_lambda_max(y)),
        PenaltyKind::Omega => {
            let omega = side.omega.as_ref().ok_or_else(|| {
                Error::InvalidParameter("omega penalty requires a penalty matrix".into())
            })?;
            let fac = crate::gpmf::omega_factorize(omega)?;
            // eta fit with w = 0
            let resid = if fac.null_dim() > 0 {
                let n_map = fac.null_basis();
                let rn = metric.apply_mat(&n_map.transpose())?;
                let gram = n_map * &rn;
                let pinv = gram
                    .pseudo_inverse(1e-12)
                    .map_err(|e| Error::Numerical(format!("null-space Gram pinv: {e}")))?;
                let eta = pinv * (n_map * metric.apply_vec(y)?);
                y - n_map.transpose() * eta
            } else {
                y.clone()
            };
            let grad = fac.omega_inv_half() * metric.apply_vec(&resid)?;
            Ok(grad.norm())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmd::{gmd_power, GmdOptions};
    use crate::quadop::build_chain_laplacian;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn lasso_df_counts_support() {
        assert_eq!(lasso_df(&DVector::zeros(6)), 0);
        let dense = DVector::from_fn(5, |i, _| (i + 1) as f64);
        assert_eq!(lasso_df(&dense), 5);
        let mut v = DVector::zeros(10);
        for i in 0..7 {
            v[i] = 0.5 + i as f64;
        }
        assert_eq!(lasso_df(&v), 7);
        v[8] = 1e-13; // below tolerance
        assert_eq!(lasso_df(&v), 7);
    }

    #[test]
    fn bic_zero_factor_and_df_arithmetic() {
        let mut rng = StdRng::seed_from_u64(41);
        let x = DMatrix::from_fn(8, 6, |_, _| rng.gen_range(-1.0..1.0));
        let q = QuadraticOperator::identity(8).unwrap();
        let r = QuadraticOperator::identity(6).unwrap();
        let u = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let np = 48.0;

        let zero = DVector::zeros(6);
        let score0 = bic_score(&x, &q, &r, &u, 1.3, &zero, 0.0).unwrap();
        assert_relative_eq!(score0, (x.norm_squared() / np).ln(), epsilon = 1e-12);

        // equal fit, df 0 vs df np: difference is exactly log(np)
        let v = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let a = bic_score(&x, &q, &r, &u, 0.7, &v, 0.0).unwrap();
        let b = bic_score(&x, &q, &r, &u, 0.7, &v, np).unwrap();
        assert_relative_eq!(b - a, np.ln(), epsilon = 1e-12);
    }

    #[test]
    fn bic_monotone_in_df() {
        let x = DMatrix::from_element(5, 4, 1.0);
        let q = QuadraticOperator::identity(5).unwrap();
        let r = QuadraticOperator::identity(4).unwrap();
        let u = DVector::from_element(5, 0.3);
        let v = DVector::from_element(4, 0.2);
        let mut prev = f64::NEG_INFINITY;
        for df in [0.0, 1.0, 2.5, 7.0, 20.0] {
            let s = bic_score(&x, &q, &r, &u, 0.4, &v, df).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn grid_of_zero_chooses_zero() {
        let mut rng = StdRng::seed_from_u64(42);
        let xm = DMatrix::from_fn(10, 7, |_, _| rng.gen_range(-1.0..1.0));
        let x = DataMatrix::new(xm.clone()).unwrap();
        let q = QuadraticOperator::identity(10).unwrap();
        let r = QuadraticOperator::identity(7).unwrap();
        let f = gmd_power(&x, &q, &r, 1, &GmdOptions::default()).unwrap();
        let u = DVector::from_column_slice(f.u.column(0).as_slice());
        let rep = select_penalty(
            &xm,
            &q,
            &r,
            &u,
            f.d[0],
            &PenaltySpec::lasso(0.0).unwrap(),
            &[0.0],
            SelectStrategy::PostConvergence,
        )
        .unwrap();
        assert_eq!(rep.chosen, 0);
        assert_eq!(rep.chosen_lambda(), 0.0);
        assert!(!rep.all_zero);
    }

    #[test]
    fn ties_break_toward_larger_lambda() {
        let scores = [1.0, 0.5, 0.5, 0.9];
        let lambdas = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(argmin_ties_to_larger_lambda(&scores, &lambdas), 1);
        let lambdas_rev = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(argmin_ties_to_larger_lambda(&scores, &lambdas_rev), 2);
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_lambda_grid(2.0);
        assert_eq!(grid.len(), 30);
        assert_relative_eq!(grid[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(grid[29], 2e-4, epsilon = 1e-12);
        for w in grid.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(43);
        let xm = DMatrix::from_fn(12, 9, |_, _| rng.gen_range(-1.0..1.0));
        let x = DataMatrix::new(xm.clone()).unwrap();
        let q = QuadraticOperator::identity(12).unwrap();
        let r = QuadraticOperator::identity(9).unwrap();
        let f = gmd_power(&x, &q, &r, 1, &GmdOptions::default()).unwrap();
        let u = DVector::from_column_slice(f.u.column(0).as_slice());
        let grid = default_lambda_grid(lasso_lambda_max(
            &(xm.transpose() * q.apply_vec(&u).unwrap()),
        ));
        let pen = PenaltySpec::lasso(0.0).unwrap();
        let r1 = select_penalty(&xm, &q, &r, &u, f.d[0], &pen, &grid, SelectStrategy::PostConvergence)
            .unwrap();
        let r2 = select_penalty(&xm, &q, &r, &u, f.d[0], &pen, &grid, SelectStrategy::PostConvergence)
            .unwrap();
        assert_eq!(r1.chosen, r2.chosen);
        assert_eq!(r1.scores, r2.scores);
    }

    #[test]
    fn omega_df_convention() {
        // chain Laplacian: null dim 1; df is 1 when smooth part dies, 2 otherwise
        let mut rng = StdRng::seed_from_u64(44);
        let omega = build_chain_laplacian(9).unwrap();
        let xm = DMatrix::from_fn(7, 9, |_, _| rng.gen_range(-1.0..1.0));
        let q = QuadraticOperator::identity(7).unwrap();
        let r = QuadraticOperator::identity(9).unwrap();
        let x = DataMatrix::new(xm.clone()).unwrap();
        let f = gmd_power(&x, &q, &r, 1, &GmdOptions::default()).unwrap();
        let u = DVector::from_column_slice(f.u.column(0).as_slice());
        let pen = PenaltySpec::omega(0.0, omega).unwrap();
        let rep = select_penalty(
            &xm,
            &q,
            &r,
            &u,
            f.d[0],
            &pen,
            &[1e9, 1e-6],
            SelectStrategy::PostConvergence,
        )
        .unwrap();
        assert_eq!(rep.df_estimates[0], 1.0, "huge lambda leaves the null fit");
        assert_eq!(rep.df_estimates[1], 2.0, "small lambda keeps the smooth block");
    }
}
