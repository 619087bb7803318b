//! Desk-scale experiment protocols: operator comparisons, feature selection,
//! functional and sparse factor recovery, and ROC curves over a lambda grid.
//!
//! Every protocol runs replicates under a parallel map with per-replicate
//! derived seeds and aggregates mean and standard error per metric column.

use super::{
    derive_seed, generate_parts, msse, spatio_temporal_preset, support_metrics, RecoveryMetrics,
    SimulationSpec,
};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gmd::{gmd_power, GmdOptions};
use crate::gpca::variance_explained;
use crate::gpmf::{gpmf, GpmfOptions, PenaltySpec};
use crate::quadop::{
    build_ar_precision, build_chain_laplacian, build_grid_laplacian, build_kernel_smoother,
    build_second_difference_gram, ArMode, QuadraticOperator,
};
use crate::select::{gpmf_auto, LambdaChoice, SidePenalty};
use crate::sparse::{CsrMatrix, SymmetricBuilder};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Table1,
    Table2,
    Table3,
    Table4,
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "table1" => Ok(Self::Table1),
            "table2" => Ok(Self::Table2),
            "table3" | "functional" => Ok(Self::Table3),
            "table4" | "sparse" => Ok(Self::Table4),
            other => Err(Error::InvalidParameter(format!(
                "unknown experiment '{other}' (expected table1..table4)"
            ))),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Table1 => "table1",
            Self::Table2 => "table2",
            Self::Table3 => "table3",
            Self::Table4 => "table4",
        };
        write!(f, "{name}")
    }
}

/// One table row: label plus mean and standard error per metric column.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub replicates: usize,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("row");
        for c in &self.columns {
            out.push_str(&format!(",{c},{c} (se)"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.label);
            for (m, s) in row.mean.iter().zip(&row.stderr) {
                out.push_str(&format!(",{m},{s}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean and standard error over replicate metric vectors (order-independent:
/// replicates arrive indexed and are reduced in index order).
fn aggregate(label: &str, per_replicate: &[Vec<f64>]) -> ReportRow {
    let reps = per_replicate.len().max(1);
    let cols = per_replicate.first().map(|r| r.len()).unwrap_or(0);
    let mut mean = vec![0.0; cols];
    for rep in per_replicate {
        for (m, v) in mean.iter_mut().zip(rep) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= reps as f64;
    }
    let mut stderr = vec![0.0; cols];
    if reps > 1 {
        for rep in per_replicate {
            for (s, (v, m)) in stderr.iter_mut().zip(rep.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in stderr.iter_mut() {
            *s = (*s / (reps - 1) as f64).sqrt() / (reps as f64).sqrt();
        }
    }
    ReportRow {
        label: label.to_string(),
        mean,
        stderr,
    }
}

fn run_replicates<F>(replicates: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    (0..replicates as u64)
        .into_par_iter()
        .map(|rep| f(rep))
        .collect()
}

fn sim_gmd_options(seed: u64) -> GmdOptions {
    GmdOptions {
        tol: 1e-7,
        max_iter: 3000,
        seed,
    }
}

fn sim_gpmf_options(seed: u64) -> GpmfOptions {
    let mut opts = GpmfOptions::with_seed(seed);
    opts.gmd = sim_gmd_options(seed);
    opts.tol = 1e-6;
    opts.max_outer = 100;
    opts
}

// ---------------------------------------------------------------------------
// Noise structures for the functional / sparse simulations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStructure {
    BlockDiagonal,
    RandomGraph,
}

/// Block-diagonal covariance: compound-symmetric blocks with unit diagonal
/// and constant off-diagonal correlation.
pub fn block_diagonal_covariance(p: usize, block: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i / block == j / block {
            rho
        } else {
            0.0
        }
    })
}

/// Laplacian of the graph whose connected components are complete graphs on
/// consecutive blocks of `block` vertices.
pub fn block_graph_laplacian(p: usize, block: usize) -> QuadraticOperator {
    let mut b = SymmetricBuilder::new(p);
    for start in (0..p).step_by(block) {
        let end = (start + block).min(p);
        for i in start..end {
            for j in (i + 1)..end {
                b.add(i, i, 1.0);
                b.add(j, j, 1.0);
                b.add(i, j, -1.0);
            }
        }
    }
    QuadraticOperator::custom(b.build(), Some(p.saturating_sub(p.div_ceil(block))))
}

/// Random-graph noise: each vertex connects to a Poisson-distributed number
/// of uniformly chosen other vertices. The covariance is the inverse of the
/// nearest strictly diagonally dominant matrix to the graph Laplacian
/// (diagonal raised by the dominance deficit plus 0.01); the Laplacian itself
/// is returned as the structure-only quadratic operator.
pub fn random_graph_covariance(
    p: usize,
    mean_degree: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, QuadraticOperator)> {
    let poisson = Poisson::new(mean_degree)
        .map_err(|e| Error::InvalidParameter(format!("Poisson({mean_degree}): {e}")))?;
    let mut adjacency = vec![std::collections::BTreeSet::new(); p];
    for j in 0..p {
        let wanted = (poisson.sample(rng) as usize).min(p - 1);
        let mut added = 0;
        let mut guard = 0;
        while added < wanted && guard < 50 * p {
            guard += 1;
            let t = rng.gen_range(0..p);
            if t != j && adjacency[j].insert(t) {
                adjacency[t].insert(j);
                added += 1;
            }
        }
    }
    let mut b = SymmetricBuilder::new(p);
    for (i, neighbors) in adjacency.iter().enumerate() {
        if !neighbors.is_empty() {
            b.add(i, i, neighbors.len() as f64);
        }
        for &j in neighbors {
            if j > i {
                b.add(i, j, -1.0);
            }
        }
    }
    let laplacian = QuadraticOperator::custom(b.build(), None);

    let mut dd = laplacian.to_dense();
    for i in 0..p {
        let off: f64 = (0..p).filter(|&j| j != i).map(|j| dd[(i, j)].abs()).sum();
        let deficit = (off - dd[(i, i)]).max(0.0);
        dd[(i, i)] += deficit + 0.01;
    }
    let chol = dd
        .cholesky()
        .ok_or_else(|| Error::Numerical("diagonally dominant matrix not PD".into()))?;
    let mut cov = chol.inverse();
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((cov, laplacian))
}

// ---------------------------------------------------------------------------
// Table 1: operator comparison on the spatio-temporal preset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table1Operators {
    /// Q = I, R = I (classical PCA)
    Identity,
    /// Q and R set to the true noise precisions
    TruthPrecision,
    /// grid Laplacian / chain Laplacian
    LaplacianLaplacian,
    /// grid Laplacian / kernel smoother
    LaplacianSmoother,
    /// grid smoother / chain Laplacian
    SmootherLaplacian,
    /// grid smoother / kernel smoother
    SmootherSmoother,
}

impl Table1Operators {
    pub const ALL: [Table1Operators; 6] = [
        Table1Operators::Identity,
        Table1Operators::TruthPrecision,
        Table1Operators::LaplacianLaplacian,
        Table1Operators::LaplacianSmoother,
        Table1Operators::SmootherLaplacian,
        Table1Operators::SmootherSmoother,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Identity => "Q = I, R = I",
            Self::TruthPrecision => "Q = Sigma^-1, R = Delta^-1",
            Self::LaplacianLaplacian => "Q = L_m|m, R = L_p",
            Self::LaplacianSmoother => "Q = L_m|m, R = S_p",
            Self::SmootherLaplacian => "Q = S_m|m, R = L_p",
            Self::SmootherSmoother => "Q = S_m|m, R = S_p",
        }
    }
}

/// Separable grid smoother: Kronecker product of two 1-D kernel smoothers.
fn grid_smoother(m: usize, window: usize) -> Result<QuadraticOperator> {
    let one_d = build_kernel_smoother(m, window)?.to_dense();
    let dim = m * m;
    let mut dense = DMatrix::zeros(dim, dim);
    for r1 in 0..m {
        for r2 in 0..m {
            let a = one_d[(r1, r2)];
            if a == 0.0 {
                continue;
            }
            for c1 in 0..m {
                for c2 in 0..m {
                    let v = a * one_d[(c1, c2)];
                    if v != 0.0 {
                        dense[(r1 * m + c1, r2 * m + c2)] = v;
                    }
                }
            }
        }
    }
    Ok(QuadraticOperator::custom(
        CsrMatrix::from_dense_symmetric(&dense)?,
        None,
    ))
}

fn table1_operators(
    ops: Table1Operators,
) -> Result<(QuadraticOperator, QuadraticOperator)> {
    let m = 16;
    let p = 200;
    Ok(match ops {
        Table1Operators::Identity => (
            QuadraticOperator::identity(m * m)?,
            QuadraticOperator::identity(p)?,
        ),
        Table1Operators::TruthPrecision => (
            build_ar_precision(&[m, m], 0.9, ArMode::GridManhattan)?,
            build_ar_precision(&[p], 0.8, ArMode::Chain)?,
        ),
        Table1Operators::LaplacianLaplacian => {
            (build_grid_laplacian(m, m)?, build_chain_laplacian(p)?)
        }
        Table1Operators::LaplacianSmoother => {
            (build_grid_laplacian(m, m)?, build_kernel_smoother(p, 10)?)
        }
        Table1Operators::SmootherLaplacian => (grid_smoother(m, 5)?, build_chain_laplacian(p)?),
        Table1Operators::SmootherSmoother => {
            (grid_smoother(m, 5)?, build_kernel_smoother(p, 10)?)
        }
    })
}

/// One Table-1 row: percent variance for k = 1, 2 and MSSE for both factor
/// pairs under the given operator choice.
pub fn table1_row(
    ops: Table1Operators,
    sigma2: f64,
    replicates: usize,
    seed: u64,
) -> Result<ReportRow> {
    let spec = spatio_temporal_preset(sigma2, seed)?;
    let (q, r) = table1_operators(ops)?;
    let rows = run_replicates(replicates, |rep| {
        let rep_seed = derive_seed(seed, rep);
        let x = generate_parts(&spec, rep_seed)?.2;
        let f = gmd_power(&x, &q, &r, 2, &sim_gmd_options(rep_seed))?;
        let var = variance_explained(&f, &x, &q, &r)?;
        let mut row = vec![
            100.0 * var.per_component[0],
            100.0 * var.per_component[1],
        ];
        for k in 0..2 {
            let est = DVector::from_column_slice(f.u.column(k).as_slice());
            row.push(msse(&est, &spec.signal_factors[k].0, None));
        }
        for k in 0..2 {
            let est = DVector::from_column_slice(f.v.column(k).as_slice());
            row.push(msse(&est, &spec.signal_factors[k].1, None));
        }
        Ok(row)
    })?;
    Ok(aggregate(ops.label(), &rows))
}

pub fn table1_columns() -> Vec<String> {
    [
        "% Var k=1",
        "% Var k=2",
        "MSSE u1",
        "MSSE u2",
        "MSSE v1",
        "MSSE v2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

// ---------------------------------------------------------------------------
// Table 2: feature selection (sparse PCA vs sparse GPCA) with BIC
// ---------------------------------------------------------------------------

/// Rows "Sparse PCA" and "Sparse GPCA" at noise level sigma (SNR = sigma^2):
/// true/false positive rates for both spatial factors, lambda chosen by BIC.
pub fn table2_rows(sigma: f64, replicates: usize, seed: u64) -> Result<Vec<ReportRow>> {
    let spec = spatio_temporal_preset(sigma * sigma, seed)?;
    let supports = [spec.left_support(0), spec.left_support(1)];
    let identity = (
        QuadraticOperator::identity(spec.n)?,
        QuadraticOperator::identity(spec.p)?,
    );
    let structured = (
        build_grid_laplacian(16, 16)?,
        build_kernel_smoother(spec.p, 10)?,
    );

    let mut out = Vec::new();
    for (label, (q, r)) in [
        (format!("sigma={sigma} Sparse PCA"), identity),
        (format!("sigma={sigma} Sparse GPCA"), structured),
    ] {
        let rows = run_replicates(replicates, |rep| {
            let rep_seed = derive_seed(seed, rep);
            let x = generate_parts(&spec, rep_seed)?.2;
            let side_u = SidePenalty::lasso(LambdaChoice::Bic { grid: None });
            let side_v = SidePenalty::none();
            let (res, _) = gpmf_auto(&x, &q, &r, 2, &side_u, &side_v, &sim_gpmf_options(rep_seed))?;
            let mut row = Vec::with_capacity(4);
            for k in 0..2 {
                let est = DVector::from_column_slice(res.factors.u.column(k).as_slice());
                let (tp, fp) = support_metrics(&est, &supports[k], 1e-12);
                row.push(tp);
                row.push(fp);
            }
            // reorder to TP u1, FP u1, TP u2, FP u2 (already in that order)
            Ok(row)
        })?;
        out.push(aggregate(&label, &rows));
    }
    Ok(out)
}

pub fn table2_columns() -> Vec<String> {
    [
        "True Positive u1",
        "False Positive u1",
        "True Positive u2",
        "False Positive u2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

// ---------------------------------------------------------------------------
// Tables 3 and 4: functional and sparse factor simulations
// ---------------------------------------------------------------------------

const FUNC_DIM: usize = 100;

fn functional_truth() -> (DVector<f64>, DVector<f64>) {
    let x_of = |i: usize| i as f64 / (FUNC_DIM - 1) as f64;
    let u = DVector::from_fn(FUNC_DIM, |i, _| (4.0 * std::f64::consts::PI * x_of(i)).sin());
    let v = DVector::from_fn(FUNC_DIM, |i, _| -(2.0 * std::f64::consts::PI * x_of(i)).sin());
    (u, v)
}

/// Row/column covariance and structure operators for one replicate.
fn noise_setup(
    noise: NoiseStructure,
    rng: &mut ChaCha8Rng,
) -> Result<(
    DMatrix<f64>,
    DMatrix<f64>,
    QuadraticOperator,
    QuadraticOperator,
)> {
    match noise {
        NoiseStructure::BlockDiagonal => {
            let cov = block_diagonal_covariance(FUNC_DIM, 5, 0.99);
            let lap = block_graph_laplacian(FUNC_DIM, 5);
            Ok((cov.clone(), cov, lap.clone(), lap))
        }
        NoiseStructure::RandomGraph => {
            let (row_cov, row_lap) = random_graph_covariance(FUNC_DIM, 3.0, rng)?;
            let (col_cov, col_lap) = random_graph_covariance(FUNC_DIM, 1.0, rng)?;
            Ok((row_cov, col_cov, row_lap, col_lap))
        }
    }
}

fn noise_label(noise: NoiseStructure) -> &'static str {
    match noise {
        NoiseStructure::BlockDiagonal => "Block Diagonal",
        NoiseStructure::RandomGraph => "Random Graph",
    }
}

/// Functional simulation rows (SVD, GMD, Functional GPMF) at one noise
/// structure and sigma: MSSE of both factors plus the squared Frobenius
/// error of the rank-one fit against the realized signal.
pub fn table3_rows(
    noise: NoiseStructure,
    sigma: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let (u_true, v_true) = functional_truth();
    let omega = build_second_difference_gram(FUNC_DIM)?;

    let per_method = |method: usize| -> Result<Vec<Vec<f64>>> {
        run_replicates(replicates, |rep| {
            let rep_seed = derive_seed(seed, rep);
            let mut graph_rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, 101));
            let (row_cov, col_cov, row_lap, col_lap) = noise_setup(noise, &mut graph_rng)?;
            let spec = SimulationSpec::new(
                vec![(u_true.clone(), v_true.clone())],
                vec![(0.0, 1.0)],
                row_cov,
                col_cov,
                sigma * sigma,
                rep_seed,
            )?;
            let (signal, _, x) = generate_parts(&spec, rep_seed)?;

            let identity = QuadraticOperator::identity(FUNC_DIM)?;
            let (factors, d0) = match method {
                0 => {
                    let f = gmd_power(&x, &identity, &identity, 1, &sim_gmd_options(rep_seed))?;
                    let d = f.d[0];
                    (f, d)
                }
                1 => {
                    let f = gmd_power(&x, &row_lap, &col_lap, 1, &sim_gmd_options(rep_seed))?;
                    let d = f.d[0];
                    (f, d)
                }
                _ => {
                    let side = SidePenalty::omega(omega.clone(), LambdaChoice::Bic { grid: None });
                    let (res, _) = gpmf_auto(
                        &x,
                        &row_lap,
                        &col_lap,
                        1,
                        &side,
                        &side,
                        &sim_gpmf_options(rep_seed),
                    )?;
                    let d = res.factors.d[0];
                    (res.factors, d)
                }
            };
            let u_est = DVector::from_column_slice(factors.u.column(0).as_slice());
            let v_est = DVector::from_column_slice(factors.v.column(0).as_slice());
            let fit = &u_est * v_est.transpose() * d0;
            let matrix_err = (&fit - &signal).norm_squared();
            Ok(vec![
                msse(&u_est, &u_true, None),
                msse(&v_est, &v_true, None),
                matrix_err,
            ])
        })
    };

    let labels = ["SVD", "GMD", "Functional GPMF"];
    let mut out = Vec::new();
    for (idx, label) in labels.iter().enumerate() {
        let rows = per_method(idx)?;
        out.push(aggregate(
            &format!("{} sigma={sigma} {label}", noise_label(noise)),
            &rows,
        ));
    }
    Ok(out)
}

pub fn table3_columns() -> Vec<String> {
    [
        "Squared Error Row Factor",
        "Squared Error Column Factor",
        "Squared Error Rank 1 Matrix",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Sparse-factor simulation rows (Sparse PMD baseline vs Sparse GPMF):
/// percent true/false positives for both factors, lambda chosen by BIC.
/// One quarter of each factor's entries are nonzero standard normal draws.
pub fn table4_rows(
    noise: NoiseStructure,
    sigma: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let per_method = |structured: bool| -> Result<Vec<Vec<f64>>> {
        run_replicates(replicates, |rep| {
            let rep_seed = derive_seed(seed, rep);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, 202));
            let sparse_factor = |rng: &mut ChaCha8Rng| {
                let mut v = DVector::zeros(FUNC_DIM);
                let mut chosen = std::collections::BTreeSet::new();
                while chosen.len() < FUNC_DIM / 4 {
                    chosen.insert(rng.gen_range(0..FUNC_DIM));
                }
                for &i in &chosen {
                    let draw: f64 = rng.sample(rand_distr::StandardNormal);
                    v[i] = draw;
                }
                v
            };
            let u_true = sparse_factor(&mut rng);
            let v_true = sparse_factor(&mut rng);
            let u_support = super::support(&u_true, 1e-12);
            let v_support = super::support(&v_true, 1e-12);

            let mut graph_rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, 101));
            let (row_cov, col_cov, row_lap, col_lap) = noise_setup(noise, &mut graph_rng)?;
            let spec = SimulationSpec::new(
                vec![(u_true.clone(), v_true.clone())],
                vec![(0.0, 1.0)],
                row_cov,
                col_cov,
                sigma * sigma,
                rep_seed,
            )?;
            let x = generate_parts(&spec, rep_seed)?.2;

            let identity = QuadraticOperator::identity(FUNC_DIM)?;
            let (q, r) = if structured {
                (&row_lap, &col_lap)
            } else {
                (&identity, &identity)
            };
            let side = SidePenalty::lasso(LambdaChoice::Bic { grid: None });
            let (res, _) = gpmf_auto(&x, q, r, 1, &side, &side, &sim_gpmf_options(rep_seed))?;
            let u_est = DVector::from_column_slice(res.factors.u.column(0).as_slice());
            let v_est = DVector::from_column_slice(res.factors.v.column(0).as_slice());
            let (tp_u, fp_u) = support_metrics(&u_est, &u_support, 1e-12);
            let (tp_v, fp_v) = support_metrics(&v_est, &v_support, 1e-12);
            Ok(vec![
                100.0 * tp_u,
                100.0 * fp_u,
                100.0 * tp_v,
                100.0 * fp_v,
            ])
        })
    };

    let mut out = Vec::new();
    for (structured, label) in [(false, "Sparse PMD"), (true, "Sparse GPMF")] {
        let rows = per_method(structured)?;
        out.push(aggregate(
            &format!("{} sigma={sigma} {label}", noise_label(noise)),
            &rows,
        ));
    }
    Ok(out)
}

pub fn table4_columns() -> Vec<String> {
    [
        "% True Positives Row Factor",
        "% False Positives Row Factor",
        "% True Positives Column Factor",
        "% False Positives Column Factor",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

// ---------------------------------------------------------------------------
// ROC curves
// ---------------------------------------------------------------------------

/// Support-recovery operating points over a lambda grid: for each lambda
/// (largest first) fit the left-lasso factorization and record one
/// (false positive, true positive) pair per factor.
pub fn roc_curve(
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
    truth_supports: &[Vec<usize>],
    lambda_grid: &[f64],
    seed: u64,
) -> Result<RecoveryMetrics> {
    if truth_supports.is_empty() {
        return Err(Error::InvalidParameter("no truth supports given".into()));
    }
    if lambda_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "lambda grid must be sorted ascending".into(),
        ));
    }
    let k = truth_supports.len();
    let mut metrics = RecoveryMetrics::default();
    metrics.roc_points = vec![Vec::with_capacity(lambda_grid.len()); k];
    let opts = sim_gpmf_options(seed);
    for &lambda in lambda_grid.iter().rev() {
        let res = gpmf(
            x,
            q,
            r,
            k,
            &PenaltySpec::lasso(lambda)?,
            &PenaltySpec::none(),
            &opts,
        )?;
        for (f, support) in truth_supports.iter().enumerate() {
            let est = DVector::from_column_slice(res.factors.u.column(f).as_slice());
            let (tp, fp) = support_metrics(&est, support, 1e-12);
            metrics.roc_points[f].push((fp, tp));
        }
    }
    Ok(metrics)
}

/// Trapezoidal area under a (fp, tp) curve, closed at (0,0) and (1,1).
pub fn roc_auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut auc = 0.0;
    for w in pts.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5;
    }
    auc
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Runs a full named experiment and collects the report.
pub fn run_experiment(exp: Experiment, replicates: usize, seed: u64) -> Result<ExperimentReport> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    let (columns, rows) = match exp {
        Experiment::Table1 => {
            let mut rows = Vec::new();
            for ops in Table1Operators::ALL {
                rows.push(table1_row(ops, 1.0, replicates, seed)?);
            }
            (table1_columns(), rows)
        }
        Experiment::Table2 => {
            let mut rows = Vec::new();
            for sigma in [0.5, 1.5] {
                rows.extend(table2_rows(sigma, replicates, seed)?);
            }
            (table2_columns(), rows)
        }
        Experiment::Table3 => {
            let mut rows = Vec::new();
            for sigma in [0.5, 1.0] {
                for noise in [NoiseStructure::BlockDiagonal, NoiseStructure::RandomGraph] {
                    rows.extend(table3_rows(noise, sigma, replicates, seed)?);
                }
            }
            (table3_columns(), rows)
        }
        Experiment::Table4 => {
            let mut rows = Vec::new();
            for sigma in [0.5, 1.0] {
                for noise in [NoiseStructure::BlockDiagonal, NoiseStructure::RandomGraph] {
                    rows.extend(table4_rows(noise, sigma, replicates, seed)?);
                }
            }
            (table4_columns(), rows)
        }
    };
    Ok(ExperimentReport {
        name: exp.to_string(),
        replicates,
        seed,
        columns,
        rows,
    })
}
