//! Simulation harness: matrix-variate Gaussian data with Kronecker-structured
//! noise, recovery metrics, and the desk-scale experiment protocols.
//!
//! Data follows X = S + E with S = sum_k phi_k u_k v_k^T and
//! E = Sigma^{1/2} Z Delta^{1/2}, Z iid standard normal. Amplitudes are
//! rescaled so the expected signal-to-noise ratio
//! E[tr(S^T S)] / E[tr(E^T E)] = sum_k E[phi_k^2] |u_k|^2 |v_k|^2 / (tr Sigma tr Delta)
//! hits the requested target.

mod experiments;

pub use experiments::{
    block_diagonal_covariance, block_graph_laplacian, random_graph_covariance, roc_auc,
    roc_curve, run_experiment, table1_row, table2_rows, table3_rows, table4_rows, Experiment,
    ExperimentReport, NoiseStructure, ReportRow, Table1Operators,
};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadop::{ar_chain_covariance, ar_grid_covariance, q_norm_vec, QuadraticOperator};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Signal factors, amplitude laws, row/column noise covariances (with
/// precomputed symmetric square roots) and the SNR target.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub n: usize,
    pub p: usize,
    pub signal_factors: Vec<(DVector<f64>, DVector<f64>)>,
    /// per-factor (mean, sd) of the amplitude phi_k
    pub amplitude_law: Vec<(f64, f64)>,
    pub row_cov: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
    pub snr_target: f64,
    pub seed: u64,
    row_sqrt: DMatrix<f64>,
    col_sqrt: DMatrix<f64>,
}

impl SimulationSpec {
    pub fn new(
        signal_factors: Vec<(DVector<f64>, DVector<f64>)>,
        amplitude_law: Vec<(f64, f64)>,
        row_cov: DMatrix<f64>,
        col_cov: DMatrix<f64>,
        snr_target: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = row_cov.nrows();
        let p = col_cov.nrows();
        if signal_factors.len() != amplitude_law.len() {
            return Err(Error::DimensionMismatch(
                "one amplitude law per signal factor".into(),
            ));
        }
        for (u, v) in &signal_factors {
            if u.len() != n || v.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "signal factor dims ({}, {}) vs covariances ({n}, {p})",
                    u.len(),
                    v.len()
                )));
            }
        }
        let row_sqrt = psd_sqrt(&row_cov, "row covariance")?;
        let col_sqrt = psd_sqrt(&col_cov, "column covariance")?;
        Ok(Self {
            n,
            p,
            signal_factors,
            amplitude_law,
            row_cov,
            col_cov,
            snr_target,
            seed,
            row_sqrt,
            col_sqrt,
        })
    }

    /// Indices of the nonzero entries of the k-th left signal factor.
    pub fn left_support(&self, k: usize) -> Vec<usize> {
        support(&self.signal_factors[k].0, 1e-12)
    }
}

fn psd_sqrt(m: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{label} must be square")));
    }
    let (vals, vecs) = linalg::sym_eigen_desc(m);
    let max = vals[0].max(0.0);
    if vals[vals.len() - 1] < -1e-10 * max.max(1.0) {
        return Err(Error::NotPositiveSemiDefinite(format!(
            "{label} has eigenvalue {}",
            vals[vals.len() - 1]
        )));
    }
    let n = m.nrows();
    let mut sqrt = DMatrix::zeros(n, n);
    for c in 0..n {
        let s = vals[c].max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        let col = vecs.column(c);
        for i in 0..n {
            for j in 0..n {
                sqrt[(i, j)] += s * col[i] * col[j];
            }
        }
    }
    Ok(sqrt)
}

/// Replicate stream: splitmix64 over (seed, replicate index).
pub fn derive_seed(seed: u64, replicate: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(replicate.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Draws one replicate and returns the raw signal, raw noise, and the
/// centered data matrix.
pub fn generate_parts(
    spec: &SimulationSpec,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DataMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (spec.n, spec.p);

    // amplitude scale hitting the SNR target in expectation
    let tr_product = spec.row_cov.trace() * spec.col_cov.trace();
    let expected_signal: f64 = spec
        .signal_factors
        .iter()
        .zip(&spec.amplitude_law)
        .map(|((u, v), (mean, sd))| (mean * mean + sd * sd) * u.norm_squared() * v.norm_squared())
        .sum();
    let scale = if expected_signal > 0.0 {
        (spec.snr_target * tr_product / expected_signal).sqrt()
    } else {
        0.0
    };

    let mut signal = DMatrix::zeros(n, p);
    for ((u, v), (mean, sd)) in spec.signal_factors.iter().zip(&spec.amplitude_law) {
        let phi = if *sd > 0.0 {
            Normal::new(*mean, *sd)
                .map_err(|e| Error::InvalidParameter(format!("amplitude law: {e}")))?
                .sample(&mut rng)
        } else {
            *mean
        };
        let weight = scale * phi;
        for j in 0..p {
            let w = weight * v[j];
            if w != 0.0 {
                signal.column_mut(j).axpy(w, u, 1.0);
            }
        }
    }

    let z = DMatrix::from_fn(n, p, |_, _| {
        let draw: f64 = rng.sample(rand_distr::StandardNormal);
        draw
    });
    let noise = &spec.row_sqrt * z * &spec.col_sqrt;
    let x = DataMatrix::new(&signal + &noise)?.center();
    Ok((signal, noise, x))
}

/// Draws the replicate the spec's own seed points at, returning centered data.
pub fn generate(spec: &SimulationSpec) -> Result<DataMatrix> {
    Ok(generate_parts(spec, spec.seed)?.2)
}

/// Spatio-temporal preset: 256 grid voxels by 200 time points, two signal
/// factors, grid-AR(0.9) spatial noise and chain-AR(0.8) temporal noise, with
/// SNR target sigma^2 and amplitude laws N(1, sigma^2) and N(0.5, sigma^2).
///
/// Each spatial factor is the indicator of three disjoint axis-aligned
/// rectangles on the 16 x 16 grid (all six rectangles mutually disjoint);
/// the temporal factors are sinusoids with one and two full cycles.
pub fn spatio_temporal_preset(sigma2: f64, seed: u64) -> Result<SimulationSpec> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma^2 must be positive, got {sigma2}"
        )));
    }
    let m = 16usize;
    let p = 200usize;
    let sigma = sigma2.sqrt();

    // (row range, col range) rectangles; half-open
    let rois_1: [(std::ops::Range<usize>, std::ops::Range<usize>); 3] =
        [(1..4, 1..4), (10..14, 2..6), (5..8, 10..14)];
    let rois_2: [(std::ops::Range<usize>, std::ops::Range<usize>); 3] =
        [(1..4, 10..14), (10..14, 9..12), (5..8, 1..5)];

    let mask = |rois: &[(std::ops::Range<usize>, std::ops::Range<usize>)]| {
        let mut u = DVector::zeros(m * m);
        for (rr, cr) in rois {
            for r in rr.clone() {
                for c in cr.clone() {
                    u[r * m + c] = 1.0;
                }
            }
        }
        u
    };
    let u1 = mask(&rois_1);
    let u2 = mask(&rois_2);

    let x_of = |t: usize| t as f64 / (p - 1) as f64;
    let v1 = DVector::from_fn(p, |t, _| (std::f64::consts::TAU * x_of(t)).sin());
    let v2 = DVector::from_fn(p, |t, _| (2.0 * std::f64::consts::TAU * x_of(t)).sin());

    SimulationSpec::new(
        vec![(u1, v1), (u2, v2)],
        vec![(1.0, sigma), (0.5, sigma)],
        ar_grid_covariance(m, m, 0.9),
        ar_chain_covariance(p, 0.8),
        sigma2,
        seed,
    )
}

/// Sign-aligned, unit-normalized squared error between factor estimates:
/// min over s in {-1, 1} of ||s e/||e|| - t/||t|| ||^2. Norms are Euclidean
/// unless a metric operator is supplied. A zero estimate scores 1.
pub fn msse(estimate: &DVector<f64>, truth: &DVector<f64>, metric: Option<&QuadraticOperator>) -> f64 {
    let norm = |x: &DVector<f64>| -> f64 {
        match metric {
            Some(op) => q_norm_vec(x, op).unwrap_or(0.0),
            None => x.norm(),
        }
    };
    let te = norm(truth);
    if te == 0.0 {
        return 0.0;
    }
    let t = truth / te;
    let en = norm(estimate);
    if en == 0.0 {
        log::warn!("msse of a zero estimate");
        return 1.0;
    }
    let e = estimate / en;
    let plus = norm(&(&e - &t)).powi(2);
    let minus = norm(&(&e + &t)).powi(2);
    plus.min(minus)
}

/// Indices with |x_i| above the threshold.
pub fn support(x: &DVector<f64>, threshold: f64) -> Vec<usize> {
    (0..x.len()).filter(|&i| x[i].abs() > threshold).collect()
}

/// (true positive rate, false positive rate) of the estimate's support
/// against a non-empty truth support.
pub fn support_metrics(
    estimate: &DVector<f64>,
    truth_support: &[usize],
    threshold: f64,
) -> (f64, f64) {
    debug_assert!(!truth_support.is_empty());
    let in_truth: std::collections::HashSet<usize> = truth_support.iter().copied().collect();
    let est = support(estimate, threshold);
    let tp = est.iter().filter(|i| in_truth.contains(i)).count();
    let fp = est.len() - tp;
    let complement = estimate.len() - in_truth.len();
    let tp_rate = tp as f64 / in_truth.len() as f64;
    let fp_rate = if complement > 0 {
        fp as f64 / complement as f64
    } else {
        0.0
    };
    (tp_rate, fp_rate)
}

/// Per-factor recovery summary; `roc_points` holds one (fp, tp) list per
/// factor in descending-lambda order.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct RecoveryMetrics {
    pub msse_u: Vec<f64>,
    pub msse_v: Vec<f64>,
    pub tp: Vec<f64>,
    pub fp: Vec<f64>,
    pub var_explained: Vec<f64>,
    pub roc_points: Vec<Vec<(f64, f64)>>,
}
