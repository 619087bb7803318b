//! Job execution: load, center, decompose or simulate, persist.
//!
//! All numeric work happens before anything is written; on any error the
//! files written so far are removed so a failed job leaves no partial
//! results behind.

use crate::config::{CommandKind, JobConfig, PenaltyConfig};
use gmdkit::io;
use gmdkit::{
    cumulative_variance_regularized, gmd_power, gpc_scores, gpmf_auto, variance_explained,
    BicReport, DataMatrix, Error, Experiment, FactorSelection, GmdFactors, GmdOptions,
    GpmfOptions, GpmfResult, QuadraticOperator, Result, SelectStrategy, VarianceReport,
};
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub fn classify(err: &Error) -> (u8, &'static str) {
    match err {
        Error::InvalidDimension(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidParameter(_)
        | Error::Parse(_) => (2, "config"),
        Error::NotPositiveSemiDefinite(_) | Error::Numerical(_) | Error::UndefinedVariance => {
            (3, "numerical")
        }
        Error::Io(_) => (4, "io"),
    }
}

/// Records every file written so a failed job can remove them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn write_string(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.file(name);
        std::fs::write(p, content)?;
        Ok(())
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Parse(format!("serializing {name}: {e}")))?;
        self.write_string(name, &text)
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }
}

pub fn run_job(
    kind: CommandKind,
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<()> {
    let started_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let timer = Instant::now();

    let config = JobConfig::load(config_path)?.resolve(kind, seed_override, out_override)?;
    std::fs::create_dir_all(config.out_dir())?;
    let mut outputs = Outputs::new(config.out_dir());

    let result = execute(kind, &config, &mut outputs);
    match result {
        Ok(()) => {
            let manifest = serde_json::json!({
                "version": env!("CARGO_PKG_VERSION"),
                "command": kind.as_str(),
                "seed": config.seed(),
                "outputs": outputs.names(),
                "started_unix_ms": started_ms,
                "duration_ms": timer.elapsed().as_millis() as u64,
            });
            let text = serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::Parse(format!("manifest: {e}")))?;
            std::fs::write(config.out_dir().join("manifest.json"), text)?;
            log::info!("{kind} finished in {} ms", timer.elapsed().as_millis());
            Ok(())
        }
        Err(e) => {
            outputs.cleanup();
            Err(e)
        }
    }
}

fn load_data(config: &JobConfig) -> Result<DataMatrix> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("a 'data' path is required".into()))?;
    let data = io::read_dense_auto(path)?;
    let center = config.center.unwrap_or(true);
    if center && !data.centered() {
        Ok(data.center())
    } else {
        Ok(data)
    }
}

fn build_operators(
    config: &JobConfig,
    n: usize,
    p: usize,
) -> Result<(QuadraticOperator, QuadraticOperator)> {
    let q = match &config.q {
        Some(spec) => spec.build(n)?,
        None => QuadraticOperator::identity(n)?,
    };
    let r = match &config.r {
        Some(spec) => spec.build(p)?,
        None => QuadraticOperator::identity(p)?,
    };
    Ok((q, r))
}

fn gmd_options(config: &JobConfig) -> GmdOptions {
    GmdOptions {
        tol: config.tol.unwrap_or(1e-9),
        max_iter: config.max_iter.unwrap_or(1000),
        seed: config.seed(),
    }
}

fn gpmf_options(config: &JobConfig) -> GpmfOptions {
    let mut opts = GpmfOptions::with_seed(config.seed());
    opts.gmd = gmd_options(config);
    if let Some(tol) = config.tol {
        opts.tol = tol;
    }
    if let Some(max_iter) = config.max_iter {
        opts.max_outer = max_iter;
    }
    opts
}

fn require_k(config: &JobConfig) -> Result<usize> {
    config
        .k
        .ok_or_else(|| Error::InvalidParameter("'k' (number of factors) is required".into()))
}

fn save_decomposition(
    outputs: &mut Outputs,
    factors: &GmdFactors,
    config: &JobConfig,
) -> Result<()> {
    io::write_csv_matrix(&outputs.file("U.csv"), &factors.u)?;
    io::write_csv_matrix(&outputs.file("V.csv"), &factors.v)?;
    let d = nalgebra::DMatrix::from_column_slice(factors.d.len(), 1, factors.d.as_slice());
    io::write_csv_matrix(&outputs.file("D.csv"), &d)?;
    outputs.write_json(
        "meta.json",
        &io::FactorsMeta {
            k: factors.k(),
            tol: config.tol.unwrap_or(1e-9),
            seed: config.seed(),
            iterations: factors.iterations.clone(),
            converged: factors.converged.clone(),
        },
    )
}

fn penalized_variance(
    factors: &GmdFactors,
    x: &DataMatrix,
    q: &QuadraticOperator,
    r: &QuadraticOperator,
) -> Result<VarianceReport> {
    let total = gmdkit::qr_norm(x, q, r)?.powi(2);
    let mut cumulative = Vec::with_capacity(factors.k());
    for k in 1..=factors.k() {
        let uk = factors.u.columns(0, k).into_owned();
        let vk = factors.v.columns(0, k).into_owned();
        cumulative.push(cumulative_variance_regularized(&uk, &vk, x, q, r)?);
    }
    // per-component shares are successive differences; the greedy fit does
    // not order components by variance, so these can be non-monotone
    let mut per_component = Vec::with_capacity(cumulative.len());
    let mut prev = 0.0;
    for c in &cumulative {
        per_component.push(c - prev);
        prev = *c;
    }
    Ok(VarianceReport {
        per_component,
        cumulative,
        total_qr_norm_sq: total,
    })
}

fn write_bic_curve(outputs: &mut Outputs, name: &str, report: &BicReport) -> Result<()> {
    let mut text = String::from("lambda,score\n");
    for (l, s) in report.lambdas.iter().zip(&report.scores) {
        text.push_str(&format!("{l},{s}\n"));
    }
    outputs.write_string(name, &text)
}

fn first_bic_report(selections: &[FactorSelection]) -> Option<&BicReport> {
    selections.first().and_then(|s| s.report_v.as_ref().or(s.report_u.as_ref()))
}

fn run_penalized(
    config: &JobConfig,
    outputs: &mut Outputs,
    allowed_kinds: &[&str],
    label: &str,
) -> Result<()> {
    let x = load_data(config)?;
    let k = require_k(config)?;
    let (q, r) = build_operators(config, x.n_rows(), x.n_cols())?;

    let none = PenaltyConfig {
        kind: "none".into(),
        lambda: None,
        grid: None,
        omega: None,
    };
    let pen_u = config.penalty_u.clone().unwrap_or_else(|| none.clone());
    let pen_v = config.penalty_v.clone().unwrap_or(none);
    for pen in [&pen_u, &pen_v] {
        if pen.kind != "none" && !allowed_kinds.contains(&pen.kind.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "{label} supports penalty kinds {allowed_kinds:?}, got '{}'",
                pen.kind
            )));
        }
    }
    if pen_u.kind == "none" && pen_v.kind == "none" {
        return Err(Error::InvalidParameter(format!(
            "{label} requires at least one penalized side"
        )));
    }

    let side_u = pen_u.to_side(x.n_rows())?;
    let side_v = pen_v.to_side(x.n_cols())?;
    let opts = gpmf_options(config);
    let (result, selections): (GpmfResult, Vec<FactorSelection>) =
        gpmf_auto(&x, &q, &r, k, &side_u, &side_v, &opts)?;

    save_decomposition(outputs, &result.factors, config)?;
    io::save_penalties(&outputs.dir.clone(), &result, &pen_u.kind, &pen_v.kind)?;
    outputs.written.push(outputs.dir.join("penalties.json"));
    outputs.write_json("variance.json", &penalized_variance(&result.factors, &x, &q, &r)?)?;
    if pen_u.is_bic() || pen_v.is_bic() {
        if let Some(report) = first_bic_report(&selections) {
            write_bic_curve(outputs, "bic_curve.csv", report)?;
        }
        outputs.write_json("selection.json", &selections)?;
    }
    Ok(())
}

fn execute(kind: CommandKind, config: &JobConfig, outputs: &mut Outputs) -> Result<()> {
    match kind {
        CommandKind::Gmd | CommandKind::Gpca => {
            let x = load_data(config)?;
            let k = require_k(config)?;
            let (q, r) = build_operators(config, x.n_rows(), x.n_cols())?;
            let factors = gmd_power(&x, &q, &r, k, &gmd_options(config))?;
            save_decomposition(outputs, &factors, config)?;
            outputs.write_json("variance.json", &variance_explained(&factors, &x, &q, &r)?)?;
            if kind == CommandKind::Gpca {
                let scores = gpc_scores(&x, &r, &factors.v)?;
                io::write_csv_matrix(&outputs.file("scores.csv"), &scores)?;
            }
            Ok(())
        }
        CommandKind::Sgpca => run_penalized(config, outputs, &["lasso"], "sgpca"),
        CommandKind::Fgpca => run_penalized(config, outputs, &["omega"], "fgpca"),
        CommandKind::Simulate => {
            let name: Experiment = config
                .experiment
                .as_deref()
                .expect("validated in resolve")
                .parse()?;
            let replicates = config.replicates.unwrap_or(20);
            let report = gmdkit::run_experiment(name, replicates, config.seed())?;
            outputs.write_string(&format!("{name}.csv"), &report.to_csv())?;
            outputs.write_json("report.json", &report)?;
            Ok(())
        }
        CommandKind::Select => {
            let x = load_data(config)?;
            let (q, r) = build_operators(config, x.n_rows(), x.n_cols())?;
            let factors = gmd_power(&x, &q, &r, 1, &gmd_options(config))?;
            let u0 = DVector::from_column_slice(factors.u.column(0).as_slice());
            let v0 = DVector::from_column_slice(factors.v.column(0).as_slice());
            let d0 = factors.d[0];

            // select on the v side when configured, else on u via transpose
            let report = if let Some(pen) = &config.penalty_v {
                let side = pen.to_side(x.n_cols())?;
                let grid = resolve_grid(&side, x.as_matrix(), &q, &u0)?;
                let spec = side_to_spec(&side)?;
                gmdkit::select_penalty(
                    x.as_matrix(),
                    &q,
                    &r,
                    &u0,
                    d0,
                    &spec,
                    &grid,
                    SelectStrategy::PostConvergence,
                )?
            } else {
                let pen = config.penalty_u.as_ref().expect("validated in resolve");
                let side = pen.to_side(x.n_rows())?;
                let xt = x.as_matrix().transpose();
                let grid = resolve_grid(&side, &xt, &r, &v0)?;
                let spec = side_to_spec(&side)?;
                gmdkit::select_penalty(
                    &xt,
                    &r,
                    &q,
                    &v0,
                    d0,
                    &spec,
                    &grid,
                    SelectStrategy::PostConvergence,
                )?
            };
            write_bic_curve(outputs, "bic_curve.csv", &report)?;
            outputs.write_json("bic_report.json", &report)?;
            Ok(())
        }
    }
}

fn side_to_spec(side: &gmdkit::SidePenalty) -> Result<gmdkit::PenaltySpec> {
    match side.kind {
        gmdkit::PenaltyKind::None => Err(Error::InvalidParameter(
            "select requires a penalized side".into(),
        )),
        gmdkit::PenaltyKind::Lasso => gmdkit::PenaltySpec::lasso(0.0),
        gmdkit::PenaltyKind::Omega => {
            let omega = side.omega.clone().ok_or_else(|| {
                Error::InvalidParameter("omega penalty requires an operator".into())
            })?;
            gmdkit::PenaltySpec::omega(0.0, omega)
        }
    }
}

/// The grid from the config, or the default one anchored at the lasso kill
/// threshold of the current factor.
fn resolve_grid(
    side: &gmdkit::SidePenalty,
    x: &nalgebra::DMatrix<f64>,
    metric_fixed: &QuadraticOperator,
    fixed_factor: &DVector<f64>,
) -> Result<Vec<f64>> {
    if let gmdkit::LambdaChoice::Bic { grid: Some(g) } = &side.choice {
        return Ok(g.clone());
    }
    let y = x.transpose() * metric_fixed.apply_vec(fixed_factor)?;
    Ok(gmdkit::default_lambda_grid(gmdkit::lasso_lambda_max(&y)))
}
