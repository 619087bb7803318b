//! Job configuration: JSON file with strict (unknown-key-rejecting) schema,
//! merged with command-line overrides.

use gmdkit::{ArMode, Error, QuadraticOperator, Result};
use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Gmd,
    Gpca,
    Sgpca,
    Fgpca,
    Simulate,
    Select,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gmd => "gmd",
            Self::Gpca => "gpca",
            Self::Sgpca => "sgpca",
            Self::Fgpca => "fgpca",
            Self::Simulate => "simulate",
            Self::Select => "select",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// informative only; the subcommand decides what runs
    pub command: Option<String>,
    pub data: Option<PathBuf>,
    pub q: Option<OperatorSpec>,
    pub r: Option<OperatorSpec>,
    pub k: Option<usize>,
    pub penalty_u: Option<PenaltyConfig>,
    pub penalty_v: Option<PenaltyConfig>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// center the data after loading (default true unless the file says it
    /// already is)
    pub center: Option<bool>,
    /// simulate: which table to reproduce
    pub experiment: Option<String>,
    pub replicates: Option<usize>,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config {path:?}: {e}")))
    }

    /// Applies CLI overrides and validates what can be checked before data
    /// is loaded.
    pub fn resolve(
        mut self,
        command: CommandKind,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = Some(s);
        }
        if let Some(o) = out {
            self.out = Some(o);
        }
        if let Some(declared) = &self.command {
            if declared != command.as_str() {
                log::info!(
                    "config declares command '{declared}', running '{command}' from the CLI"
                );
            }
        }
        if self.out.is_none() {
            return Err(Error::InvalidParameter(
                "an output directory is required (config 'out' or --out)".into(),
            ));
        }
        if let Some(k) = self.k {
            if k == 0 {
                return Err(Error::InvalidParameter("k must be at least 1".into()));
            }
        }
        match command {
            CommandKind::Simulate => {
                if self.experiment.is_none() {
                    return Err(Error::InvalidParameter(
                        "simulate requires an 'experiment' field".into(),
                    ));
                }
            }
            CommandKind::Select => {
                if self.penalty_u.is_none() && self.penalty_v.is_none() {
                    return Err(Error::InvalidParameter(
                        "select requires penalty_u or penalty_v".into(),
                    ));
                }
            }
            _ => {
                let data = self.data.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("a 'data' path is required".into())
                })?;
                if !data.exists() {
                    return Err(Error::InvalidParameter(format!(
                        "data file {data:?} does not exist"
                    )));
                }
            }
        }
        for pen in [&self.penalty_u, &self.penalty_v].into_iter().flatten() {
            pen.validate()?;
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().expect("validated in resolve")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity {
        #[serde(default)]
        dim: Option<usize>,
    },
    ChainLaplacian {
        #[serde(default)]
        p: Option<usize>,
    },
    GridLaplacian {
        m1: usize,
        m2: usize,
    },
    KernelSmoother {
        #[serde(default)]
        p: Option<usize>,
        window: usize,
    },
    ArPrecision {
        dims: Vec<usize>,
        rho: f64,
        mode: String,
    },
    SecondDifference {
        #[serde(default)]
        p: Option<usize>,
    },
    File {
        path: PathBuf,
    },
}

impl OperatorSpec {
    /// Builds the operator; `side_dim` is the data dimension the operator
    /// must match and fills in omitted sizes.
    pub fn build(&self, side_dim: usize) -> Result<QuadraticOperator> {
        let op = match self {
            OperatorSpec::Identity { dim } => {
                QuadraticOperator::identity(dim.unwrap_or(side_dim))?
            }
            OperatorSpec::ChainLaplacian { p } => {
                gmdkit::build_chain_laplacian(p.unwrap_or(side_dim))?
            }
            OperatorSpec::GridLaplacian { m1, m2 } => gmdkit::build_grid_laplacian(*m1, *m2)?,
            OperatorSpec::KernelSmoother { p, window } => {
                gmdkit::build_kernel_smoother(p.unwrap_or(side_dim), *window)?
            }
            OperatorSpec::ArPrecision { dims, rho, mode } => {
                let mode = match mode.as_str() {
                    "chain" => ArMode::Chain,
                    "grid_manhattan" => ArMode::GridManhattan,
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "ar_precision mode must be 'chain' or 'grid_manhattan', got '{other}'"
                        )))
                    }
                };
                gmdkit::build_ar_precision(dims, *rho, mode)?
            }
            OperatorSpec::SecondDifference { p } => {
                gmdkit::build_second_difference_gram(p.unwrap_or(side_dim))?
            }
            OperatorSpec::File { path } => gmdkit::io::read_matrix_market(path)?,
        };
        if op.dim() != side_dim {
            return Err(Error::DimensionMismatch(format!(
                "operator dim {} does not match data side {}",
                op.dim(),
                side_dim
            )));
        }
        Ok(op)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Fixed(f64),
    Mode(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: String,
    pub lambda: Option<LambdaValue>,
    /// explicit BIC grid (only with lambda = "bic")
    pub grid: Option<Vec<f64>>,
    pub omega: Option<OperatorSpec>,
}

impl PenaltyConfig {
    fn validate(&self) -> Result<()> {
        match self.kind.as_str() {
            "none" => {
                if self.lambda.is_some() || self.grid.is_some() {
                    return Err(Error::InvalidParameter(
                        "penalty kind 'none' takes no lambda or grid".into(),
                    ));
                }
                Ok(())
            }
            "lasso" | "omega" => {
                match &self.lambda {
                    None => Err(Error::InvalidParameter(format!(
                        "penalty kind '{}' requires lambda (a number or \"bic\")",
                        self.kind
                    ))),
                    Some(LambdaValue::Fixed(l)) => {
                        if self.grid.is_some() {
                            return Err(Error::InvalidParameter(
                                "a grid is only valid with lambda = \"bic\"".into(),
                            ));
                        }
                        if !(*l >= 0.0) {
                            return Err(Error::InvalidParameter(
                                "lambda must be non-negative".into(),
                            ));
                        }
                        Ok(())
                    }
                    Some(LambdaValue::Mode(m)) if m == "bic" => Ok(()),
                    Some(LambdaValue::Mode(m)) => Err(Error::InvalidParameter(format!(
                        "lambda must be a number or \"bic\", got \"{m}\""
                    ))),
                }
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown penalty kind '{other}' (none | lasso | omega)"
            ))),
        }
    }

    /// Converts into the library-side penalty description for one side.
    pub fn to_side(&self, side_dim: usize) -> Result<gmdkit::SidePenalty> {
        let choice = match &self.lambda {
            Some(LambdaValue::Fixed(l)) => gmdkit::LambdaChoice::Fixed(*l),
            Some(LambdaValue::Mode(_)) => gmdkit::LambdaChoice::Bic {
                grid: self.grid.clone(),
            },
            None => gmdkit::LambdaChoice::Fixed(0.0),
        };
        match self.kind.as_str() {
            "none" => Ok(gmdkit::SidePenalty::none()),
            "lasso" => Ok(gmdkit::SidePenalty::lasso(choice)),
            "omega" => {
                let spec = self.omega.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("omega penalty requires an 'omega' operator".into())
                })?;
                Ok(gmdkit::SidePenalty::omega(spec.build(side_dim)?, choice))
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown penalty kind '{other}'"
            ))),
        }
    }

    pub fn is_bic(&self) -> bool {
        matches!(&self.lambda, Some(LambdaValue::Mode(m)) if m == "bic")
    }
}
