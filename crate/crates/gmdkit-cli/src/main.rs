mod config;
mod run;

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Structured matrix decomposition jobs: decompose, regularize, simulate.
#[derive(Debug, Parser)]
#[command(name = "gmdkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Generalized matrix decomposition
    Gmd(JobArgs),
    /// Generalized PCA (decomposition plus scores)
    Gpca(JobArgs),
    /// Sparse generalized PCA (lasso penalties)
    Sgpca(JobArgs),
    /// Functional generalized PCA (smoothness penalties)
    Fgpca(JobArgs),
    /// Run a named simulation experiment
    Simulate(JobArgs),
    /// BIC penalty selection curve for the first factor
    Select(JobArgs),
}

#[derive(Debug, clap::Args)]
struct JobArgs {
    /// JSON job configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Gmd(a) => (config::CommandKind::Gmd, a),
        Command::Gpca(a) => (config::CommandKind::Gpca, a),
        Command::Sgpca(a) => (config::CommandKind::Sgpca, a),
        Command::Fgpca(a) => (config::CommandKind::Fgpca, a),
        Command::Simulate(a) => (config::CommandKind::Simulate, a),
        Command::Select(a) => (config::CommandKind::Select, a),
    };

    let level = match args.verbose {
        0 => log::LevelFilter::Error,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .init();

    match run::run_job(name, &args.config, args.seed, args.out.clone()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = run::classify(&err);
            let payload = serde_json::json!({
                "error": { "kind": kind, "message": err.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}
