mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use commands::{dist, fcg, infer, scca, subcluster, synth, Ctx};
use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "hdpair", version, about = "Distance-based correlation inference and sparse CCA for paired feature matrices")]
struct Cli {
    /// TOML config file, or a JSON report from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build per-subject functional correlation graphs from ROI time series.
    Fcg(fcg::FcgArgs),
    /// Pairwise subject distances and histograms for both modalities.
    Dist(dist::DistArgs),
    /// Run one inference procedure.
    Infer {
        #[command(subcommand)]
        method: infer::InferCmd,
    },
    /// Sparse canonical correlation analysis.
    Scca {
        #[command(subcommand)]
        cmd: scca::SccaCmd,
    },
    /// Cluster selected features and rank cluster pairs.
    Subcluster(subcluster::SubclusterArgs),
    /// Generate synthetic paired datasets.
    Synth {
        #[command(subcommand)]
        kind: synth::SynthCmd,
    },
    /// Permutation test, dCor t-test, and subsampling interval in one table.
    Report(infer::InferArgs),
}

fn dispatch(cli: &Cli) -> Result<()> {
    let file = cli.config.as_deref().map(FileConfig::load).transpose()?;
    let threads = match (cli.threads, file.as_ref().map(|f| f.threads()).transpose()?.flatten()) {
        (Some(t), _) | (None, Some(t)) => Some(t),
        _ => None,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            bail!("threads must be at least 1");
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    let ctx = Ctx { file: file.as_ref() };
    pool.install(|| match &cli.command {
        Command::Fcg(a) => fcg::run(&ctx, a),
        Command::Dist(a) => dist::run(&ctx, a),
        Command::Infer { method } => infer::run(&ctx, method),
        Command::Scca { cmd } => scca::run(&ctx, cmd),
        Command::Subcluster(a) => subcluster::run(&ctx, a),
        Command::Synth { kind } => synth::run(&ctx, kind),
        Command::Report(a) => infer::run_report(&ctx, a),
    })
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use hdpair_core::Error as E;
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<E>() {
            return match core {
                E::Io { .. } => "io",
                E::Parse(_) => "parse",
                E::NonFinite { .. } => "non_finite",
                E::DuplicateId(_) => "duplicate_id",
                E::IdMismatch(_) => "id_mismatch",
                E::Dimension(_) => "dimension",
                E::ZeroVariance(_) => "zero_variance",
                E::RankDeficient(_) => "rank_deficient",
                E::InvalidParameter(_) => "invalid_parameter",
                E::Degenerate(_) => "degenerate",
                E::UnknownStrategy { .. } => "unknown_strategy",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "config"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "error": {
                    "kind": error_kind(&e),
                    "message": format!("{e:#}"),
                }
            });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
