use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use hdpair_core::synth::{self, PlantedTruth, TruthKind};
use serde::{Deserialize, Serialize};

use super::{parse_format, Ctx};
use crate::config::resolve;
use crate::output::{out_dir, write_report, Provenance};

#[derive(Debug, Subcommand)]
pub enum SynthCmd {
    /// Independent standard normal X and Y.
    Null(SynthArgs),
    /// One scalar latent shared by both modalities.
    Latent(SynthArgs),
    /// Planted sparse canonical pair.
    Planted(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Latent strength (latent).
    #[arg(long)]
    strength: Option<f64>,
    /// Support sizes and latent correlation (planted).
    #[arg(long)]
    s_u: Option<usize>,
    #[arg(long)]
    s_v: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Matrix format: csv or bin.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    pub strength: f64,
    pub s_u: usize,
    pub s_v: usize,
    pub rho: f64,
    pub format: String,
    pub out: PathBuf,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 100,
            p: 200,
            q: 200,
            seed: 0,
            strength: 0.8,
            s_u: 10,
            s_v: 10,
            rho: 0.9,
            format: "csv".into(),
            out: "synth".into(),
        }
    }
}

pub fn run(ctx: &Ctx, cmd: &SynthCmd) -> Result<()> {
    let (name, args) = match cmd {
        SynthCmd::Null(a) => ("null", a),
        SynthCmd::Latent(a) => ("latent", a),
        SynthCmd::Planted(a) => ("planted", a),
    };
    let path = ["synth", name];
    let cfg: SynthConfig = resolve(ctx.file, &path, args)?;
    let format = parse_format(&cfg.format)?;
    let (data, truth) = match name {
        "null" => (
            synth::gen_null(cfg.n, cfg.p, cfg.q, cfg.seed)?,
            PlantedTruth {
                kind: TruthKind::Null,
                latent_correlation: 0.0,
                strength: None,
                u_star: None,
                v_star: None,
                seed: cfg.seed,
            },
        ),
        "latent" => synth::gen_shared_latent(cfg.n, cfg.p, cfg.q, cfg.strength, cfg.seed)?,
        _ => synth::gen_sparse_canonical_pair(cfg.n, cfg.p, cfg.q, cfg.s_u, cfg.s_v, cfg.rho, cfg.seed)?,
    };
    let dir = out_dir(&cfg.out)?;
    let ext = if cfg.format == "csv" { "csv" } else { "bin" };
    data.x.save(&dir.join(format!("x.{ext}")), format)?;
    data.y.save(&dir.join(format!("y.{ext}")), format)?;
    let prov = Provenance::new(&path, &cfg, Some(cfg.seed), &[])?;
    write_report(&dir.join("truth.json"), &prov, serde_json::json!({ "truth": truth }))
}
