//! `tailsampler`: estimate small tail probabilities and related quantities
//! from JSON experiment configs, writing CSV artifacts.

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tailsampler::config::{self, load_config};
use tailsampler::experiments::{self, with_pool, RunReport};

#[derive(Parser)]
#[command(name = "tailsampler", version, about = "Rare-event tail probability estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (TAILSAMPLER_THREADS takes precedence); results
    /// do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Importance-sampling sweep over target levels u for a generic loss.
    Estimate(Common),
    /// Distribution-network failure probability sweep over total supply.
    Network(Common),
    /// Portfolio-credit-risk excess-loss probability sweep over rarity.
    Pcr(Common),
    /// Export conditional and transformed point clouds for one level pair.
    Selfsim(Common),
    /// Numeric rate-function analysis: q*, decay exponents, level scans.
    Rate(Common),
    /// Cross-validate the transform hyperparameter l at a fixed level u.
    Crossval(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Estimate(c)
            | Command::Network(c)
            | Command::Pcr(c)
            | Command::Selfsim(c)
            | Command::Rate(c)
            | Command::Crossval(c) => c,
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    std::env::var("TAILSAMPLER_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .or(flag)
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: &Cli) -> Result<RunReport> {
    let common = cli.command.common();
    let threads = resolve_threads(common.threads);
    let base = base_dir(&common.config);
    let out = common.out.clone();
    let seed = common.seed;
    match &cli.command {
        Command::Estimate(c) => {
            let (cfg, text): (config::EstimateConfig, _) = load_config(&c.config)?;
            with_pool(threads, || experiments::cmd_estimate(&cfg, &text, &base, &out, seed))?
        }
        Command::Network(c) => {
            let (cfg, text): (config::NetworkConfig, _) = load_config(&c.config)?;
            with_pool(threads, || experiments::cmd_network(&cfg, &text, &out, seed))?
        }
        Command::Pcr(c) => {
            let (cfg, text): (config::PcrConfig, _) = load_config(&c.config)?;
            with_pool(threads, || experiments::cmd_pcr(&cfg, &text, &base, &out, seed))?
        }
        Command::Selfsim(c) => {
            let (cfg, text): (config::SelfsimConfig, _) = load_config(&c.config)?;
            with_pool(threads, || experiments::cmd_selfsim(&cfg, &text, &base, &out, seed))?
        }
        Command::Rate(c) => {
            let (cfg, text): (config::RateConfig, _) = load_config(&c.config)?;
            with_pool(threads, || experiments::cmd_rate(&cfg, &text, &base, &out))?
        }
        Command::Crossval(c) => {
            let (cfg, text): (config::CrossvalConfig, _) = load_config(&c.config)?;
            with_pool(threads, || experiments::cmd_crossval(&cfg, &text, &base, &out, seed))?
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            if report.failed.is_empty() {
                eprintln!("completed {} sweep point(s)", report.completed);
                ExitCode::SUCCESS
            } else {
                for f in &report.failed {
                    eprintln!("failed: {f}");
                }
                eprintln!(
                    "completed {} sweep point(s), {} failed",
                    report.completed,
                    report.failed.len()
                );
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
