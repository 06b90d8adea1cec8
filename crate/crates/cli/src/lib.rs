//! Reproducible experiment runner: parses a JSON config, dispatches to
//! `qa-core`, writes CSV tables and a `manifest.json` (written last).
//!
//! Replication streams are derived from the master seed with
//! `splitmix64(seed ^ splitmix64(index))` (see `qa_core::rng`), so outputs do
//! not depend on the thread count.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::{Outcome, TailOverrides};
use crate::config::{AlphaBlock, LoadedConfig, TailBlock};
use crate::error::CliError;
use crate::output::{sha256_hex, write_manifest, write_tables, RunManifest};

pub use crate::error::CliError as Error;

pub const DEFAULT_OUT: &str = "qa-out";

#[derive(Debug, Parser)]
#[command(name = "qa", version, about = "Large-queue asymptotics experiments for GI/G/k queues")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir` (default `qa-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel replications.
    #[arg(long, global = true, env = "QA_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Rate-function curves on a θ grid.
    ///
    /// Writes rates_eta_<stream>.csv and rates_zeta_<server>.csv with columns
    /// theta,value,trunc,kind,residual,status. Rows without a finite root
    /// have status no_root and an empty value.
    Rates,
    /// Decay rate α and regime.
    ///
    /// Writes alpha_summary.csv (alpha,regime), alpha.csv (subset,rho,alpha)
    /// and servers.csv (server,theta_i).
    Alpha,
    /// Stationary simulation.
    ///
    /// Writes pmf.csv (level,prob,se) and, when probes are configured,
    /// phi.csv (v,theta,phi,phi_1..phi_k,se).
    Simulate,
    /// Importance-sampling estimate of P(L >= level | L >= k).
    ///
    /// Writes tail.csv (level,estimate,re,method,se) with methods is and naive.
    Tail {
        #[arg(long)]
        level: Option<usize>,
        /// Tilt parameter; defaults to α.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        /// Truncation level for servers tilted through T ∧ v.
        #[arg(long)]
        trunc: Option<f64>,
        /// Event budget.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Heavy-traffic study.
    ///
    /// Writes ht_study.csv (n,r_n,s_n,rate,ks_distance,taylor_sup).
    HtStudy,
    /// Large-variance study.
    ///
    /// Writes lv_study.csv (n,r_n,s_n,rate,ks_distance,taylor_sup).
    LvStudy,
    /// Monte-Carlo checks of the stationary equation and terminal condition.
    ///
    /// Writes validate.csv (kind,v,theta,residual,se,z,pass) and jumps.csv
    /// (v,theta,jumps,mean_increment,se,z).
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rates => "rates",
            Command::Alpha => "alpha",
            Command::Simulate => "simulate",
            Command::Tail { .. } => "tail",
            Command::HtStudy => "ht-study",
            Command::LvStudy => "lv-study",
            Command::Validate => "validate",
        }
    }
}

/// What a successful run produced.
#[derive(Debug)]
pub struct Report {
    pub summary: Vec<String>,
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

fn missing(block: &str) -> CliError {
    CliError::Config(format!("config has no `{block}` block"))
}

fn dispatch(cmd: &Command, loaded: &LoadedConfig, seed: u64) -> Result<Outcome, CliError> {
    let cfg = &loaded.config;
    let model = &loaded.model;
    match cmd {
        Command::Rates => commands::rates(model, cfg.rates.as_ref().ok_or_else(|| missing("rates"))?),
        Command::Alpha => commands::alpha(model, &cfg.alpha.clone().unwrap_or(AlphaBlock::default())),
        Command::Simulate => commands::simulate(model, cfg.simulate.as_ref().ok_or_else(|| missing("simulate"))?, seed),
        Command::Tail {
            level,
            theta,
            trunc,
            budget,
        } => {
            let over = TailOverrides {
                level: *level,
                theta: *theta,
                trunc: *trunc,
                budget: *budget,
            };
            commands::tail(model, &cfg.tail.clone().unwrap_or(TailBlock { naive: true, ..TailBlock::default() }), &over, seed)
        }
        Command::HtStudy => commands::ht_study(model, cfg.ht_study.as_ref().ok_or_else(|| missing("ht_study"))?, seed),
        Command::LvStudy => commands::lv_study(model, cfg.lv_study.as_ref().ok_or_else(|| missing("lv_study"))?, seed),
        Command::Validate => commands::validate(model, &cfg.validate.clone().unwrap_or_default(), seed),
    }
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let loaded = config::load(path)?;
    let seed = cli.seed.unwrap_or(loaded.config.seed);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| loaded.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;

    let start = Instant::now();
    let outcome = pool.install(|| dispatch(&cli.command, &loaded, seed))?;
    let outputs = write_tables(&out_dir, &outcome.tables)?;
    let config_hash = sha256_hex(format!("{}\nseed={seed}\ncommand={:?}", loaded.canonical, cli.command).as_bytes());
    let manifest = RunManifest {
        tool: "qa",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().to_string(),
        config_hash,
        seed,
        threads: pool.current_num_threads(),
        replications: outcome.replications,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(Report {
        summary: outcome.summary,
        out_dir,
        manifest,
    })
}
