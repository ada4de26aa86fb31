//! `bifkit`: Lyapunov fields, bifurcation measures, zero loci and random
//! product statistics for holomorphic families of Moebius representations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 1 output failure. `BIFKIT_THREADS` sets the worker count.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bifkit::family::PresetParams;
use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{Command, ConfigError, FamilySource, RunConfig};

#[derive(Parser)]
#[command(name = "bifkit", version, about = "Bifurcation measures of families of Moebius representations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Lyapunov exponent field on a parameter grid.
    Lyap(Flags),
    /// Bifurcation measure: dd^c of the Lyapunov field.
    Bif(Flags),
    /// Loci tr^2 = t of random words (or of one word) against the bifurcation measure.
    Zeros(Flags),
    /// Loci where two words share a fixed point, against the bifurcation measure.
    Collide(Flags),
    /// Separation, trace deviation and pair separation statistics of random products.
    Stats(Flags),
    /// Pixels where some sampled word changes conjugacy type.
    Typechange(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in family: riley, schottky or linear-custom.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Multiplier of the schottky preset.
    #[arg(long, requires = "preset")]
    s: Option<f64>,
    /// Family spec file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Grid as "cx,cy,w,h,nx,ny".
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Word length (walk length, or maximal length for typechange).
    #[arg(long)]
    n: Option<usize>,
    /// Number of sampled walks.
    #[arg(long)]
    m: Option<usize>,
    /// Trace-squared value as "re,im".
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    /// Explicit word, e.g. "ab'a".
    #[arg(long)]
    word: Option<String>,
    /// Second word of an explicit collision.
    #[arg(long)]
    with: Option<String>,
    /// Number of random words whose loci are averaged.
    #[arg(long)]
    words: Option<usize>,
    /// Walk length of the reference bifurcation measure.
    #[arg(long)]
    n_field: Option<usize>,
    /// Walk count of the reference bifurcation measure.
    #[arg(long)]
    m_field: Option<usize>,
    /// Directory of an earlier `bif` run to reuse as reference.
    #[arg(long)]
    bif_cache: Option<PathBuf>,
    /// Zero locator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Block size of the measure comparison.
    #[arg(long)]
    coarsen: Option<usize>,
    /// Parameter of the statistics as "re,im".
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Walk lengths of the statistics, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Deviation threshold of the trace statistics.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Exponential rate of the pair separation threshold.
    #[arg(long)]
    gamma: Option<f64>,
}

impl Flags {
    fn into_config(self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let family = match (self.preset, self.spec) {
            (Some(preset), _) => Some(FamilySource::Preset { preset, params: PresetParams { s: self.s, generators: None } }),
            (None, Some(file)) => Some(FamilySource::File { file }),
            (None, None) => None,
        };
        let flags = RunConfig {
            family,
            grid: self.grid,
            seed: self.seed,
            n: self.n,
            m: self.m,
            t: self.t,
            word: self.word,
            with: self.with,
            words: self.words,
            n_field: self.n_field,
            m_field: self.m_field,
            bif_cache: self.bif_cache,
            tol: self.tol,
            coarsen: self.coarsen,
            lambda: self.lambda,
            n_list: self.n_list,
            epsilon: self.epsilon,
            gamma: self.gamma,
            out: self.out,
            ..Default::default()
        };
        cfg = cfg.overlay(flags);
        Ok(cfg)
    }
}

fn init_threads() -> Result<(), ConfigError> {
    if let Ok(v) = std::env::var("BIFKIT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ConfigError::new("BIFKIT_THREADS", format!("expected a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::new("BIFKIT_THREADS", e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, flags) = match cli.command {
        Sub::Lyap(f) => (Command::Lyap, f),
        Sub::Bif(f) => (Command::Bif, f),
        Sub::Zeros(f) => (Command::Zeros, f),
        Sub::Collide(f) => (Command::Collide, f),
        Sub::Stats(f) => (Command::Stats, f),
        Sub::Typechange(f) => (Command::Typechange, f),
    };
    let result = init_threads()
        .map_err(Failure::Config)
        .and_then(|_| flags.into_config().map_err(Failure::Config))
        .and_then(|cfg| commands::run(cmd, cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
