use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use distcache::commands::{cmd_generate, cmd_run, cmd_validate, import_movielens, MovieLensImport};
use distcache::config::RunConfig;
use distcache::sim::parse_policies;
use distcache::validate::ValidateOptions;

#[derive(Parser)]
#[command(name = "distcache", version, about = "Cooperative small-cell caching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated policy names, or `all`.
    #[arg(long)]
    policies: Option<String>,
    #[arg(long, value_delimiter = ',')]
    cache_fracs: Option<Vec<f64>>,
    /// Federated λ values; pass an empty string to skip the sweep.
    #[arg(long, value_delimiter = ',')]
    lambda_sweep: Option<Vec<String>>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the catalog and trace CSVs of the configured source.
    Generate(Common),
    /// Run every policy over the cache-fraction sweep and write CSVs and plots.
    Run(Common),
    /// Check the solvers against brute-force oracles and the LRFU bound.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Random instances per oracle check.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Monte-Carlo windows for the bound check.
        #[arg(long, default_value_t = 500)]
        windows: usize,
    },
    /// Convert a MovieLens ratings log into catalog and trace CSVs.
    ImportMovielens {
        /// `ratings.csv` or `ratings.dat`.
        ratings: PathBuf,
        #[arg(long, default_value_t = 200)]
        slots: usize,
        #[arg(long, default_value = "five-ring")]
        topology: String,
        #[arg(long, default_value_t = 10.0)]
        size_min: f64,
        #[arg(long, default_value_t = 100.0)]
        size_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "movielens")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(p) = &common.policies {
        cfg.policies = parse_policies(p)?;
    }
    if let Some(c) = &common.cache_fracs {
        cfg.cache_fracs = c.clone();
    }
    if let Some(l) = &common.lambda_sweep {
        cfg.lambda_sweep = l
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("--lambda-sweep: bad value `{s}`")))
            .collect::<anyhow::Result<_>>()?;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Generate(common) => {
            let cfg = load(&common)?;
            let (c, t) = cmd_generate(&cfg)?;
            println!("wrote {} and {}", c.display(), t.display());
        }
        Command::Run(common) => {
            let cfg = load(&common)?;
            let out = cmd_run(&cfg)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate {
            common,
            instances,
            windows,
        } => {
            let cfg = load(&common)?;
            let opts = ValidateOptions {
                seed: cfg.seed,
                instances,
                mc_windows: windows,
                delta: cfg.sim.delta,
            };
            let checks = cmd_validate(&opts, cfg.threads)?;
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::ImportMovielens {
            ratings,
            slots,
            topology,
            size_min,
            size_max,
            seed,
            out,
        } => {
            let opts = MovieLensImport {
                n_slots: slots,
                topology: topology.parse().context("--topology")?,
                size_range: (size_min, size_max),
                seed,
            };
            let (c, t) = import_movielens(&ratings, &out, &opts)?;
            println!("wrote {} and {}", c.display(), t.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
