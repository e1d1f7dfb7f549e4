//! The CLI subcommands as library functions. All outputs land under the
//! configured output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::io::{write_catalog, write_trace};
use crate::metrics::ComparisonTable;
use crate::report::{comparison_csv, lambda_sweep_csv, write_atomic, write_plots};
use crate::config::RunConfig;
use crate::sim::{comparison_table, lambda_sweep, run_grid, with_threads, LambdaPoint, PolicyRun};
use crate::topology::Topology;
use crate::trace::DemandTrace;
use crate::validate::{run_checks, CheckResult, ValidateOptions};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        f()
    } else {
        with_threads(threads, f)?
    }
}

fn save_pair(out: &Path, catalog: &Catalog, trace: &DemandTrace) -> Result<(PathBuf, PathBuf)> {
    let catalog_path = out.join("catalog.csv");
    let trace_path = out.join("trace.csv");
    let mut buf = Vec::new();
    write_catalog(&mut buf, catalog).map_err(|e| Error::io(&catalog_path, e))?;
    write_atomic(&catalog_path, &buf)?;
    buf.clear();
    write_trace(&mut buf, trace).map_err(|e| Error::io(&trace_path, e))?;
    write_atomic(&trace_path, &buf)?;
    Ok((catalog_path, trace_path))
}

/// Writes `catalog.csv` and `trace.csv` for the configured data source.
pub fn cmd_generate(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let (catalog, trace) = cfg.load_data()?;
    save_pair(&cfg.out, &catalog, &trace)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub runs: Vec<PolicyRun>,
    pub table: ComparisonTable,
    pub sweep: Vec<LambdaPoint>,
    pub files: Vec<PathBuf>,
}

/// Runs the policy grid and the federated λ sweep, then writes
/// `config.toml`, `comparison.csv`, `lambda_sweep.csv`, per-run metrics and
/// the plots.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (catalog, trace) = cfg.load_data()?;
    let (runs, sweep) = in_pool(cfg.threads, || {
        let runs = run_grid(&trace, &catalog, &cfg.policies, &cfg.cache_fracs, &cfg.sim)?;
        let sweep = if cfg.lambda_sweep.is_empty() {
            Vec::new()
        } else {
            lambda_sweep(&trace, &catalog, &cfg.lambda_sweep, &cfg.cache_fracs, &cfg.sim)?
        };
        Ok((runs, sweep))
    })?;
    let table = comparison_table(&runs);

    let out = &cfg.out;
    let mut files = Vec::new();
    let mut emit = |name: String, bytes: &[u8]| -> Result<()> {
        let path = out.join(name);
        write_atomic(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    emit("config.toml".into(), cfg.to_toml()?.as_bytes())?;
    emit("comparison.csv".into(), &comparison_csv(&table)?)?;
    if !sweep.is_empty() {
        emit("lambda_sweep.csv".into(), &lambda_sweep_csv(&sweep)?)?;
    }
    if cfg.write_metrics {
        for run in &runs {
            let mut buf = Vec::new();
            run.log.write_csv(&mut buf)?;
            emit(format!("metrics/{}_{}.csv", run.policy, run.cache_frac), &buf)?;
        }
    }
    if cfg.plots {
        files.extend(write_plots(&out.join("plots"), &table, &sweep)?);
    }
    Ok(RunOutput {
        runs,
        table,
        sweep,
        files,
    })
}

pub fn cmd_validate(opts: &ValidateOptions, threads: usize) -> Result<Vec<CheckResult>> {
    in_pool(threads, || run_checks(opts))
}

/// How a MovieLens ratings log becomes a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieLensImport {
    pub n_slots: usize,
    /// Users are split into one disjoint chunk per sBS by `user mod M`.
    pub topology: Topology,
    /// MovieLens has no file sizes; sizes are drawn uniformly from this range.
    pub size_range: (f64, f64),
    pub seed: u64,
}

/// Converts a ratings log into slot-bucketed request counts.
///
/// Accepts `ratings.csv` (`userId,movieId,rating,timestamp` with a header)
/// and `ratings.dat` (`UserID::MovieID::Rating::Timestamp`). Every rating
/// counts as one request. Movies are renumbered `0..N-1` in ascending id
/// order. The time span is cut into `n_slots` equal slots.
pub fn import_movielens(ratings: &Path, out: &Path, opts: &MovieLensImport) -> Result<(PathBuf, PathBuf)> {
    if opts.n_slots == 0 {
        return Err(Error::validation("n_slots must be positive"));
    }
    let file = std::fs::File::open(ratings).map_err(|e| Error::io(ratings, e))?;
    let mut events: Vec<(u64, u64, i64)> = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(ratings, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains("::") {
            line.split("::").collect()
        } else {
            line.split(',').collect()
        };
        if fields.len() < 4 {
            return Err(Error::Parse {
                path: ratings.to_path_buf(),
                line: i + 1,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let parsed = (fields[0].trim().parse(), fields[1].trim().parse(), fields[3].trim().parse());
        match parsed {
            (Ok(u), Ok(m), Ok(ts)) => events.push((u, m, ts)),
            _ if i == 0 => continue, // header
            _ => {
                return Err(Error::Parse {
                    path: ratings.to_path_buf(),
                    line: i + 1,
                    msg: "user, movie and timestamp must be integers".into(),
                })
            }
        }
    }
    if events.is_empty() {
        return Err(Error::validation(format!("{}: no ratings", ratings.display())));
    }
    let movies: BTreeMap<u64, usize> = events
        .iter()
        .map(|e| e.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, m)| (m, i))
        .collect();
    let t0 = events.iter().map(|e| e.2).min().unwrap_or(0);
    let t1 = events.iter().map(|e| e.2).max().unwrap_or(0);
    let span = (t1 - t0) as f64 + 1.0;
    let m = opts.topology.n_sbs() as u64;
    let mut trace = DemandTrace::zeros(opts.n_slots, movies.len(), opts.topology.clone());
    let mut counts: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (u, movie, ts) in events {
        let slot = (((ts - t0) as f64 / span) * opts.n_slots as f64) as usize;
        *counts
            .entry((slot.min(opts.n_slots - 1), (u % m) as usize, movies[&movie]))
            .or_default() += 1.0;
    }
    for ((t, b, f), c) in counts {
        trace.set(t, b, f, c)?;
    }
    let (lo, hi) = opts.size_range;
    let catalog = Catalog::synthetic(movies.len(), lo, hi, false, 1.0, opts.seed)?;
    save_pair(out, &catalog, &trace)
}
