//! Time-slotted simulation of every sBS under one caching policy.
//!
//! Slot `T` is served with the strategy installed at the end of slot `T − 1`
//! and scored on raw demands. At the slot boundary each sBS computes the
//! strategy for `T + 1` from slots `≤ T` only.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::discrepancy::{bound_report, discrepancy_sup, empirical_h_max, mismatch_estimate};
use crate::error::{Error, Result};
use crate::federated::{federated_round, FederatedConfig, FederatedState};
use crate::lrfu::{lrfu_strategy, windowed_demand_estimate, LrfuConfig};
use crate::metrics::{log_ratio, ComparisonRow, ComparisonTable, Diagnostics, MetricsLog, MetricsRow, SbsKey};
use crate::optimizer::{
    prepare_windows, run_subroutine, AlphaMode, NeighborWeightMode, OptimizerConfig, SbsWindow, SubroutineOutput,
    WindowSpec,
};
use crate::regret::{realized_regret, DemandView, Window};
use crate::strategy::{hit, CachingStrategy};
use crate::trace::DemandTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Optimized `α` and `w`.
    Proposed,
    UniformWOptAlpha,
    UniformAlphaOptW,
    ZeroWOptAlpha,
    /// Plain average of the window's strategies over time and neighbors.
    UniformAlphaUniformW,
    Lrfu,
    Federated,
    UniformStatic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::Proposed,
        PolicyKind::UniformWOptAlpha,
        PolicyKind::UniformAlphaOptW,
        PolicyKind::ZeroWOptAlpha,
        PolicyKind::UniformAlphaUniformW,
        PolicyKind::Lrfu,
        PolicyKind::Federated,
        PolicyKind::UniformStatic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::UniformWOptAlpha => "uniform-w",
            PolicyKind::UniformAlphaOptW => "uniform-alpha",
            PolicyKind::ZeroWOptAlpha => "zero-w",
            PolicyKind::UniformAlphaUniformW => "uniform-alpha-w",
            PolicyKind::Lrfu => "lrfu",
            PolicyKind::Federated => "federated",
            PolicyKind::UniformStatic => "uniform-static",
        }
    }

    /// Whether the policy runs the weight optimizer.
    pub fn uses_subroutine(self) -> bool {
        !matches!(self, PolicyKind::Lrfu | PolicyKind::Federated | PolicyKind::UniformStatic)
    }

    /// Optimizer settings with this variant's frozen weights applied.
    pub fn optimizer_config(self, base: &OptimizerConfig) -> OptimizerConfig {
        let (alpha_mode, w_mode) = match self {
            PolicyKind::UniformWOptAlpha => (AlphaMode::Optimize, NeighborWeightMode::Uniform),
            PolicyKind::UniformAlphaOptW => (AlphaMode::Uniform, NeighborWeightMode::Optimize),
            PolicyKind::ZeroWOptAlpha => (AlphaMode::Optimize, NeighborWeightMode::SelfOnly),
            PolicyKind::UniformAlphaUniformW => (AlphaMode::Uniform, NeighborWeightMode::Uniform),
            _ => (base.alpha_mode, base.w_mode),
        };
        OptimizerConfig {
            alpha_mode,
            w_mode,
            ..*base
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = PolicyKind::ALL.iter().map(|p| p.name()).collect();
                Error::validation(format!("unknown policy {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Parses a comma-separated policy list; `all` expands to every variant.
pub fn parse_policies(list: &str) -> Result<Vec<PolicyKind>> {
    if list.trim() == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub window: WindowSpec,
    pub optimizer: OptimizerConfig,
    pub lrfu: LrfuConfig,
    pub federated: FederatedConfig,
    /// Slots between optimizer runs; strategies are kept in between.
    pub refresh_every: usize,
    pub delta: f64,
    /// Compute the per-window bound diagnostics for optimizer policies.
    pub diagnostics: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window: WindowSpec::default(),
            optimizer: OptimizerConfig::default(),
            lrfu: LrfuConfig::default(),
            federated: FederatedConfig::default(),
            refresh_every: 1,
            delta: 0.05,
            diagnostics: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.optimizer.validate()?;
        if self.lrfu.window == 0 || self.federated.window == 0 {
            return Err(Error::validation("lrfu.window and federated.window must be positive"));
        }
        if !(self.federated.lambda >= 0.0) {
            return Err(Error::validation("federated.lambda must be >= 0"));
        }
        if self.refresh_every == 0 {
            return Err(Error::validation("refresh_every must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::validation("delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Step-wise simulation of one policy.
pub struct Simulation<'a> {
    trace: &'a DemandTrace,
    catalog: &'a Catalog,
    policy: PolicyKind,
    cfg: SimConfig,
    optimizer: OptimizerConfig,
    installed: Vec<CachingStrategy>,
    pending: Vec<Option<Diagnostics>>,
    federated: FederatedState,
    cum: Vec<f64>,
    next_slot: usize,
    log: MetricsLog,
}

impl<'a> Simulation<'a> {
    pub fn new(trace: &'a DemandTrace, catalog: &'a Catalog, policy: PolicyKind, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        if trace.n_files() != catalog.n_files() {
            return Err(Error::validation(format!(
                "trace has {} files, catalog has {}",
                trace.n_files(),
                catalog.n_files()
            )));
        }
        let m = trace.n_sbs();
        Ok(Simulation {
            trace,
            catalog,
            policy,
            cfg: cfg.clone(),
            optimizer: policy.optimizer_config(&cfg.optimizer),
            installed: vec![CachingStrategy::uniform(catalog); m],
            pending: vec![None; m],
            federated: FederatedState::init(catalog, m),
            cum: vec![0.0; m],
            next_slot: 0,
            log: MetricsLog::default(),
        })
    }

    /// Strategies that will serve the next slot.
    pub fn installed(&self) -> &[CachingStrategy] {
        &self.installed
    }

    pub fn next_slot(&self) -> usize {
        self.next_slot
    }

    pub fn is_done(&self) -> bool {
        self.next_slot >= self.trace.n_slots()
    }

    /// Serves the next slot and installs the strategies for the one after.
    pub fn step(&mut self) -> Result<()> {
        let t = self.next_slot;
        if self.is_done() {
            return Err(Error::validation("simulation already finished"));
        }
        let sizes = self.catalog.sizes();
        for b in 0..self.trace.n_sbs() {
            let d = self.trace.slot_demand(b, t)?;
            let h = hit(self.installed[b].fractions(), d, sizes);
            self.cum[b] += h;
            self.log.rows.push(MetricsRow {
                slot: t,
                sbs: b,
                policy: self.policy.name().to_string(),
                cache_frac: self.catalog.cache_fraction(),
                hit: h,
                cum_hit: self.cum[b],
                diagnostics: self.pending[b].take(),
            });
        }
        if t + 1 < self.trace.n_slots() {
            self.install_next(t)?;
        }
        self.next_slot += 1;
        Ok(())
    }

    fn lrfu_all(&self, t: usize) -> Result<Vec<CachingStrategy>> {
        (0..self.trace.n_sbs())
            .map(|b| {
                let d = windowed_demand_estimate(self.trace, b, t + 1, self.cfg.lrfu.window, DemandView::Raw)?;
                lrfu_strategy(&d, self.catalog, &self.cfg.lrfu)
            })
            .collect()
    }

    /// Decides the strategies for slot `t + 1` from slots `0..=t`.
    fn install_next(&mut self, t: usize) -> Result<()> {
        match self.policy {
            PolicyKind::UniformStatic => {}
            PolicyKind::Lrfu => self.installed = self.lrfu_all(t)?,
            PolicyKind::Federated => {
                self.federated = federated_round(&self.federated, self.trace, self.catalog, t + 1, &self.cfg.federated)?;
                self.installed = self.federated.strategies.clone();
            }
            _ => {
                let first = self.cfg.window.first_full_slot();
                if t < first {
                    self.installed = self.lrfu_all(t)?;
                } else if (t - first) % self.cfg.refresh_every == 0 {
                    let windows = prepare_windows(self.trace, self.catalog, t, &self.cfg.window)?;
                    let out = run_subroutine(&windows, self.trace.topology(), self.catalog, &self.optimizer, false)?;
                    if self.cfg.diagnostics {
                        self.pending = self.diagnose(t, &windows, &out)?;
                    }
                    self.installed = out.strategies;
                }
            }
        }
        Ok(())
    }

    fn diagnose(&self, t: usize, windows: &[SbsWindow], out: &SubroutineOutput) -> Result<Vec<Option<Diagnostics>>> {
        let spec = &self.cfg.window;
        let window = Window::new(t, spec.tau)?;
        let topo = self.trace.topology();
        (0..self.trace.n_sbs())
            .map(|b| {
                let st = &out.states[b];
                let win = &windows[b];
                let regret = realized_regret(&win.sequence, self.trace, self.catalog, b, window, spec.view)?;
                let disc = discrepancy_sup(&win.psi, &st.alpha, self.catalog)?.0;
                let alpha_nb: Vec<Vec<f64>> = topo.neighbors(b).iter().map(|&nb| out.states[nb].alpha.clone()).collect();
                let mism = mismatch_estimate(&st.w_neighbors, &st.alpha, &alpha_nb, &win.h_self, &win.h_cross)?;
                let h_max = empirical_h_max(self.trace, self.catalog, b, window, spec.view);
                if h_max <= 0.0 {
                    return Ok(None);
                }
                let r = bound_report(&st.alpha, regret, disc, mism, h_max, self.cfg.delta)?;
                Ok(Some(Diagnostics {
                    regret_over_tau: regret / spec.tau as f64,
                    disc_hat: disc,
                    mismatch_hat: mism,
                    eps1: r.epsilon1,
                    eps2: r.epsilon2,
                    iters: out.iterations,
                }))
            })
            .collect()
    }

    pub fn run(mut self) -> Result<MetricsLog> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.log)
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }
}

pub fn run_simulation(
    trace: &DemandTrace,
    catalog: &Catalog,
    policy: PolicyKind,
    cfg: &SimConfig,
) -> Result<MetricsLog> {
    Simulation::new(trace, catalog, policy, cfg)?.run()
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One (policy, cache fraction) run.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: PolicyKind,
    pub cache_frac: f64,
    pub log: MetricsLog,
}

/// Runs every policy at every cache fraction on the same trace.
pub fn run_grid(
    trace: &DemandTrace,
    catalog: &Catalog,
    policies: &[PolicyKind],
    cache_fracs: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<PolicyRun>> {
    cfg.validate()?;
    let jobs: Vec<(PolicyKind, f64)> = cache_fracs
        .iter()
        .flat_map(|&c| policies.iter().map(move |&p| (p, c)))
        .collect();
    jobs.into_par_iter()
        .map(|(policy, cache_frac)| {
            let cat = catalog.with_cache_fraction(cache_frac)?;
            let log = run_simulation(trace, &cat, policy, cfg)?;
            Ok(PolicyRun {
                policy,
                cache_frac,
                log,
            })
        })
        .collect()
}

/// Per-sBS and summed average hits, with log ratios against `proposed`.
pub fn comparison_table(runs: &[PolicyRun]) -> ComparisonTable {
    let mut rows = Vec::new();
    for run in runs {
        let n_slots = run.log.n_slots().max(1) as f64;
        let reference = runs
            .iter()
            .find(|r| r.policy == PolicyKind::Proposed && r.cache_frac == run.cache_frac);
        let keys = (0..run.log.n_sbs()).map(SbsKey::Sbs).chain([SbsKey::Sum]);
        for key in keys {
            let total = |log: &MetricsLog| match key {
                SbsKey::Sbs(b) => log.total_hit(b),
                SbsKey::Sum => log.total_hit_all(),
            };
            let cum = total(&run.log);
            rows.push(ComparisonRow {
                policy: run.policy.name().to_string(),
                cache_frac: run.cache_frac,
                sbs: key,
                avg_hit: cum / n_slots,
                cum_hit: cum,
                log_ratio: reference.and_then(|r| log_ratio(total(&r.log), cum)),
            });
        }
    }
    ComparisonTable { rows }
}

pub fn compare_policies(
    trace: &DemandTrace,
    catalog: &Catalog,
    policies: &[PolicyKind],
    cache_fracs: &[f64],
    cfg: &SimConfig,
) -> Result<ComparisonTable> {
    Ok(comparison_table(&run_grid(trace, catalog, policies, cache_fracs, cfg)?))
}

/// Summed average hit of the federated policy per `(λ, cache fraction)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub cache_frac: f64,
    pub avg_hit: f64,
}

pub fn lambda_sweep(
    trace: &DemandTrace,
    catalog: &Catalog,
    lambdas: &[f64],
    cache_fracs: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<LambdaPoint>> {
    let jobs: Vec<(f64, f64)> = cache_fracs
        .iter()
        .flat_map(|&c| lambdas.iter().map(move |&l| (l, c)))
        .collect();
    jobs.into_par_iter()
        .map(|(lambda, cache_frac)| {
            let cat = catalog.with_cache_fraction(cache_frac)?;
            let mut c = cfg.clone();
            c.federated.lambda = lambda;
            let log = run_simulation(trace, &cat, PolicyKind::Federated, &c)?;
            Ok(LambdaPoint {
                lambda,
                cache_frac,
                avg_hit: log.total_hit_all() / log.n_slots().max(1) as f64,
            })
        })
        .collect()
}
