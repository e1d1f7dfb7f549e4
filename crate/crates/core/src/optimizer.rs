//! Joint ascent on the time weights `α`, the neighbor weights `w` and the
//! inner discrepancy iterates, run in lockstep across all sBSs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::discrepancy::{mismatch_estimate, psi_table, PsiTable};
use crate::error::{Error, Result};
use crate::regret::{hit_matrix, regret_sequence, DemandView, HitMatrix, RegretMode, Window};
use crate::strategy::{blend, project_budget, CachingStrategy, ProjectionMode};
use crate::topology::Topology;
use crate::trace::DemandTrace;

/// Direction of the `λ` term in the `α` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltySign {
    /// Shrink `α` toward uniform by at most `β λ` per coordinate.
    #[default]
    Penalize,
    /// `−λ (1{α<u} − 1{α≥u})`, which pushes `α` away from uniform.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    #[default]
    Optimize,
    /// Keep `α = 1/τ`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborWeightMode {
    #[default]
    Optimize,
    /// Keep `w` uniform over self and neighbors.
    Uniform,
    /// `w_self = 1`, neighbors ignored.
    SelfOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub a: f64,
    pub b_coef: f64,
    pub lambda: f64,
    pub eta0: f64,
    pub beta0: f64,
    pub gamma0: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub penalty_sign: PenaltySign,
    pub alpha_mode: AlphaMode,
    pub w_mode: NeighborWeightMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            a: 5.0,
            b_coef: 1.0,
            lambda: 0.05,
            eta0: 1.0,
            beta0: 0.01,
            gamma0: 0.4,
            max_iters: 500,
            tol: 1e-4,
            penalty_sign: PenaltySign::Penalize,
            alpha_mode: AlphaMode::Optimize,
            w_mode: NeighborWeightMode::Optimize,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("a", self.a), ("b_coef", self.b_coef), ("lambda", self.lambda)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        let pos = [("eta0", self.eta0), ("beta0", self.beta0), ("gamma0", self.gamma0), ("tol", self.tol)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be positive"));
        }
        Ok(())
    }

    /// `(η_k, β_k, γ_k)` for iteration `k ≥ 1`.
    pub fn step_sizes(&self, k: usize) -> (f64, f64, f64) {
        let s = (k.max(1) as f64).sqrt();
        (self.eta0 / s, self.beta0 / s, self.gamma0 / s)
    }
}

/// Optimizer state of one sBS.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub alpha: Vec<f64>,
    pub w_self: f64,
    /// In the order of the topology's neighbor list.
    pub w_neighbors: Vec<f64>,
    pub pi_inner: Vec<Vec<f64>>,
    pub iteration: usize,
}

pub fn init_state(catalog: &Catalog, tau: usize, n_neighbors: usize) -> Result<WeightState> {
    if tau == 0 {
        return Err(Error::validation("window must be positive"));
    }
    let pi0 = CachingStrategy::uniform(catalog).into_inner();
    let w = 1.0 / (n_neighbors + 1) as f64;
    Ok(WeightState {
        alpha: vec![1.0 / tau as f64; tau],
        w_self: w,
        w_neighbors: vec![w; n_neighbors],
        pi_inner: vec![pi0; tau],
        iteration: 0,
    })
}

fn signed_total(psi: &PsiTable, state: &WeightState) -> f64 {
    psi.gamma(&state.pi_inner)
        .iter()
        .zip(&state.alpha)
        .map(|(g, a)| g * a)
        .sum()
}

/// Sign-ascent step on `|Σ_t α_t Γ_t|`, then per-slot budget projection.
pub fn update_pi_inner(state: &mut WeightState, psi: &PsiTable, eta: f64, catalog: &Catalog) -> Result<()> {
    if psi.tau() != state.alpha.len() || psi.n_files() != catalog.n_files() {
        return Err(Error::validation("psi table does not match the optimizer state"));
    }
    let sign = if signed_total(psi, state) > 0.0 { 1.0 } else { -1.0 };
    for ((pi, row), a) in state.pi_inner.iter_mut().zip(psi.rows()).zip(&state.alpha) {
        let raw: Vec<f64> = pi.iter().zip(row).map(|(p, v)| p + 2.0 * eta * sign * a * v).collect();
        *pi = project_budget(&raw, catalog, ProjectionMode::OnlyIfExceeded)?
            .strategy
            .into_inner();
    }
    Ok(())
}

/// Clip at zero and rescale onto the simplex. An all-zero vector resets to
/// uniform.
pub fn project_simplex_clip(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        log::warn!("time weights clipped to zero; resetting to uniform");
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Gradient step on `α` followed by clipping and renormalization.
///
/// `own_hits[t]` is `ℛ_t(π^R_t)`, `gamma` the per-slot `Γ_t`,
/// `own_column_sums[t]` is `Σ_l ℛ_l(π^R_t)` on local demand and
/// `neighbor_weight` is `Σ_{b'} w_{b'}`.
pub fn update_alpha(
    state: &mut WeightState,
    own_hits: &[f64],
    gamma: &[f64],
    own_column_sums: &[f64],
    neighbor_weight: f64,
    cfg: &OptimizerConfig,
    beta: f64,
) {
    let tau = state.alpha.len();
    let u = 1.0 / tau as f64;
    let mism = cfg.b_coef * 2.0 / tau as f64 * neighbor_weight;
    for t in 0..tau {
        let grad = own_hits[t] - cfg.a * 2.0 * gamma[t].abs() - mism * own_column_sums[t];
        let a = state.alpha[t] + beta * grad;
        state.alpha[t] = match cfg.penalty_sign {
            PenaltySign::Penalize => {
                let shrink = beta * cfg.lambda;
                if (a - u).abs() <= shrink {
                    u
                } else {
                    a - shrink * (a - u).signum()
                }
            }
            PenaltySign::Literal => {
                let ind = if a < u { 1.0 } else { -1.0 };
                a - beta * cfg.lambda * ind
            }
        };
    }
    project_simplex_clip(&mut state.alpha);
}

/// Exact neighbor-weight normalization: neighbors keep their values when
/// they sum below one and self takes the rest; otherwise self drops to zero
/// and neighbors are rescaled.
pub fn normalize_w(w_self: &mut f64, w_neighbors: &mut [f64]) {
    w_neighbors.iter_mut().for_each(|w| *w = w.max(0.0));
    let total: f64 = w_neighbors.iter().sum();
    if total < 1.0 {
        *w_self = 1.0 - total;
    } else {
        *w_self = 0.0;
        w_neighbors.iter_mut().for_each(|w| *w /= total);
    }
}

/// Gradient step on the neighbor weights of one sBS.
pub fn update_w(
    state: &mut WeightState,
    alpha_self: &[f64],
    alpha_neighbors: &[Vec<f64>],
    h_self: &HitMatrix,
    h_cross: &[HitMatrix],
    b_coef: f64,
    gamma_step: f64,
) {
    let tau = h_self.tau() as f64;
    let own = h_self.weighted_total(alpha_self);
    for ((w, a), h) in state.w_neighbors.iter_mut().zip(alpha_neighbors).zip(h_cross) {
        *w -= 2.0 * gamma_step / tau * b_coef * (own - h.weighted_total(a));
    }
    normalize_w(&mut state.w_self, &mut state.w_neighbors);
}

/// Window data of one sBS.
#[derive(Debug, Clone)]
pub struct SbsWindow {
    /// Regret-minimizing strategies `π^R_t` of this sBS.
    pub sequence: Vec<CachingStrategy>,
    pub psi: PsiTable,
    /// Own sequence on own demand.
    pub h_self: HitMatrix,
    /// Each neighbor's sequence on this sBS's demand, in neighbor order.
    pub h_cross: Vec<HitMatrix>,
}

/// Demand basis of the cross hit matrices behind the mismatch estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MismatchBasis {
    /// Neighbor strategies scored on this sBS's demand.
    #[default]
    Local,
    /// Neighbor strategies scored on the neighbor's own demand.
    Neighbor,
}

/// How window data is assembled from the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub tau: usize,
    pub tau1: usize,
    pub tau2: usize,
    pub regret_mode: RegretMode,
    /// Demand form used for every quantity the optimizer sees.
    pub view: DemandView,
    pub mismatch_basis: MismatchBasis,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            tau: 10,
            tau1: 5,
            tau2: 5,
            regret_mode: RegretMode::PerSlotOpt,
            view: DemandView::Normalized,
            mismatch_basis: MismatchBasis::Local,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.tau1 == 0 || self.tau2 == 0 {
            return Err(Error::validation("tau, tau1 and tau2 must be positive"));
        }
        Ok(())
    }

    /// First slot whose window (ending there) has all the history it needs.
    pub fn first_full_slot(&self) -> usize {
        (self.tau + self.tau2).max(self.tau1) - 1
    }
}

/// Each sBS's inbox: its neighbors' payloads in ascending sBS order.
pub fn exchange<T: Clone>(topology: &Topology, payloads: &[T]) -> Result<Vec<Vec<(usize, T)>>> {
    if payloads.len() != topology.n_sbs() {
        return Err(Error::validation(format!(
            "expected {} payloads, got {}",
            topology.n_sbs(),
            payloads.len()
        )));
    }
    Ok((0..topology.n_sbs())
        .map(|b| {
            topology
                .neighbors(b)
                .iter()
                .map(|&nb| (nb, payloads[nb].clone()))
                .collect()
        })
        .collect())
}

/// Builds every sBS's window data for the window of `spec.tau` slots ending
/// at `end`.
pub fn prepare_windows(
    trace: &DemandTrace,
    catalog: &Catalog,
    end: usize,
    spec: &WindowSpec,
) -> Result<Vec<SbsWindow>> {
    use rayon::prelude::*;
    spec.validate()?;
    let window = Window::new(end, spec.tau)?;
    let m = trace.n_sbs();
    let sequences: Vec<Vec<CachingStrategy>> = (0..m)
        .into_par_iter()
        .map(|b| regret_sequence(trace, catalog, b, window, spec.regret_mode))
        .collect::<Result<_>>()?;
    let inboxes = exchange(trace.topology(), &sequences)?;
    inboxes
        .into_par_iter()
        .enumerate()
        .map(|(b, inbox)| {
            let psi = psi_table(trace, catalog, b, window, spec.tau1, spec.tau2, spec.view)?;
            let h_self = hit_matrix(&sequences[b], trace, catalog, b, window, spec.view)?;
            let h_cross = inbox
                .iter()
                .map(|(nb, seq)| {
                    let basis = match spec.mismatch_basis {
                        MismatchBasis::Local => b,
                        MismatchBasis::Neighbor => *nb,
                    };
                    hit_matrix(seq, trace, catalog, basis, window, spec.view)
                })
                .collect::<Result<_>>()?;
            Ok(SbsWindow {
                sequence: sequences[b].clone(),
                psi,
                h_self,
                h_cross,
            })
        })
        .collect()
}

/// One row of the optional per-iteration dump.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub sbs: usize,
    pub objective: f64,
    pub alpha: Vec<f64>,
    pub w_self: f64,
    pub w_neighbors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SubroutineOutput {
    pub states: Vec<WeightState>,
    pub strategies: Vec<CachingStrategy>,
    pub iterations: usize,
    pub converged: bool,
    /// `objective[k][b]`, starting with the initial state.
    pub objective: Vec<Vec<f64>>,
    pub history: Vec<IterationRecord>,
}

/// `Σ α_t ℛ_t − a D̂ − b M̂ − λ ‖α − u‖₁` for sBS `b`.
pub fn surrogate_objective(
    b: usize,
    states: &[WeightState],
    windows: &[SbsWindow],
    topology: &Topology,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    let st = &states[b];
    let win = &windows[b];
    let tau = st.alpha.len();
    let u = 1.0 / tau as f64;
    let own: f64 = win.h_self.diagonal().iter().zip(&st.alpha).map(|(h, a)| h * a).sum();
    let d_hat = signed_total(&win.psi, st).abs();
    let alpha_nb: Vec<Vec<f64>> = topology.neighbors(b).iter().map(|&nb| states[nb].alpha.clone()).collect();
    let m_hat = mismatch_estimate(&st.w_neighbors, &st.alpha, &alpha_nb, &win.h_self, &win.h_cross)?;
    let dev: f64 = st.alpha.iter().map(|a| (a - u).abs()).sum();
    Ok(own - cfg.a * d_hat - cfg.b_coef * m_hat - cfg.lambda * dev)
}

fn initial_state(catalog: &Catalog, tau: usize, n_nb: usize, cfg: &OptimizerConfig) -> Result<WeightState> {
    let mut st = init_state(catalog, tau, n_nb)?;
    if cfg.w_mode == NeighborWeightMode::SelfOnly {
        st.w_self = 1.0;
        st.w_neighbors.iter_mut().for_each(|w| *w = 0.0);
    }
    Ok(st)
}

/// Runs the lockstep ascent for all sBSs and returns each sBS's blended
/// strategy for the next slot.
pub fn run_subroutine(
    windows: &[SbsWindow],
    topology: &Topology,
    catalog: &Catalog,
    cfg: &OptimizerConfig,
    record_history: bool,
) -> Result<SubroutineOutput> {
    run_subroutine_observed(windows, topology, catalog, cfg, record_history, |_, _| {})
}

/// As [`run_subroutine`], calling `observer(k, states)` after every
/// iteration `k` (and once with `k = 0` for the initial states).
pub fn run_subroutine_observed(
    windows: &[SbsWindow],
    topology: &Topology,
    catalog: &Catalog,
    cfg: &OptimizerConfig,
    record_history: bool,
    mut observer: impl FnMut(usize, &[WeightState]),
) -> Result<SubroutineOutput> {
    cfg.validate()?;
    let m = topology.n_sbs();
    if windows.len() != m {
        return Err(Error::validation(format!("expected window data for {m} sBSs, got {}", windows.len())));
    }
    let tau = windows.first().map_or(0, |w| w.sequence.len());
    for (b, w) in windows.iter().enumerate() {
        if w.sequence.len() != tau || w.psi.tau() != tau || w.h_self.tau() != tau {
            return Err(Error::validation(format!("sBS {b} window data is not over {tau} slots")));
        }
        if w.h_cross.len() != topology.neighbors(b).len() {
            return Err(Error::validation(format!("sBS {b} needs one cross hit matrix per neighbor")));
        }
    }
    let mut states: Vec<WeightState> = (0..m)
        .map(|b| initial_state(catalog, tau, topology.neighbors(b).len(), cfg))
        .collect::<Result<_>>()?;
    let diag: Vec<Vec<f64>> = windows.iter().map(|w| w.h_self.diagonal()).collect();
    let colsums: Vec<Vec<f64>> = windows.iter().map(|w| w.h_self.column_sums()).collect();

    let objective_row = |states: &[WeightState]| -> Result<Vec<f64>> {
        (0..m).map(|b| surrogate_objective(b, states, windows, topology, cfg)).collect()
    };
    let mut objective = vec![objective_row(&states)?];
    let mut history = Vec::new();
    let mut record = |k: usize, states: &[WeightState], obj: &[f64]| {
        if record_history {
            for (b, st) in states.iter().enumerate() {
                history.push(IterationRecord {
                    iter: k,
                    sbs: b,
                    objective: obj[b],
                    alpha: st.alpha.clone(),
                    w_self: st.w_self,
                    w_neighbors: st.w_neighbors.clone(),
                });
            }
        }
    };
    record(0, &states, &objective[0]);
    observer(0, &states);

    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        let (eta, beta, gamma_step) = cfg.step_sizes(k);
        let prev = &states;
        let next: Vec<WeightState> = (0..m)
            .map(|b| -> Result<WeightState> {
                let win = &windows[b];
                let mut st = prev[b].clone();
                update_pi_inner(&mut st, &win.psi, eta, catalog)?;
                if cfg.alpha_mode == AlphaMode::Optimize {
                    let gamma = win.psi.gamma(&st.pi_inner);
                    let nb_weight: f64 = prev[b].w_neighbors.iter().sum();
                    update_alpha(&mut st, &diag[b], &gamma, &colsums[b], nb_weight, cfg, beta);
                }
                if cfg.w_mode == NeighborWeightMode::Optimize && !st.w_neighbors.is_empty() {
                    let alpha_nb: Vec<Vec<f64>> =
                        topology.neighbors(b).iter().map(|&nb| prev[nb].alpha.clone()).collect();
                    update_w(&mut st, &prev[b].alpha, &alpha_nb, &win.h_self, &win.h_cross, cfg.b_coef, gamma_step);
                }
                st.iteration = k;
                Ok(st)
            })
            .collect::<Result<_>>()?;
        let change = states
            .iter()
            .zip(&next)
            .map(|(a, b)| weight_change(a, b))
            .fold(0.0, f64::max);
        states = next;
        iterations = k;
        observer(k, &states);
        let obj = objective_row(&states)?;
        record(k, &states, &obj);
        objective.push(obj);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("weight optimizer stopped at max_iters = {}", cfg.max_iters);
    }

    let inner: Vec<CachingStrategy> = windows
        .iter()
        .zip(&states)
        .map(|(w, st)| blend(&w.sequence.iter().collect::<Vec<_>>(), &st.alpha))
        .collect::<Result<_>>()?;
    let strategies = (0..m)
        .map(|b| {
            let st = &states[b];
            let mut parts = vec![&inner[b]];
            let mut weights = vec![st.w_self];
            for (&nb, &w) in topology.neighbors(b).iter().zip(&st.w_neighbors) {
                parts.push(&inner[nb]);
                weights.push(w);
            }
            let mixed = blend(&parts, &weights)?;
            Ok(project_budget(mixed.fractions(), catalog, ProjectionMode::OnlyIfExceeded)?.strategy)
        })
        .collect::<Result<_>>()?;
    Ok(SubroutineOutput {
        states,
        strategies,
        iterations,
        converged,
        objective,
        history,
    })
}

fn weight_change(a: &WeightState, b: &WeightState) -> f64 {
    let alpha = a.alpha.iter().zip(&b.alpha).map(|(x, y)| (x - y).abs());
    let w = a.w_neighbors.iter().zip(&b.w_neighbors).map(|(x, y)| (x - y).abs());
    alpha.chain(w).chain([(a.w_self - b.w_self).abs()]).fold(0.0, f64::max)
}

/// Writes `iter,sbs,objective,alpha_*,w_self,w_*`; short rows are padded.
pub fn write_history<W: Write>(history: &[IterationRecord], out: W) -> Result<()> {
    let tau = history.iter().map(|r| r.alpha.len()).max().unwrap_or(0);
    let deg = history.iter().map(|r| r.w_neighbors.len()).max().unwrap_or(0);
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["iter".to_string(), "sbs".into(), "objective".into()];
    header.extend((0..tau).map(|t| format!("alpha_{t}")));
    header.push("w_self".into());
    header.extend((0..deg).map(|j| format!("w_{j}")));
    let to_err = |e: csv::Error| Error::validation(format!("writing optimizer history: {e}"));
    wr.write_record(&header).map_err(to_err)?;
    for r in history {
        let mut row = vec![r.iter.to_string(), r.sbs.to_string(), r.objective.to_string()];
        row.extend((0..tau).map(|t| r.alpha.get(t).map_or(String::new(), f64::to_string)));
        row.push(r.w_self.to_string());
        row.extend((0..deg).map(|j| r.w_neighbors.get(j).map_or(String::new(), f64::to_string)));
        wr.write_record(&row).map_err(to_err)?;
    }
    wr.flush().map_err(|e| Error::validation(format!("writing optimizer history: {e}")))?;
    Ok(())
}
