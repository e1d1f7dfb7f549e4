//! Federated proximal caching: each sBS minimizes its estimated cache miss
//! plus `λ‖π − π̄‖²`, where `π̄` averages the neighbors' previous strategies.
//!
//! The per-round problem is a separable strictly convex QP with box bounds and
//! one budget constraint. Its solution clamps `π̄ + ℒ∘(d̂ − μ)/(2λ)` to `[0,1]`
//! with the budget multiplier `μ ≥ 0` found by bisection.

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::lrfu::windowed_demand_estimate;
use crate::regret::DemandView;
use crate::strategy::{per_slot_optimal, used_budget, CachingStrategy};
use crate::trace::DemandTrace;

const BISECTION_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederatedConfig {
    pub lambda: f64,
    /// Demand-estimate window.
    pub window: usize,
    /// Average the sBS's own previous strategy into `π̄` as well.
    pub include_self: bool,
    /// Demand form fed to the miss estimate.
    pub demand_view: DemandView,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        FederatedConfig {
            lambda: 2.0,
            window: 10,
            include_self: false,
            demand_view: DemandView::Raw,
        }
    }
}

/// Coordinate-wise mean of the received strategies.
pub fn neighbor_average(received: &[&CachingStrategy]) -> Result<CachingStrategy> {
    let first = received
        .first()
        .ok_or_else(|| Error::validation("no neighbor strategies to average"))?;
    let n = first.len();
    if received.iter().any(|s| s.len() != n) {
        return Err(Error::validation("neighbor strategies differ in length"));
    }
    let k = received.len() as f64;
    let mut out = vec![0.0; n];
    for s in received {
        for (o, x) in out.iter_mut().zip(s.fractions()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o = (*o / k).clamp(0.0, 1.0));
    Ok(CachingStrategy::from_feasible(out))
}

/// `Σ_f (1 − π_f) ℒ_f d̂_f + λ ‖π − π̄‖²`
pub fn federated_objective(pi: &[f64], estimate: &[f64], anchor: &[f64], lambda: f64, catalog: &Catalog) -> f64 {
    let sizes = catalog.sizes();
    let miss: f64 = (0..pi.len()).map(|f| (1.0 - pi[f]) * sizes[f] * estimate[f]).sum();
    let prox: f64 = pi.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum();
    miss + lambda * prox
}

fn clamped(estimate: &[f64], anchor: &[f64], sizes: &[f64], lambda: f64, mu: f64) -> Vec<f64> {
    (0..estimate.len())
        .map(|f| (anchor[f] + sizes[f] * (estimate[f] - mu) / (2.0 * lambda)).clamp(0.0, 1.0))
        .collect()
}

/// Exact minimizer of the proximal miss objective over the feasible set.
pub fn federated_solve(
    estimate: &[f64],
    anchor: &CachingStrategy,
    lambda: f64,
    catalog: &Catalog,
) -> Result<CachingStrategy> {
    let n = catalog.n_files();
    if estimate.len() != n || anchor.len() != n {
        return Err(Error::validation("estimate, anchor and catalog must share N"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::validation(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        log::warn!("lambda = 0: the objective is linear, falling back to the per-slot optimum");
        return per_slot_optimal(estimate, catalog);
    }
    if let Some((f, d)) = estimate.iter().enumerate().find(|(_, d)| !(**d >= 0.0)) {
        return Err(Error::validation(format!("negative demand estimate {d} for file {f}")));
    }
    let sizes = catalog.sizes();
    let budget = catalog.budget();
    let tol = catalog.budget_tolerance();
    let anchor = anchor.fractions();

    let free = clamped(estimate, anchor, sizes, lambda, 0.0);
    if used_budget(&free, sizes) <= budget {
        return Ok(CachingStrategy::from_feasible(free));
    }
    // Σ π(μ) ℒ is continuous and non-increasing in μ; zero at `hi`.
    let mut lo = 0.0;
    let mut hi = (0..n)
        .map(|f| estimate[f] + 2.0 * lambda * anchor[f] / sizes[f])
        .fold(0.0, f64::max);
    let mut best = None;
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let pi = clamped(estimate, anchor, sizes, lambda, mid);
        let gap = used_budget(&pi, sizes) - budget;
        if gap.abs() <= tol {
            best = Some(pi);
            break;
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let pi = best.unwrap_or_else(|| clamped(estimate, anchor, sizes, lambda, hi));
    CachingStrategy::new(pi, catalog)
}

/// Strategies installed at every sBS.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedState {
    pub strategies: Vec<CachingStrategy>,
}

impl FederatedState {
    /// Every sBS starts from the uniform fraction `C / Σℒ`.
    pub fn init(catalog: &Catalog, n_sbs: usize) -> Self {
        FederatedState {
            strategies: vec![CachingStrategy::uniform(catalog); n_sbs],
        }
    }
}

/// Anchor for sBS `b`: mean of the neighbors' (and optionally its own)
/// previous strategies; an isolated sBS anchors to itself.
pub fn anchor_for(state: &FederatedState, trace: &DemandTrace, b: usize, include_self: bool) -> Result<CachingStrategy> {
    let mut received: Vec<&CachingStrategy> = trace
        .topology()
        .neighbors(b)
        .iter()
        .map(|&nb| &state.strategies[nb])
        .collect();
    if include_self || received.is_empty() {
        received.push(&state.strategies[b]);
    }
    neighbor_average(&received)
}

/// Strategy of sBS `b` for slot `t`, from history before `t` and the
/// strategies in `state`.
pub fn federated_step(
    state: &FederatedState,
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    t: usize,
    cfg: &FederatedConfig,
) -> Result<CachingStrategy> {
    let estimate = windowed_demand_estimate(trace, b, t, cfg.window, cfg.demand_view)?;
    let anchor = anchor_for(state, trace, b, cfg.include_self)?;
    federated_solve(&estimate, &anchor, cfg.lambda, catalog)
}

/// One exchange round: all sBSs read the previous strategies, then all
/// install their new ones.
pub fn federated_round(
    state: &FederatedState,
    trace: &DemandTrace,
    catalog: &Catalog,
    t: usize,
    cfg: &FederatedConfig,
) -> Result<FederatedState> {
    if t == 0 {
        return Err(Error::validation("federated rounds start at slot 1"));
    }
    let strategies = (0..trace.n_sbs())
        .map(|b| federated_step(state, trace, catalog, b, t, cfg))
        .collect::<Result<_>>()?;
    Ok(FederatedState { strategies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn cat(sizes: &[f64], c: f64) -> Catalog {
        Catalog::new(sizes.to_vec(), c).unwrap()
    }

    #[test]
    fn neighbor_average_examples() {
        let c = cat(&[1.0, 1.0], 1.0);
        let s = |v: Vec<f64>| CachingStrategy::new(v, &c).unwrap();
        let (a, b, d) = (s(vec![1.0, 0.0]), s(vec![0.0, 1.0]), s(vec![0.2, 0.4]));
        assert_eq!(neighbor_average(&[&a, &b]).unwrap().fractions(), &[0.5, 0.5]);
        assert_eq!(neighbor_average(&[&d]).unwrap(), d);
        let e = s(vec![0.3, 0.2]);
        let m = neighbor_average(&[&a, &d, &e]).unwrap();
        assert!((m.fractions()[0] - 0.5).abs() < 1e-15);
        assert!((m.fractions()[1] - 0.2).abs() < 1e-15);
        assert!(neighbor_average(&[]).is_err());
    }

    #[test]
    fn solve_single_file_by_hand() {
        let c = cat(&[1.0], 1.0);
        let zero = CachingStrategy::zeros(1);
        assert_eq!(federated_solve(&[2.0], &zero, 1.0, &c).unwrap().fractions(), &[1.0]);
        assert_eq!(federated_solve(&[2.0], &zero, 2.0, &c).unwrap().fractions(), &[0.5]);
        assert!(federated_solve(&[2.0], &zero, -1.0, &c).is_err());
        // linear fallback
        assert_eq!(federated_solve(&[2.0], &zero, 0.0, &c).unwrap().fractions(), &[1.0]);
    }

    #[test]
    fn huge_lambda_returns_anchor() {
        let c = cat(&[3.0, 5.0, 2.0], 4.0);
        let anchor = CachingStrategy::new(vec![0.5, 0.2, 0.5], &c).unwrap();
        let pi = federated_solve(&[10.0, 1.0, 3.0], &anchor, 1e9, &c).unwrap();
        for (a, b) in pi.fractions().iter().zip(anchor.fractions()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn binding_budget_residual() {
        let c = cat(&[3.0, 5.0, 2.0, 7.0], 6.0);
        let pi = federated_solve(&[10.0, 8.0, 3.0, 9.0], &CachingStrategy::zeros(4), 0.5, &c).unwrap();
        assert!((pi.used_budget(&c) - 6.0).abs() <= 1e-9 * 6.0);
    }

    #[test]
    fn round_keeps_symmetric_sbs_identical() {
        let topo = Topology::complete(3);
        let tr = DemandTrace::from_fn(6, 4, topo, |t, _, f| ((t + 2 * f) % 5) as f64).unwrap();
        let c = cat(&[1.0, 2.0, 3.0, 4.0], 4.0);
        let cfg = FederatedConfig::default();
        let mut state = FederatedState::init(&c, 3);
        for t in 1..6 {
            state = federated_round(&state, &tr, &c, t, &cfg).unwrap();
            assert_eq!(state.strategies[0], state.strategies[1]);
            assert_eq!(state.strategies[1], state.strategies[2]);
        }
    }
}
