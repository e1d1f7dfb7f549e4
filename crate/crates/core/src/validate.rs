//! Self-checks behind `distcache validate`: the closed-form solvers against
//! brute-force grids, and a Monte-Carlo check of the LRFU bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::error::Result;
use crate::federated::federated_solve;
use crate::lrfu::{lrfu_bound_diagnostic, lrfu_strategy, LrfuConfig};
use crate::strategy::{hit_rate, per_slot_optimal, project_budget, CachingStrategy, ProjectionMode};
use crate::synth::{generate_from_model, PopularityModel, SyntheticConfig};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    pub instances: usize,
    pub mc_windows: usize,
    pub delta: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            seed: 0,
            instances: 200,
            mc_windows: 500,
            delta: 0.05,
        }
    }
}

pub type KnapsackSolver<'a> = &'a dyn Fn(&[f64], &Catalog) -> Result<CachingStrategy>;

/// Visits every point of `{0, step, …, 1}^n`.
fn for_grid(n: usize, step: f64, mut visit: impl FnMut(&[f64])) {
    let k = (1.0 / step).round() as usize;
    let mut idx = vec![0usize; n];
    let mut pt = vec![0.0; n];
    loop {
        for (p, i) in pt.iter_mut().zip(&idx) {
            *p = *i as f64 / k as f64;
        }
        visit(&pt);
        let mut j = 0;
        while j < n && idx[j] == k {
            idx[j] = 0;
            j += 1;
        }
        if j == n {
            return;
        }
        idx[j] += 1;
    }
}

fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> Result<(Catalog, Vec<f64>)> {
    let n = rng.random_range(1..=max_n);
    let sizes: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let demand: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let total: f64 = sizes.iter().sum();
    let catalog = Catalog::new(sizes, rng.random_range(0.1..1.0) * total)?;
    Ok((catalog, demand))
}

/// Knapsack solver output against the best feasible grid point. Rounding any
/// feasible point down to the grid keeps it feasible and loses at most
/// `step · Σ d ℒ`, which is the allowed gap.
pub fn check_knapsack(name: &str, solver: KnapsackSolver, opts: &ValidateOptions) -> Result<CheckResult> {
    const STEP: f64 = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..opts.instances {
        let (catalog, demand) = random_instance(&mut rng, 4)?;
        let got = solver(&demand, &catalog)?;
        let exact = hit_rate(&got, &demand, &catalog)?;
        let mut best = 0.0f64;
        for_grid(catalog.n_files(), STEP, |pt| {
            let used: f64 = pt.iter().zip(catalog.sizes()).map(|(p, l)| p * l).sum();
            if used <= catalog.budget() {
                best = best.max(pt.iter().zip(catalog.sizes()).zip(&demand).map(|((p, l), d)| p * l * d).sum());
            }
        });
        let slack: f64 = STEP * catalog.sizes().iter().zip(&demand).map(|(l, d)| l * d).sum::<f64>();
        // Grid points are feasible, so the solver may not fall below the grid.
        let shortfall = best - exact;
        worst = worst.max((exact - best).abs() / slack.max(f64::MIN_POSITIVE));
        if !got.is_feasible(&catalog) || shortfall > 1e-9 * best.max(1.0) || exact - best > slack {
            failures += 1;
        }
    }
    Ok(CheckResult {
        name: name.into(),
        passed: failures == 0,
        detail: format!(
            "{failures}/{} instances outside the grid slack, worst |solver - grid| {:.3} of slack",
            opts.instances, worst
        ),
    })
}

/// Federated QP against the best grid point.
pub fn check_qp(opts: &ValidateOptions) -> Result<CheckResult> {
    const STEP: f64 = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x51);
    let mut failures = 0;
    let mut worst_residual = 0.0f64;
    let mut worst_gap = 0.0f64;
    for _ in 0..opts.instances {
        let (catalog, estimate) = random_instance(&mut rng, 3)?;
        let n = catalog.n_files();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let anchor = project_budget(&raw, &catalog, ProjectionMode::OnlyIfExceeded)?.strategy;
        let lambda = rng.random_range(0.1..5.0);
        let pi = federated_solve(&estimate, &anchor, lambda, &catalog)?;
        let objective = |p: &[f64]| {
            (0..n)
                .map(|f| (1.0 - p[f]) * catalog.size(f) * estimate[f] + lambda * (p[f] - anchor.fractions()[f]).powi(2))
                .sum::<f64>()
        };
        let exact = objective(pi.fractions());
        let mut best = f64::INFINITY;
        for_grid(n, STEP, |pt| {
            let used: f64 = pt.iter().zip(catalog.sizes()).map(|(p, l)| p * l).sum();
            if used <= catalog.budget() {
                best = best.min(objective(pt));
            }
        });
        let slack = 1e-3
            + STEP
                * (0..n)
                    .map(|f| catalog.size(f) * estimate[f] + lambda * (2.0 + STEP))
                    .sum::<f64>();
        worst_gap = worst_gap.max(best - exact);
        let used = pi.used_budget(&catalog);
        let unconstrained_fits = (0..n)
            .map(|f| (anchor.fractions()[f] + catalog.size(f) * estimate[f] / (2.0 * lambda)).clamp(0.0, 1.0) * catalog.size(f))
            .sum::<f64>()
            <= catalog.budget();
        let residual = if unconstrained_fits { 0.0 } else { (used - catalog.budget()).abs() };
        worst_residual = worst_residual.max(residual / catalog.budget());
        if !pi.is_feasible(&catalog) || exact > best + 1e-12 || best - exact > slack || residual > 1e-9 * catalog.budget() {
            failures += 1;
        }
    }
    Ok(CheckResult {
        name: "federated QP vs grid".into(),
        passed: failures == 0,
        detail: format!(
            "{failures}/{} failures, largest grid excess {worst_gap:.2e}, largest relative budget residual {worst_residual:.2e}",
            opts.instances
        ),
    })
}

/// Violation frequency of the LRFU bound over independent i.i.d. traces, with
/// the best expected hit computed from the known request distribution.
pub fn check_lrfu_bound(opts: &ValidateOptions) -> Result<CheckResult> {
    const TAU: usize = 10;
    const N_FILES: usize = 50;
    let topology = Topology::ring(5);
    let catalog = Catalog::synthetic(N_FILES, 10.0, 100.0, false, 0.2, opts.seed)?;
    let mut violations = 0;
    for w in 0..opts.mc_windows {
        let cfg = SyntheticConfig {
            requests_per_slot: 1000,
            seed: opts.seed.wrapping_mul(1_000_003).wrapping_add(w as u64),
            ..SyntheticConfig::default()
        };
        let model = PopularityModel::new(N_FILES, topology.n_sbs(), &cfg)?;
        let trace = generate_from_model(&model, N_FILES, &topology, 2 * TAU)?;
        let b = w % topology.n_sbs();
        let expected = model.expected_demand(2 * TAU, b);
        let sup = hit_rate(&per_slot_optimal(&expected, &catalog)?, &expected, &catalog)?;
        if lrfu_bound_diagnostic(&trace, &catalog, b, 2 * TAU, TAU, opts.delta, Some(sup))?.violated() {
            violations += 1;
        }
    }
    let freq = violations as f64 / opts.mc_windows.max(1) as f64;
    Ok(CheckResult {
        name: "LRFU bound Monte Carlo".into(),
        passed: freq <= opts.delta + 0.05,
        detail: format!(
            "violation frequency {freq:.3} over {} windows (limit {:.3})",
            opts.mc_windows,
            opts.delta + 0.05
        ),
    })
}

/// Runs every check with the shipped solvers.
pub fn run_checks(opts: &ValidateOptions) -> Result<Vec<CheckResult>> {
    let lrfu_cfg = LrfuConfig::default();
    let lrfu = move |d: &[f64], c: &Catalog| lrfu_strategy(d, c, &lrfu_cfg);
    Ok(vec![
        check_knapsack("per-slot optimum vs grid", &per_slot_optimal, opts)?,
        check_knapsack("fractional LRFU vs grid", &lrfu, opts)?,
        check_qp(opts)?,
        check_lrfu_bound(opts)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_visits_every_point() {
        let mut n = 0;
        for_grid(2, 0.5, |_| n += 1);
        assert_eq!(n, 9);
    }

    #[test]
    fn perturbed_knapsack_fails() {
        let opts = ValidateOptions {
            instances: 20,
            ..Default::default()
        };
        let bad = |d: &[f64], c: &Catalog| {
            let mut pi = per_slot_optimal(d, c)?.into_inner();
            pi.iter_mut().for_each(|x| *x *= 0.5);
            CachingStrategy::new(pi, c)
        };
        let r = check_knapsack("perturbed", &bad, &opts).unwrap();
        assert!(!r.passed, "{r}");
        assert!(check_knapsack("exact", &per_slot_optimal, &opts).unwrap().passed);
    }
}
