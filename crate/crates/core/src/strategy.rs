//! Caching strategies: fraction vectors `π ∈ [0,1]^N` with `Σ π_f ℒ_f ≤ C`.
//!
//! Hit rate is linear in `π`, so the per-slot optimum over the feasible set is
//! a fractional knapsack whose value density is the demand itself.

use std::cmp::Ordering;

use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// Feasible fraction vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingStrategy {
    fractions: Vec<f64>,
}

impl CachingStrategy {
    /// Validates `0 ≤ π_f ≤ 1` and the budget (with `1e-9·C` slack).
    pub fn new(fractions: Vec<f64>, catalog: &Catalog) -> Result<Self> {
        check_len(fractions.len(), catalog.n_files())?;
        if let Some((f, x)) = fractions
            .iter()
            .enumerate()
            .find(|(_, x)| !(**x >= 0.0 && **x <= 1.0))
        {
            return Err(Error::validation(format!(
                "fraction {x} for file {f} outside [0, 1]"
            )));
        }
        let used = used_budget(&fractions, catalog.sizes());
        if used > catalog.budget() + catalog.budget_tolerance() {
            return Err(Error::validation(format!(
                "strategy uses {used} of budget {}",
                catalog.budget()
            )));
        }
        Ok(CachingStrategy { fractions })
    }

    /// Wraps a vector already known to be feasible (e.g. a convex combination
    /// of feasible strategies).
    pub(crate) fn from_feasible(fractions: Vec<f64>) -> Self {
        CachingStrategy { fractions }
    }

    pub fn zeros(n_files: usize) -> Self {
        CachingStrategy {
            fractions: vec![0.0; n_files],
        }
    }

    /// Every file cached to the same fraction `min(1, C / Σℒ)`.
    pub fn uniform(catalog: &Catalog) -> Self {
        let x = (catalog.budget() / catalog.total_size()).min(1.0);
        CachingStrategy {
            fractions: vec![x; catalog.n_files()],
        }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn used_budget(&self, catalog: &Catalog) -> f64 {
        used_budget(&self.fractions, catalog.sizes())
    }

    /// Checks the strategy invariants against `catalog`.
    pub fn is_feasible(&self, catalog: &Catalog) -> bool {
        self.fractions.len() == catalog.n_files()
            && self.fractions.iter().all(|x| (0.0..=1.0).contains(x))
            && self.used_budget(catalog) <= catalog.budget() + catalog.budget_tolerance()
    }
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "dimension mismatch: got {got} entries, expected {want}"
        )))
    }
}

pub(crate) fn used_budget(fractions: &[f64], sizes: &[f64]) -> f64 {
    fractions.iter().zip(sizes).map(|(x, l)| x * l).sum()
}

/// `Σ_f d_f π_f ℒ_f` without dimension checks.
pub(crate) fn hit(fractions: &[f64], demand: &[f64], sizes: &[f64]) -> f64 {
    fractions
        .iter()
        .zip(demand)
        .zip(sizes)
        .map(|((x, d), l)| x * d * l)
        .sum()
}

/// Demand-weighted cached mass `Σ_f d_f π_f ℒ_f`.
pub fn hit_rate(strategy: &CachingStrategy, demand: &[f64], catalog: &Catalog) -> Result<f64> {
    check_len(strategy.len(), catalog.n_files())?;
    check_len(demand.len(), catalog.n_files())?;
    Ok(hit(strategy.fractions(), demand, catalog.sizes()))
}

/// File indices sorted by `keys` descending, ties to the lower index.
pub(crate) fn order_desc(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Greedy fractional fill in descending key order. With `positive_only`,
/// files whose key is not strictly positive are left at zero.
pub(crate) fn greedy_fill(keys: &[f64], catalog: &Catalog, positive_only: bool) -> Vec<f64> {
    let sizes = catalog.sizes();
    let mut out = vec![0.0; keys.len()];
    let mut left = catalog.budget();
    for f in order_desc(keys) {
        if left <= 0.0 || (positive_only && !(keys[f] > 0.0)) {
            break;
        }
        if sizes[f] <= left {
            out[f] = 1.0;
            left -= sizes[f];
        } else {
            out[f] = left / sizes[f];
            left = 0.0;
        }
    }
    out
}

/// Exact maximizer of the hit rate for demand `d` over the feasible set:
/// files are filled whole in descending demand (ties by index) and the
/// boundary file takes the residual fraction.
pub fn per_slot_optimal(demand: &[f64], catalog: &Catalog) -> Result<CachingStrategy> {
    check_len(demand.len(), catalog.n_files())?;
    if let Some((f, d)) = demand.iter().enumerate().find(|(_, d)| !(**d >= 0.0)) {
        return Err(Error::validation(format!(
            "negative demand {d} for file {f}"
        )));
    }
    Ok(CachingStrategy::from_feasible(greedy_fill(
        demand, catalog, false,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// Rescale so that `Σ π ℒ = C` whenever the vector is non-zero.
    AlwaysScale,
    /// Rescale only when the budget is exceeded.
    #[default]
    OnlyIfExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub strategy: CachingStrategy,
    /// Set when `AlwaysScale` met an all-zero vector and returned zeros.
    pub degenerate: bool,
}

/// Maps a raw vector into the feasible set: clip negatives, rescale onto the
/// budget per `mode`, clip at one and hand the freed budget to the remaining
/// fractional entries in descending value order.
pub fn project_budget(raw: &[f64], catalog: &Catalog, mode: ProjectionMode) -> Result<Projection> {
    check_len(raw.len(), catalog.n_files())?;
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("projection input must be finite"));
    }
    let sizes = catalog.sizes();
    let budget = catalog.budget();
    let mut x: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let used = used_budget(&x, sizes);

    let scale = match mode {
        ProjectionMode::AlwaysScale => {
            if used == 0.0 {
                return Ok(Projection {
                    strategy: CachingStrategy::zeros(x.len()),
                    degenerate: true,
                });
            }
            Some(budget / used)
        }
        ProjectionMode::OnlyIfExceeded => {
            (used > budget + catalog.budget_tolerance()).then(|| budget / used)
        }
    };

    let mut clipped = false;
    if let Some(s) = scale {
        x.iter_mut().for_each(|v| *v *= s);
    }
    for v in x.iter_mut() {
        if *v > 1.0 {
            *v = 1.0;
            clipped = true;
        }
    }
    if scale.is_some() && clipped {
        let target = budget.min(catalog.total_size());
        let mut freed = target - used_budget(&x, sizes);
        let mut candidates: Vec<usize> = (0..x.len()).filter(|&f| x[f] > 0.0 && x[f] < 1.0).collect();
        candidates.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for f in candidates {
            if freed <= 0.0 {
                break;
            }
            let room = (1.0 - x[f]) * sizes[f];
            if room >= freed {
                x[f] += freed / sizes[f];
                freed = 0.0;
            } else {
                x[f] = 1.0;
                freed -= room;
            }
        }
        x.iter_mut().for_each(|v| *v = v.min(1.0));
    }

    // Rounding in the rescale can leave the sum a few ulps over budget.
    let used = used_budget(&x, sizes);
    if used > budget {
        let s = budget / used;
        x.iter_mut().for_each(|v| *v *= s);
    }
    Ok(Projection {
        strategy: CachingStrategy::from_feasible(x),
        degenerate: false,
    })
}

const SIMPLEX_TOL: f64 = 1e-9;

pub(crate) fn check_simplex(weights: &[f64], what: &str) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::validation(format!("{what} must be non-negative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::validation(format!(
            "{what} must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Convex combination `Σ_i w_i π^i`.
pub fn blend(strategies: &[&CachingStrategy], weights: &[f64]) -> Result<CachingStrategy> {
    if strategies.is_empty() {
        return Err(Error::validation("blend needs at least one strategy"));
    }
    check_len(weights.len(), strategies.len())?;
    check_simplex(weights, "blend weights")?;
    let n = strategies[0].len();
    for s in strategies {
        check_len(s.len(), n)?;
    }
    let mut out = vec![0.0; n];
    for (s, &w) in strategies.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(s.fractions()) {
            *o += w * x;
        }
    }
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(CachingStrategy::from_feasible(out))
}
