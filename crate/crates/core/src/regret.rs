//! Regret-minimizing strategy sequences over a window of past slots, and the
//! hit matrices the weight optimizer consumes.

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{check_index, Error, Result};
use crate::strategy::{greedy_fill, hit, per_slot_optimal, CachingStrategy};
use crate::trace::DemandTrace;

/// Which form of the demand an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandView {
    /// Request counts as recorded.
    #[default]
    Raw,
    /// Each slot scaled to a popularity profile summing to one.
    Normalized,
}

impl DemandView {
    pub fn is_normalized(self) -> bool {
        matches!(self, DemandView::Normalized)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretMode {
    /// Hindsight optimum of each slot's own demand.
    #[default]
    PerSlotOpt,
    /// Optimum of the running mean of the window's demand up to each slot.
    Ftl,
}

/// Slot window `[end + 1 - len, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub end: usize,
    pub len: usize,
}

impl Window {
    pub fn new(end: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::validation("window length must be positive"));
        }
        if end + 1 < len {
            return Err(Error::validation(format!(
                "window of {len} slots ending at slot {end} starts before slot 0"
            )));
        }
        Ok(Window { end, len })
    }

    pub fn start(&self) -> usize {
        self.end + 1 - self.len
    }

    pub fn slots(&self) -> std::ops::RangeInclusive<usize> {
        self.start()..=self.end
    }

    fn check(&self, trace: &DemandTrace) -> Result<()> {
        check_index("slot", self.end, trace.n_slots())
    }
}

/// One strategy per slot of `window`, computed on sBS `b`'s normalized demand.
pub fn regret_sequence(
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    window: Window,
    mode: RegretMode,
) -> Result<Vec<CachingStrategy>> {
    window.check(trace)?;
    check_index("sbs", b, trace.n_sbs())?;
    match mode {
        RegretMode::PerSlotOpt => window
            .slots()
            .map(|t| per_slot_optimal(&trace.view(t, b, true), catalog))
            .collect(),
        RegretMode::Ftl => {
            let mut sum = vec![0.0; catalog.n_files()];
            window
                .slots()
                .enumerate()
                .map(|(i, t)| {
                    for (s, d) in sum.iter_mut().zip(trace.view(t, b, true)) {
                        *s += d;
                    }
                    let mean: Vec<f64> = sum.iter().map(|s| s / (i + 1) as f64).collect();
                    per_slot_optimal(&mean, catalog)
                })
                .collect()
        }
    }
}

/// `Σ_t [ℛ_t(π*_t) − ℛ_t(π_t)]` over the window, with `π*_t` the per-slot
/// optimum of slot `t`'s own demand.
pub fn realized_regret(
    strategies: &[CachingStrategy],
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    window: Window,
    view: DemandView,
) -> Result<f64> {
    window.check(trace)?;
    check_index("sbs", b, trace.n_sbs())?;
    check_len(strategies.len(), window.len)?;
    let sizes = catalog.sizes();
    let mut total = 0.0;
    for (pi, t) in strategies.iter().zip(window.slots()) {
        let d = trace.view(t, b, view.is_normalized());
        let best = greedy_fill(&d, catalog, false);
        total += hit(&best, &d, sizes) - hit(pi.fractions(), &d, sizes);
    }
    Ok(total.max(0.0))
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "expected {want} strategies for the window, got {got}"
        )))
    }
}

/// `H[l][s]`: hit of the strategy from window slot `s` on the demand of
/// window slot `l`, both indexed from the window start.
#[derive(Debug, Clone, PartialEq)]
pub struct HitMatrix {
    pub owner: usize,
    pub window: Window,
    values: Vec<f64>,
}

impl HitMatrix {
    pub fn from_values(owner: usize, window: Window, values: Vec<Vec<f64>>) -> Result<Self> {
        let tau = window.len;
        if values.len() != tau || values.iter().any(|r| r.len() != tau) {
            return Err(Error::validation(format!("hit matrix must be {tau}x{tau}")));
        }
        Ok(HitMatrix {
            owner,
            window,
            values: values.into_iter().flatten().collect(),
        })
    }

    pub fn tau(&self) -> usize {
        self.window.len
    }

    pub fn get(&self, l: usize, s: usize) -> f64 {
        self.values[l * self.tau() + s]
    }

    /// `Σ_l H[l][s]` for every strategy column `s`.
    pub fn column_sums(&self) -> Vec<f64> {
        let tau = self.tau();
        let mut out = vec![0.0; tau];
        for l in 0..tau {
            for (o, v) in out.iter_mut().zip(&self.values[l * tau..(l + 1) * tau]) {
                *o += v;
            }
        }
        out
    }

    /// Diagonal `H[t][t]`: each strategy on its own slot.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.tau()).map(|t| self.get(t, t)).collect()
    }

    /// `Σ_{s,l} α_s H[l][s]`.
    pub fn weighted_total(&self, alpha: &[f64]) -> f64 {
        self.column_sums().iter().zip(alpha).map(|(c, a)| c * a).sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.tau()).map(<[f64]>::to_vec).collect()
    }
}

/// Hit matrix of `strategies` evaluated on sBS `b`'s demand over `window`.
/// The strategies may belong to another sBS.
pub fn hit_matrix(
    strategies: &[CachingStrategy],
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    window: Window,
    view: DemandView,
) -> Result<HitMatrix> {
    window.check(trace)?;
    check_index("sbs", b, trace.n_sbs())?;
    check_len(strategies.len(), window.len)?;
    let sizes = catalog.sizes();
    let mut values = Vec::with_capacity(window.len * window.len);
    for l in window.slots() {
        let d = trace.view(l, b, view.is_normalized());
        values.extend(strategies.iter().map(|pi| hit(pi.fractions(), &d, sizes)));
    }
    Ok(HitMatrix {
        owner: b,
        window,
        values,
    })
}
