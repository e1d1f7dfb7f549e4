//! Windowed-average-demand caching (LRFU), fractional and integral.

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::discrepancy::{
    azuma_term, discrepancy_sup, empirical_h_max, global_local_discrepancy_estimate, psi_table,
};
use crate::error::{check_index, Error, Result};
use crate::regret::{DemandView, Window};
use crate::strategy::{greedy_fill, hit, order_desc, per_slot_optimal, CachingStrategy};
use crate::trace::DemandTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrfuMode {
    #[default]
    Fractional,
    Integral,
}

/// Sort key for integral admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrfuOrdering {
    ByDemand,
    /// `ℒ_f · d̂_f`
    #[default]
    ByValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrfuConfig {
    pub window: usize,
    pub mode: LrfuMode,
    pub ordering: LrfuOrdering,
}

impl Default for LrfuConfig {
    fn default() -> Self {
        LrfuConfig {
            window: 10,
            mode: LrfuMode::Fractional,
            ordering: LrfuOrdering::ByValue,
        }
    }
}

/// Mean demand of sBS `b` over the `tau` slots before `t`. Early slots
/// average whatever history exists.
pub fn windowed_demand_estimate(
    trace: &DemandTrace,
    b: usize,
    t: usize,
    tau: usize,
    view: DemandView,
) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::validation("no demand history before slot 0"));
    }
    if tau == 0 {
        return Err(Error::validation("window must be positive"));
    }
    check_index("slot", t - 1, trace.n_slots())?;
    check_index("sbs", b, trace.n_sbs())?;
    let from = t.saturating_sub(tau);
    let k = (t - from) as f64;
    let mut out = vec![0.0; trace.n_files()];
    for s in from..t {
        for (o, d) in out.iter_mut().zip(trace.view(s, b, view.is_normalized())) {
            *o += d;
        }
    }
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

pub fn lrfu_strategy(estimate: &[f64], catalog: &Catalog, cfg: &LrfuConfig) -> Result<CachingStrategy> {
    match cfg.mode {
        LrfuMode::Fractional => per_slot_optimal(estimate, catalog),
        LrfuMode::Integral => {
            // per_slot_optimal validates the estimate
            per_slot_optimal(estimate, catalog)?;
            let sizes = catalog.sizes();
            let keys: Vec<f64> = match cfg.ordering {
                LrfuOrdering::ByDemand => estimate.to_vec(),
                LrfuOrdering::ByValue => estimate.iter().zip(sizes).map(|(d, l)| d * l).collect(),
            };
            let mut out = vec![0.0; estimate.len()];
            let mut left = catalog.budget();
            for f in order_desc(&keys) {
                if sizes[f] <= left {
                    out[f] = 1.0;
                    left -= sizes[f];
                }
            }
            CachingStrategy::new(out, catalog)
        }
    }
}

/// Left- and right-hand side of the LRFU performance bound at slot `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrfuBound {
    /// `Σ_f π^LRFU_f d̂_f ℒ_f`
    pub lhs: f64,
    /// Best expected hit; analytic when supplied, else the window mean of
    /// per-slot optimal hits.
    pub sup_expected: f64,
    pub global_local: f64,
    pub local_discrepancy: f64,
    pub azuma: f64,
    pub h_max: f64,
    pub rhs: f64,
}

impl LrfuBound {
    pub fn violated(&self) -> bool {
        self.lhs > self.rhs
    }
}

/// Bound terms for sBS `b` deciding slot `t` from the `tau` slots before it.
/// Needs `2·tau` slots of history for the local discrepancy term.
pub fn lrfu_bound_diagnostic(
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    t: usize,
    tau: usize,
    delta: f64,
    sup_expected: Option<f64>,
) -> Result<LrfuBound> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::validation(format!("delta must lie in (0, 1], got {delta}")));
    }
    if t < 2 * tau {
        return Err(Error::validation(format!(
            "slot {t} has {t} slots of history; the bound needs {}",
            2 * tau
        )));
    }
    let window = Window::new(t - 1, tau)?;
    let d_hat = windowed_demand_estimate(trace, b, t, tau, DemandView::Raw)?;
    let pi = greedy_fill(&d_hat, catalog, false);
    let lhs = hit(&pi, &d_hat, catalog.sizes());

    let sup_expected = match sup_expected {
        Some(v) => v,
        None => {
            window
                .slots()
                .map(|s| {
                    let d = trace.view(s, b, false);
                    hit(&greedy_fill(&d, catalog, false), &d, catalog.sizes())
                })
                .sum::<f64>()
                / tau as f64
        }
    };
    let uniform = vec![1.0 / tau as f64; tau];
    let psi = psi_table(trace, catalog, b, window, tau, tau, DemandView::Raw)?;
    let local_discrepancy = discrepancy_sup(&psi, &uniform, catalog)?.0;
    let global_local = global_local_discrepancy_estimate(trace, catalog, b, window, DemandView::Raw)?;
    let h_max = empirical_h_max(trace, catalog, b, window, DemandView::Raw);
    let azuma = azuma_term(&uniform, h_max, delta);
    Ok(LrfuBound {
        lhs,
        sup_expected,
        global_local,
        local_discrepancy,
        azuma,
        h_max,
        rhs: sup_expected + global_local + local_discrepancy + azuma,
    })
}
