//! Discrepancy and mismatch estimators, and the computable terms of the
//! high-probability bounds on the blended strategy's hit.
//!
//! All conditional means are replaced by windowed empirical hit averages.

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{check_index, Error, Result};
use crate::regret::{DemandView, HitMatrix, Window};
use crate::strategy::{check_simplex, greedy_fill, CachingStrategy};
use crate::trace::DemandTrace;

/// `Ψ[t][f] = ℒ_f · (recent mean of Φ_f − mean of Φ_f over the τ2 slots
/// before t)` for each slot `t` of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    pub window: Window,
    pub tau1: usize,
    pub tau2: usize,
    n_files: usize,
    values: Vec<f64>,
}

impl PsiTable {
    /// Table from explicit rows (one per window slot).
    pub fn from_rows(window: Window, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_files = rows.first().map_or(0, Vec::len);
        if rows.len() != window.len || rows.iter().any(|r| r.len() != n_files) {
            return Err(Error::validation(format!(
                "psi table must have {} rows of equal length",
                window.len
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("psi entries must be finite"));
        }
        Ok(PsiTable {
            window,
            tau1: 0,
            tau2: 0,
            n_files,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn tau(&self) -> usize {
        self.window.len
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_files..(t + 1) * self.n_files]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_files.max(1))
    }

    /// `Γ_t = Σ_f π_t[f] Ψ[t][f]` per window slot.
    pub fn gamma(&self, iterates: &[Vec<f64>]) -> Vec<f64> {
        self.rows()
            .zip(iterates)
            .map(|(psi, pi)| psi.iter().zip(pi).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn negated(&self) -> Self {
        PsiTable {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

/// Builds the ψ table for sBS `b` over `window`. Needs `τ + τ2` slots of
/// history ending at the window's last slot, and `τ1 ≤ T + 1`.
pub fn psi_table(
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    window: Window,
    tau1: usize,
    tau2: usize,
    view: DemandView,
) -> Result<PsiTable> {
    check_index("slot", window.end, trace.n_slots())?;
    check_index("sbs", b, trace.n_sbs())?;
    if tau1 == 0 || tau2 == 0 {
        return Err(Error::validation("tau1 and tau2 must be positive"));
    }
    let earliest = window.end as i64 + 1 - (window.len + tau2) as i64;
    if earliest < 0 || tau1 > window.end + 1 {
        let need = (window.end as i64 + 1 - tau1 as i64).min(earliest);
        return Err(Error::validation(format!(
            "window underflow: psi at slot {} needs history from slot {need}",
            window.end
        )));
    }
    let n = catalog.n_files();
    let first = (earliest as usize).min(window.end + 1 - tau1);
    let rows: Vec<Vec<f64>> = (first..=window.end)
        .map(|l| trace.view(l, b, view.is_normalized()))
        .collect();
    let row = |l: usize| &rows[l - first];
    let sum = |from: usize, to_incl: usize| -> Vec<f64> {
        let mut m = vec![0.0; n];
        for l in from..=to_incl {
            for (a, x) in m.iter_mut().zip(row(l)) {
                *a += x;
            }
        }
        m
    };
    let recent: Vec<f64> = sum(window.end + 1 - tau1, window.end)
        .into_iter()
        .map(|x| x / tau1 as f64)
        .collect();
    let sizes = catalog.sizes();
    let k = tau2 as f64;
    // Past sums slide one slot per step instead of being recomputed.
    let start = window.start();
    let mut past = sum(start - tau2, start - 1);
    let mut values = Vec::with_capacity(window.len * n);
    for t in window.slots() {
        if t > start {
            for ((p, add), drop) in past.iter_mut().zip(row(t - 1)).zip(row(t - 1 - tau2)) {
                *p += add - drop;
            }
        }
        values.extend((0..n).map(|f| sizes[f] * (recent[f] - past[f] / k)));
    }
    Ok(PsiTable {
        window,
        tau1,
        tau2,
        n_files: n,
        values,
    })
}

fn check_weights(alpha: &[f64], tau: usize) -> Result<()> {
    if alpha.len() != tau {
        return Err(Error::validation(format!(
            "expected {tau} time weights, got {}",
            alpha.len()
        )));
    }
    check_simplex(alpha, "time weights")
}

/// `|Σ_t α_t Σ_f Ψ[t][f] π_t[f]|` at the supplied iterates.
pub fn discrepancy_estimate(
    psi: &PsiTable,
    alpha: &[f64],
    iterates: &[CachingStrategy],
) -> Result<f64> {
    check_weights(alpha, psi.tau())?;
    if iterates.len() != psi.tau() || iterates.iter().any(|p| p.len() != psi.n_files()) {
        return Err(Error::validation(
            "need one iterate per window slot, each of catalog length",
        ));
    }
    let s: f64 = psi
        .rows()
        .zip(iterates)
        .zip(alpha)
        .map(|((row, pi), a)| a * row.iter().zip(pi.fractions()).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    Ok(s.abs())
}

/// Exact supremum of the discrepancy estimate over feasible strategies. For a
/// fixed sign the problem splits into one fractional knapsack per slot; the
/// better sign wins.
pub fn discrepancy_sup(
    psi: &PsiTable,
    alpha: &[f64],
    catalog: &Catalog,
) -> Result<(f64, Vec<CachingStrategy>)> {
    check_weights(alpha, psi.tau())?;
    if psi.n_files() != catalog.n_files() {
        return Err(Error::validation("psi table and catalog disagree on N"));
    }
    Ok(knapsack_sup(psi, alpha, catalog))
}

fn knapsack_sup(psi: &PsiTable, alpha: &[f64], catalog: &Catalog) -> (f64, Vec<CachingStrategy>) {
    let sizes = catalog.sizes();
    let mut best: Option<(f64, Vec<CachingStrategy>)> = None;
    for sign in [1.0, -1.0] {
        let mut total = 0.0;
        let mut strategies = Vec::with_capacity(psi.tau());
        for (row, a) in psi.rows().zip(alpha) {
            let density: Vec<f64> = row.iter().zip(sizes).map(|(v, l)| sign * v / l).collect();
            let pi = greedy_fill(&density, catalog, true);
            let value: f64 = pi.iter().zip(row).map(|(p, v)| sign * p * v).sum();
            total += a * value;
            strategies.push(CachingStrategy::from_feasible(pi));
        }
        if best.as_ref().is_none_or(|(v, _)| total > *v) {
            best = Some((total, strategies));
        }
    }
    let (v, s) = best.expect("two branches evaluated");
    (v.max(0.0), s)
}

/// `(1/τ) Σ_{b'} w_{b'} [Σ_{s,l} α_{b,s} H_self[l][s] − Σ_{s,l} α_{b',s} H_{b'}[l][s]]`.
pub fn mismatch_estimate(
    w_neighbors: &[f64],
    alpha_self: &[f64],
    alpha_neighbors: &[Vec<f64>],
    h_self: &HitMatrix,
    h_cross: &[HitMatrix],
) -> Result<f64> {
    let tau = h_self.tau();
    if w_neighbors.len() != h_cross.len() || alpha_neighbors.len() != h_cross.len() {
        return Err(Error::validation(
            "need one weight, alpha vector and hit matrix per neighbor",
        ));
    }
    if alpha_self.len() != tau
        || alpha_neighbors.iter().any(|a| a.len() != tau)
        || h_cross.iter().any(|h| h.tau() != tau)
    {
        return Err(Error::validation(format!(
            "mismatch inputs must all be over a {tau}-slot window"
        )));
    }
    if w_neighbors.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::validation("neighbor weights must be non-negative"));
    }
    let own = h_self.weighted_total(alpha_self);
    let s: f64 = w_neighbors
        .iter()
        .zip(alpha_neighbors)
        .zip(h_cross)
        .map(|((w, a), h)| w * (own - h.weighted_total(a)))
        .sum();
    Ok(s / tau as f64)
}

/// Computable terms of the two high-probability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub azuma_term: f64,
    pub mismatch_hat: f64,
    pub discrepancy_hat: f64,
    pub regret_term: f64,
    pub alpha_deviation: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub h_max: f64,
    pub delta: f64,
    /// Slack of the comparator choice; always reported as zero.
    pub gamma: f64,
}

/// `H_max ‖α‖₂ √((2/τ) log(1/δ))`.
pub fn azuma_term(alpha: &[f64], h_max: f64, delta: f64) -> f64 {
    let tau = alpha.len() as f64;
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    h_max * norm * ((2.0 / tau) * (1.0 / delta).ln()).sqrt()
}

pub fn bound_report(
    alpha: &[f64],
    regret: f64,
    discrepancy_hat: f64,
    mismatch_hat: f64,
    h_max: f64,
    delta: f64,
) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(h_max > 0.0) {
        return Err(Error::validation(format!("h_max must be positive, got {h_max}")));
    }
    if alpha.is_empty() {
        return Err(Error::validation("empty time weights"));
    }
    let tau = alpha.len() as f64;
    let azuma = azuma_term(alpha, h_max, delta);
    let regret_term = 2.0 * regret / tau;
    let alpha_deviation = h_max * alpha.iter().map(|a| (a - 1.0 / tau).abs()).sum::<f64>();
    Ok(BoundReport {
        azuma_term: azuma,
        mismatch_hat,
        discrepancy_hat,
        regret_term,
        alpha_deviation,
        epsilon1: azuma + mismatch_hat + discrepancy_hat,
        epsilon2: 2.0 * azuma + mismatch_hat + regret_term + alpha_deviation + 2.0 * discrepancy_hat,
        h_max,
        delta,
        gamma: 0.0,
    })
}

/// Largest per-slot optimal hit of sBS `b` over `window`.
pub fn empirical_h_max(
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    window: Window,
    view: DemandView,
) -> f64 {
    window
        .slots()
        .map(|t| {
            let d = trace.view(t, b, view.is_normalized());
            let pi = greedy_fill(&d, catalog, false);
            crate::strategy::hit(&pi, &d, catalog.sizes())
        })
        .fold(0.0, f64::max)
}

/// Local-versus-pooled discrepancy of sBS `b` over `window`: the exact
/// supremum over strategies of the uniform-weight average gap between hits
/// on local demand and on the all-sBS mean demand.
pub fn global_local_discrepancy_estimate(
    trace: &DemandTrace,
    catalog: &Catalog,
    b: usize,
    window: Window,
    view: DemandView,
) -> Result<f64> {
    check_index("slot", window.end, trace.n_slots())?;
    check_index("sbs", b, trace.n_sbs())?;
    let sizes = catalog.sizes();
    let m = trace.n_sbs() as f64;
    let rows: Vec<Vec<f64>> = window
        .slots()
        .map(|t| {
            let local = trace.view(t, b, view.is_normalized());
            let mut pooled = vec![0.0; local.len()];
            for other in 0..trace.n_sbs() {
                for (p, x) in pooled.iter_mut().zip(trace.view(t, other, view.is_normalized())) {
                    *p += x;
                }
            }
            pooled.iter_mut().for_each(|p| *p /= m);
            local
                .iter()
                .zip(&pooled)
                .zip(sizes)
                .map(|((l, p), s)| s * (l - p))
                .collect()
        })
        .collect();
    let psi = PsiTable::from_rows(window, rows)?;
    let alpha = vec![1.0 / window.len as f64; window.len];
    Ok(knapsack_sup(&psi, &alpha, catalog).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn w(end: usize, len: usize) -> Window {
        Window::new(end, len).unwrap()
    }

    #[test]
    fn psi_hand_example() {
        // tau1 = tau2 = 1: Psi = L (Phi(T) - Phi(t - 1)) with t = T
        let tr = DemandTrace::from_fn(2, 1, Topology::isolated(1), |t, _, _| [1.0, 4.0][t]).unwrap();
        let cat = Catalog::new(vec![2.0], 1.0).unwrap();
        let p = psi_table(&tr, &cat, 0, w(1, 1), 1, 1, DemandView::Raw).unwrap();
        assert_eq!(p.row(0), &[6.0]);
    }

    #[test]
    fn psi_stationary_is_zero_and_linear() {
        let tr = DemandTrace::from_fn(12, 3, Topology::isolated(1), |_, _, f| [3.0, 1.0, 2.0][f]).unwrap();
        let cat = Catalog::new(vec![1.0, 2.0, 3.0], 3.0).unwrap();
        let p = psi_table(&tr, &cat, 0, w(11, 4), 3, 5, DemandView::Raw).unwrap();
        assert!(p.rows().flatten().all(|v| *v == 0.0));

        let tr = DemandTrace::from_fn(12, 3, Topology::isolated(1), |t, _, f| (t * 3 + f) as f64 % 7.0).unwrap();
        let doubled = DemandTrace::from_fn(12, 3, Topology::isolated(1), |t, _, f| 2.0 * ((t * 3 + f) as f64 % 7.0)).unwrap();
        let a = psi_table(&tr, &cat, 0, w(11, 4), 3, 5, DemandView::Raw).unwrap();
        let b = psi_table(&doubled, &cat, 0, w(11, 4), 3, 5, DemandView::Raw).unwrap();
        for (x, y) in a.rows().flatten().zip(b.rows().flatten()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_underflow_is_rejected() {
        let tr = DemandTrace::zeros(10, 2, Topology::isolated(1));
        let cat = Catalog::new(vec![1.0, 1.0], 1.0).unwrap();
        // tau + tau2 = 10 slots fit exactly when T = 9
        assert!(psi_table(&tr, &cat, 0, w(9, 5), 5, 5, DemandView::Raw).is_ok());
        let err = psi_table(&tr, &cat, 0, w(8, 5), 5, 5, DemandView::Raw).unwrap_err();
        assert!(err.to_string().contains("slot -1"), "{err}");
    }

    #[test]
    fn estimate_and_sup_examples() {
        let cat = Catalog::new(vec![1.0, 1.0], 1.0).unwrap();
        let psi = PsiTable::from_rows(w(0, 1), vec![vec![6.0, 0.0]]).unwrap();
        let pi = CachingStrategy::new(vec![1.0, 0.0], &cat).unwrap();
        assert_eq!(discrepancy_estimate(&psi, &[1.0], &[pi.clone()]).unwrap(), 6.0);
        assert_eq!(discrepancy_estimate(&psi.negated(), &[1.0], &[pi]).unwrap(), 6.0);

        let psi = PsiTable::from_rows(w(0, 1), vec![vec![6.0, -2.0]]).unwrap();
        let (v, s) = discrepancy_sup(&psi, &[1.0], &cat).unwrap();
        assert_eq!(v, 6.0);
        assert_eq!(s[0].fractions(), &[1.0, 0.0]);

        let zero = PsiTable::from_rows(w(1, 2), vec![vec![0.0; 2]; 2]).unwrap();
        let (v, s) = discrepancy_sup(&zero, &[0.5, 0.5], &cat).unwrap();
        assert_eq!(v, 0.0);
        assert!(s.iter().all(|p| p.fractions().iter().all(|x| *x == 0.0)));
        assert!(discrepancy_sup(&zero, &[0.5, 0.6], &cat).is_err());
    }

    #[test]
    fn mismatch_examples() {
        let win = w(0, 1);
        let hs = HitMatrix::from_values(0, win, vec![vec![5.0]]).unwrap();
        let hc = HitMatrix::from_values(0, win, vec![vec![3.0]]).unwrap();
        let m = mismatch_estimate(&[1.0], &[1.0], &[vec![1.0]], &hs, &[hc.clone()]).unwrap();
        assert_eq!(m, 2.0);
        let m = mismatch_estimate(&[0.0], &[1.0], &[vec![1.0]], &hs, &[hc.clone()]).unwrap();
        assert_eq!(m, 0.0);
        let m = mismatch_estimate(&[0.7], &[1.0], &[vec![1.0]], &hs, &[hs.clone()]).unwrap();
        assert_eq!(m, 0.0);
        // swapping roles flips the sign
        let swapped = mismatch_estimate(&[1.0], &[1.0], &[vec![1.0]], &hc, &[hs]).unwrap();
        assert_eq!(swapped, -2.0);
    }

    #[test]
    fn bound_report_examples() {
        let tau = 4;
        let u = vec![0.25; tau];
        let r = bound_report(&u, 0.0, 0.0, 0.0, 3.0, 0.05).unwrap();
        let want = 3.0 * (2.0 * (1.0f64 / 0.05).ln()).sqrt() / tau as f64;
        assert!((r.azuma_term - want).abs() < 1e-12);
        assert_eq!(r.alpha_deviation, 0.0);
        assert!((r.epsilon2 - 2.0 * r.azuma_term).abs() < 1e-15);

        let r = bound_report(&u, 0.0, 0.0, 0.0, 3.0, (-0.5f64).exp()).unwrap();
        assert!((r.azuma_term - 3.0 / tau as f64).abs() < 1e-12);

        assert!(bound_report(&u, 0.0, 0.0, 0.0, 3.0, 1.0).is_err());
        assert!(bound_report(&u, 0.0, 0.0, 0.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn global_local_examples() {
        let cat = Catalog::new(vec![1.0], 1.0).unwrap();
        let tr = DemandTrace::from_fn(1, 1, Topology::line(2), |_, b, _| [4.0, 2.0][b]).unwrap();
        let v = global_local_discrepancy_estimate(&tr, &cat, 0, w(0, 1), DemandView::Raw).unwrap();
        assert_eq!(v, 1.0);

        let single = DemandTrace::from_fn(3, 1, Topology::isolated(1), |t, _, _| t as f64).unwrap();
        let v = global_local_discrepancy_estimate(&single, &cat, 0, w(2, 3), DemandView::Raw).unwrap();
        assert_eq!(v, 0.0);

        let same = DemandTrace::from_fn(3, 1, Topology::five_ring(), |t, _, _| t as f64 + 1.0).unwrap();
        let v = global_local_discrepancy_estimate(&same, &cat, 3, w(2, 3), DemandView::Raw).unwrap();
        assert_eq!(v, 0.0);
    }
}
