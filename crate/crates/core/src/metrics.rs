//! Per-slot hit accounting and the policy comparison table.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 12] = [
    "slot",
    "sbs",
    "policy",
    "cache_frac",
    "hit",
    "cum_hit",
    "regret_over_tau",
    "disc_hat",
    "mismatch_hat",
    "eps1",
    "eps2",
    "iters",
];

/// Window diagnostics of the strategy served in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub regret_over_tau: f64,
    pub disc_hat: f64,
    pub mismatch_hat: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub slot: usize,
    pub sbs: usize,
    pub policy: String,
    pub cache_frac: f64,
    /// Hit on raw demands.
    pub hit: f64,
    pub cum_hit: f64,
    pub diagnostics: Option<Diagnostics>,
}

/// Rows in (slot, sbs) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::validation(format!("writing CSV: {e}"))
}

impl MetricsLog {
    pub fn n_sbs(&self) -> usize {
        self.rows.iter().map(|r| r.sbs + 1).max().unwrap_or(0)
    }

    /// Sum of hits of sBS `b` over all slots.
    pub fn total_hit(&self, b: usize) -> f64 {
        self.rows.iter().filter(|r| r.sbs == b).map(|r| r.hit).sum()
    }

    /// Sum over slots and sBSs.
    pub fn total_hit_all(&self) -> f64 {
        (0..self.n_sbs()).map(|b| self.total_hit(b)).sum()
    }

    pub fn n_slots(&self) -> usize {
        self.rows.iter().map(|r| r.slot + 1).max().unwrap_or(0)
    }

    pub fn extend(&mut self, other: MetricsLog) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(METRICS_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let d = r.diagnostics;
            wr.write_record([
                r.slot.to_string(),
                r.sbs.to_string(),
                r.policy.clone(),
                r.cache_frac.to_string(),
                r.hit.to_string(),
                r.cum_hit.to_string(),
                opt(d.map(|d| d.regret_over_tau)),
                opt(d.map(|d| d.disc_hat)),
                opt(d.map(|d| d.mismatch_hat)),
                opt(d.map(|d| d.eps1)),
                opt(d.map(|d| d.eps2)),
                d.map_or(String::new(), |d| d.iters.to_string()),
            ])
            .map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::validation(format!("writing CSV: {e}")))
    }
}

/// Which sBS a comparison row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbsKey {
    Sbs(usize),
    Sum,
}

impl std::fmt::Display for SbsKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SbsKey::Sbs(b) => write!(f, "{b}"),
            SbsKey::Sum => f.write_str("sum"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub policy: String,
    pub cache_frac: f64,
    pub sbs: SbsKey,
    /// Cumulative hit divided by the number of slots.
    pub avg_hit: f64,
    pub cum_hit: f64,
    /// `ln(hit_proposed / hit_this)`; absent without a proposed run or when
    /// one side is zero and the other is not.
    pub log_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn log_ratio(reference: f64, other: f64) -> Option<f64> {
    if reference == other {
        Some(0.0)
    } else if reference > 0.0 && other > 0.0 {
        Some((reference / other).ln())
    } else {
        None
    }
}

impl ComparisonTable {
    pub fn get(&self, policy: &str, cache_frac: f64, sbs: SbsKey) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.cache_frac == cache_frac && r.sbs == sbs)
    }

    pub fn policies(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.policy) {
                out.push(r.policy.clone());
            }
        }
        out
    }

    pub fn cache_fracs(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.cache_frac) {
                out.push(r.cache_frac);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["policy", "cache_frac", "sbs", "avg_hit", "cum_hit", "log_ratio"])
            .map_err(csv_err)?;
        for r in &self.rows {
            wr.write_record([
                r.policy.clone(),
                r.cache_frac.to_string(),
                r.sbs.to_string(),
                r.avg_hit.to_string(),
                r.cum_hit.to_string(),
                opt(r.log_ratio),
            ])
            .map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::validation(format!("writing CSV: {e}")))
    }
}
