//! Per-slot, per-sBS aggregate file demand.

use crate::error::{check_index, Error, Result};
use crate::topology::Topology;

/// Dense demand array `D[t][b][f]` of non-negative request counts, with the
/// sBS topology it was recorded on.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTrace {
    n_slots: usize,
    n_files: usize,
    topology: Topology,
    demand: Vec<f64>,
}

impl DemandTrace {
    pub fn zeros(n_slots: usize, n_files: usize, topology: Topology) -> Self {
        let n_sbs = topology.n_sbs();
        DemandTrace {
            n_slots,
            n_files,
            topology,
            demand: vec![0.0; n_slots * n_sbs * n_files],
        }
    }

    /// Builds a trace from a closure `(t, b, f) -> demand`.
    pub fn from_fn(
        n_slots: usize,
        n_files: usize,
        topology: Topology,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut trace = DemandTrace::zeros(n_slots, n_files, topology);
        for t in 0..n_slots {
            for b in 0..trace.n_sbs() {
                for file in 0..n_files {
                    trace.set(t, b, file, f(t, b, file))?;
                }
            }
        }
        Ok(trace)
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn n_sbs(&self) -> usize {
        self.topology.n_sbs()
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn offset(&self, t: usize, b: usize) -> usize {
        (t * self.n_sbs() + b) * self.n_files
    }

    pub fn set(&mut self, t: usize, b: usize, f: usize, value: f64) -> Result<()> {
        check_index("slot", t, self.n_slots)?;
        check_index("sbs", b, self.n_sbs())?;
        check_index("file", f, self.n_files)?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::validation(format!(
                "demand must be a finite non-negative number, got {value} at slot {t}, sbs {b}, file {f}"
            )));
        }
        let i = self.offset(t, b) + f;
        self.demand[i] = value;
        Ok(())
    }

    /// Demand vector of sBS `b` in slot `t`.
    pub fn slot_demand(&self, b: usize, t: usize) -> Result<&[f64]> {
        check_index("slot", t, self.n_slots)?;
        check_index("sbs", b, self.n_sbs())?;
        Ok(self.row(t, b))
    }

    /// Unchecked accessor for hot loops; panics on bad indices.
    pub(crate) fn row(&self, t: usize, b: usize) -> &[f64] {
        let o = self.offset(t, b);
        &self.demand[o..o + self.n_files]
    }

    /// Popularity profile of sBS `b` in slot `t`.
    pub fn normalized_demand(&self, b: usize, t: usize) -> Result<Vec<f64>> {
        normalize_slot(self.slot_demand(b, t)?)
    }

    /// Demand row in either raw or slot-normalized form.
    pub(crate) fn view(&self, t: usize, b: usize, normalized: bool) -> Vec<f64> {
        let row = self.row(t, b);
        if normalized {
            normalize_unchecked(row)
        } else {
            row.to_vec()
        }
    }

    /// Mean demand across all sBSs in slot `t`.
    pub fn pooled_demand(&self, t: usize) -> Result<Vec<f64>> {
        check_index("slot", t, self.n_slots)?;
        let m = self.n_sbs() as f64;
        let mut out = vec![0.0; self.n_files];
        for b in 0..self.n_sbs() {
            for (o, d) in out.iter_mut().zip(self.row(t, b)) {
                *o += d;
            }
        }
        out.iter_mut().for_each(|x| *x /= m);
        Ok(out)
    }

    /// Total demand of sBS `b` over all slots and files.
    pub fn total_demand(&self, b: usize) -> f64 {
        (0..self.n_slots).map(|t| self.row(t, b).iter().sum::<f64>()).sum()
    }

    /// Iterates `(t, b, f, demand)` over non-zero entries in slot, sbs, file order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let (m, n) = (self.n_sbs(), self.n_files);
        self.demand
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != 0.0)
            .map(move |(i, &d)| (i / (m * n), (i / n) % m, i % n, d))
    }

    /// Copy restricted to slots `[0, n_slots)`.
    pub fn truncated(&self, n_slots: usize) -> Self {
        let n_slots = n_slots.min(self.n_slots);
        DemandTrace {
            n_slots,
            n_files: self.n_files,
            topology: self.topology.clone(),
            demand: self.demand[..n_slots * self.n_sbs() * self.n_files].to_vec(),
        }
    }
}

/// Scales a demand vector to a popularity profile summing to one. An all-zero
/// slot maps to the zero vector.
pub fn normalize_slot(d: &[f64]) -> Result<Vec<f64>> {
    if let Some((f, x)) = d.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::validation(format!(
            "negative or NaN demand {x} for file {f}"
        )));
    }
    Ok(normalize_unchecked(d))
}

fn normalize_unchecked(d: &[f64]) -> Vec<f64> {
    let total: f64 = d.iter().sum();
    if total > 0.0 {
        d.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; d.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slot_demand_accessor_and_bounds() {
        let mut tr = DemandTrace::zeros(4, 3, Topology::line(2));
        tr.set(3, 1, 1, 2.0).unwrap();
        tr.set(3, 1, 2, 5.0).unwrap();
        assert_eq!(tr.slot_demand(1, 3).unwrap(), &[0.0, 2.0, 5.0]);
        assert!(matches!(tr.slot_demand(1, 4), Err(Error::Index { .. })));
        assert!(tr.slot_demand(2, 0).is_err());
        assert_eq!(tr.slot_demand(0, 0).unwrap(), &[0.0; 3]);
        assert!(tr.set(0, 0, 0, -1.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_slot(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_slot(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(normalize_slot(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert!(normalize_slot(&[1.0, -3.0]).is_err());
    }

    #[test]
    fn nonzero_iterates_in_order() {
        let mut tr = DemandTrace::zeros(2, 2, Topology::line(2));
        tr.set(1, 0, 1, 3.0).unwrap();
        tr.set(0, 1, 0, 1.5).unwrap();
        let v: Vec<_> = tr.nonzero().collect();
        assert_eq!(v, vec![(0, 1, 0, 1.5), (1, 0, 1, 3.0)]);
    }

    #[test]
    fn pooled_is_mean_over_sbs() {
        let mut tr = DemandTrace::zeros(1, 1, Topology::line(2));
        tr.set(0, 0, 0, 4.0).unwrap();
        tr.set(0, 1, 0, 2.0).unwrap();
        assert_eq!(tr.pooled_demand(0).unwrap(), vec![3.0]);
    }

    proptest! {
        #[test]
        fn normalize_sums_to_one_and_is_scale_invariant(
            d in prop::collection::vec(0.0f64..100.0, 1..20),
            c in 0.01f64..1e3,
        ) {
            let p = normalize_slot(&d).unwrap();
            let total: f64 = d.iter().sum();
            if total > 0.0 {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let q = normalize_slot(&scaled).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
