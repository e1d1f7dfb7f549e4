//! Synthetic non-stationary, cross-sBS-correlated demand.
//!
//! Every regime draws a fresh random ranking of the files for a shared global
//! profile and for each sBS's local profile; popularity by rank is Zipf. Each
//! slot, every sBS draws `requests_per_slot` requests from the mixture
//! `(1 - m) · local + m · global`. Regimes cycle once exhausted.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::topology::Topology;
use crate::trace::DemandTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub zipf_exponent: f64,
    pub n_regimes: usize,
    pub regime_length: usize,
    pub cross_sbs_mixing: f64,
    pub requests_per_slot: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            zipf_exponent: 0.8,
            n_regimes: 1,
            regime_length: 1_000_000,
            cross_sbs_mixing: 0.5,
            requests_per_slot: 1000,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::validation("zipf_exponent must be >= 0"));
        }
        if self.n_regimes == 0 || self.regime_length == 0 {
            return Err(Error::validation(
                "n_regimes and regime_length must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.cross_sbs_mixing) {
            return Err(Error::validation("cross_sbs_mixing must lie in [0, 1]"));
        }
        if self.requests_per_slot == 0 {
            return Err(Error::validation("requests_per_slot must be positive"));
        }
        Ok(())
    }

    /// Regime active in slot `t`.
    pub fn regime(&self, t: usize) -> usize {
        (t / self.regime_length) % self.n_regimes
    }
}

/// Zipf weights by rank, normalized to sum to one.
pub fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Request distributions per regime and sBS.
#[derive(Debug, Clone)]
pub struct PopularityModel {
    /// `profiles[regime][sbs][file]`
    profiles: Vec<Vec<Vec<f64>>>,
    cfg: SyntheticConfig,
}

impl PopularityModel {
    pub fn new(n_files: usize, n_sbs: usize, cfg: &SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let zipf = zipf_weights(n_files, cfg.zipf_exponent);
        let mut rng = stream_rng(cfg.seed, 0);
        let ranked = |rng: &mut ChaCha8Rng| {
            let mut perm: Vec<usize> = (0..n_files).collect();
            perm.shuffle(rng);
            // perm[rank] = file
            let mut p = vec![0.0; n_files];
            for (rank, &f) in perm.iter().enumerate() {
                p[f] = zipf[rank];
            }
            p
        };
        let m = cfg.cross_sbs_mixing;
        let profiles = (0..cfg.n_regimes)
            .map(|_| {
                let global = ranked(&mut rng);
                (0..n_sbs)
                    .map(|_| {
                        let local = ranked(&mut rng);
                        local
                            .iter()
                            .zip(&global)
                            .map(|(l, g)| (1.0 - m) * l + m * g)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(PopularityModel {
            profiles,
            cfg: cfg.clone(),
        })
    }

    /// Request distribution of sBS `b` in slot `t`.
    pub fn profile(&self, t: usize, b: usize) -> &[f64] {
        &self.profiles[self.cfg.regime(t)][b]
    }

    /// Expected demand vector of sBS `b` in slot `t`.
    pub fn expected_demand(&self, t: usize, b: usize) -> Vec<f64> {
        let r = self.cfg.requests_per_slot as f64;
        self.profile(t, b).iter().map(|p| p * r).collect()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` requests from `p` as a multinomial count vector, via
/// conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, n: u64, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (o, &pi) in out.iter_mut().zip(p) {
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        *o = k as f64;
        left -= k;
        mass -= pi;
    }
    out
}

/// Generates a synthetic trace. A pure function of its arguments: slot `t`
/// at sBS `b` uses its own random stream, so output does not depend on
/// generation order.
pub fn generate_synthetic(
    catalog: &Catalog,
    topology: &Topology,
    n_slots: usize,
    cfg: &SyntheticConfig,
) -> Result<DemandTrace> {
    let model = PopularityModel::new(catalog.n_files(), topology.n_sbs(), cfg)?;
    generate_from_model(&model, catalog.n_files(), topology, n_slots)
}

pub fn generate_from_model(
    model: &PopularityModel,
    n_files: usize,
    topology: &Topology,
    n_slots: usize,
) -> Result<DemandTrace> {
    let n_sbs = topology.n_sbs();
    let mut trace = DemandTrace::zeros(n_slots, n_files, topology.clone());
    for t in 0..n_slots {
        for b in 0..n_sbs {
            let mut rng = stream_rng(model.cfg.seed, 1 + (t * n_sbs + b) as u64);
            let counts = multinomial(&mut rng, model.cfg.requests_per_slot, model.profile(t, b));
            for (f, c) in counts.into_iter().enumerate() {
                if c > 0.0 {
                    trace.set(t, b, f, c)?;
                }
            }
        }
    }
    Ok(trace)
}
