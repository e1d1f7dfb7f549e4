//! Content catalog: per-file coded lengths and the per-sBS cache budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    sizes: Vec<f64>,
    budget: f64,
    total: f64,
}

impl Catalog {
    pub fn new(sizes: Vec<f64>, budget: f64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::validation("catalog must contain at least one file"));
        }
        if let Some((f, s)) = sizes
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::validation(format!(
                "file {f} has non-positive size {s}"
            )));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::validation(format!(
                "cache budget must be positive, got {budget}"
            )));
        }
        let total = sizes.iter().sum::<f64>();
        if budget >= total {
            log::warn!("cache budget {budget} >= catalog size {total}; every file fits");
        }
        Ok(Catalog {
            sizes,
            budget,
            total,
        })
    }

    /// Random catalog with sizes drawn uniformly from `[lo, hi]` and the budget
    /// set to `cache_frac` of the total size. Integer sizes draw from `lo..=hi`.
    pub fn synthetic(
        n_files: usize,
        lo: f64,
        hi: f64,
        integer_sizes: bool,
        cache_frac: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::validation(format!("bad size range [{lo}, {hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<f64> = (0..n_files)
            .map(|_| {
                if integer_sizes {
                    rng.random_range(lo.ceil() as u64..=hi.floor() as u64) as f64
                } else {
                    rng.random_range(lo..=hi)
                }
            })
            .collect();
        let total: f64 = sizes.iter().sum();
        Catalog::new(sizes, cache_frac * total)
    }

    /// Same files, different budget.
    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        Catalog::new(self.sizes.clone(), budget)
    }

    /// Same files, budget set to `frac` of the total catalog size.
    pub fn with_cache_fraction(&self, frac: f64) -> Result<Self> {
        self.with_budget(frac * self.total)
    }

    pub fn n_files(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn size(&self, f: usize) -> f64 {
        self.sizes[f]
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn total_size(&self) -> f64 {
        self.total
    }

    /// Budget as a fraction of the whole catalog.
    pub fn cache_fraction(&self) -> f64 {
        self.budget / self.total
    }

    /// Slack allowed on the budget constraint.
    pub fn budget_tolerance(&self) -> f64 {
        1e-9 * self.budget
    }
}
