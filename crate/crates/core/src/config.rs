//! Experiment configuration for the command-line tool.
//!
//! A run reads either a catalog/trace CSV pair or generates a synthetic
//! trace. The effective configuration is written next to the outputs, and
//! re-running it reproduces them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::io::{load_trace, TraceShape};
use crate::sim::{PolicyKind, SimConfig};
use crate::synth::{generate_synthetic, SyntheticConfig};
use crate::topology::Topology;
use crate::trace::DemandTrace;

/// Synthetic catalog and trace parameters. The run seed seeds both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSource {
    pub n_files: usize,
    pub n_slots: usize,
    pub size_min: f64,
    pub size_max: f64,
    pub integer_sizes: bool,
    pub zipf_exponent: f64,
    pub n_regimes: usize,
    pub regime_length: usize,
    pub cross_sbs_mixing: f64,
    pub requests_per_slot: u64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        let g = SyntheticConfig::default();
        SyntheticSource {
            n_files: 800,
            n_slots: 200,
            size_min: 10.0,
            size_max: 100.0,
            integer_sizes: false,
            zipf_exponent: g.zipf_exponent,
            n_regimes: 3,
            regime_length: 10,
            cross_sbs_mixing: g.cross_sbs_mixing,
            requests_per_slot: 10_000,
        }
    }
}

impl SyntheticSource {
    pub fn generator(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            zipf_exponent: self.zipf_exponent,
            n_regimes: self.n_regimes,
            regime_length: self.regime_length,
            cross_sbs_mixing: self.cross_sbs_mixing,
            requests_per_slot: self.requests_per_slot,
            seed,
        }
    }
}

/// Trace files on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub catalog: PathBuf,
    pub trace: PathBuf,
    pub n_slots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
    /// `five-ring`, `ring:N`, `line:N`, `complete:N`, `isolated:N` or
    /// `edges:N:a-b,c-d`.
    pub topology: String,
    pub policies: Vec<PolicyKind>,
    pub cache_fracs: Vec<f64>,
    /// Federated λ values; empty skips the sweep.
    pub lambda_sweep: Vec<f64>,
    /// Write per-slot metrics for every run.
    pub write_metrics: bool,
    pub plots: bool,
    /// Reads traces from disk when set; otherwise `synthetic` is used.
    pub files: Option<FileSource>,
    pub synthetic: SyntheticSource,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            topology: "five-ring".into(),
            policies: PolicyKind::ALL.to_vec(),
            cache_fracs: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            lambda_sweep: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            write_metrics: true,
            plots: true,
            files: None,
            synthetic: SyntheticSource::default(),
            sim: SimConfig::default(),
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::validation(format!("config field `{name}`: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::validation(format!("serializing config: {e}")))
    }

    pub fn topology(&self) -> Result<Topology> {
        self.topology.parse().map_err(|e| field("topology", e))
    }

    pub fn validate(&self) -> Result<()> {
        self.topology()?;
        if self.policies.is_empty() {
            return Err(field("policies", "at least one policy is required"));
        }
        if self.cache_fracs.is_empty() {
            return Err(field("cache_fracs", "at least one cache fraction is required"));
        }
        if let Some(c) = self.cache_fracs.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
            return Err(field("cache_fracs", format!("{c} is not in (0, 1]")));
        }
        if let Some(l) = self.lambda_sweep.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(field("lambda_sweep", format!("{l} must be a finite value >= 0")));
        }
        if self.files.is_none() {
            let s = &self.synthetic;
            if s.n_files == 0 {
                return Err(field("synthetic.n_files", "must be positive"));
            }
            if s.n_slots == 0 {
                return Err(field("synthetic.n_slots", "must be positive"));
            }
            if !(s.size_min > 0.0 && s.size_max >= s.size_min) {
                return Err(field("synthetic.size_min", "need 0 < size_min <= size_max"));
            }
            s.generator(self.seed)
                .validate()
                .map_err(|e| field("synthetic", e))?;
        }
        self.sim.validate().map_err(|e| field("sim", e))
    }

    /// Catalog (budget at the first cache fraction) and trace.
    pub fn load_data(&self) -> Result<(Catalog, DemandTrace)> {
        let topology = self.topology()?;
        let frac = self.cache_fracs[0];
        match &self.files {
            Some(f) => load_trace(
                &f.catalog,
                &f.trace,
                &TraceShape {
                    topology,
                    n_slots: f.n_slots,
                    cache_fraction: frac,
                },
            ),
            None => {
                let s = &self.synthetic;
                let catalog = Catalog::synthetic(s.n_files, s.size_min, s.size_max, s.integer_sizes, frac, self.seed)?;
                let trace = generate_synthetic(&catalog, &topology, s.n_slots, &s.generator(self.seed))?;
                Ok((catalog, trace))
            }
        }
    }
}
