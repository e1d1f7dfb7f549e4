//! Distributed coded caching across cooperating small-cell base stations.
//!
//! Each sBS keeps a fractional cache placement `π ∈ [0,1]^N` under a budget
//! `Σ π_f ℒ_f ≤ C`. The crate provides the placement machinery
//! ([`strategy`]), a per-window regret-minimizing strategy sequence
//! ([`regret`]), the discrepancy and mismatch estimators that weight that
//! sequence across time and neighbors ([`discrepancy`], [`optimizer`]), two
//! baselines ([`lrfu`], [`federated`]) and a slotted multi-sBS simulator
//! ([`sim`]).

pub mod catalog;
pub mod commands;
pub mod config;
pub mod discrepancy;
pub mod federated;
pub mod lrfu;
pub mod metrics;
pub mod optimizer;
pub mod error;
pub mod io;
pub mod regret;
pub mod report;
pub mod sim;
pub mod strategy;
pub mod synth;
pub mod topology;
pub mod trace;
pub mod validate;

pub use catalog::Catalog;
pub use error::{Error, Result};
pub use strategy::{CachingStrategy, ProjectionMode};
pub use topology::Topology;
pub use trace::DemandTrace;
