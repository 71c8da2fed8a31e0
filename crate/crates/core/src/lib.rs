//! Budget-constrained adaptive search for rare events among many
//! observation streams.
//!
//! The search observes every active stream once per round, optionally
//! discards the streams that look least like rare events, and finally returns
//! the `T` streams with the smallest likelihood ratio. The crate provides the
//! optimal open-loop schedule, a reproducible Monte Carlo engine, extreme
//! value analytics for the order statistics that govern the error
//! probability, closed-form detectability thresholds and gains, and
//! sequential baselines (SPRT, repeated CUSUM).

pub mod error;
pub mod model;
pub mod policy;
pub mod engine;
pub mod stats;
pub mod extremes;
pub mod analysis;
pub mod gains;
pub mod baselines;

pub use error::{Result, SearchError};
pub use model::{HypothesisPair, StreamClass, SufficientStat, TestFamily};
pub use policy::{build_schedule, SearchConfig, Schedule};
pub use engine::{monte_carlo, run_trial, MonteCarloReport, TrialOutcome, TrialSeed};
