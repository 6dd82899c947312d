//! Experiment harness: configuration, shipped presets, dataset caching,
//! the end-to-end runner, artifact writers, and cross-seed aggregation.
//!
//! The harness turns a declarative TOML configuration into a complete
//! filtering run: it simulates (or loads) a synthetic dataset, executes the
//! selected filter variant, and writes deterministic metric tables that can
//! be aggregated across seeds.

pub mod aggregate;
pub mod config;
pub mod data;
mod io;
pub mod presets;
pub mod report;
pub mod runner;
#[cfg(test)]
pub(crate) mod testutil;

pub use aggregate::{aggregate_runs, write_aggregate, Aggregate};
pub use config::{ExperimentConfig, Variant};
pub use data::{load_or_generate, Dataset};
pub use presets::{preset, preset_list};
pub use runner::run_experiment;
