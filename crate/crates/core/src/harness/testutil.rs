//! Shared fixtures for harness unit tests.

use super::config::{ExperimentConfig, Variant};
use super::presets;

/// A tiny but fully featured configuration that exercises every artifact
/// writer in seconds: truncation 4, three observation times, 2x2 stations.
pub(crate) fn tiny_config(variant: Variant) -> ExperimentConfig {
    let mut cfg = presets::preset("shortrun-ispft-desk").unwrap();
    cfg.lattice.max_wavenumber = 4;
    cfg.dynamics.steps_per_interval = 2;
    cfg.truth.intervals = 3;
    cfg.observations.stations_per_side = 2;
    cfg.filter.variant = variant;
    cfg.filter.particles = if variant == Variant::Enkf { 12 } else { 8 };
    cfg.filter.pcn.moves = 2;
    cfg.output.modes_of_interest = vec![[1, 0], [1, -1]];
    cfg.output.pdf_bins = 8;
    cfg.output.pdf_grid = 17;
    cfg.output.save_mean_at = vec![1];
    cfg.output.variance_ratio_at = vec![3];
    cfg.validate().unwrap();
    cfg
}
