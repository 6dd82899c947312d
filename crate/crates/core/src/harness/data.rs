//! Simulated datasets and their on-disk cache.
//!
//! A dataset (truth trajectory plus observation vectors) is fully determined
//! by the model sections of the configuration and the truth seed, so it is
//! cached under a content hash: every variant run over the same model reads
//! identical data, and reruns skip regeneration.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::atomic_write;
use crate::dynamics::{PriorSpec, Solver};
use crate::error::Result;
use crate::observation::{generate_data, Observer};
use crate::spectral::SpectralField;

/// Serialized form of one simulated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataFile {
    /// Lattice truncation the coefficients are stored on.
    pub max_wavenumber: u32,
    /// Truth at observation times as `[re, im]` coefficient pairs;
    /// entry 0 is the initial state.
    pub truth: Vec<Vec<[f64; 2]>>,
    /// One stacked observation vector per observation time.
    pub observations: Vec<Vec<f64>>,
}

/// A dataset realized on a concrete lattice.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Truth at observation times; entry 0 is the initial state.
    pub truth: Vec<SpectralField>,
    /// One stacked observation vector per observation time.
    pub observations: Vec<Vec<f64>>,
    /// Cache file backing this dataset, when a cache directory was given.
    pub path: Option<PathBuf>,
    /// True when the dataset was generated in this call rather than loaded.
    pub fresh: bool,
}

/// Cache file name for a configuration's dataset.
pub fn cache_file_name(cfg: &ExperimentConfig) -> String {
    format!("data-{}.json", &cfg.data_hash()[..16])
}

/// Load the configuration's dataset from `dir` if cached there, otherwise
/// simulate it from the truth seed (and cache it when `dir` is given).
pub fn load_or_generate(
    cfg: &ExperimentConfig,
    solver: &Solver,
    observer: &Observer,
    dir: Option<&Path>,
) -> Result<Dataset> {
    let path = dir.map(|d| d.join(cache_file_name(cfg)));
    if let Some(path) = &path {
        if let Some(data) = try_load(cfg, solver, observer, path) {
            return Ok(Dataset {
                truth: data.0,
                observations: data.1,
                path: Some(path.clone()),
                fresh: false,
            });
        }
    }

    let (truth, observations) = simulate(cfg, solver, observer)?;
    if let Some(path) = &path {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = DataFile {
            max_wavenumber: cfg.lattice.max_wavenumber,
            truth: truth.iter().map(field_to_pairs).collect(),
            observations: observations.clone(),
        };
        let bytes = serde_json::to_vec(&file)
            .map_err(|e| crate::error::Error::Serialization(e.to_string()))?;
        atomic_write(path, &bytes)?;
    }
    Ok(Dataset {
        truth,
        observations,
        path,
        fresh: true,
    })
}

/// Simulate the truth trajectory and its observations from the truth seed.
fn simulate(
    cfg: &ExperimentConfig,
    solver: &Solver,
    observer: &Observer,
) -> Result<(Vec<SpectralField>, Vec<Vec<f64>>)> {
    let lattice = solver.transform().lattice().clone();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seeds.truth);
    let truth_law = PriorSpec::new(SpectralField::zeros(&lattice), 1.0, cfg.truth.alpha)?;
    let init = truth_law.sample(&mut rng);
    let data = generate_data(solver, observer, &init, cfg.truth.intervals, &mut rng)?;
    Ok((data.truth, data.observations))
}

/// Read and validate a cached dataset; any failure falls back to regeneration.
fn try_load(
    cfg: &ExperimentConfig,
    solver: &Solver,
    observer: &Observer,
    path: &Path,
) -> Option<(Vec<SpectralField>, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).ok()?;
    let file: DataFile = serde_json::from_slice(&bytes).ok()?;
    if file.max_wavenumber != cfg.lattice.max_wavenumber
        || file.truth.len() != cfg.truth.intervals + 1
        || file.observations.len() != cfg.truth.intervals
    {
        return None;
    }
    let lattice = solver.transform().lattice();
    let n_modes = lattice.n_modes();
    if file.truth.iter().any(|t| t.len() != n_modes)
        || file.observations.iter().any(|y| y.len() != observer.dim())
    {
        return None;
    }
    let truth = file
        .truth
        .iter()
        .map(|pairs| pairs_to_field(lattice, pairs))
        .collect();
    Some((truth, file.observations))
}

fn field_to_pairs(field: &SpectralField) -> Vec<[f64; 2]> {
    field.coeffs().iter().map(|c| [c.re, c.im]).collect()
}

fn pairs_to_field(
    lattice: &std::sync::Arc<crate::spectral::Lattice>,
    pairs: &[[f64; 2]],
) -> SpectralField {
    let mut field = SpectralField::zeros(lattice);
    for (c, p) in field.coeffs_mut().iter_mut().zip(pairs) {
        *c = num_complex::Complex64::new(p[0], p[1]);
    }
    field
}
