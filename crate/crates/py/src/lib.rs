//! Python bindings for the filtering engine: presets and configuration,
//! end-to-end experiment runs, cross-seed aggregation, and direct access to
//! spectral fields and the stochastic solver.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use snsfilter::diagnostics::l2_vorticity_error;
use snsfilter::harness::runner::build_model;
use snsfilter::harness::{
    aggregate_runs, load_or_generate, preset, preset_list, run_experiment, write_aggregate,
    ExperimentConfig,
};
use snsfilter::observation::Observer;
use snsfilter::spectral::{Lattice as CoreLattice, SpectralField, Transform};

fn to_py_err(e: snsfilter::Error) -> PyErr {
    use snsfilter::Error as E;
    match e {
        E::Config(_) | E::InvalidParameter { .. } | E::DimensionMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Divergence-free Fourier truncation: the stored half-lattice of modes.
#[pyclass(frozen)]
struct Lattice {
    inner: Arc<CoreLattice>,
}

#[pymethods]
impl Lattice {
    #[new]
    fn new(max_wavenumber: u32) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(CoreLattice::new(max_wavenumber).map_err(to_py_err)?),
        })
    }

    #[getter]
    fn max_wavenumber(&self) -> u32 {
        self.inner.max_wavenumber()
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    #[getter]
    fn grid_size(&self) -> usize {
        self.inner.grid_size()
    }

    /// Stored modes as `(k1, k2)` pairs; mirror modes are implicit.
    fn modes(&self) -> Vec<(i32, i32)> {
        self.inner.modes().iter().map(|&[a, b]| (a, b)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Lattice(max_wavenumber={}, n_modes={})",
            self.inner.max_wavenumber(),
            self.inner.n_modes()
        )
    }
}

/// A velocity field as complex coefficients on the stored modes.
#[pyclass]
struct Field {
    inner: SpectralField,
}

#[pymethods]
impl Field {
    #[staticmethod]
    fn zeros(lattice: &Lattice) -> Self {
        Self {
            inner: SpectralField::zeros(&lattice.inner),
        }
    }

    /// Coefficient of the mode `(k1, k2)`.
    fn get(&self, k1: i32, k2: i32) -> PyResult<Complex64> {
        self.inner.coeff([k1, k2]).ok_or_else(|| {
            PyValueError::new_err(format!("({k1}, {k2}) is not a stored mode"))
        })
    }

    fn set(&mut self, k1: i32, k2: i32, value: Complex64) -> PyResult<()> {
        self.inner.set_coeff([k1, k2], value).map_err(to_py_err)
    }

    /// Kinetic energy: twice the squared coefficient norm.
    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    /// All coefficients in lattice order.
    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    #[getter]
    fn lattice(&self) -> Lattice {
        Lattice {
            inner: self.inner.lattice().clone(),
        }
    }

    fn copy(&self) -> Self {
        Self {
            inner: self.inner.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Field(max_wavenumber={}, energy={:.6})",
            self.inner.lattice().max_wavenumber(),
            self.inner.energy()
        )
    }
}

/// A full experiment description; see the configuration reference in the
/// README for every section and field.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: ExperimentConfig,
}

#[pymethods]
impl Config {
    /// Load a named preset.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        preset(name).map(|inner| Self { inner }).ok_or_else(|| {
            let names: Vec<&str> = preset_list().iter().map(|(n, _)| *n).collect();
            PyValueError::new_err(format!(
                "unknown preset {name:?}; available: {}",
                names.join(", ")
            ))
        })
    }

    /// Parse a configuration document.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    /// Render the full document, e.g. for editing fields not exposed here.
    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py_err)
    }

    /// Hash of the complete configuration.
    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash()
    }

    /// Hash with the filter seed ignored; runs sharing it can be aggregated.
    #[getter]
    fn compat_hash(&self) -> String {
        self.inner.compat_hash()
    }

    /// Hash of everything the synthetic dataset depends on.
    #[getter]
    fn data_hash(&self) -> String {
        self.inner.data_hash()
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.filter.variant.to_string()
    }

    #[setter]
    fn set_variant(&mut self, value: &str) -> PyResult<()> {
        self.inner.filter.variant = value.parse().map_err(to_py_err)?;
        Ok(())
    }

    #[getter]
    fn particles(&self) -> usize {
        self.inner.filter.particles
    }

    #[setter]
    fn set_particles(&mut self, value: usize) {
        self.inner.filter.particles = value;
    }

    #[getter]
    fn truth_seed(&self) -> u64 {
        self.inner.seeds.truth
    }

    #[setter]
    fn set_truth_seed(&mut self, value: u64) {
        self.inner.seeds.truth = value;
    }

    #[getter]
    fn filter_seed(&self) -> u64 {
        self.inner.seeds.filter
    }

    #[setter]
    fn set_filter_seed(&mut self, value: u64) {
        self.inner.seeds.filter = value;
    }

    #[getter]
    fn intervals(&self) -> usize {
        self.inner.truth.intervals
    }

    #[setter]
    fn set_intervals(&mut self, value: usize) {
        self.inner.truth.intervals = value;
    }

    fn copy(&self) -> Self {
        self.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(variant={}, max_wavenumber={}, particles={}, intervals={})",
            self.inner.filter.variant,
            self.inner.lattice.max_wavenumber,
            self.inner.filter.particles,
            self.inner.truth.intervals
        )
    }
}

/// The synthetic truth path and its noisy observations.
#[pyclass(frozen)]
struct Dataset {
    truth: Vec<SpectralField>,
    #[pyo3(get)]
    observations: Vec<Vec<f64>>,
    #[pyo3(get)]
    path: Option<String>,
    #[pyo3(get)]
    fresh: bool,
}

#[pymethods]
impl Dataset {
    /// States at observation times; index 0 is the initial condition.
    fn truth(&self) -> Vec<Field> {
        self.truth
            .iter()
            .map(|f| Field { inner: f.clone() })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(states={}, observations={})",
            self.truth.len(),
            self.observations.len()
        )
    }
}

/// The forward model of one configuration: stochastic dynamics over one
/// observation interval plus the observation operator.
#[pyclass(frozen)]
struct Simulator {
    solver: snsfilter::dynamics::Solver,
    observer: Arc<Observer>,
    transform: Arc<Transform>,
}

#[pymethods]
impl Simulator {
    #[new]
    fn new(config: &Config) -> PyResult<Self> {
        config.inner.validate().map_err(to_py_err)?;
        let parts = build_model(&config.inner).map_err(to_py_err)?;
        Ok(Self {
            solver: parts.solver,
            observer: parts.observer,
            transform: parts.transform,
        })
    }

    #[getter]
    fn lattice(&self) -> Lattice {
        Lattice {
            inner: self.transform.lattice().clone(),
        }
    }

    /// Advance the field one observation interval with fresh driving noise.
    fn step(&self, field: &Field, seed: u64) -> PyResult<Field> {
        let mut scratch = self.solver.make_scratch();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (_, end, _) = self
            .solver
            .simulate_segment(&field.inner, None, &mut scratch, &mut rng)
            .map_err(to_py_err)?;
        Ok(Field { inner: end })
    }

    /// Noise-free observation of the field at the station grid.
    fn predict(&self, field: &Field) -> Vec<f64> {
        let mut scratch = self.solver.make_scratch();
        let mut pred = vec![0.0; self.observer.dim()];
        self.observer
            .predict_into(&field.inner, &mut scratch.fft, &mut pred);
        pred
    }

    /// Noisy observation of the field at the station grid.
    fn observe(&self, field: &Field, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let noise = self.observer.sample_noise(&mut rng);
        self.predict(field)
            .iter()
            .zip(&noise)
            .map(|(p, n)| p + n)
            .collect()
    }

    /// Vorticity on the physical grid as rows.
    fn vorticity(&self, field: &Field) -> Vec<Vec<f64>> {
        let flat = self.transform.vorticity_grid(&field.inner);
        let m = self.transform.lattice().grid_size();
        (0..m).map(|i| flat[i * m..(i + 1) * m].to_vec()).collect()
    }

    /// Observed coordinates per time (twice the station count).
    #[getter]
    fn observation_dim(&self) -> usize {
        self.observer.dim()
    }
}

/// One assimilation step of a finished run.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct StepRecord {
    #[pyo3(get)]
    step: usize,
    #[pyo3(get)]
    time: f64,
    #[pyo3(get)]
    phis: Vec<f64>,
    #[pyo3(get)]
    ess: Vec<f64>,
    #[pyo3(get)]
    noise_accept: Vec<f64>,
    #[pyo3(get)]
    init_accept: Vec<f64>,
    #[pyo3(get)]
    l2_error: Option<f64>,
}

#[pymethods]
impl StepRecord {
    fn __repr__(&self) -> String {
        format!(
            "StepRecord(step={}, levels={}, final_ess={:.1})",
            self.step,
            self.phis.len().max(1),
            self.ess.last().copied().unwrap_or(f64::NAN)
        )
    }
}

/// Metrics and artifact locations of one finished run.
#[pyclass(frozen)]
struct RunResult {
    #[pyo3(get)]
    variant: String,
    #[pyo3(get)]
    seed: u64,
    #[pyo3(get)]
    config_hash: String,
    #[pyo3(get)]
    out_dir: String,
    #[pyo3(get)]
    data_path: Option<String>,
    #[pyo3(get)]
    data_fresh: bool,
    steps: Vec<StepRecord>,
}

#[pymethods]
impl RunResult {
    fn steps(&self) -> Vec<StepRecord> {
        self.steps.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(variant={}, seed={}, steps={})",
            self.variant,
            self.seed,
            self.steps.len()
        )
    }
}

/// One assimilation step averaged over runs.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct AggregateRow {
    #[pyo3(get)]
    step: usize,
    #[pyo3(get)]
    time: f64,
    #[pyo3(get)]
    runs: usize,
    #[pyo3(get)]
    levels_mean: Option<f64>,
    #[pyo3(get)]
    levels_sd: Option<f64>,
    #[pyo3(get)]
    final_ess_mean: Option<f64>,
    #[pyo3(get)]
    final_ess_sd: Option<f64>,
    #[pyo3(get)]
    l2_mean: Option<f64>,
    #[pyo3(get)]
    l2_sd: Option<f64>,
}

/// Cross-seed aggregation of runs of one experiment.
#[pyclass(frozen)]
struct AggregateResult {
    #[pyo3(get)]
    variant: String,
    #[pyo3(get)]
    compat_hash: String,
    #[pyo3(get)]
    runs: usize,
    #[pyo3(get)]
    seeds: Vec<u64>,
    rows: Vec<AggregateRow>,
}

#[pymethods]
impl AggregateResult {
    fn rows(&self) -> Vec<AggregateRow> {
        self.rows.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "AggregateResult(variant={}, runs={}, steps={})",
            self.variant,
            self.runs,
            self.rows.len()
        )
    }
}

/// All built-in presets as `(name, description)` pairs.
#[pyfunction]
fn list_presets() -> Vec<(String, String)> {
    preset_list()
        .into_iter()
        .map(|(n, d)| (n.to_string(), d.to_string()))
        .collect()
}

/// Run one experiment end to end, writing all artifacts into `out_dir`.
///
/// `data_dir` selects the dataset cache directory (defaults to
/// `out_dir/data`); `threads` sizes the worker pool (default: all cores).
#[pyfunction]
#[pyo3(signature = (config, out_dir, data_dir=None, threads=None))]
fn run(
    py: Python<'_>,
    config: &Config,
    out_dir: PathBuf,
    data_dir: Option<PathBuf>,
    threads: Option<usize>,
) -> PyResult<RunResult> {
    let cfg = config.inner.clone();
    let data_dir = data_dir.unwrap_or_else(|| out_dir.join("data"));
    let output = py
        .detach(|| run_experiment(&cfg, &out_dir, Some(&data_dir), threads))
        .map_err(to_py_err)?;
    Ok(RunResult {
        variant: output.metrics.variant.clone(),
        seed: output.metrics.seed,
        config_hash: output.metrics.config_hash.clone(),
        out_dir: output.out_dir.display().to_string(),
        data_path: output.data_path.map(|p| p.display().to_string()),
        data_fresh: output.data_fresh,
        steps: output
            .metrics
            .steps
            .iter()
            .map(|s| StepRecord {
                step: s.step,
                time: s.time,
                phis: s.phis.clone(),
                ess: s.ess.clone(),
                noise_accept: s.noise_accept.clone(),
                init_accept: s.init_accept.clone(),
                l2_error: s.l2_error,
            })
            .collect(),
    })
}

/// Simulate (or load from `data_dir`) the dataset a configuration describes.
#[pyfunction]
#[pyo3(signature = (config, data_dir=None))]
fn generate_data(py: Python<'_>, config: &Config, data_dir: Option<PathBuf>) -> PyResult<Dataset> {
    config.inner.validate().map_err(to_py_err)?;
    let parts = build_model(&config.inner).map_err(to_py_err)?;
    let cfg = config.inner.clone();
    let dataset = py
        .detach(|| load_or_generate(&cfg, &parts.solver, &parts.observer, data_dir.as_deref()))
        .map_err(to_py_err)?;
    Ok(Dataset {
        truth: dataset.truth,
        observations: dataset.observations,
        path: dataset.path.map(|p| p.display().to_string()),
        fresh: dataset.fresh,
    })
}

/// Combine the runs in `run_dirs` (means and spreads per step); all runs
/// must share a compatibility hash. Writes `aggregate.json` and
/// `aggregate.csv` into `out_dir` when given.
#[pyfunction]
#[pyo3(signature = (run_dirs, out_dir=None))]
fn aggregate(run_dirs: Vec<PathBuf>, out_dir: Option<PathBuf>) -> PyResult<AggregateResult> {
    let agg = aggregate_runs(&run_dirs).map_err(to_py_err)?;
    if let Some(dir) = out_dir {
        write_aggregate(&dir, &agg).map_err(to_py_err)?;
    }
    Ok(AggregateResult {
        variant: agg.variant.clone(),
        compat_hash: agg.compat_hash.clone(),
        runs: agg.runs,
        seeds: agg.seeds.clone(),
        rows: agg
            .rows
            .iter()
            .map(|r| AggregateRow {
                step: r.step,
                time: r.time,
                runs: r.runs,
                levels_mean: r.levels_mean,
                levels_sd: r.levels_sd,
                final_ess_mean: r.final_ess_mean,
                final_ess_sd: r.final_ess_sd,
                l2_mean: r.l2_mean,
                l2_sd: r.l2_sd,
            })
            .collect(),
    })
}

/// Squared vorticity-space distance between two fields.
#[pyfunction]
fn l2_error(a: &Field, b: &Field) -> PyResult<f64> {
    l2_vorticity_error(&a.inner, &b.inner).map_err(to_py_err)
}

#[pymodule]
fn snsfilter_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Lattice>()?;
    m.add_class::<Field>()?;
    m.add_class::<Config>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Simulator>()?;
    m.add_class::<StepRecord>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<AggregateRow>()?;
    m.add_class::<AggregateResult>()?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(generate_data, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(l2_error, m)?)?;
    Ok(())
}
