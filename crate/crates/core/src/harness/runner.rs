//! End-to-end experiment execution: build the model from a configuration,
//! load or simulate the dataset, run the selected filter over every
//! observation time, and write the full artifact set.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::diagnostics::{self, Component, RunMetrics, StepMetrics};
use crate::dynamics::{NoiseSpec, PriorSpec, Solver, SolverConfig};
use crate::enkf::{assimilate_enkf, EnkfEnsemble};
use crate::error::{Error, Result};
use crate::filter::{
    assimilate_naive, assimilate_tempered, Ensemble, PcnConfig, StepContext, TemperingConfig,
};
use crate::guidance::GuidedProposal;
use crate::observation::{NoiseFamily, Observer};
use crate::spectral::{Lattice, SpectralField, Transform};

use super::config::{ExperimentConfig, Family, InitMode, Variant};
use super::data::{self, Dataset};
use super::report::{self, SummaryFile};

/// Offset between the filter seed and the seed of the unconditioned
/// comparison ensemble used for variance ratios, so the two ensembles draw
/// independent streams.
const UNCONDITIONED_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// The model objects assembled from a configuration.
pub struct ModelParts {
    pub lattice: Arc<Lattice>,
    pub transform: Arc<Transform>,
    pub solver: Solver,
    pub observer: Arc<Observer>,
}

/// Build lattice, transform, solver, and observer from a validated
/// configuration.
pub fn build_model(cfg: &ExperimentConfig) -> Result<ModelParts> {
    let lattice = Arc::new(Lattice::new(cfg.lattice.max_wavenumber)?);
    let transform = Arc::new(Transform::new(&lattice));
    let noise = NoiseSpec::power_law(&lattice, cfg.noise.delta, cfg.dynamics.nu, cfg.noise.decay)?;
    let solver = Solver::new(
        &transform,
        SolverConfig {
            nu: cfg.dynamics.nu,
            interval: cfg.dynamics.interval,
            steps_per_interval: cfg.dynamics.steps_per_interval,
            nonlinear: cfg.dynamics.nonlinear,
            forcing: None,
        },
        noise,
    )?;
    let family = match cfg.observations.family {
        Family::Gaussian => NoiseFamily::Gaussian,
        Family::StudentT => NoiseFamily::StudentT {
            dof: cfg.observations.dof.ok_or_else(|| {
                Error::Config("observations.dof: required for the student-t family".into())
            })?,
        },
    };
    let observer = Arc::new(Observer::uniform_grid(
        &transform,
        cfg.observations.stations_per_side,
        cfg.radius(),
        cfg.observations.variance,
        family,
    )?);
    Ok(ModelParts {
        lattice,
        transform,
        solver,
        observer,
    })
}

/// In-memory result of a finished run.
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Directory the artifacts were written to.
    pub out_dir: PathBuf,
    /// Cache file the dataset lives in, when a cache directory was used.
    pub data_path: Option<PathBuf>,
    /// Whether the dataset was generated rather than loaded.
    pub data_fresh: bool,
}

/// Run one experiment end to end and write all artifacts into `out_dir`.
///
/// `data_dir` selects the dataset cache directory (`None` regenerates in
/// memory); `threads` pins the worker pool size (`None` uses the default).
/// Results are byte-identical across thread counts.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    data_dir: Option<&Path>,
    threads: Option<usize>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    pool.install(|| run_inner(cfg, out_dir, data_dir))
}

/// The particle-based variants share an ensemble; the Kalman baseline has
/// its own.
enum Machine {
    Particles(Ensemble),
    Kalman(EnkfEnsemble),
}

fn run_inner(cfg: &ExperimentConfig, out_dir: &Path, data_dir: Option<&Path>) -> Result<RunOutput> {
    let start = Instant::now();
    let model = build_model(cfg)?;
    fs::create_dir_all(out_dir)?;
    let dataset = data::load_or_generate(cfg, &model.solver, &model.observer, data_dir)?;

    let prior = build_prior(cfg, &dataset)?;
    let variant = cfg.filter.variant;
    let mut machine = match variant {
        Variant::Enkf => Machine::Kalman(EnkfEnsemble::init(
            cfg.filter.particles,
            &prior,
            cfg.seeds.filter,
        )?),
        _ => Machine::Particles(Ensemble::init(
            cfg.filter.particles,
            &prior,
            cfg.seeds.filter,
        )?),
    };

    let mean_steps: BTreeSet<usize> = cfg
        .output
        .save_mean_at
        .iter()
        .copied()
        .chain(std::iter::once(cfg.truth.intervals))
        .collect();
    let ratio_steps: BTreeSet<usize> = cfg.output.variance_ratio_at.iter().copied().collect();
    let mut unconditioned = if ratio_steps.is_empty() {
        None
    } else {
        Some(EnkfEnsemble::init(
            cfg.filter.particles,
            &prior,
            cfg.seeds.filter.wrapping_add(UNCONDITIONED_SEED_OFFSET),
        )?)
    };

    let tempering = TemperingConfig {
        alpha: cfg.filter.ess_fraction,
        max_levels: cfg.filter.max_levels,
        resample_final: cfg.filter.resample_final,
    };
    let pcn = PcnConfig {
        moves: cfg.filter.pcn.moves,
        rho: cfg.filter.pcn.rho,
        rho_init: cfg.filter.pcn.rho_init,
    };

    let mut run = RunMetrics::new(variant.as_str(), cfg.seeds.filter, cfg.config_hash());
    let mut saved_means: Vec<(usize, SpectralField)> = Vec::new();
    let mut saved_ratios: Vec<(usize, Vec<Option<f64>>)> = Vec::new();

    for n in 0..cfg.truth.intervals {
        let y = &dataset.observations[n];
        let (mut metrics, mean) = match &mut machine {
            Machine::Kalman(ens) => {
                let rec = assimilate_enkf(ens, &model.solver, &model.observer, y)?;
                (
                    StepMetrics {
                        step: n,
                        time: 0.0,
                        phis: Vec::new(),
                        ess: Vec::new(),
                        noise_accept: Vec::new(),
                        init_accept: Vec::new(),
                        l2_error: None,
                    },
                    rec.posterior_mean,
                )
            }
            Machine::Particles(ens) => {
                let proposal = if variant.uses_guidance() {
                    Some(GuidedProposal::new(
                        &model.observer,
                        model.solver.noise_spec(),
                        cfg.dynamics.interval,
                        cfg.dynamics.steps_per_interval,
                        y.clone(),
                    )?)
                } else {
                    None
                };
                let ctx = StepContext {
                    solver: &model.solver,
                    observer: &model.observer,
                    y,
                    proposal: proposal.as_ref(),
                    prior: &prior,
                    step_index: n,
                };
                if variant.uses_tempering() {
                    let rec = assimilate_tempered(ens, &ctx, &tempering, &pcn)?;
                    (
                        StepMetrics {
                            step: n,
                            time: 0.0,
                            phis: rec.phis,
                            ess: rec.ess,
                            noise_accept: rec.noise_accept,
                            init_accept: rec.init_accept,
                            l2_error: None,
                        },
                        rec.posterior_mean,
                    )
                } else {
                    let rec = assimilate_naive(ens, &ctx)?;
                    (
                        StepMetrics {
                            step: n,
                            time: 0.0,
                            phis: vec![1.0],
                            ess: vec![rec.ess],
                            noise_accept: Vec::new(),
                            init_accept: Vec::new(),
                            l2_error: None,
                        },
                        rec.posterior_mean,
                    )
                }
            }
        };
        metrics.time = (n + 1) as f64 * cfg.dynamics.interval;
        metrics.l2_error = Some(diagnostics::l2_vorticity_error(&mean, &dataset.truth[n + 1])?);
        run.push(metrics);

        if let Some(uncond) = &mut unconditioned {
            uncond.forecast(&model.solver)?;
            if ratio_steps.contains(&(n + 1)) {
                let posterior = posterior_states(&machine);
                let ratios = diagnostics::variance_ratio(&posterior, uncond.members())?;
                saved_ratios.push((n + 1, ratios));
            }
        }
        if mean_steps.contains(&(n + 1)) {
            saved_means.push((n + 1, mean));
        }
    }

    write_artifacts(cfg, out_dir, &run, &machine, &saved_means, &saved_ratios)?;
    report::write_timing(out_dir, start.elapsed().as_secs_f64())?;
    Ok(RunOutput {
        metrics: run,
        out_dir: out_dir.to_path_buf(),
        data_path: dataset.path,
        data_fresh: dataset.fresh,
    })
}

/// The filtering prior: centered at the true initial state, either with the
/// configured spread or collapsed to a point for perfect initialization.
fn build_prior(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<PriorSpec> {
    let beta = match cfg.filter.init {
        InitMode::Prior => cfg.prior.beta,
        InitMode::Perfect => 0.0,
    };
    PriorSpec::new(dataset.truth[0].clone(), beta, cfg.prior.alpha)
}

fn posterior_states(machine: &Machine) -> Vec<SpectralField> {
    match machine {
        Machine::Particles(ens) => ens.particles().iter().map(|p| p.state.clone()).collect(),
        Machine::Kalman(ens) => ens.members().to_vec(),
    }
}

fn final_weights(machine: &Machine) -> Vec<f64> {
    match machine {
        Machine::Particles(ens) => ens.particles().iter().map(|p| p.log_weight).collect(),
        Machine::Kalman(ens) => vec![0.0; ens.members().len()],
    }
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    run: &RunMetrics,
    machine: &Machine,
    saved_means: &[(usize, SpectralField)],
    saved_ratios: &[(usize, Vec<Option<f64>>)],
) -> Result<()> {
    let summary = SummaryFile {
        compat_hash: cfg.compat_hash(),
        data_hash: cfg.data_hash(),
        config: cfg.clone(),
        run: run.clone(),
    };
    report::write_summary(out_dir, &summary)?;
    report::write_steps_csv(out_dir, run)?;
    report::write_tempering_csv(out_dir, run)?;
    for (step, mean) in saved_means {
        report::write_field_csv(out_dir, &format!("posterior_mean_{step}.csv"), mean)?;
    }
    if let Some((_, first)) = saved_ratios.first() {
        let modes = match machine {
            Machine::Particles(ens) => ens.particles()[0].state.lattice().modes().to_vec(),
            Machine::Kalman(ens) => ens.members()[0].lattice().modes().to_vec(),
        };
        debug_assert_eq!(modes.len(), first.len());
        for (step, ratios) in saved_ratios {
            report::write_variance_ratio_csv(out_dir, *step, &modes, ratios)?;
        }
    }
    if !cfg.output.modes_of_interest.is_empty() {
        let states = posterior_states(machine);
        let weights = final_weights(machine);
        for &k in &cfg.output.modes_of_interest {
            for component in [Component::Real, Component::Imag] {
                let pdf = diagnostics::marginal_pdf(
                    &states,
                    &weights,
                    k,
                    component,
                    cfg.output.pdf_bins,
                    cfg.output.pdf_grid,
                )?;
                report::write_pdf_csv(out_dir, k, component, &pdf)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::testutil::tiny_config;

    fn file_names(dir: &Path) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    }

    #[test]
    fn a_run_writes_the_full_artifact_set() {
        for variant in [Variant::Ispft, Variant::Pf, Variant::Enkf] {
            let cfg = tiny_config(variant);
            let dir = tempfile::tempdir().unwrap();
            let out = run_experiment(&cfg, dir.path(), None, Some(1)).unwrap();
            assert_eq!(out.metrics.steps.len(), 3);
            assert!(out.metrics.steps.iter().all(|s| s.l2_error.unwrap().is_finite()));

            let names = file_names(dir.path());
            for required in [
                "summary.json",
                "steps.csv",
                "tempering.csv",
                "posterior_mean_1.csv",
                "posterior_mean_3.csv",
                "variance_ratio_3.csv",
                "pdf_re_1_0.csv",
                "pdf_im_1_0.csv",
                "pdf_re_1_-1.csv",
                "pdf_im_1_-1.csv",
                "timing.json",
            ] {
                assert!(
                    names.iter().any(|n| n == required),
                    "{variant:?} run missing {required}; wrote {names:?}"
                );
            }

            let summary = report::read_summary(dir.path()).unwrap();
            assert_eq!(summary.run.variant, variant.as_str());
            assert_eq!(summary.config, cfg);
        }
    }

    #[test]
    fn reruns_are_byte_identical_except_timing() {
        let cfg = tiny_config(Variant::Ispft);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir_a.path(), None, Some(1)).unwrap();
        run_experiment(&cfg, dir_b.path(), None, Some(2)).unwrap();

        let names = file_names(dir_a.path());
        assert_eq!(names, file_names(dir_b.path()));
        for name in names {
            if name == "timing.json" {
                continue;
            }
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between thread counts");
        }
    }

    #[test]
    fn variants_observe_identical_data() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let out_pf = run_experiment(&tiny_config(Variant::Pf), &dir.path().join("pf"), Some(&data), Some(1)).unwrap();
        assert!(out_pf.data_fresh);
        let out_enkf = run_experiment(
            &tiny_config(Variant::Enkf),
            &dir.path().join("enkf"),
            Some(&data),
            Some(1),
        )
        .unwrap();
        assert!(!out_enkf.data_fresh, "second variant should reuse the cache");
        assert_eq!(out_pf.data_path, out_enkf.data_path);
    }

    #[test]
    fn perfect_init_duplicates_the_truth_start() {
        let mut cfg = tiny_config(Variant::Ispf);
        cfg.filter.init = InitMode::Perfect;
        cfg.output.variance_ratio_at.clear();
        cfg.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path(), None, Some(1)).unwrap();
        // With every particle started on the truth and informative
        // observations, early errors stay modest and finite.
        assert!(out.metrics.steps[0].l2_error.unwrap().is_finite());
    }
}
