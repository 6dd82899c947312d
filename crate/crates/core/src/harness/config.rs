//! Experiment configuration: the documented TOML schema, validation, and
//! the content hashes that key output provenance and the data cache.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which filter runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Bootstrap particle filter.
    Pf,
    /// Particle filter with the guided (likelihood-informed) proposal.
    Ispf,
    /// Bootstrap particle filter with adaptive tempering and rejuvenation.
    Pft,
    /// Guided proposal with adaptive tempering and rejuvenation.
    Ispft,
    /// Stochastic ensemble Kalman filter baseline.
    Enkf,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pf => "pf",
            Variant::Ispf => "ispf",
            Variant::Pft => "pft",
            Variant::Ispft => "ispft",
            Variant::Enkf => "enkf",
        }
    }

    pub fn uses_guidance(self) -> bool {
        matches!(self, Variant::Ispf | Variant::Ispft)
    }

    pub fn uses_tempering(self) -> bool {
        matches!(self, Variant::Pft | Variant::Ispft)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pf" => Ok(Variant::Pf),
            "ispf" => Ok(Variant::Ispf),
            "pft" => Ok(Variant::Pft),
            "ispft" => Ok(Variant::Ispft),
            "enkf" => Ok(Variant::Enkf),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}; expected pf, ispf, pft, ispft, or enkf"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How particles are initialized at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Independent draws from the prior around the true initial state.
    Prior,
    /// Every particle placed exactly at the true initial state.
    Perfect,
}

/// Observation-noise family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// Spectral truncation: modes with both wavenumber components in
    /// [-L, L] are retained.
    pub max_wavenumber: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Viscosity.
    pub nu: f64,
    /// Observation spacing.
    pub interval: f64,
    /// Integrator steps per observation interval.
    pub steps_per_interval: usize,
    /// Include the advection term; `false` runs the linear model.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Overall noise strength; per-mode amplitude is
    /// `sqrt(2 delta nu) |k|^-decay`.
    pub delta: f64,
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Prior spread around the true initial state.
    pub beta: f64,
    /// Prior regularity exponent.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// Regularity exponent of the law the true initial state is drawn from.
    pub alpha: f64,
    /// Number of observation times.
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    /// Stations per side of the uniform square grid.
    pub stations_per_side: usize,
    /// Averaging-disc radius; defaults to `pi / (4 L)`.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Noise variance per observed coordinate.
    pub variance: f64,
    pub family: Family,
    /// Degrees of freedom; required for the Student-t family.
    #[serde(default)]
    pub dof: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_ess_fraction() -> f64 {
    0.5
}

fn default_max_levels() -> usize {
    200
}

fn default_pcn_moves() -> usize {
    10
}

fn default_pcn_rho() -> f64 {
    0.5
}

fn default_pcn_rho_init() -> f64 {
    0.9
}

fn default_init() -> InitMode {
    InitMode::Prior
}

fn default_pdf_bins() -> usize {
    40
}

fn default_pdf_grid() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcnSection {
    /// Rejuvenation sweeps per tempering level.
    #[serde(default = "default_pcn_moves")]
    pub moves: usize,
    /// Autoregressive coefficient of the driving-noise crank.
    #[serde(default = "default_pcn_rho")]
    pub rho: f64,
    /// Autoregressive coefficient of the initial-state crank.
    #[serde(default = "default_pcn_rho_init")]
    pub rho_init: f64,
}

impl Default for PcnSection {
    fn default() -> Self {
        Self {
            moves: default_pcn_moves(),
            rho: default_pcn_rho(),
            rho_init: default_pcn_rho_init(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub variant: Variant,
    /// Ensemble size.
    pub particles: usize,
    /// Tempering triggers when the effective sample size falls below this
    /// fraction of the ensemble.
    #[serde(default = "default_ess_fraction")]
    pub ess_fraction: f64,
    /// Hard cap on tempering levels per step.
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    /// Resample and rejuvenate at temperature one as well; `false` carries
    /// the final-level weights into the next step.
    #[serde(default = "default_true")]
    pub resample_final: bool,
    #[serde(default = "default_init")]
    pub init: InitMode,
    #[serde(default)]
    pub pcn: PcnSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    /// Seeds the true signal and the observation noise.
    pub truth: u64,
    /// Seeds the filter (particle initialization, propagation, moves).
    pub filter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Modes whose final-step marginal densities are written.
    pub modes_of_interest: Vec<[i32; 2]>,
    pub pdf_bins: usize,
    pub pdf_grid: usize,
    /// Steps (1-based) at which the posterior-mean field is written; the
    /// final step is always included.
    pub save_mean_at: Vec<usize>,
    /// Steps (1-based) at which posterior-to-prior variance ratios are
    /// written.
    pub variance_ratio_at: Vec<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            modes_of_interest: Vec::new(),
            pdf_bins: default_pdf_bins(),
            pdf_grid: default_pdf_grid(),
            save_mean_at: Vec::new(),
            variance_ratio_at: Vec::new(),
        }
    }
}

/// One fully specified experiment. See the README for the documented TOML
/// layout; every preset can be printed as a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    pub dynamics: DynamicsSection,
    pub noise: NoiseSection,
    pub prior: PriorSection,
    pub truth: TruthSection,
    pub observations: ObservationSection,
    pub filter: FilterSection,
    pub seeds: SeedsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn fail(field: &str, reason: impl Into<String>) -> Error {
    Error::Config(format!("{field}: {}", reason.into()))
}

impl ExperimentConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialize back to TOML (round-trips through [`Self::from_toml`]).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Averaging-disc radius with the default applied.
    pub fn radius(&self) -> f64 {
        self.observations
            .radius
            .unwrap_or(std::f64::consts::PI / (4.0 * self.lattice.max_wavenumber as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lattice.max_wavenumber;
        if l == 0 {
            return Err(fail("lattice.max_wavenumber", "must be at least 1"));
        }
        if !(self.dynamics.nu > 0.0) {
            return Err(fail("dynamics.nu", "viscosity must be positive"));
        }
        if !(self.dynamics.interval > 0.0) {
            return Err(fail("dynamics.interval", "observation spacing must be positive"));
        }
        if self.dynamics.steps_per_interval == 0 {
            return Err(fail("dynamics.steps_per_interval", "needs at least one step"));
        }
        if !(self.noise.delta >= 0.0) {
            return Err(fail("noise.delta", "noise strength must be nonnegative"));
        }
        if self.noise.delta > 0.0 && !(self.noise.decay > 1.0) {
            return Err(fail(
                "noise.decay",
                "amplitude decay must exceed 1 for a trace-class noise covariance",
            ));
        }
        if !(self.prior.beta >= 0.0) {
            return Err(fail("prior.beta", "prior spread must be nonnegative"));
        }
        if !(self.prior.alpha > 2.0) {
            return Err(fail("prior.alpha", "prior regularity needs alpha > 2"));
        }
        if !(self.truth.alpha > 2.0) {
            return Err(fail("truth.alpha", "truth regularity needs alpha > 2"));
        }
        if self.truth.intervals == 0 {
            return Err(fail("truth.intervals", "needs at least one observation time"));
        }
        if self.observations.stations_per_side == 0 {
            return Err(fail(
                "observations.stations_per_side",
                "needs at least one station per side",
            ));
        }
        if !(self.radius() > 0.0) {
            return Err(fail("observations.radius", "averaging radius must be positive"));
        }
        if !(self.observations.variance > 0.0) {
            return Err(fail("observations.variance", "noise variance must be positive"));
        }
        match (self.observations.family, self.observations.dof) {
            (Family::StudentT, None) => {
                return Err(fail(
                    "observations.dof",
                    "the student-t family needs degrees of freedom",
                ));
            }
            (Family::StudentT, Some(d)) if !(d > 0.0) => {
                return Err(fail("observations.dof", "degrees of freedom must be positive"));
            }
            (Family::Gaussian, Some(_)) => {
                return Err(fail(
                    "observations.dof",
                    "degrees of freedom only apply to the student-t family",
                ));
            }
            _ => {}
        }
        let min_particles = if self.filter.variant == Variant::Enkf { 2 } else { 1 };
        if self.filter.particles < min_particles {
            return Err(fail(
                "filter.particles",
                format!("this variant needs at least {min_particles}"),
            ));
        }
        if !(self.filter.ess_fraction > 0.0 && self.filter.ess_fraction <= 1.0) {
            return Err(fail("filter.ess_fraction", "must lie in (0, 1]"));
        }
        if self.filter.max_levels == 0 {
            return Err(fail("filter.max_levels", "needs at least one level"));
        }
        for (name, rho) in [
            ("filter.pcn.rho", self.filter.pcn.rho),
            ("filter.pcn.rho_init", self.filter.pcn.rho_init),
        ] {
            if !(0.0..=1.0).contains(&rho) {
                return Err(fail(name, "autoregressive coefficient must lie in [0, 1]"));
            }
        }
        let li = l as i32;
        for k in &self.output.modes_of_interest {
            let on_lattice = k.iter().all(|c| c.abs() <= li)
                && (k[0] + k[1] > 0 || (k[0] + k[1] == 0 && k[0] > 0));
            if !on_lattice {
                return Err(fail(
                    "output.modes_of_interest",
                    format!(
                        "({}, {}) is not a stored half-lattice mode for this truncation",
                        k[0], k[1]
                    ),
                ));
            }
        }
        if self.output.pdf_bins == 0 || self.output.pdf_grid < 2 {
            return Err(fail(
                "output.pdf_bins",
                "need at least one bin and two density grid points",
            ));
        }
        for (name, steps) in [
            ("output.save_mean_at", &self.output.save_mean_at),
            ("output.variance_ratio_at", &self.output.variance_ratio_at),
        ] {
            for &s in steps.iter() {
                if s == 0 || s > self.truth.intervals {
                    return Err(fail(
                        name,
                        format!("step {s} is outside 1..={}", self.truth.intervals),
                    ));
                }
            }
        }
        if !self.output.variance_ratio_at.is_empty() && self.filter.particles < 2 {
            return Err(fail(
                "output.variance_ratio_at",
                "variance ratios need at least two particles",
            ));
        }
        Ok(())
    }

    /// Hash of the complete resolved configuration; recorded in every
    /// output file set.
    pub fn config_hash(&self) -> String {
        hash_json(self)
    }

    /// Hash that ignores the filter seed, so repeated runs of one
    /// experiment with different seeds can be recognized as aggregatable.
    pub fn compat_hash(&self) -> String {
        let mut reduced = self.clone();
        reduced.seeds.filter = 0;
        hash_json(&reduced)
    }

    /// Hash over everything that determines the simulated truth and
    /// observations; keys the data cache shared between variants.
    pub fn data_hash(&self) -> String {
        #[derive(Serialize)]
        struct DataKey<'a> {
            lattice: &'a LatticeSection,
            dynamics: &'a DynamicsSection,
            noise: &'a NoiseSection,
            truth: &'a TruthSection,
            observations: &'a ObservationSection,
            radius: f64,
            seed: u64,
        }
        hash_json(&DataKey {
            lattice: &self.lattice,
            dynamics: &self.dynamics,
            noise: &self.noise,
            truth: &self.truth,
            observations: &self.observations,
            radius: self.radius(),
            seed: self.seeds.truth,
        })
    }
}

fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&json);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    fn smoke() -> ExperimentConfig {
        presets::preset("shortrun-ispft-desk").unwrap()
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for (name, _) in presets::preset_list() {
            let cfg = presets::preset(name).unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(cfg, back, "round trip changed preset {name}");
        }
    }

    #[test]
    fn validation_pinpoints_the_field() {
        let mut cfg = smoke();
        cfg.observations.variance = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("observations.variance"), "got: {err}");

        let mut cfg = smoke();
        cfg.filter.ess_fraction = 1.5;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("filter.ess_fraction"), "got: {err}");

        let mut cfg = smoke();
        cfg.observations.family = Family::StudentT;
        cfg.observations.dof = None;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("observations.dof"), "got: {err}");

        let mut cfg = smoke();
        cfg.output.modes_of_interest = vec![[0, -1]];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("modes_of_interest"), "got: {err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut text = smoke().to_toml();
        text.push_str("\n[surprise]\nvalue = 1\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hashes_distinguish_what_they_should() {
        let a = smoke();
        let mut b = smoke();
        b.seeds.filter += 1;
        // Different filter seeds: different identity, same compatibility,
        // same data.
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.compat_hash(), b.compat_hash());
        assert_eq!(a.data_hash(), b.data_hash());

        let mut c = smoke();
        c.seeds.truth += 1;
        assert_ne!(a.data_hash(), c.data_hash());

        let mut d = smoke();
        d.filter.variant = Variant::Pf;
        // A different variant is a different experiment but observes the
        // same data.
        assert_ne!(a.compat_hash(), d.compat_hash());
        assert_eq!(a.data_hash(), d.data_hash());
    }

    #[test]
    fn variant_strings_round_trip() {
        for v in [Variant::Pf, Variant::Ispf, Variant::Pft, Variant::Ispft, Variant::Enkf] {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }
}
