//! Stochastic Navier-Stokes dynamics in spectral coordinates: the per-mode
//! noise model, Gaussian priors on the initial velocity, and an exponential
//! Euler integrator that treats the viscous part exactly.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{FftScratch, SpectralField, Transform};

/// Per-mode amplitudes `sigma_k` of the spatially smooth driving noise.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    sigma: Vec<f64>,
}

impl NoiseSpec {
    /// Power-law amplitudes `sigma_k = sqrt(2 delta nu) |k|^-decay`.
    ///
    /// `decay > 1` is required when `delta > 0` so that the driving noise has
    /// finite total energy injection (the amplitude sequence must be square
    /// summable over the plane); `delta = 0` gives deterministic dynamics.
    pub fn power_law(
        lattice: &crate::spectral::Lattice,
        delta: f64,
        nu: f64,
        decay: f64,
    ) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("noise strength must be nonnegative, got {delta}"),
            });
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("viscosity must be positive, got {nu}"),
            });
        }
        if delta > 0.0 && !(decay > 1.0) {
            return Err(Error::InvalidParameter {
                name: "decay",
                reason: format!(
                    "noise amplitudes |k|^-decay need decay > 1 for finite total variance, got {decay}"
                ),
            });
        }
        let amp = (2.0 * delta * nu).sqrt();
        Ok(Self {
            sigma: lattice.norm().iter().map(|&n| amp * n.powf(-decay)).collect(),
        })
    }

    pub fn from_amplitudes(sigma: Vec<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "noise amplitudes must be nonnegative and finite".into(),
            });
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Complex Brownian increments for every inner step of one observation
/// interval, stored step-major. Each coordinate (real and imaginary part)
/// of an increment has variance `dt / 2`, so `E |dZ_k|^2 = dt`.
#[derive(Debug, Clone)]
pub struct NoisePath {
    dt: f64,
    n_modes: usize,
    increments: Vec<Complex64>,
}

impl NoisePath {
    pub fn sample(n_modes: usize, n_steps: usize, dt: f64, rng: &mut impl Rng) -> Self {
        let half = (dt / 2.0).sqrt();
        let increments = (0..n_modes * n_steps)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(half * re, half * im)
            })
            .collect();
        Self {
            dt,
            n_modes,
            increments,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len() / self.n_modes
    }

    pub fn step(&self, j: usize) -> &[Complex64] {
        &self.increments[j * self.n_modes..(j + 1) * self.n_modes]
    }

    /// Autoregressive crank `z' = rho z + sqrt(1 - rho^2) fresh`, which
    /// preserves the Gaussian increment law for `rho` in [-1, 1].
    pub fn crank(&self, rho: f64, rng: &mut impl Rng) -> Self {
        let fresh = (1.0 - rho * rho).max(0.0).sqrt() * (self.dt / 2.0).sqrt();
        let increments = self
            .increments
            .iter()
            .map(|z| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                rho * z + Complex64::new(fresh * re, fresh * im)
            })
            .collect();
        Self {
            dt: self.dt,
            n_modes: self.n_modes,
            increments,
        }
    }
}

/// Gaussian law `N(mean, beta^2 A^-alpha)` on velocity fields, with `A` the
/// Stokes operator; mode `k` fluctuates with complex variance
/// `beta^2 |k|^(-2 alpha)`.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    mean: SpectralField,
    scale: Vec<f64>,
}

impl PriorSpec {
    pub fn new(mean: SpectralField, beta: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 2.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("prior regularity needs alpha > 2, got {alpha}"),
            });
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("prior spread must be nonnegative, got {beta}"),
            });
        }
        let scale = mean
            .lattice()
            .norm()
            .iter()
            .map(|&n| beta * n.powf(-alpha) / 2.0_f64.sqrt())
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn mean(&self) -> &SpectralField {
        &self.mean
    }

    /// Per-mode complex standard deviation divided by sqrt(2), i.e. the
    /// standard deviation of each real coordinate.
    pub fn coordinate_sd(&self) -> &[f64] {
        &self.scale
    }

    /// A zero-mean draw from the prior covariance.
    pub fn fluctuation(&self, rng: &mut impl Rng) -> SpectralField {
        let mut f = SpectralField::zeros(self.mean.lattice());
        for (c, &s) in f.coeffs_mut().iter_mut().zip(&self.scale) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *c = Complex64::new(s * re, s * im);
        }
        f
    }

    pub fn sample(&self, rng: &mut impl Rng) -> SpectralField {
        let mut f = self.fluctuation(rng);
        for (c, m) in f.coeffs_mut().iter_mut().zip(self.mean.coeffs()) {
            *c += m;
        }
        f
    }
}

/// Extra drift added to the dynamics, evaluated along the path. The solver
/// adds `sigma_k * g_k` to the spectral rate of change, where `g` is what
/// `eval` writes, and accumulates the corresponding change-of-measure
/// log weight.
pub trait Drift {
    /// Write `g(tau, v)` into `out`; `tau` is time since the segment start.
    fn eval(&self, tau: f64, v: &SpectralField, fft: &mut FftScratch, out: &mut [Complex64]);
}

/// The stored start state and driving noise of one observation interval;
/// enough to replay or perturb the segment.
#[derive(Debug, Clone)]
pub struct PathSegment {
    pub start: SpectralField,
    pub noise: NoisePath,
}

/// Integrator settings for one observation interval.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub nu: f64,
    /// Length of the observation interval.
    pub interval: f64,
    pub steps_per_interval: usize,
    /// Include the advection term; `false` gives the linear (Stokes) model.
    pub nonlinear: bool,
    /// Constant-in-time body forcing, if any.
    pub forcing: Option<SpectralField>,
}

/// Working buffers for one solver worker.
pub struct SolverScratch {
    pub fft: FftScratch,
    rate: Vec<Complex64>,
    g: Vec<Complex64>,
}

/// Exponential Euler integrator: the viscous semigroup is applied exactly,
/// the remaining terms enter through the phi-function weight, and the noise
/// increment is scaled so every mode has the exact Ornstein-Uhlenbeck
/// transition variance.
pub struct Solver {
    transform: Arc<Transform>,
    config: SolverConfig,
    noise: NoiseSpec,
    /// `exp(-lambda_k dt)` with `lambda_k = nu |k|^2`.
    decay: Vec<f64>,
    /// `dt * phi1(lambda_k dt) = (1 - exp(-lambda_k dt)) / lambda_k`.
    phi1dt: Vec<f64>,
    /// `sigma_k * sqrt((1 - exp(-2 lambda_k dt)) / (2 lambda_k dt))`.
    namp: Vec<f64>,
}

impl Solver {
    pub fn new(transform: &Arc<Transform>, config: SolverConfig, noise: NoiseSpec) -> Result<Self> {
        let lattice = transform.lattice();
        if !(config.nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("viscosity must be positive, got {}", config.nu),
            });
        }
        if !(config.interval > 0.0) {
            return Err(Error::InvalidParameter {
                name: "interval",
                reason: format!("observation interval must be positive, got {}", config.interval),
            });
        }
        if config.steps_per_interval == 0 {
            return Err(Error::InvalidParameter {
                name: "steps_per_interval",
                reason: "at least one inner step is required".into(),
            });
        }
        if noise.sigma().len() != lattice.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "noise has {} amplitudes, lattice has {} modes",
                noise.sigma().len(),
                lattice.n_modes()
            )));
        }
        if let Some(f) = &config.forcing {
            f.check_lattice(lattice)?;
        }
        let dt = config.interval / config.steps_per_interval as f64;
        let mut decay = Vec::with_capacity(lattice.n_modes());
        let mut phi1dt = Vec::with_capacity(lattice.n_modes());
        let mut namp = Vec::with_capacity(lattice.n_modes());
        for (i, &nsq) in lattice.norm_sq().iter().enumerate() {
            let lambda = config.nu * nsq;
            let z = lambda * dt;
            decay.push((-z).exp());
            phi1dt.push((-(-z).exp_m1()) / lambda);
            namp.push(noise.sigma()[i] * ((-(-2.0 * z).exp_m1()) / (2.0 * z)).sqrt());
        }
        Ok(Self {
            transform: Arc::clone(transform),
            config,
            noise,
            decay,
            phi1dt,
            namp,
        })
    }

    pub fn transform(&self) -> &Arc<Transform> {
        &self.transform
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn noise_spec(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Inner step size `interval / steps_per_interval`.
    pub fn dt_inner(&self) -> f64 {
        self.config.interval / self.config.steps_per_interval as f64
    }

    pub fn make_scratch(&self) -> SolverScratch {
        let n = self.transform.lattice().n_modes();
        SolverScratch {
            fft: self.transform.make_scratch(),
            rate: vec![Complex64::ZERO; n],
            g: vec![Complex64::ZERO; n],
        }
    }

    pub fn sample_noise(&self, rng: &mut impl Rng) -> NoisePath {
        NoisePath::sample(
            self.transform.lattice().n_modes(),
            self.config.steps_per_interval,
            self.dt_inner(),
            rng,
        )
    }

    /// Integrate one observation interval driven by the given noise path.
    ///
    /// Returns the endpoint and the accumulated change-of-measure log weight
    /// (zero when no extra drift is supplied). The drift is evaluated at the
    /// left endpoint of each inner step, so it is adapted to the noise.
    pub fn resolve_segment(
        &self,
        start: &SpectralField,
        noise: &NoisePath,
        drift: Option<&dyn Drift>,
        scratch: &mut SolverScratch,
    ) -> Result<(SpectralField, f64)> {
        start.check_lattice(self.transform.lattice())?;
        let n_modes = self.transform.lattice().n_modes();
        if noise.n_modes != n_modes || noise.n_steps() != self.config.steps_per_interval {
            return Err(Error::DimensionMismatch(
                "noise path does not match the solver discretization".into(),
            ));
        }
        let dt = noise.dt();
        let mut v = start.clone();
        let mut girsanov_log = 0.0;
        for j in 0..noise.n_steps() {
            let dz = noise.step(j);
            scratch.rate.fill(Complex64::ZERO);
            if self.config.nonlinear {
                self.transform
                    .nonlinear_term_into(&v, &mut scratch.fft, &mut scratch.rate);
                for r in scratch.rate.iter_mut() {
                    *r = -*r;
                }
            }
            if let Some(f) = &self.config.forcing {
                for (r, fk) in scratch.rate.iter_mut().zip(f.coeffs()) {
                    *r += fk;
                }
            }
            if let Some(d) = drift {
                d.eval(j as f64 * dt, &v, &mut scratch.fft, &mut scratch.g);
                let mut lin = 0.0;
                let mut quad = 0.0;
                for ((r, gk), (dzk, &sig)) in scratch
                    .rate
                    .iter_mut()
                    .zip(&scratch.g)
                    .zip(dz.iter().zip(self.noise.sigma()))
                {
                    *r += sig * gk;
                    lin += (gk.conj() * dzk).re;
                    quad += gk.norm_sqr();
                }
                girsanov_log += -2.0 * lin - dt * quad;
            }
            for (i, u) in v.coeffs_mut().iter_mut().enumerate() {
                *u = self.decay[i] * *u + self.phi1dt[i] * scratch.rate[i] + self.namp[i] * dz[i];
            }
        }
        Ok((v, girsanov_log))
    }

    /// Sample fresh noise and integrate; returns the replayable segment, the
    /// endpoint, and the change-of-measure log weight.
    pub fn simulate_segment(
        &self,
        start: &SpectralField,
        drift: Option<&dyn Drift>,
        scratch: &mut SolverScratch,
        rng: &mut impl Rng,
    ) -> Result<(PathSegment, SpectralField, f64)> {
        let noise = self.sample_noise(rng);
        let (end, glog) = self.resolve_segment(start, &noise, drift, scratch)?;
        Ok((
            PathSegment {
                start: start.clone(),
                noise,
            },
            end,
            glog,
        ))
    }
}
