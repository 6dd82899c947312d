//! Particle filtering in path space: weighting, adaptive tempering,
//! systematic resampling, and preconditioned Crank-Nicolson rejuvenation.
//!
//! Each particle carries the endpoint of the current observation interval
//! together with the segment (start state and driving noise) that produced
//! it, so rejuvenation moves can perturb the driving noise and replay the
//! segment without touching anything before the previous observation time.
//! Every particle slot owns an independent counter-based random stream that
//! stays with the slot through resampling, which makes runs reproducible and
//! independent of the number of worker threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::dynamics::{Drift, PathSegment, PriorSpec, Solver, SolverScratch};
use crate::error::{Error, Result};
use crate::guidance::GuidedProposal;
use crate::observation::Observer;
use crate::spectral::SpectralField;

/// Stream index reserved for ensemble-level draws (resampling offsets);
/// particle slots use their own index.
const GLOBAL_STREAM: u64 = u64::MAX;

/// Log-sum-exp, ignoring `-inf` entries; `-inf` when all entries are.
fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Effective sample size `(sum w)^2 / sum w^2` of unnormalized log weights,
/// evaluated in log space for stability.
pub fn ess_of(log_weights: &[f64]) -> Result<f64> {
    if log_weights.is_empty() {
        return Err(Error::DegenerateEnsemble("no particles".into()));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFinite("log weight is NaN or +inf".into()));
    }
    let l1 = log_sum_exp(log_weights);
    if l1 == f64::NEG_INFINITY {
        return Err(Error::DegenerateEnsemble(
            "all particle weights vanished".into(),
        ));
    }
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    Ok((2.0 * l1 - log_sum_exp(&doubled)).exp())
}

fn ess_at(base: &[f64], ell: &[f64], delta: f64) -> Result<f64> {
    let logw: Vec<f64> = base
        .iter()
        .zip(ell)
        .map(|(b, l)| b + delta * l)
        .collect();
    ess_of(&logw)
}

/// Smallest temperature increase that brings the effective sample size down
/// to `target_ess`, starting from weights `exp(base + (phi - phi_prev) ell)`.
///
/// Returns 1 when even the full remaining increment keeps the effective
/// sample size at or above the target; otherwise bisects the increment to
/// absolute tolerance 1e-10.
pub fn next_temperature_weighted(
    base: &[f64],
    log_likelihoods: &[f64],
    phi_prev: f64,
    target_ess: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&phi_prev) {
        return Err(Error::InvalidParameter {
            name: "phi_prev",
            reason: format!("temperature must lie in [0, 1), got {phi_prev}"),
        });
    }
    if log_likelihoods.iter().any(|l| l.is_nan()) {
        return Err(Error::NonFinite("log likelihood is NaN".into()));
    }
    if ess_at(base, log_likelihoods, 1.0 - phi_prev)? >= target_ess {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0 - phi_prev);
    // ess_at(lo) >= target may fail when carried-in weights are already
    // degenerate; the bisection then collapses onto phi_prev and the caller's
    // level cap catches the stall.
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if ess_at(base, log_likelihoods, mid)? >= target_ess {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(phi_prev + 0.5 * (lo + hi))
}

/// [`next_temperature_weighted`] from uniform base weights.
pub fn next_temperature(
    log_likelihoods: &[f64],
    phi_prev: f64,
    target_ess: f64,
) -> Result<f64> {
    let base = vec![0.0; log_likelihoods.len()];
    next_temperature_weighted(&base, log_likelihoods, phi_prev, target_ess)
}

/// Systematic resampling: one uniform offset, comb positions `(j + u) / N`
/// against the cumulative normalized weights. Returns ancestor indices in
/// nondecreasing order; every particle leaves floor or ceiling of `N w`
/// offspring.
pub fn systematic_resample(log_weights: &[f64], rng: &mut impl Rng) -> Result<Vec<usize>> {
    let n = log_weights.len();
    let norm = log_sum_exp(log_weights);
    if norm == f64::NEG_INFINITY {
        return Err(Error::DegenerateEnsemble(
            "all particle weights vanished".into(),
        ));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFinite("log weight is NaN or +inf".into()));
    }
    let u: f64 = rng.random::<f64>();
    let mut ancestors = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0usize;
    for j in 0..n {
        let pos = (j as f64 + u) / n as f64;
        while {
            // Advance until the cumulative weight covers the comb position;
            // the last particle absorbs any floating-point shortfall.
            cum + (log_weights[i] - norm).exp() < pos && i + 1 < n
        } {
            cum += (log_weights[i] - norm).exp();
            i += 1;
        }
        ancestors.push(i);
    }
    Ok(ancestors)
}

/// One particle: the endpoint state of the current interval, the replayable
/// segment that produced it, and its weight bookkeeping.
#[derive(Debug, Clone)]
pub struct Particle {
    /// State at the end of the last propagated interval.
    pub state: SpectralField,
    /// Segment that produced `state`; `None` before the first propagation.
    pub segment: Option<Arc<PathSegment>>,
    /// Current per-particle log target term (change-of-measure plus
    /// likelihood at the endpoint).
    pub ell: f64,
    /// Change-of-measure part of `ell`.
    pub glog: f64,
    /// Base log weight carried from previous steps (zero after a resample).
    pub log_weight: f64,
}

/// A weighted particle system with slot-attached random streams.
pub struct Ensemble {
    particles: Vec<Particle>,
    rngs: Vec<ChaCha12Rng>,
    global_rng: ChaCha12Rng,
}

impl Ensemble {
    /// Draw `n` initial states from the prior, one independent stream per
    /// slot, all derived from the master seed.
    pub fn init(n: usize, prior: &PriorSpec, master_seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "particles",
                reason: "the ensemble needs at least one particle".into(),
            });
        }
        let mut rngs: Vec<ChaCha12Rng> = (0..n)
            .map(|j| {
                let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
                rng.set_stream(j as u64);
                rng
            })
            .collect();
        let mut global_rng = ChaCha12Rng::seed_from_u64(master_seed);
        global_rng.set_stream(GLOBAL_STREAM);
        let particles = rngs
            .iter_mut()
            .map(|rng| Particle {
                state: prior.sample(rng),
                segment: None,
                ell: 0.0,
                glog: 0.0,
                log_weight: 0.0,
            })
            .collect();
        Ok(Self {
            particles,
            rngs,
            global_rng,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Equal-weight ensemble mean of the states.
    pub fn state_mean(&self) -> SpectralField {
        let mut mean = SpectralField::zeros(self.particles[0].state.lattice());
        for p in &self.particles {
            mean.axpy(1.0, &p.state).expect("shared lattice");
        }
        mean.scale(1.0 / self.particles.len() as f64);
        mean
    }

    /// Mean of the states under the given unnormalized log weights.
    pub fn weighted_state_mean(&self, log_weights: &[f64]) -> SpectralField {
        let norm = log_sum_exp(log_weights);
        let mut mean = SpectralField::zeros(self.particles[0].state.lattice());
        for (p, &lw) in self.particles.iter().zip(log_weights) {
            mean.axpy((lw - norm).exp(), &p.state).expect("shared lattice");
        }
        mean
    }

    /// Replace the population by the chosen ancestors. States, segments, and
    /// target terms are copied; random streams stay with their slots and
    /// base weights reset to uniform.
    pub fn apply_resample(&mut self, ancestors: &[usize]) {
        debug_assert_eq!(ancestors.len(), self.particles.len());
        let new: Vec<Particle> = ancestors
            .iter()
            .map(|&a| {
                let mut p = self.particles[a].clone();
                p.log_weight = 0.0;
                p
            })
            .collect();
        self.particles = new;
    }
}

/// Everything fixed during one assimilation step.
pub struct StepContext<'a> {
    pub solver: &'a Solver,
    pub observer: &'a Observer,
    pub y: &'a [f64],
    /// Guiding drift; `None` propagates blindly (bootstrap proposal).
    pub proposal: Option<&'a GuidedProposal>,
    pub prior: &'a PriorSpec,
    /// Zero-based assimilation step; step 0 allows initial-state moves.
    pub step_index: usize,
}

impl StepContext<'_> {
    fn drift(&self) -> Option<&dyn Drift> {
        self.proposal.map(|p| p as &dyn Drift)
    }
}

/// Rejuvenation settings.
#[derive(Debug, Clone, Copy)]
pub struct PcnConfig {
    /// Rejuvenation sweeps per tempering level.
    pub moves: usize,
    /// Autoregressive coefficient for the driving-noise crank.
    pub rho: f64,
    /// Autoregressive coefficient for the initial-state crank (step 0 only).
    pub rho_init: f64,
}

/// Adaptive-tempering settings.
#[derive(Debug, Clone, Copy)]
pub struct TemperingConfig {
    /// Target effective sample size as a fraction of the ensemble.
    pub alpha: f64,
    /// Hard cap on tempering levels per step.
    pub max_levels: usize,
    /// Resample and rejuvenate at the final level (temperature one) as well;
    /// when false the final-level weights are carried into the next step.
    pub resample_final: bool,
}

impl Default for TemperingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            max_levels: 200,
            resample_final: true,
        }
    }
}

/// Diagnostics of one naive (non-tempered) assimilation step.
#[derive(Debug, Clone)]
pub struct NaiveStepRecord {
    /// Effective sample size of the step weights before resampling.
    pub ess: f64,
    /// Weighted posterior mean estimate, taken before resampling.
    pub posterior_mean: SpectralField,
}

/// Diagnostics of one tempered assimilation step.
#[derive(Debug, Clone)]
pub struct TemperedStepRecord {
    /// Temperatures selected at each level (last entry is 1).
    pub phis: Vec<f64>,
    /// Effective sample size at each selected temperature.
    pub ess: Vec<f64>,
    /// Driving-noise move acceptance rate per level.
    pub noise_accept: Vec<f64>,
    /// Initial-state move acceptance rate per level (step 0 only).
    pub init_accept: Vec<f64>,
    /// Posterior mean estimate after the final level.
    pub posterior_mean: SpectralField,
}

impl TemperedStepRecord {
    pub fn levels(&self) -> usize {
        self.phis.len()
    }

    /// Effective sample size at the final temperature.
    pub fn final_ess(&self) -> f64 {
        *self.ess.last().expect("at least one level")
    }
}

/// Propagate every particle through one observation interval and store the
/// resulting target terms (`ell = glog + log likelihood`).
fn propagate(ens: &mut Ensemble, ctx: &StepContext) -> Result<()> {
    let solver = ctx.solver;
    let observer = ctx.observer;
    let y = ctx.y;
    let drift_ref = ctx.proposal;
    ens.particles
        .par_iter_mut()
        .zip(ens.rngs.par_iter_mut())
        .try_for_each_init(
            || (solver.make_scratch(), vec![0.0; observer.dim()]),
            |(scratch, pred), (p, rng)| -> Result<()> {
                let drift: Option<&dyn Drift> = drift_ref.map(|g| g as &dyn Drift);
                let (segment, end, glog) =
                    solver.simulate_segment(&p.state, drift, scratch, rng)?;
                observer.predict_into(&end, &mut scratch.fft, pred);
                let ll = observer.log_likelihood(y, pred);
                p.state = end;
                p.segment = Some(Arc::new(segment));
                p.glog = glog;
                p.ell = glog + ll;
                Ok(())
            },
        )
}

/// One preconditioned Crank-Nicolson move on the driving noise of the
/// current segment, targeting the tempered distribution at `phi`. Returns
/// whether the proposal was accepted.
pub fn pcn_move(
    particle: &mut Particle,
    phi: f64,
    rho: f64,
    ctx: &StepContext,
    scratch: &mut SolverScratch,
    pred: &mut [f64],
    rng: &mut ChaCha12Rng,
) -> Result<bool> {
    let segment = particle
        .segment
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter {
            name: "segment",
            reason: "rejuvenation requires a propagated particle".into(),
        })?
        .clone();
    let noise = segment.noise.crank(rho, rng);
    let (end, glog) = ctx
        .solver
        .resolve_segment(&segment.start, &noise, ctx.drift(), scratch)?;
    ctx.observer.predict_into(&end, &mut scratch.fft, pred);
    let ell = glog + ctx.observer.log_likelihood(ctx.y, pred);
    let log_u = rng.random::<f64>().ln();
    if log_u < phi * (ell - particle.ell) {
        particle.segment = Some(Arc::new(PathSegment {
            start: segment.start.clone(),
            noise,
        }));
        particle.state = end;
        particle.ell = ell;
        particle.glog = glog;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// One preconditioned Crank-Nicolson move on the initial state (only
/// meaningful on the first assimilation step, where the segment start is
/// distributed according to the prior). The driving noise is kept and the
/// segment is replayed from the proposed start.
pub fn pcn_init_move(
    particle: &mut Particle,
    phi: f64,
    rho_init: f64,
    ctx: &StepContext,
    scratch: &mut SolverScratch,
    pred: &mut [f64],
    rng: &mut ChaCha12Rng,
) -> Result<bool> {
    let segment = particle
        .segment
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter {
            name: "segment",
            reason: "rejuvenation requires a propagated particle".into(),
        })?
        .clone();
    // start' = mean + rho (start - mean) + sqrt(1 - rho^2) fluctuation,
    // which preserves the prior.
    let fresh = ctx.prior.fluctuation(rng);
    let comp = (1.0 - rho_init * rho_init).max(0.0).sqrt();
    let mut proposed = ctx.prior.mean().clone();
    for ((m, s), f) in proposed
        .coeffs_mut()
        .iter_mut()
        .zip(segment.start.coeffs())
        .zip(fresh.coeffs())
    {
        *m += rho_init * (s - *m) + comp * f;
    }
    let (end, glog) = ctx
        .solver
        .resolve_segment(&proposed, &segment.noise, ctx.drift(), scratch)?;
    ctx.observer.predict_into(&end, &mut scratch.fft, pred);
    let ell = glog + ctx.observer.log_likelihood(ctx.y, pred);
    let log_u = rng.random::<f64>().ln();
    if log_u < phi * (ell - particle.ell) {
        particle.segment = Some(Arc::new(PathSegment {
            start: proposed,
            noise: segment.noise.clone(),
        }));
        particle.state = end;
        particle.ell = ell;
        particle.glog = glog;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// One naive particle-filter step: propagate, weight, record, resample.
///
/// The posterior mean estimate uses the weights before resampling; after the
/// call the ensemble is equally weighted.
pub fn assimilate_naive(ens: &mut Ensemble, ctx: &StepContext) -> Result<NaiveStepRecord> {
    propagate(ens, ctx)?;
    let logw: Vec<f64> = ens
        .particles
        .iter()
        .map(|p| p.log_weight + p.ell)
        .collect();
    let ess = ess_of(&logw)?;
    let posterior_mean = ens.weighted_state_mean(&logw);
    let ancestors = systematic_resample(&logw, &mut ens.global_rng)?;
    ens.apply_resample(&ancestors);
    Ok(NaiveStepRecord {
        ess,
        posterior_mean,
    })
}

/// One adaptive-tempering particle-filter step.
///
/// Levels raise the temperature until it reaches one; each level reweights
/// the current population, resamples, and applies preconditioned
/// Crank-Nicolson rejuvenation at the new temperature. On the first
/// assimilation step every sweep also proposes an initial-state move.
pub fn assimilate_tempered(
    ens: &mut Ensemble,
    ctx: &StepContext,
    tempering: &TemperingConfig,
    pcn: &PcnConfig,
) -> Result<TemperedStepRecord> {
    if !(0.0 < tempering.alpha && tempering.alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("tempering target fraction must lie in (0, 1], got {}", tempering.alpha),
        });
    }
    propagate(ens, ctx)?;
    let n = ens.len();
    let target = tempering.alpha * n as f64;
    let mut phi = 0.0;
    let mut record = TemperedStepRecord {
        phis: Vec::new(),
        ess: Vec::new(),
        noise_accept: Vec::new(),
        init_accept: Vec::new(),
        posterior_mean: SpectralField::zeros(ens.particles[0].state.lattice()),
    };
    loop {
        if record.phis.len() >= tempering.max_levels {
            return Err(Error::TemperingOverflow {
                max: tempering.max_levels,
            });
        }
        let base: Vec<f64> = ens.particles.iter().map(|p| p.log_weight).collect();
        let ell: Vec<f64> = ens.particles.iter().map(|p| p.ell).collect();
        let phi_next = next_temperature_weighted(&base, &ell, phi, target)?;
        let logw: Vec<f64> = base
            .iter()
            .zip(&ell)
            .map(|(b, l)| b + (phi_next - phi) * l)
            .collect();
        record.phis.push(phi_next);
        record.ess.push(ess_of(&logw)?);
        let last = phi_next >= 1.0;
        if last && !tempering.resample_final {
            // Carry the final weights instead of resampling; the posterior
            // mean estimate is then the weighted one.
            let norm = log_sum_exp(&logw);
            for (p, lw) in ens.particles.iter_mut().zip(&logw) {
                p.log_weight = lw - norm;
            }
            record.posterior_mean = ens.weighted_state_mean(&logw);
            record.noise_accept.push(0.0);
            if ctx.step_index == 0 {
                record.init_accept.push(0.0);
            }
            break;
        }
        let ancestors = systematic_resample(&logw, &mut ens.global_rng)?;
        ens.apply_resample(&ancestors);
        let (noise_rate, init_rate) = rejuvenate(ens, ctx, phi_next, pcn)?;
        record.noise_accept.push(noise_rate);
        if ctx.step_index == 0 {
            record.init_accept.push(init_rate);
        }
        if last {
            record.posterior_mean = ens.state_mean();
            break;
        }
        phi = phi_next;
    }
    Ok(record)
}

/// Run the configured number of rejuvenation sweeps on every particle;
/// returns the driving-noise and initial-state acceptance rates.
fn rejuvenate(
    ens: &mut Ensemble,
    ctx: &StepContext,
    phi: f64,
    pcn: &PcnConfig,
) -> Result<(f64, f64)> {
    if pcn.moves == 0 {
        return Ok((0.0, 0.0));
    }
    let counts: Vec<(usize, usize)> = ens
        .particles
        .par_iter_mut()
        .zip(ens.rngs.par_iter_mut())
        .map_init(
            || (ctx.solver.make_scratch(), vec![0.0; ctx.observer.dim()]),
            |(scratch, pred), (p, rng)| -> Result<(usize, usize)> {
                let mut noise_hits = 0;
                let mut init_hits = 0;
                for _ in 0..pcn.moves {
                    if pcn_move(p, phi, pcn.rho, ctx, scratch, pred, rng)? {
                        noise_hits += 1;
                    }
                    if ctx.step_index == 0
                        && pcn_init_move(p, phi, pcn.rho_init, ctx, scratch, pred, rng)?
                    {
                        init_hits += 1;
                    }
                }
                Ok((noise_hits, init_hits))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let proposals = (ens.len() * pcn.moves) as f64;
    let noise_rate = counts.iter().map(|c| c.0).sum::<usize>() as f64 / proposals;
    let init_rate = counts.iter().map(|c| c.1).sum::<usize>() as f64 / proposals;
    Ok((noise_rate, init_rate))
}
