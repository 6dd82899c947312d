//! Likelihood-informed proposal drift: steers each path toward the upcoming
//! observation so that importance weights stay balanced.
//!
//! Over one observation interval ending in the observation `y`, the proposal
//! adds to the dynamics the drift `sigma_k g_k` with
//! `g = sigma conj(Phi^* S(tau)^{-1} (y - H V))`, where `Phi` collects the
//! one-sided observation entries and `S(tau) = Sigma + (T - tau) C` blends
//! the observation noise with the noise the dynamics can still inject before
//! the observation time; `C = H Q H^T` under the dynamics' noise covariance.
//! The matching change-of-measure weight is accumulated by the solver.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::dynamics::{Drift, NoiseSpec};
use crate::error::{Error, Result};
use crate::observation::Observer;
use crate::spectral::{FftScratch, SpectralField};

/// Guiding drift for one observation interval; immutable once built, so one
/// instance is shared by every particle and every rejuvenation move of the
/// step.
pub struct GuidedProposal {
    observer: Arc<Observer>,
    sigma: Vec<f64>,
    y: Vec<f64>,
    interval: f64,
    dt: f64,
    /// `C = H Q H^T`: observation-space covariance rate of the state noise.
    c: DMatrix<f64>,
    /// Cholesky factors of `S(tau_j)` at the inner-step left endpoints.
    chol: Vec<Cholesky<f64, Dyn>>,
}

impl GuidedProposal {
    pub fn new(
        observer: &Arc<Observer>,
        noise: &NoiseSpec,
        interval: f64,
        steps_per_interval: usize,
        y: Vec<f64>,
    ) -> Result<Self> {
        if y.len() != observer.dim() {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} coordinates, operator produces {}",
                y.len(),
                observer.dim()
            )));
        }
        let n = observer.transform().lattice().n_modes();
        if noise.sigma().len() != n {
            return Err(Error::DimensionMismatch(
                "noise amplitudes do not match the lattice".into(),
            ));
        }
        if !(interval > 0.0) || steps_per_interval == 0 {
            return Err(Error::InvalidParameter {
                name: "interval",
                reason: "guided proposals need a positive interval and at least one step".into(),
            });
        }
        let h = observer.observation_matrix();
        let mut hq = h.clone();
        for k in 0..n {
            let q = 0.5 * noise.sigma()[k] * noise.sigma()[k];
            hq.column_mut(2 * k).scale_mut(q);
            hq.column_mut(2 * k + 1).scale_mut(q);
        }
        let c = &hq * h.transpose();
        let dt = interval / steps_per_interval as f64;
        let mut chol = Vec::with_capacity(steps_per_interval);
        for j in 0..steps_per_interval {
            let s = s_matrix(&c, observer.variance(), interval - j as f64 * dt);
            chol.push(Cholesky::new(s).ok_or_else(|| {
                Error::LinearAlgebra("proposal innovation matrix is not positive definite".into())
            })?);
        }
        Ok(Self {
            observer: Arc::clone(observer),
            sigma: noise.sigma().to_vec(),
            y,
            interval,
            dt,
            c,
            chol,
        })
    }

    pub fn observation(&self) -> &[f64] {
        &self.y
    }

    /// Solve `S(tau) r = resid`, using the cached factor when `tau` sits on
    /// the inner-step grid.
    fn whiten(&self, tau: f64, resid: &mut DVector<f64>) {
        let pos = tau / self.dt;
        let j = pos.round();
        let grid = (pos - j).abs() < 1e-9 && j >= 0.0 && (j as usize) < self.chol.len();
        if grid {
            self.chol[j as usize].solve_mut(resid);
        } else {
            let s = s_matrix(&self.c, self.observer.variance(), self.interval - tau);
            Cholesky::new(s)
                .expect("sum of a positive diagonal and a PSD matrix")
                .solve_mut(resid);
        }
    }
}

fn s_matrix(c: &DMatrix<f64>, variance: &[f64], remaining: f64) -> DMatrix<f64> {
    let mut s = c * remaining.max(0.0);
    for (i, &v) in variance.iter().enumerate() {
        s[(i, i)] += v;
    }
    s
}

impl Drift for GuidedProposal {
    fn eval(&self, tau: f64, v: &SpectralField, fft: &mut FftScratch, out: &mut [Complex64]) {
        let dim = self.observer.dim();
        let mut resid = DVector::zeros(dim);
        self.observer
            .predict_into(v, fft, resid.as_mut_slice());
        for (r, &yi) in resid.iter_mut().zip(&self.y) {
            *r = yi - *r;
        }
        self.whiten(tau, &mut resid);
        self.observer.adjoint_into(resid.as_slice(), fft, out);
        for (g, &s) in out.iter_mut().zip(&self.sigma) {
            *g = s * g.conj();
        }
    }
}
