//! Exact Kalman filter for the linear model, used as an oracle.
//!
//! The linear (Stokes) dynamics act mode-by-mode, and the exponential Euler
//! scheme reproduces the Ornstein-Uhlenbeck transition exactly, so the
//! discrete filtering distribution is Gaussian with moments computable in
//! closed form. States are stacked real coordinates
//! `(Re u_0, Im u_0, Re u_1, ...)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use snsfilter::dynamics::{NoiseSpec, PriorSpec};
use snsfilter::observation::Observer;
use snsfilter::spectral::Lattice;

pub struct LinearModel {
    /// Per-coordinate transition multiplier over one observation interval.
    pub phi: DVector<f64>,
    /// Per-coordinate transition noise variance over one interval.
    pub q: DVector<f64>,
    pub h: DMatrix<f64>,
    /// Observation noise variances.
    pub r: DVector<f64>,
}

/// Assemble the exact one-interval transition statistics of the linear
/// stochastic Stokes flow together with the observation operator.
pub fn linear_model(lattice: &Lattice, nu: f64, interval: f64, noise: &NoiseSpec, observer: &Observer) -> LinearModel {
    let n = lattice.n_modes();
    let mut phi = DVector::zeros(2 * n);
    let mut q = DVector::zeros(2 * n);
    for (i, &nsq) in lattice.norm_sq().iter().enumerate() {
        let lambda = nu * nsq;
        let decay = (-lambda * interval).exp();
        let var = noise.sigma()[i].powi(2) * (-(-2.0 * lambda * interval).exp_m1()) / (4.0 * lambda);
        phi[2 * i] = decay;
        phi[2 * i + 1] = decay;
        q[2 * i] = var;
        q[2 * i + 1] = var;
    }
    LinearModel {
        phi,
        q,
        h: observer.observation_matrix(),
        r: DVector::from_column_slice(observer.variance()),
    }
}

/// Real-coordinate mean and per-coordinate prior variances of a prior.
pub fn prior_moments(prior: &PriorSpec) -> (DVector<f64>, DVector<f64>) {
    let n = prior.mean().coeffs().len();
    let mut m = DVector::zeros(2 * n);
    let mut p = DVector::zeros(2 * n);
    for (i, (u, &sd)) in prior
        .mean()
        .coeffs()
        .iter()
        .zip(prior.coordinate_sd())
        .enumerate()
    {
        m[2 * i] = u.re;
        m[2 * i + 1] = u.im;
        p[2 * i] = sd * sd;
        p[2 * i + 1] = sd * sd;
    }
    (m, p)
}

pub struct KalmanRun {
    /// Posterior mean after each observation.
    pub means: Vec<DVector<f64>>,
    /// Posterior covariance after each observation.
    pub covs: Vec<DMatrix<f64>>,
}

/// Run the exact filter across the given observations.
pub fn run_filter(
    model: &LinearModel,
    mean0: DVector<f64>,
    var0: DVector<f64>,
    observations: &[Vec<f64>],
) -> KalmanRun {
    let n = mean0.len();
    let mut m = mean0;
    let mut p = DMatrix::from_diagonal(&var0);
    let mut means = Vec::with_capacity(observations.len());
    let mut covs = Vec::with_capacity(observations.len());
    for y in observations {
        // Predict through one interval of the diagonal dynamics.
        for i in 0..n {
            m[i] *= model.phi[i];
        }
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] *= model.phi[i] * model.phi[j];
            }
        }
        for i in 0..n {
            p[(i, i)] += model.q[i];
        }
        // Measurement update in Joseph form for numerical symmetry.
        let s = &model.h * &p * model.h.transpose() + DMatrix::from_diagonal(&model.r);
        let sinv = Cholesky::new(s).expect("innovation covariance is positive definite");
        let k = &p * model.h.transpose() * sinv.inverse();
        let innovation = DVector::from_column_slice(y) - &model.h * &m;
        m += &k * &innovation;
        let ikh = DMatrix::identity(n, n) - &k * &model.h;
        p = &ikh * &p * ikh.transpose()
            + &k * DMatrix::from_diagonal(&model.r) * k.transpose();
        means.push(m.clone());
        covs.push(p.clone());
    }
    KalmanRun { means, covs }
}
