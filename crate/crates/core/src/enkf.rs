//! Stochastic ensemble Kalman filter baseline with perturbed observations.
//!
//! Members are forecast through the model dynamics exactly like bootstrap
//! particles; the analysis replaces Bayesian reweighting with the linear
//! update `x_i += K (y + eta_i - h(x_i))`, where the gain is assembled from
//! ensemble sample covariances and the `eta_i` are Gaussian draws from the
//! nominal observation-noise covariance. The update is exact for linear
//! dynamics in the large-ensemble limit and a Gaussian approximation
//! otherwise; no localization or inflation is applied.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{PriorSpec, Solver};
use crate::error::{Error, Result};
use crate::observation::Observer;
use crate::spectral::SpectralField;

/// An equally weighted member cloud with slot-attached random streams, the
/// same stream layout as the particle ensemble.
pub struct EnkfEnsemble {
    members: Vec<SpectralField>,
    rngs: Vec<ChaCha12Rng>,
}

/// Diagnostics of one forecast-analysis cycle.
#[derive(Debug, Clone)]
pub struct EnkfStepRecord {
    /// Member mean after the analysis.
    pub posterior_mean: SpectralField,
}

impl EnkfEnsemble {
    /// Draw `n >= 2` members from the prior.
    pub fn init(n: usize, prior: &PriorSpec, master_seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "members",
                reason: "sample covariances need at least two members".into(),
            });
        }
        let mut rngs: Vec<ChaCha12Rng> = (0..n)
            .map(|j| {
                let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
                rng.set_stream(j as u64);
                rng
            })
            .collect();
        let members = rngs.iter_mut().map(|rng| prior.sample(rng)).collect();
        Ok(Self { members, rngs })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[SpectralField] {
        &self.members
    }

    /// Equal-weight member mean.
    pub fn member_mean(&self) -> SpectralField {
        let mut mean = SpectralField::zeros(self.members[0].lattice());
        for m in &self.members {
            mean.axpy(1.0, m).expect("shared lattice");
        }
        mean.scale(1.0 / self.members.len() as f64);
        mean
    }

    /// Push every member through one observation interval of the dynamics.
    pub fn forecast(&mut self, solver: &Solver) -> Result<()> {
        self.members
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .try_for_each_init(
                || solver.make_scratch(),
                |scratch, (m, rng)| -> Result<()> {
                    let noise = solver.sample_noise(rng);
                    let (end, _) = solver.resolve_segment(m, &noise, None, scratch)?;
                    *m = end;
                    Ok(())
                },
            )
    }

    /// Perturbed-observation analysis: shift every member by the Kalman gain
    /// applied to its own perturbed innovation. Moment accumulation runs
    /// sequentially so results do not depend on the thread count.
    pub fn analysis(&mut self, observer: &Observer, y: &[f64]) -> Result<()> {
        let n = self.members.len();
        let dy = observer.dim();
        if y.len() != dy {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} coordinates, operator produces {dy}",
                y.len()
            )));
        }
        let d = 2 * self.members[0].coeffs().len();

        // Member predictions, parallel but indexed.
        let mut preds = vec![vec![0.0; dy]; n];
        self.members
            .par_iter()
            .zip(preds.par_iter_mut())
            .for_each_init(
                || observer.transform().make_scratch(),
                |fft, (m, pred)| observer.predict_into(m, fft, pred),
            );

        // Anomaly matrices in real coordinates.
        let mut xa = DMatrix::<f64>::zeros(d, n);
        for (j, m) in self.members.iter().enumerate() {
            for (i, u) in m.coeffs().iter().enumerate() {
                xa[(2 * i, j)] = u.re;
                xa[(2 * i + 1, j)] = u.im;
            }
        }
        let mut ha = DMatrix::<f64>::zeros(dy, n);
        for (j, pred) in preds.iter().enumerate() {
            for (i, &p) in pred.iter().enumerate() {
                ha[(i, j)] = p;
            }
        }
        for mat in [&mut xa, &mut ha] {
            for i in 0..mat.nrows() {
                let mean = mat.row(i).sum() / n as f64;
                for j in 0..n {
                    mat[(i, j)] -= mean;
                }
            }
        }

        let scale = 1.0 / (n - 1) as f64;
        let c_xh = (&xa * ha.transpose()) * scale;
        let mut s = (&ha * ha.transpose()) * scale;
        for (i, &v) in observer.variance().iter().enumerate() {
            s[(i, i)] += v;
        }
        let chol = Cholesky::new(s).ok_or_else(|| {
            Error::LinearAlgebra("innovation covariance is not positive definite".into())
        })?;
        // K = C_xh S^{-1}; stored transposed so the solve works column-wise.
        let kt = chol.solve(&c_xh.transpose());

        let y_vec = DVector::from_column_slice(y);
        for ((m, pred), rng) in self.members.iter_mut().zip(&preds).zip(&mut self.rngs) {
            let mut innovation = &y_vec - DVector::from_column_slice(pred);
            for (inn, &v) in innovation.iter_mut().zip(observer.variance()) {
                let xi: f64 = rng.sample(StandardNormal);
                *inn += v.sqrt() * xi;
            }
            let delta = kt.tr_mul(&innovation);
            for (i, u) in m.coeffs_mut().iter_mut().enumerate() {
                *u += num_complex::Complex64::new(delta[2 * i], delta[2 * i + 1]);
            }
        }
        Ok(())
    }
}

/// One full assimilation cycle: forecast, analysis, member-mean estimate.
pub fn assimilate_enkf(
    ens: &mut EnkfEnsemble,
    solver: &Solver,
    observer: &Observer,
    y: &[f64],
) -> Result<EnkfStepRecord> {
    ens.forecast(solver)?;
    ens.analysis(observer, y)?;
    Ok(EnkfStepRecord {
        posterior_mean: ens.member_mean(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{NoiseSpec, SolverConfig};
    use crate::observation::NoiseFamily;
    use crate::spectral::{Lattice, Transform};
    use std::sync::Arc;

    fn solver(delta: f64, nonlinear: bool) -> Solver {
        let lattice = Arc::new(Lattice::new(2).unwrap());
        let transform = Arc::new(Transform::new(&lattice));
        let nu = 0.15;
        let noise = NoiseSpec::power_law(&lattice, delta, nu, 3.0).unwrap();
        Solver::new(
            &transform,
            SolverConfig {
                nu,
                interval: 0.4,
                steps_per_interval: 2,
                nonlinear,
                forcing: None,
            },
            noise,
        )
        .unwrap()
    }

    fn prior(solver: &Solver, beta: f64, seed: u64) -> PriorSpec {
        let lattice = solver.transform().lattice();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let centered = PriorSpec::new(SpectralField::zeros(lattice), 0.6, 3.0).unwrap();
        PriorSpec::new(centered.sample(&mut rng), beta, 3.0).unwrap()
    }

    #[test]
    fn tiny_ensembles_are_rejected() {
        let sv = solver(0.5, false);
        let pr = prior(&sv, 0.5, 1);
        assert!(EnkfEnsemble::init(1, &pr, 0).is_err());
        assert!(EnkfEnsemble::init(2, &pr, 0).is_ok());
    }

    #[test]
    fn uninformative_data_leaves_members_in_place() {
        let sv = solver(0.5, false);
        let observer = Arc::new(
            Observer::uniform_grid(sv.transform(), 2, 0.2, 1e12, NoiseFamily::Gaussian).unwrap(),
        );
        let pr = prior(&sv, 0.5, 2);
        let mut ens = EnkfEnsemble::init(40, &pr, 11).unwrap();
        ens.forecast(&sv).unwrap();
        let snapshot: Vec<SpectralField> = ens.members().to_vec();
        let y = vec![0.3; observer.dim()];
        ens.analysis(&observer, &y).unwrap();
        for (m, before) in ens.members().iter().zip(&snapshot) {
            let scale = before.energy().sqrt();
            assert!(m.max_abs_diff(before) < 1e-6 * scale.max(1.0));
        }
    }

    #[test]
    fn duplicate_members_yield_zero_gain() {
        // Point-mass prior plus noiseless dynamics keep every member equal,
        // so the sample covariances vanish identically and the analysis must
        // not move anything, however informative the data pretend to be.
        let sv = solver(0.0, true);
        let observer = Arc::new(
            Observer::uniform_grid(sv.transform(), 2, 0.2, 0.3, NoiseFamily::Gaussian).unwrap(),
        );
        let pr = prior(&sv, 0.0, 3);
        let mut ens = EnkfEnsemble::init(16, &pr, 5).unwrap();
        ens.forecast(&sv).unwrap();
        let snapshot = ens.members()[0].clone();
        for m in ens.members() {
            assert_eq!(m.max_abs_diff(&snapshot), 0.0);
        }
        let y = vec![5.0; observer.dim()];
        ens.analysis(&observer, &y).unwrap();
        for m in ens.members() {
            assert_eq!(m.max_abs_diff(&snapshot), 0.0);
        }
    }

    #[test]
    fn analysis_is_affine_equivariant() {
        // Shifting every member by a fixed field and the data by its image
        // under the observation operator shifts the analysis by the same
        // field: anomalies, gain, and perturbation draws all coincide.
        let sv = solver(0.5, false);
        let observer = Arc::new(
            Observer::uniform_grid(sv.transform(), 2, 0.2, 0.3, NoiseFamily::Gaussian).unwrap(),
        );
        let pr_a = prior(&sv, 0.5, 7);
        let mut shift_rng = ChaCha12Rng::seed_from_u64(99);
        let shift = PriorSpec::new(SpectralField::zeros(sv.transform().lattice()), 0.4, 3.0)
            .unwrap()
            .sample(&mut shift_rng);
        let mut shifted_mean = pr_a.mean().clone();
        shifted_mean.axpy(1.0, &shift).unwrap();
        let pr_b = PriorSpec::new(shifted_mean, 0.5, 3.0).unwrap();

        // Same master seed: member fluctuations and perturbation draws agree.
        let mut ens_a = EnkfEnsemble::init(32, &pr_a, 21).unwrap();
        let mut ens_b = EnkfEnsemble::init(32, &pr_b, 21).unwrap();

        let mut fft = sv.transform().make_scratch();
        let mut h_shift = vec![0.0; observer.dim()];
        observer.predict_into(&shift, &mut fft, &mut h_shift);
        let y: Vec<f64> = (0..observer.dim()).map(|i| 0.1 * i as f64 - 0.4).collect();
        let y_shifted: Vec<f64> = y.iter().zip(&h_shift).map(|(a, b)| a + b).collect();

        ens_a.analysis(&observer, &y).unwrap();
        ens_b.analysis(&observer, &y_shifted).unwrap();
        for (a, b) in ens_a.members().iter().zip(ens_b.members()) {
            let mut moved = a.clone();
            moved.axpy(1.0, &shift).unwrap();
            assert!(moved.max_abs_diff(b) < 1e-9);
        }
    }

    #[test]
    fn full_cycle_reports_the_member_mean() {
        let sv = solver(0.5, false);
        let observer = Arc::new(
            Observer::uniform_grid(sv.transform(), 2, 0.2, 0.3, NoiseFamily::Gaussian).unwrap(),
        );
        let pr = prior(&sv, 0.5, 8);
        let mut ens = EnkfEnsemble::init(24, &pr, 31).unwrap();
        let y = vec![0.2; observer.dim()];
        let rec = assimilate_enkf(&mut ens, &sv, &observer, &y).unwrap();
        assert!(rec.posterior_mean.is_finite());
        assert!(rec.posterior_mean.max_abs_diff(&ens.member_mean()) == 0.0);
    }
}
