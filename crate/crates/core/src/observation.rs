//! Eulerian observations: disc averages of the velocity field at fixed
//! stations, corrupted by independent Gaussian or Student-t noise.
//!
//! A station at `x` reports the average of each velocity component over the
//! disc of radius `r` centered at `x`. Averaging a plane wave `e^{i k.x}`
//! over that disc multiplies it by `2 J_1(|k| r) / (|k| r)`, so the whole
//! operator acts mode-by-mode in spectral coordinates. When every station
//! sits on a transform grid node, predictions and adjoints ride on the FFT;
//! otherwise a dense matrix is used.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, StudentsT};

use crate::dynamics::Solver;
use crate::error::{Error, Result};
use crate::spectral::{FftScratch, SpectralField, Transform};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Normalized Bessel factor `2 J_1(z) / z`, the disc average of a plane wave
/// (equal to 1 at `z = 0`).
pub fn j1c(z: f64) -> f64 {
    let z = z.abs();
    if z <= 20.0 {
        // Power series: sum_m (-1)^m (z/2)^{2m} / (m! (m+1)!). Cancellation
        // stays far below the target accuracy on this range.
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut acc = 1.0;
        for m in 1..60 {
            term *= -q / (m as f64 * (m as f64 + 1.0));
            acc += term;
            if term.abs() < 1e-18 * acc.abs().max(1.0) {
                break;
            }
        }
        acc
    } else {
        // First-order large-argument asymptotics of J_1.
        let chi = z - 0.75 * std::f64::consts::PI;
        let p1 = 1.0 + 15.0 / (128.0 * z * z);
        let q1 = 3.0 / (8.0 * z);
        let j1 = (2.0 / (std::f64::consts::PI * z)).sqrt() * (p1 * chi.cos() - q1 * chi.sin());
        2.0 * j1 / z
    }
}

/// Station centers of a uniform `p x p` grid, row-major:
/// station `a1 * p + a2` sits at `(2 pi a1 / p, 2 pi a2 / p)`.
pub fn station_grid(p: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(p * p);
    for a1 in 0..p {
        for a2 in 0..p {
            out.push([TWO_PI * a1 as f64 / p as f64, TWO_PI * a2 as f64 / p as f64]);
        }
    }
    out
}

/// Law of the per-coordinate observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFamily {
    Gaussian,
    /// Student-t with the given degrees of freedom, scaled so that the
    /// nominal variance parameter plays the role of the squared scale.
    StudentT { dof: f64 },
}

/// The observation operator together with its noise model.
///
/// Observation vectors are ordered station-major: entry `2 l` is the first
/// velocity component at station `l`, entry `2 l + 1` the second.
pub struct Observer {
    transform: Arc<Transform>,
    stations: Vec<[f64; 2]>,
    radius: f64,
    /// Diagonal of the noise covariance (squared scale for Student-t).
    variance: Vec<f64>,
    family: NoiseFamily,
    /// Per-mode disc-average factor `j1c(|k| r)`.
    mode_scale: Vec<f64>,
    /// Grid node of each station when all stations are grid-aligned.
    fast_nodes: Option<Vec<usize>>,
    /// One-sided operator entries, station-major rows, for the dense path
    /// and for exporting the real observation matrix.
    phi: DMatrix<Complex64>,
}

impl Observer {
    pub fn new(
        transform: &Arc<Transform>,
        stations: Vec<[f64; 2]>,
        radius: f64,
        variance: Vec<f64>,
        family: NoiseFamily,
    ) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::InvalidParameter {
                name: "stations",
                reason: "at least one observation station is required".into(),
            });
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("averaging disc radius must be positive, got {radius}"),
            });
        }
        if variance.len() != 2 * stations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} noise variances for {} observation coordinates",
                variance.len(),
                2 * stations.len()
            )));
        }
        if variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "variance",
                reason: "observation noise variances must be positive".into(),
            });
        }
        if let NoiseFamily::StudentT { dof } = family {
            if !(dof > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "dof",
                    reason: format!("Student-t degrees of freedom must be positive, got {dof}"),
                });
            }
        }
        let lattice = transform.lattice();
        let mode_scale: Vec<f64> = lattice.norm().iter().map(|&n| j1c(n * radius)).collect();

        let m = lattice.grid_size();
        let mut fast_nodes = Some(Vec::with_capacity(stations.len()));
        for &[x1, x2] in &stations {
            let a1 = x1 * m as f64 / TWO_PI;
            let a2 = x2 * m as f64 / TWO_PI;
            let aligned = (a1 - a1.round()).abs() < 1e-9 && (a2 - a2.round()).abs() < 1e-9;
            if aligned {
                let i1 = (a1.round() as i64).rem_euclid(m as i64) as usize;
                let i2 = (a2.round() as i64).rem_euclid(m as i64) as usize;
                if let Some(nodes) = fast_nodes.as_mut() {
                    nodes.push(transform.grid_node(i1, i2));
                }
            } else {
                fast_nodes = None;
                break;
            }
        }

        let mut phi = DMatrix::zeros(2 * stations.len(), lattice.n_modes());
        for (l, &[x1, x2]) in stations.iter().enumerate() {
            for (i, &[k1, k2]) in lattice.modes().iter().enumerate() {
                let phase = k1 as f64 * x1 + k2 as f64 * x2;
                let carrier = Complex64::new(phase.cos(), phase.sin()) * mode_scale[i];
                let b = lattice.basis()[i];
                phi[(2 * l, i)] = carrier * b[0];
                phi[(2 * l + 1, i)] = carrier * b[1];
            }
        }

        Ok(Self {
            transform: Arc::clone(transform),
            stations,
            radius,
            variance,
            family,
            mode_scale,
            fast_nodes,
            phi,
        })
    }

    /// Stations on a uniform `p x p` grid with common noise variance.
    pub fn uniform_grid(
        transform: &Arc<Transform>,
        p: usize,
        radius: f64,
        noise_variance: f64,
        family: NoiseFamily,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter {
                name: "stations_per_side",
                reason: "the station grid needs at least one station per side".into(),
            });
        }
        let stations = station_grid(p);
        let variance = vec![noise_variance; 2 * stations.len()];
        Self::new(transform, stations, radius, variance, family)
    }

    /// Number of observed coordinates (twice the station count).
    pub fn dim(&self) -> usize {
        2 * self.stations.len()
    }

    pub fn stations(&self) -> &[[f64; 2]] {
        &self.stations
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn transform(&self) -> &Arc<Transform> {
        &self.transform
    }

    /// Whether predictions ride on the FFT (all stations grid-aligned).
    pub fn uses_fft_path(&self) -> bool {
        self.fast_nodes.is_some()
    }

    /// The real observation matrix `H` acting on stacked real coordinates
    /// `(Re u_0, Im u_0, Re u_1, ...)`.
    pub fn observation_matrix(&self) -> DMatrix<f64> {
        let n = self.transform.lattice().n_modes();
        let mut h = DMatrix::zeros(self.dim(), 2 * n);
        for i in 0..self.dim() {
            for k in 0..n {
                h[(i, 2 * k)] = 2.0 * self.phi[(i, k)].re;
                h[(i, 2 * k + 1)] = -2.0 * self.phi[(i, k)].im;
            }
        }
        h
    }

    /// Noise-free predicted observation of the field.
    pub fn predict_into(&self, v: &SpectralField, fft: &mut FftScratch, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match &self.fast_nodes {
            Some(nodes) => {
                self.transform.synth_packed(v, Some(&self.mode_scale), fft);
                for (l, &node) in nodes.iter().enumerate() {
                    let z = fft.a[node];
                    out[2 * l] = z.re;
                    out[2 * l + 1] = z.im;
                }
            }
            None => {
                for l in 0..self.stations.len() {
                    let mut acc = [0.0, 0.0];
                    for (i, &u) in v.coeffs().iter().enumerate() {
                        acc[0] += 2.0 * (self.phi[(2 * l, i)] * u).re;
                        acc[1] += 2.0 * (self.phi[(2 * l + 1, i)] * u).re;
                    }
                    out[2 * l] = acc[0];
                    out[2 * l + 1] = acc[1];
                }
            }
        }
    }

    /// Adjoint-type contraction `theta_k = sum_i r_i phi_{i,k}` of a real
    /// observation-space vector against the one-sided operator entries.
    pub fn adjoint_into(&self, r: &[f64], fft: &mut FftScratch, out: &mut [Complex64]) {
        debug_assert_eq!(r.len(), self.dim());
        let lattice = self.transform.lattice();
        debug_assert_eq!(out.len(), lattice.n_modes());
        match &self.fast_nodes {
            Some(nodes) => {
                fft.a.fill(Complex64::ZERO);
                for (l, &node) in nodes.iter().enumerate() {
                    fft.a[node] += Complex64::new(r[2 * l], r[2 * l + 1]);
                }
                self.transform.carrier_transform(fft);
                // fft.a now holds, at the slot of each wavenumber, the packed
                // plane-wave sums over stations of both noise coordinates.
                let snapshot: Vec<(Complex64, Complex64)> = (0..lattice.n_modes())
                    .map(|i| self.transform.unpack_pair(&fft.a, i))
                    .collect();
                for (i, ((s0, s1), &scale)) in
                    snapshot.into_iter().zip(&self.mode_scale).enumerate()
                {
                    let b = lattice.basis()[i];
                    out[i] = (b[0] * s0 + b[1] * s1) * scale;
                }
            }
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = Complex64::ZERO;
                    for (j, &rj) in r.iter().enumerate() {
                        acc += rj * self.phi[(j, i)];
                    }
                    *o = acc;
                }
            }
        }
    }

    /// Log density of an observation given the noise-free prediction.
    pub fn log_likelihood(&self, y: &[f64], pred: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        debug_assert_eq!(pred.len(), self.dim());
        match self.family {
            NoiseFamily::Gaussian => {
                let mut acc = 0.0;
                for ((&yi, &pi), &var) in y.iter().zip(pred).zip(&self.variance) {
                    let d = yi - pi;
                    acc -= 0.5 * (d * d / var + (TWO_PI * var).ln());
                }
                acc
            }
            NoiseFamily::StudentT { dof } => {
                let mut acc = 0.0;
                for ((&yi, &pi), &var) in y.iter().zip(pred).zip(&self.variance) {
                    let dist = StudentsT::new(0.0, var.sqrt(), dof)
                        .expect("parameters validated at construction");
                    acc += dist.ln_pdf(yi - pi);
                }
                acc
            }
        }
    }

    /// One draw of the observation noise vector.
    pub fn sample_noise(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self.family {
            NoiseFamily::Gaussian => self
                .variance
                .iter()
                .map(|&var| {
                    let xi: f64 = rng.sample(StandardNormal);
                    var.sqrt() * xi
                })
                .collect(),
            NoiseFamily::StudentT { dof } => {
                let t = rand_distr::StudentT::new(dof).expect("dof validated at construction");
                self.variance
                    .iter()
                    .map(|&var| var.sqrt() * rng.sample(t))
                    .collect()
            }
        }
    }
}

/// A simulated truth path and the observations taken along it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    /// States at observation times; index 0 is the initial condition, so the
    /// observation `observations[j]` was taken at state `truth[j + 1]`.
    pub truth: Vec<SpectralField>,
    pub observations: Vec<Vec<f64>>,
}

/// Simulate the dynamics from `init` across `n_intervals` observation
/// intervals, observing the state at the end of each.
pub fn generate_data(
    solver: &Solver,
    observer: &Observer,
    init: &SpectralField,
    n_intervals: usize,
    rng: &mut impl Rng,
) -> Result<SimulatedData> {
    let mut scratch = solver.make_scratch();
    let mut truth = Vec::with_capacity(n_intervals + 1);
    let mut observations = Vec::with_capacity(n_intervals);
    let mut state = init.clone();
    truth.push(state.clone());
    let mut pred = vec![0.0; observer.dim()];
    for _ in 0..n_intervals {
        let (_, end, _) = solver.simulate_segment(&state, None, &mut scratch, rng)?;
        state = end;
        if !state.is_finite() {
            return Err(Error::NonFinite(
                "simulated truth path left the finite range".into(),
            ));
        }
        observer.predict_into(&state, &mut scratch.fft, &mut pred);
        let noise = observer.sample_noise(rng);
        let y: Vec<f64> = pred.iter().zip(&noise).map(|(p, n)| p + n).collect();
        truth.push(state.clone());
        observations.push(y);
    }
    Ok(SimulatedData {
        truth,
        observations,
    })
}
