//! Quantitative outputs: vorticity-space errors, posterior-to-prior
//! variance ratios, marginal densities of spectral coefficients, and the
//! per-run metric record the experiment harness serializes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Squared L² distance between the vorticity fields of two velocity
/// configurations: `sum_k 2 |k|^2 |u_k - v_k|^2` over the stored modes,
/// which equals the integral of the squared vorticity difference over the
/// domain for band-limited fields.
pub fn l2_vorticity_error(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    a.check_same_lattice(b)?;
    let norm_sq = a.lattice().norm_sq();
    Ok(a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .zip(norm_sq)
        .map(|((x, y), k2)| 2.0 * k2 * (x - y).norm_sqr())
        .sum())
}

/// Per-mode ratio of the sample variance of `u_k` under the posterior
/// ensemble to its sample variance under an unconditioned ensemble, using
/// the complex variance `E|u - mean|^2` and equal weights. A mode whose
/// unconditioned variance vanishes reports no ratio.
pub fn variance_ratio(
    posterior: &[SpectralField],
    unconditioned: &[SpectralField],
) -> Result<Vec<Option<f64>>> {
    let (first, rest) = posterior
        .split_first()
        .ok_or_else(|| Error::DegenerateEnsemble("empty posterior ensemble".into()))?;
    for s in rest {
        first.check_same_lattice(s)?;
    }
    let (pfirst, prest) = unconditioned
        .split_first()
        .ok_or_else(|| Error::DegenerateEnsemble("empty unconditioned ensemble".into()))?;
    first.check_same_lattice(pfirst)?;
    for s in prest {
        first.check_same_lattice(s)?;
    }
    let post = mode_variances(posterior);
    let prior = mode_variances(unconditioned);
    Ok(post
        .into_iter()
        .zip(prior)
        .map(|(p, q)| if q > 0.0 { Some(p / q) } else { None })
        .collect())
}

fn mode_variances(states: &[SpectralField]) -> Vec<f64> {
    let n = states.len() as f64;
    let n_modes = states[0].coeffs().len();
    let mut mean = vec![Complex64::ZERO; n_modes];
    for s in states {
        for (m, u) in mean.iter_mut().zip(s.coeffs()) {
            *m += u;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; n_modes];
    for s in states {
        for ((v, u), m) in var.iter_mut().zip(s.coeffs()).zip(&mean) {
            *v += (u - m).norm_sqr();
        }
    }
    for v in &mut var {
        *v /= n;
    }
    var
}

/// Which real coordinate of a complex coefficient to inspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Real,
    Imag,
}

impl Component {
    fn pick(self, u: Complex64) -> f64 {
        match self {
            Component::Real => u.re,
            Component::Imag => u.im,
        }
    }
}

/// Plot-ready marginal density estimates: a weighted histogram and a
/// Gaussian kernel density over a uniform evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalPdf {
    /// Histogram bin edges, one more than the number of bins.
    pub edges: Vec<f64>,
    /// Histogram density per bin; integrates to one over the edges.
    pub histogram: Vec<f64>,
    /// Kernel-density evaluation points.
    pub grid: Vec<f64>,
    /// Kernel-density values at `grid`.
    pub kde: Vec<f64>,
    /// Kernel bandwidth (Silverman's rule on the effective sample size).
    pub bandwidth: f64,
}

/// Marginal density of one real coordinate of one mode across a weighted
/// ensemble. `log_weights` are unnormalized; pass zeros for equal weights.
pub fn marginal_pdf(
    states: &[SpectralField],
    log_weights: &[f64],
    k: [i32; 2],
    component: Component,
    bins: usize,
    grid_points: usize,
) -> Result<MarginalPdf> {
    if states.is_empty() {
        return Err(Error::DegenerateEnsemble("empty ensemble".into()));
    }
    if states.len() != log_weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} states with {} weights",
            states.len(),
            log_weights.len()
        )));
    }
    let values: Vec<f64> = states
        .iter()
        .map(|s| {
            s.coeff(k)
                .map(|u| component.pick(u))
                .ok_or_else(|| Error::InvalidParameter {
                    name: "wavenumber",
                    reason: format!("({}, {}) is not on the lattice", k[0], k[1]),
                })
        })
        .collect::<Result<_>>()?;
    weighted_density(&values, log_weights, bins, grid_points)
}

/// Histogram and kernel density of raw weighted samples.
pub fn weighted_density(
    values: &[f64],
    log_weights: &[f64],
    bins: usize,
    grid_points: usize,
) -> Result<MarginalPdf> {
    if bins == 0 || grid_points < 2 {
        return Err(Error::InvalidParameter {
            name: "bins",
            reason: "need at least one bin and two grid points".into(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample value is not finite".into()));
    }
    let weights = normalized_weights(log_weights)?;

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // A degenerate (single-atom) sample still gets a well-formed histogram.
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut histogram = vec![0.0; bins];
    for (&v, &w) in values.iter().zip(&weights) {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        histogram[b] += w / width;
    }
    let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();

    // Silverman bandwidth from weighted spread and effective sample size.
    let mean: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    let var: f64 = values
        .iter()
        .zip(&weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum();
    let ess: f64 = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let iqr = weighted_quantile(values, &weights, 0.75) - weighted_quantile(values, &weights, 0.25);
    let spread = if iqr > 0.0 {
        var.sqrt().min(iqr / 1.34)
    } else {
        var.sqrt()
    };
    let bandwidth = if spread > 0.0 {
        0.9 * spread * ess.powf(-0.2)
    } else {
        // Point mass: any positive bandwidth gives a delta-like bump.
        1e-8 * lo.abs().max(1.0)
    };

    let glo = lo - 3.0 * bandwidth;
    let ghi = hi + 3.0 * bandwidth;
    let gstep = (ghi - glo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| glo + i as f64 * gstep).collect();
    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let kde: Vec<f64> = grid
        .iter()
        .map(|&x| {
            values
                .iter()
                .zip(&weights)
                .map(|(&v, &w)| {
                    let t = (x - v) / bandwidth;
                    w * norm * (-0.5 * t * t).exp()
                })
                .sum()
        })
        .collect();
    Ok(MarginalPdf {
        edges,
        histogram,
        grid,
        kde,
        bandwidth,
    })
}

fn normalized_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateEnsemble(
            "weights are degenerate or not finite".into(),
        ));
    }
    let unnorm: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|w| w / total).collect())
}

fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= q {
            return values[i];
        }
    }
    values[*order.last().expect("nonempty")]
}

/// Per-step metrics of one filter run. Temperature, level-resolved fields
/// hold a single entry for non-tempered variants; acceptance fields stay
/// empty when no rejuvenation ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Zero-based assimilation step.
    pub step: usize,
    /// Observation time of this step.
    pub time: f64,
    /// Temperatures selected at each level; empty when not tempering.
    pub phis: Vec<f64>,
    /// Effective sample size at each level (one entry when not tempering).
    pub ess: Vec<f64>,
    /// Driving-noise move acceptance rate per level.
    pub noise_accept: Vec<f64>,
    /// Initial-state move acceptance rate per level (first step only).
    pub init_accept: Vec<f64>,
    /// Squared vorticity-space distance of the posterior-mean estimate to
    /// the true state, when the truth is known.
    pub l2_error: Option<f64>,
}

/// Append-only record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Filter variant identifier.
    pub variant: String,
    /// Seed the run was started from.
    pub seed: u64,
    /// Hash of the resolved configuration.
    pub config_hash: String,
    pub steps: Vec<StepMetrics>,
}

impl RunMetrics {
    pub fn new(variant: impl Into<String>, seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            variant: variant.into(),
            seed,
            config_hash: config_hash.into(),
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, step: StepMetrics) {
        self.steps.push(step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Lattice;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn lattice(l: u32) -> Arc<Lattice> {
        Arc::new(Lattice::new(l).unwrap())
    }

    fn random_field(lat: &Arc<Lattice>, rng: &mut ChaCha12Rng) -> SpectralField {
        let mut f = SpectralField::zeros(lat);
        for c in f.coeffs_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *c = Complex64::new(re, im);
        }
        f
    }

    #[test]
    fn vorticity_error_hand_values() {
        let lat = lattice(2);
        let a = SpectralField::zeros(&lat);
        assert_eq!(l2_vorticity_error(&a, &a).unwrap(), 0.0);
        // One differing mode at wavenumber (1, 0) with unit gap:
        // 2 |k|^2 |du|^2 = 2.
        let mut b = SpectralField::zeros(&lat);
        b.set_coeff([1, 0], Complex64::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(l2_vorticity_error(&a, &b).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn vorticity_error_is_a_squared_metric() {
        let lat = lattice(3);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = random_field(&lat, &mut rng);
        let b = random_field(&lat, &mut rng);
        let d = l2_vorticity_error(&a, &b).unwrap();
        assert!(d > 0.0);
        assert_abs_diff_eq!(d, l2_vorticity_error(&b, &a).unwrap(), epsilon = 1e-12);
        // Quadratic scaling: moving twice as far quadruples the error.
        let mut far = a.clone();
        far.scale(-1.0);
        far.axpy(2.0, &b).unwrap(); // a + 2(b - a)
        assert_abs_diff_eq!(
            l2_vorticity_error(&a, &far).unwrap(),
            4.0 * d,
            epsilon = 1e-10 * d
        );
    }

    #[test]
    fn identical_ensembles_have_unit_variance_ratio() {
        let lat = lattice(2);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let states: Vec<SpectralField> = (0..20).map(|_| random_field(&lat, &mut rng)).collect();
        let ratios = variance_ratio(&states, &states).unwrap();
        for r in ratios {
            assert_abs_diff_eq!(r.unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn halved_spread_gives_quarter_ratio() {
        let lat = lattice(2);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let prior: Vec<SpectralField> = (0..30).map(|_| random_field(&lat, &mut rng)).collect();
        let mut mean = SpectralField::zeros(&lat);
        for s in &prior {
            mean.axpy(1.0 / prior.len() as f64, s).unwrap();
        }
        let posterior: Vec<SpectralField> = prior
            .iter()
            .map(|s| {
                // mean + (s - mean) / 2
                let mut half = mean.clone();
                half.scale(0.5);
                half.axpy(0.5, s).unwrap();
                half
            })
            .collect();
        for r in variance_ratio(&posterior, &prior).unwrap() {
            assert_abs_diff_eq!(r.unwrap(), 0.25, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_unconditioned_variance_reports_missing() {
        let lat = lattice(2);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let posterior: Vec<SpectralField> = (0..10).map(|_| random_field(&lat, &mut rng)).collect();
        let flat: Vec<SpectralField> = (0..10).map(|_| SpectralField::zeros(&lat)).collect();
        for r in variance_ratio(&posterior, &flat).unwrap() {
            assert!(r.is_none());
        }
    }

    #[test]
    fn single_atom_sample_concentrates_in_one_bin() {
        let lat = lattice(2);
        let mut state = SpectralField::zeros(&lat);
        state.set_coeff([1, 0], Complex64::new(0.7, 0.0)).unwrap();
        let pdf = marginal_pdf(&[state], &[0.0], [1, 0], Component::Real, 8, 16).unwrap();
        let masses: Vec<f64> = pdf
            .histogram
            .iter()
            .map(|d| d * (pdf.edges[1] - pdf.edges[0]))
            .collect();
        let occupied: Vec<usize> = (0..8).filter(|&b| masses[b] > 0.0).collect();
        assert_eq!(occupied.len(), 1);
        assert_abs_diff_eq!(masses[occupied[0]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn doubling_a_weight_equals_duplicating_the_particle() {
        let values = [0.3, -1.2, 0.8];
        let doubled = weighted_density(
            &values,
            &[2.0f64.ln(), 0.0, 0.0],
            6,
            32,
        )
        .unwrap();
        let duplicated =
            weighted_density(&[0.3, 0.3, -1.2, 0.8], &[0.0; 4], 6, 32).unwrap();
        assert_eq!(doubled.edges, duplicated.edges);
        for (a, b) in doubled.histogram.iter().zip(&duplicated.histogram) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_density_recovers_a_standard_normal() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let weights = vec![0.0; values.len()];
        let pdf = weighted_density(&values, &weights, 50, 301).unwrap();
        let sup = pdf
            .grid
            .iter()
            .zip(&pdf.kde)
            .map(|(&x, &d)| {
                let truth = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                (d - truth).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(sup < 0.05, "sup KDE error {sup}");
    }

    #[test]
    fn metrics_round_trip_through_json() {
        let mut run = RunMetrics::new("ispft", 17, "abc123");
        run.push(StepMetrics {
            step: 0,
            time: 0.4,
            phis: vec![0.3, 1.0],
            ess: vec![51.0, 49.2],
            noise_accept: vec![0.4, 0.35],
            init_accept: vec![0.9, 0.8],
            l2_error: Some(2.5),
        });
        run.push(StepMetrics {
            step: 1,
            time: 0.8,
            phis: vec![1.0],
            ess: vec![72.0],
            noise_accept: vec![0.42],
            init_accept: vec![],
            l2_error: None,
        });
        let text = serde_json::to_string(&run).unwrap();
        let back: RunMetrics = serde_json::from_str(&text).unwrap();
        assert_eq!(run, back);
    }
}
