//! Cross-checks of the FFT spectral machinery against slow, independent
//! evaluations: direct mode sums, quadrature projections, an analytic
//! interaction-coefficient convolution, and finite differences.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use snsfilter::spectral::{Lattice, SpectralField, Transform};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn test_field(lat: &Arc<Lattice>) -> SpectralField {
    let mut f = SpectralField::zeros(lat);
    for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
        let t = i as f64 + 1.0;
        *c = Complex64::new((0.9 * t).sin(), (0.4 * t + 1.0).cos()) / t.sqrt();
    }
    f
}

/// Velocity at an arbitrary point by direct summation over stored modes and
/// their mirrors (no FFT involved).
fn eval_velocity(f: &SpectralField, x: [f64; 2]) -> [f64; 2] {
    let lat = f.lattice();
    let mut out = [0.0, 0.0];
    for (i, &[k1, k2]) in lat.modes().iter().enumerate() {
        let phase = k1 as f64 * x[0] + k2 as f64 * x[1];
        let e = Complex64::new(phase.cos(), phase.sin());
        let amp = 2.0 * (f.coeffs()[i] * e).re;
        let b = lat.basis()[i];
        out[0] += amp * b[0];
        out[1] += amp * b[1];
    }
    out
}

/// Partial derivative `d V / d x_c` at an arbitrary point, analytically.
fn eval_velocity_deriv(f: &SpectralField, x: [f64; 2], c: usize) -> [f64; 2] {
    let lat = f.lattice();
    let mut out = [0.0, 0.0];
    for (i, &[k1, k2]) in lat.modes().iter().enumerate() {
        let phase = k1 as f64 * x[0] + k2 as f64 * x[1];
        let e = Complex64::new(phase.cos(), phase.sin());
        let kc = [k1 as f64, k2 as f64][c];
        let amp = 2.0 * (f.coeffs()[i] * e * Complex64::new(0.0, kc)).re;
        let b = lat.basis()[i];
        out[0] += amp * b[0];
        out[1] += amp * b[1];
    }
    out
}

#[test]
fn grid_samples_match_direct_mode_sum() {
    let lat = Arc::new(Lattice::new(3).unwrap());
    let tr = Transform::new(&lat);
    let f = test_field(&lat);
    let phys = tr.to_physical(&f);
    let m = lat.grid_size();
    for &(p1, p2) in &[(0usize, 0usize), (1, 5), (7, 3), (13, 13), (20, 9)] {
        let (i1, i2) = (p1 % m, p2 % m);
        let x = [TWO_PI * i1 as f64 / m as f64, TWO_PI * i2 as f64 / m as f64];
        let direct = eval_velocity(&f, x);
        let j = tr.grid_node(i1, i2);
        assert!((phys.u[j] - direct[0]).abs() < 1e-12);
        assert!((phys.v[j] - direct[1]).abs() < 1e-12);
    }
}

#[test]
fn advection_matches_quadrature_projection() {
    // Evaluate W = (V . grad) V by direct summation on a 64 x 64 grid and
    // project onto each mode by the rectangle rule, which is exact for
    // band-limited periodic integrands at this resolution.
    let lat = Arc::new(Lattice::new(2).unwrap());
    let tr = Transform::new(&lat);
    let f = test_field(&lat);
    let mut s = tr.make_scratch();
    let fast = tr.nonlinear_term(&f, &mut s);

    let g = 64usize;
    let mut w = vec![[0.0f64; 2]; g * g];
    for i1 in 0..g {
        for i2 in 0..g {
            let x = [TWO_PI * i1 as f64 / g as f64, TWO_PI * i2 as f64 / g as f64];
            let vel = eval_velocity(&f, x);
            let dx = eval_velocity_deriv(&f, x, 0);
            let dy = eval_velocity_deriv(&f, x, 1);
            w[i1 * g + i2] = [
                vel[0] * dx[0] + vel[1] * dy[0],
                vel[0] * dx[1] + vel[1] * dy[1],
            ];
        }
    }
    let cell = (TWO_PI / g as f64) * (TWO_PI / g as f64);
    for (i, &[k1, k2]) in lat.modes().iter().enumerate() {
        let b = lat.basis()[i];
        let mut acc = Complex64::ZERO;
        for i1 in 0..g {
            for i2 in 0..g {
                let x = [TWO_PI * i1 as f64 / g as f64, TWO_PI * i2 as f64 / g as f64];
                let phase = k1 as f64 * x[0] + k2 as f64 * x[1];
                let e = Complex64::new(phase.cos(), -phase.sin());
                acc += e * (b[0] * w[i1 * g + i2][0] + b[1] * w[i1 * g + i2][1]);
            }
        }
        let oracle = acc * cell;
        let got = fast.coeffs()[i];
        assert!(
            (got - oracle).norm() < 1e-10,
            "mode ({k1},{k2}): fast {got} vs quadrature {oracle}"
        );
    }
}

#[test]
fn advection_matches_analytic_convolution() {
    // B_k = sum over m + p = k of
    //   i (m_perp . p)(p_perp . k_perp) / (2 pi |m| |p| |k|) u_m u_p,
    // summed over the full lattice including mirror modes.
    let lat = Arc::new(Lattice::new(2).unwrap());
    let tr = Transform::new(&lat);
    let f = test_field(&lat);
    let mut s = tr.make_scratch();
    let fast = tr.nonlinear_term(&f, &mut s);

    let mut full: HashMap<[i32; 2], Complex64> = HashMap::new();
    for (i, &[k1, k2]) in lat.modes().iter().enumerate() {
        let u = f.coeffs()[i];
        full.insert([k1, k2], u);
        full.insert([-k1, -k2], -u.conj());
    }
    let norm = |k: [i32; 2]| ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
    let perp = |k: [i32; 2]| [-k[1] as f64, k[0] as f64];
    for (i, &k) in lat.modes().iter().enumerate() {
        let kp = perp(k);
        let mut acc = Complex64::ZERO;
        for (&m, &um) in &full {
            let p = [k[0] - m[0], k[1] - m[1]];
            let Some(&up) = full.get(&p) else { continue };
            let mp = perp(m);
            let pp = perp(p);
            let dot_mp = mp[0] * p[0] as f64 + mp[1] * p[1] as f64;
            let dot_pk = pp[0] * kp[0] + pp[1] * kp[1];
            let scale = dot_mp * dot_pk / (TWO_PI * norm(m) * norm(p) * norm(k));
            acc += Complex64::new(0.0, scale) * um * up;
        }
        let got = fast.coeffs()[i];
        assert!(
            (got - acc).norm() < 1e-12,
            "mode {k:?}: fast {got} vs convolution {acc}"
        );
    }
}

#[test]
fn vorticity_matches_finite_difference_curl() {
    // curl V = d v / d x1 - d u / d x2, approximated by central differences
    // of the direct mode sum with a tiny step.
    let lat = Arc::new(Lattice::new(3).unwrap());
    let tr = Transform::new(&lat);
    let f = test_field(&lat);
    let w = tr.vorticity_grid(&f);
    let m = lat.grid_size();
    let h = 1e-5;
    for &(p1, p2) in &[(0usize, 0usize), (3, 11), (9, 2), (17, 17), (5, 23)] {
        let (i1, i2) = (p1 % m, p2 % m);
        let x = [TWO_PI * i1 as f64 / m as f64, TWO_PI * i2 as f64 / m as f64];
        let vp = eval_velocity(&f, [x[0] + h, x[1]]);
        let vm = eval_velocity(&f, [x[0] - h, x[1]]);
        let up = eval_velocity(&f, [x[0], x[1] + h]);
        let um = eval_velocity(&f, [x[0], x[1] - h]);
        let fd = (vp[1] - vm[1]) / (2.0 * h) - (up[0] - um[0]) / (2.0 * h);
        assert!((w[tr.grid_node(i1, i2)] - fd).abs() < 1e-7);
    }
}

#[test]
fn grid_velocity_is_divergence_free() {
    // Spectral divergence of the sampled field via direct differentiation.
    let lat = Arc::new(Lattice::new(4).unwrap());
    let f = test_field(&lat);
    for &(a, b) in &[(0.3f64, 1.7f64), (2.9, 4.4), (5.1, 0.2)] {
        let dx = eval_velocity_deriv(&f, [a, b], 0);
        let dy = eval_velocity_deriv(&f, [a, b], 1);
        assert!((dx[0] + dy[1]).abs() < 1e-12);
    }
}
