//! FFT-based transforms between spectral coefficients and grid fields,
//! including the pseudospectral advection term.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectral::{Lattice, SpectralField};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Velocity components sampled on the `M x M` transform grid,
/// row-major with `x = (2 pi i1 / M, 2 pi i2 / M)` stored at `i1 * M + i2`.
#[derive(Debug, Clone)]
pub struct PhysicalField {
    pub grid_size: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Reusable grid buffers for one worker; never shared between threads.
#[derive(Debug)]
pub struct FftScratch {
    pub(crate) a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    d: Vec<Complex64>,
    tmp: Vec<Complex64>,
    fft: Vec<Complex64>,
}

/// FFT plans and index maps tied to one lattice. Immutable and cheap to share.
///
/// Both velocity components are packed into a single complex grid
/// (`u + i v`), so synthesis and analysis of a vector field cost one
/// two-dimensional FFT each.
pub struct Transform {
    lattice: Arc<Lattice>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Grid slot of `+k` per stored mode.
    pos: Vec<usize>,
    /// Grid slot of `-k` per stored mode.
    neg: Vec<usize>,
    /// Projection scale `2 pi / (|k| M^2)` per stored mode.
    proj: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Deriv {
    None,
    X,
    Y,
}

#[inline]
fn mul_i(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

impl Transform {
    pub fn new(lattice: &Arc<Lattice>) -> Self {
        let m = lattice.grid_size();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let mi = m as i32;
        let slot = |k1: i32, k2: i32| -> usize {
            (k1.rem_euclid(mi) as usize) * m + k2.rem_euclid(mi) as usize
        };
        let pos = lattice.modes().iter().map(|&[k1, k2]| slot(k1, k2)).collect();
        let neg = lattice.modes().iter().map(|&[k1, k2]| slot(-k1, -k2)).collect();
        let proj = lattice
            .norm()
            .iter()
            .map(|&n| TWO_PI / (n * (m * m) as f64))
            .collect();
        Self {
            lattice: Arc::clone(lattice),
            fwd,
            inv,
            pos,
            neg,
            proj,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn make_scratch(&self) -> FftScratch {
        let n = self.lattice.grid_size() * self.lattice.grid_size();
        let flen = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        FftScratch {
            a: vec![Complex64::ZERO; n],
            b: vec![Complex64::ZERO; n],
            c: vec![Complex64::ZERO; n],
            d: vec![Complex64::ZERO; n],
            tmp: vec![Complex64::ZERO; n],
            fft: vec![Complex64::ZERO; flen],
        }
    }

    /// Row-major grid slot of node `(i1, i2)`.
    pub fn grid_node(&self, i1: usize, i2: usize) -> usize {
        i1 * self.lattice.grid_size() + i2
    }

    /// Sample the velocity field on the transform grid.
    pub fn to_physical(&self, f: &SpectralField) -> PhysicalField {
        let mut s = self.make_scratch();
        self.synth_packed(f, None, &mut s);
        let m = self.lattice.grid_size();
        PhysicalField {
            grid_size: m,
            u: s.a.iter().map(|z| z.re).collect(),
            v: s.a.iter().map(|z| z.im).collect(),
        }
    }

    /// Project grid velocity components onto the divergence-free lattice
    /// modes (Leray projection plus truncation in one step).
    pub fn from_physical(&self, u: &[f64], v: &[f64]) -> Result<SpectralField> {
        let m = self.lattice.grid_size();
        if u.len() != m * m || v.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} nodes, expected {}",
                u.len().min(v.len()),
                m * m
            )));
        }
        let mut s = self.make_scratch();
        for (slot, (&x, &y)) in s.a.iter_mut().zip(u.iter().zip(v)) {
            *slot = Complex64::new(x, y);
        }
        self.fft2d(true, &mut s.a, &mut s.tmp, &mut s.fft);
        Ok(self.project_packed(&s.a))
    }

    /// Advection term `B(V, V) = P((V . grad) V)` in spectral coordinates.
    ///
    /// Pseudospectral evaluation: synthesize the velocity and its gradient on
    /// the grid, form the advection pointwise, transform back, and project
    /// onto the lattice. The grid is large enough that the quadratic product
    /// is alias-free on retained modes, so the projection is also the
    /// dealiasing step.
    pub fn nonlinear_term(&self, f: &SpectralField, s: &mut FftScratch) -> SpectralField {
        let mut coeffs = vec![Complex64::ZERO; self.lattice.n_modes()];
        self.nonlinear_term_into(f, s, &mut coeffs);
        SpectralField::from_coeffs(&self.lattice, coeffs).expect("sized to the lattice")
    }

    /// Allocation-free variant of [`Self::nonlinear_term`]; `out` must have
    /// one slot per stored mode.
    pub fn nonlinear_term_into(&self, f: &SpectralField, s: &mut FftScratch, out: &mut [Complex64]) {
        self.scatter_into(f, Deriv::None, None, &mut s.a);
        self.fft2d(false, &mut s.a, &mut s.tmp, &mut s.fft);
        std::mem::swap(&mut s.a, &mut s.b);

        self.scatter_into(f, Deriv::X, None, &mut s.a);
        self.fft2d(false, &mut s.a, &mut s.tmp, &mut s.fft);
        std::mem::swap(&mut s.a, &mut s.c);

        self.scatter_into(f, Deriv::Y, None, &mut s.a);
        self.fft2d(false, &mut s.a, &mut s.tmp, &mut s.fft);
        std::mem::swap(&mut s.a, &mut s.d);

        for ((w, &vel), (&gx, &gy)) in s
            .a
            .iter_mut()
            .zip(s.b.iter())
            .zip(s.c.iter().zip(s.d.iter()))
        {
            let (u1, u2) = (vel.re, vel.im);
            *w = Complex64::new(u1 * gx.re + u2 * gy.re, u1 * gx.im + u2 * gy.im);
        }
        self.fft2d(true, &mut s.a, &mut s.tmp, &mut s.fft);
        self.project_packed_into(&s.a, out);
    }

    /// Scalar vorticity `curl V` sampled on the transform grid.
    pub fn vorticity_grid(&self, f: &SpectralField) -> Vec<f64> {
        let mut s = self.make_scratch();
        s.a.fill(Complex64::ZERO);
        for (i, &u) in f.coeffs().iter().enumerate() {
            let c = mul_i(u) * (self.lattice.norm()[i] / TWO_PI);
            s.a[self.pos[i]] = c;
            s.a[self.neg[i]] = c.conj();
        }
        self.fft2d(false, &mut s.a, &mut s.tmp, &mut s.fft);
        s.a.iter().map(|z| z.re).collect()
    }

    /// Synthesize the packed grid `u + i v`, optionally scaling mode `i` by
    /// `scale[i]`, leaving the result in `s.a`.
    pub(crate) fn synth_packed(&self, f: &SpectralField, scale: Option<&[f64]>, s: &mut FftScratch) {
        self.scatter_into(f, Deriv::None, scale, &mut s.a);
        self.fft2d(false, &mut s.a, &mut s.tmp, &mut s.fft);
    }

    /// Unnormalized synthesis-direction 2D FFT of `s.a` in place; used to
    /// turn station point masses into plane-wave sums `sum_l r_l e^{i k.x_l}`.
    pub(crate) fn carrier_transform(&self, s: &mut FftScratch) {
        self.fft2d(false, &mut s.a, &mut s.tmp, &mut s.fft);
    }

    /// Split the packed spectrum at stored mode `i` into the two component
    /// spectra (Hermitian/anti-Hermitian parts).
    pub(crate) fn unpack_pair(&self, grid: &[Complex64], i: usize) -> (Complex64, Complex64) {
        let wp = grid[self.pos[i]];
        let wn = grid[self.neg[i]].conj();
        let w1 = 0.5 * (wp + wn);
        let w2 = Complex64::new(0.0, -0.5) * (wp - wn);
        (w1, w2)
    }

    fn scatter_into(
        &self,
        f: &SpectralField,
        deriv: Deriv,
        scale: Option<&[f64]>,
        out: &mut [Complex64],
    ) {
        out.fill(Complex64::ZERO);
        let basis = self.lattice.basis();
        for (i, (&u0, &[k1, k2])) in f.coeffs().iter().zip(self.lattice.modes()).enumerate() {
            let u = match scale {
                Some(sc) => u0 * sc[i],
                None => u0,
            };
            let a1 = u * basis[i][0];
            let a2 = u * basis[i][1];
            let ppos = Complex64::new(a1.re - a2.im, a1.im + a2.re);
            let pneg = Complex64::new(a1.re + a2.im, a2.re - a1.im);
            let (ppos, pneg) = match deriv {
                Deriv::None => (ppos, pneg),
                Deriv::X => (k1 as f64 * mul_i(ppos), -(k1 as f64) * mul_i(pneg)),
                Deriv::Y => (k2 as f64 * mul_i(ppos), -(k2 as f64) * mul_i(pneg)),
            };
            out[self.pos[i]] = ppos;
            out[self.neg[i]] = pneg;
        }
    }

    fn project_packed(&self, grid: &[Complex64]) -> SpectralField {
        let mut coeffs = vec![Complex64::ZERO; self.lattice.n_modes()];
        self.project_packed_into(grid, &mut coeffs);
        SpectralField::from_coeffs(&self.lattice, coeffs).expect("sized to the lattice")
    }

    fn project_packed_into(&self, grid: &[Complex64], out: &mut [Complex64]) {
        for i in 0..self.lattice.n_modes() {
            let (w1, w2) = self.unpack_pair(grid, i);
            let [k1, k2] = self.lattice.modes()[i];
            let kp1 = -(k2 as f64);
            let kp2 = k1 as f64;
            out[i] = (kp1 * w1 + kp2 * w2) * self.proj[i];
        }
    }

    fn fft2d(
        &self,
        forward: bool,
        buf: &mut [Complex64],
        tmp: &mut [Complex64],
        fscr: &mut [Complex64],
    ) {
        let m = self.lattice.grid_size();
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(buf, fscr);
        transpose::transpose(buf, tmp, m, m);
        plan.process_with_scratch(tmp, fscr);
        transpose::transpose(tmp, buf, m, m);
    }
}
