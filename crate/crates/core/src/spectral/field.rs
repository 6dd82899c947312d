//! Spectral coefficient vectors over a shared lattice.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::Lattice;

/// Upper half-lattice coefficients `u_k` of a real divergence-free field.
///
/// Mirrored coefficients are implicit: `u_{-k} = -conj(u_k)`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    lattice: Arc<Lattice>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    /// The zero field.
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            coeffs: vec![Complex64::ZERO; lattice.n_modes()],
        }
    }

    /// Wrap a coefficient vector laid out in lattice mode order.
    pub fn from_coeffs(lattice: &Arc<Lattice>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has {} entries, lattice stores {} modes",
                coeffs.len(),
                lattice.n_modes()
            )));
        }
        Ok(Self {
            lattice: Arc::clone(lattice),
            coeffs,
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient for an arbitrary nonzero wavenumber inside the truncation,
    /// resolving mirrored entries through `u_{-k} = -conj(u_k)`.
    pub fn coeff(&self, k: [i32; 2]) -> Option<Complex64> {
        if let Some(i) = self.lattice.index_of(k) {
            return Some(self.coeffs[i]);
        }
        self.lattice
            .index_of([-k[0], -k[1]])
            .map(|i| -self.coeffs[i].conj())
    }

    /// Set the coefficient for a stored upper half-lattice wavenumber.
    pub fn set_coeff(&mut self, k: [i32; 2], value: Complex64) -> Result<()> {
        match self.lattice.index_of(k) {
            Some(i) => {
                self.coeffs[i] = value;
                Ok(())
            }
            None => Err(Error::InvalidParameter {
                name: "k",
                reason: format!("wavenumber ({}, {}) is not a stored mode", k[0], k[1]),
            }),
        }
    }

    /// Squared L2 norm of the velocity field: `2 sum_k |u_k|^2` (Parseval,
    /// with the factor 2 accounting for mirrored modes).
    pub fn energy(&self) -> f64 {
        2.0 * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &SpectralField) -> Result<()> {
        self.check_same_lattice(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    /// Largest coefficient-wise absolute difference.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub(crate) fn check_same_lattice(&self, other: &SpectralField) -> Result<()> {
        self.check_lattice(&other.lattice)
    }

    pub(crate) fn check_lattice(&self, lattice: &Arc<Lattice>) -> Result<()> {
        if Arc::ptr_eq(&self.lattice, lattice)
            || self.lattice.max_wavenumber() == lattice.max_wavenumber()
        {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "fields live on different lattices (L = {} vs {})",
                self.lattice.max_wavenumber(),
                lattice.max_wavenumber()
            )))
        }
    }
}
