//! Divergence-free spectral representation of velocity fields on the
//! periodic torus `[0, 2pi]^2`.
//!
//! A real, mean-free, divergence-free velocity field is expanded as
//! `V(x) = sum_k u_k psi_k(x)` with `psi_k(x) = (k_perp / (2 pi |k|)) e^{i k.x}`
//! and `k_perp = (-k2, k1)`. Reality forces `u_{-k} = -conj(u_k)`, so only the
//! upper half-lattice is stored; every mirrored pair contributes
//! `2 Re(u_k psi_k)` to the physical field.

mod field;
mod lattice;
mod transform;

pub use field::SpectralField;
pub use lattice::Lattice;
pub use transform::{FftScratch, PhysicalField, Transform};
