//! Data-assimilation engine for the 2D incompressible stochastic Navier-Stokes
//! equations on the periodic torus `[0, 2pi]^2`.
//!
//! The velocity field is represented in a divergence-free Fourier basis and
//! evolved with a pseudospectral exponential-Euler scheme. Noisy local
//! observations (disc averages of the velocity at fixed stations) are
//! assimilated with particle filters — a bootstrap filter, an importance
//! filter with likelihood-informed guided proposals, adaptively tempered
//! variants with preconditioned Crank-Nicolson rejuvenation — and an ensemble
//! Kalman filter baseline.

pub mod diagnostics;
pub mod dynamics;
pub mod enkf;
pub mod error;
pub mod filter;
pub mod guidance;
pub mod harness;
pub mod observation;
pub mod spectral;

pub use error::{Error, Result};
