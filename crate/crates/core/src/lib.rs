//! Periodic traveling waves of viscous conservation laws u_t + f(u)_x = u_xx:
//! profiles, Bloch spectra, the low-frequency expansion, Green kernels and
//! nonlinear modulation dynamics.

pub mod error;
pub mod fit;
pub mod grid;
pub mod linalg;
pub mod linear;
pub mod lowfreq;
pub mod model;
pub mod nonlinear;
pub mod bloch;
pub mod profile;
pub mod quad;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testing;
