//! Numerical laboratory for the wave equation on (-1, 1) with Kelvin-Voigt
//! damping that is switched off on [-1, 0] and degenerates like `x^alpha` on
//! the right half.
//!
//! The crate discretizes the damped string with piecewise-linear finite
//! elements and measures, at desk scale, how fast the resolvent
//! `(i omega - A)^{-1}` of the generator grows along the imaginary axis, what
//! the discrete spectrum looks like, and how the energy of solutions decays.
//! The measured exponents are compared with the closed-form predictions in
//! [`model::predict_rates`].
//!
//! Module map:
//!
//! - [`model`]: damping coefficient, rate predictions, run configuration
//! - [`discretization`]: meshes, assembly of mass/stiffness/damping, the discrete generator
//! - [`evolution`]: implicit midpoint time stepping and energy traces
//! - [`spectral`]: eigenvalues of the quadratic pencil
//! - [`resolvent`]: energy-norm resolvent norms and growth-exponent fits
//! - [`analysis`]: weighted Hardy inequality checks and the rate comparison table
//! - [`oracle`]: dense reference computations used to cross-check the fast paths
//! - [`verify`]: the acceptance criteria, shared by the CLI and the test suite
//! - [`cli`]: argument parsing and the pipelines behind the `kvdecay` binary

pub mod analysis;
pub mod cli;
pub mod discretization;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod io;
pub mod model;
pub mod oracle;
pub mod resolvent;
pub mod spectral;
pub mod tridiag;
pub mod verify;

pub use error::{Error, Result};
