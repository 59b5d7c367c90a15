//! Binding energies and structure of two- and three-molecule dipolar chains
//! in stacked two-dimensional layers with tilted dipoles.
//!
//! Units: lengths in the layer spacing `d`, energies in `ħ²/(m d²)`, and the
//! dipolar strength `U = m D² / (ħ² d)`.
//!
//! The approximation ladder, from cheapest to most accurate:
//!
//! * [`landscape`]: expansion of the pair potential around its deep minimum;
//! * [`chain`]: the exactly solvable harmonic three-body chain built from it;
//! * [`variational`]: Gaussian variational energies with the exact potential
//!   and the optimized-oscillator chain;
//! * [`svm`]: stochastic variational reference solver over shifted,
//!   deformed Gaussians.

pub mod chain;
pub mod error;
pub mod exec;
pub mod jacobi;
pub mod landscape;
pub mod model;
pub mod output;
pub mod potential;
pub mod quadrature;
pub mod roots;
pub mod simplex;
pub mod svm;
pub mod variational;

pub use error::{Error, Result};
pub use exec::Strategy;
pub use model::{Angle, CriticalAngles, ModelConfig};
