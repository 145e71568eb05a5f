//! Quantum Cramér–Rao bounds for shaped phase objects.
//!
//! The crate computes quantum Fisher information matrices for light that
//! picks up a parameter-dependent phase `φ(x, θ)` from a sample, builds the
//! projection-mode basis that saturates the bound, and checks saturation by
//! Monte Carlo photon counting with maximum-likelihood estimation.
//!
//! The worked example throughout is the cliff-like step
//! `S(x) = (h/2)(1 + tanh αx)` illuminated by a Gaussian beam.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod models;
pub mod modes;
pub mod numerics;

pub use error::{Error, Result};
pub use fisher::{FisherResult, StateFamily};
pub use models::{CliffModel, CliffParameters, IlluminationProfile, PhaseModel, TabulatedModel};
pub use modes::{ModeBasis, ProbabilityVector};
pub use numerics::{ComplexMatrix, QuadratureSpec};
