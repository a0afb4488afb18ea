//! Hamiltonian parameter identification from sampled observable traces.
//!
//! A Hamiltonian with unknown coefficients drives a linear system on the
//! coherence vector. The crate realizes that system from data (ERA), takes the
//! transfer-function coefficients of the realization and solves for the
//! parameters that reproduce them.
//!
//! Numerical code is generic over [`Real`]; the characteristic-polynomial path
//! also runs over exact rationals ([`ExactRational`]). The `*64` aliases fix the
//! scalar to `f64`.

pub mod chain;
pub mod dynamics;
pub mod era;
pub mod error;
pub mod io;
pub mod logm;
pub mod model;
pub mod pauli;
pub mod pipeline;
pub mod robustness;
pub mod scalar;
pub mod solver;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::{rational, ExactRational, Field, Real};

pub type CoherenceSystem64 = dynamics::CoherenceSystem<f64>;
pub type TimeTrace64 = dynamics::TimeTrace<f64>;
pub type Realization64 = era::Realization<f64>;
pub type TransferFunction64 = transfer::TransferFunction<f64>;
