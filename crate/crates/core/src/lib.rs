//! Simulation and certificate verification for singularly perturbed
//! stochastic hybrid systems.
//!
//! The numeric kernels are generic over [`Real`] (`f32` or `f64`); the
//! packaged scenarios and the Monte Carlo layer work in `f64`, and the type
//! aliases at the crate root name those concrete instantiations.

pub mod analysis;
pub mod error;
pub mod export;
pub mod foster;
pub mod hybrid;
pub mod linalg;
pub mod lmi;
pub mod quadrature;
pub mod scenarios;
pub mod scalar;
pub mod simulate;
pub mod stochastic;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Real;
pub use stochastic::{expectation, Expectation, JumpMeasure, RandomStream};

/// `f64` instantiations used by the scenarios and the Monte Carlo layer.
pub type System = hybrid::SpSystem<f64>;
pub type State = hybrid::StateVector<f64>;
pub type Arc64 = hybrid::HybridArc<f64>;
pub type Certificate = foster::CertificateData<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
