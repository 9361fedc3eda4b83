//! Policy optimization for finite tabular MDPs through the convex-duality
//! route: regularize the occupancy-measure LP with a divergence to a reference
//! distribution, minimize the smooth dual with accelerated gradient descent
//! (or a sampled-gradient SGD variant), and extract a policy whose
//! suboptimality is certified by the dual gradient norm.
//!
//! Everything numerical is generic over a floating-point [`Scalar`]
//! (`f32`/`f64`); the `*64` aliases below fix the common `f64` instantiation.

pub mod agd;
pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod logging;
pub mod mdp;
pub mod regularizers;
pub mod rng;
pub mod scalar;
pub mod sgd;

pub use error::{Error, Result};
pub use scalar::Scalar;

// Array types appear throughout the public API (policies, visitations,
// conjugate tables), so re-export the crate they come from: downstream users
// can name them without pinning a matching ndarray version themselves.
pub use ndarray;

/// `f64` instantiations of the core types.
pub type Mdp64 = mdp::Mdp<f64>;
pub type Policy64 = mdp::Policy<f64>;
pub type Visitation64 = mdp::Visitation<f64>;
pub type ValueVector64 = mdp::ValueVector<f64>;
pub type ReferenceDistribution64 = mdp::ReferenceDistribution<f64>;
pub type Regularizer64 = regularizers::Regularizer<f64>;
pub type RegularizedProblem64 = dual::RegularizedProblem<f64>;
pub type TheoryConstants64 = dual::TheoryConstants<f64>;
pub type AgdConfig64 = agd::AgdConfig<f64>;
pub type SgdConfig64 = sgd::SgdConfig<f64>;
