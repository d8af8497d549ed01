//! Robustness certificates for perturbed linear time-varying systems
//! ẋ = A(t)x + w(x, t), built on logarithmic norms (matrix measures).
//!
//! The pipeline: compute μ[A(t)] for a chosen vector norm ([`linalg`]),
//! accumulate ∫₀ᵗ μ ([`quadrature`]), check the three decay conditions and
//! the variation-of-constants envelope ([`certify`]), and cross-check against
//! direct simulation ([`odesim`]). [`funclass`] probes membership of
//! perturbations in the decay classes 𝒱 ⊂ 𝒜𝒟 ⊂ 𝒟.

pub mod certify;
pub mod error;
pub mod funclass;
pub mod linalg;
pub mod odesim;
pub mod quadrature;
pub mod system;

pub use error::{Error, IntegrationFailure, Result};
pub use linalg::{Matrix, NormKind};
pub use system::{builtin_scenario, MatrixFunction, Perturbation, Scenario};
