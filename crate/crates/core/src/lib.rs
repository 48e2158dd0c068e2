pub mod cli;
pub mod error;
pub mod fading;
pub mod fsmc;
pub mod gauss_capacity;
pub mod scalar;
pub mod simulate;
pub mod special_math;

pub use error::{Error, Result};
pub use scalar::Real;

/// Quadrature rules at the two supported precisions.
pub type QuadratureRuleF64 = special_math::QuadratureRule<f64>;
pub type QuadratureRuleF32 = special_math::QuadratureRule<f32>;
