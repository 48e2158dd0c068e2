use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar accepted by the special-function and quadrature
/// primitives.
pub trait Real: Float + FloatConst + FromPrimitive + NumAssign + Debug + Send + Sync + 'static {
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count or index.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + NumAssign + Debug + Send + Sync + 'static {}
