//! Real scalar abstraction for the algebraic core.

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar the exterior-algebra and linear-algebra layers are
/// generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}
