use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar the optimizer and network math is generic over.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough cast from an `f64` literal; panics only on values a
    /// float type cannot represent at all, which no constant in this crate hits.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
