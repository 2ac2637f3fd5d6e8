//! Scalar abstraction: the numeric core works over `f32` or `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the tensors, layers and losses are generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Constant conversion from `f64`. Seeds, hyperparameters and literals
    /// all enter the generic code through here.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Widening conversion to `f64` (lossless for both supported scalars).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar represents a real number")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
