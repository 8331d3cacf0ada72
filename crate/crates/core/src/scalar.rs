//! Scalar abstractions shared by the numeric modules.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, NumCast};

/// Floating-point scalar used by the physical link model: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + NumCast + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this scalar type.
    fn lit(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field scalar used by exact-capable routines (cost envelopes).
///
/// Implemented for the float types and for any `Clone` ordered numeric type
/// such as `num_rational::Ratio<i64>`.
pub trait Field: Num + Clone + PartialOrd + Debug {
    fn from_count(count: usize) -> Self {
        let mut acc = Self::zero();
        for _ in 0..count {
            acc = acc + Self::one();
        }
        acc
    }
}

impl<T: Num + Clone + PartialOrd + Debug> Field for T {}
