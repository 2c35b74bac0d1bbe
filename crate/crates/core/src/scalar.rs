//! Scalar abstraction for the analog parts of the simulator.
//!
//! Optical amplitudes, transmissions and dB quantities are computed generically
//! so the same device and interference code can run in `f32` (fast sweeps) or
//! `f64` (reference accuracy). Exact-mode arithmetic never goes through this
//! trait; it uses plain integers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable for optical signal arithmetic.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const TEN: Self;

    /// Lossless-enough conversion from an `f64` literal or parameter.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const TEN: Self = 10.0;
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
