//! Scalar abstraction for the numeric kernels.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the kernels are generic over: `f32` or `f64`.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {
    /// Converts an `f64` literal (tolerances, weights, grid steps) into `Self`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy view of the value as `f64`, for diagnostics and reports.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
