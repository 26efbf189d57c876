//! Scalar abstraction for the numeric core: f32 or f64.

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the resistance solvers and flow kernels are generic over.
pub trait Scalar: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {
    /// Relative residual the linear solves must reach.
    fn residual_tolerance() -> Self;

    /// Lossy conversion to `f64` for diagnostics and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from `f64`, used for tolerances and literals.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }
}

impl Scalar for f64 {
    fn residual_tolerance() -> f64 {
        1e-10
    }
}

impl Scalar for f32 {
    fn residual_tolerance() -> f32 {
        1e-4
    }
}
