//! Scalar abstraction.
//!
//! All numerical code in this crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Concrete aliases for the main types
//! live at the crate root.

use nalgebra::RealField;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type used throughout the toolkit.
///
/// Combines `nalgebra`'s field requirements (matrix factorizations,
/// matrix exponential) with IEEE semantics from `num_traits::Float`
/// (infinities for unbounded time measures).
pub trait Real:
    RealField + Float + FromPrimitive + ToPrimitive + Default + Copy + std::fmt::Display
{
    /// Lossy conversion from an `f64` constant.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("constant not representable")
    }

    /// Conversion from a step/sample count.
    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("count not representable")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar convertible to f64")
    }
}

impl<T> Real for T where
    T: RealField + Float + FromPrimitive + ToPrimitive + Default + Copy + std::fmt::Display
{
}
