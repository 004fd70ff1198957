//! Floating-point abstraction over the lattice element type.
//!
//! The whole engine is generic over [`Real`] so the same code path runs in
//! `f32` for training speed and in `f64` when we verify analytic gradients
//! against central finite differences (f32 rounding would drown the
//! comparison).

use ndarray::NdFloat;

/// Element type of lattice states and model parameters.
///
/// `NdFloat` brings everything `ndarray` needs for arithmetic and matrix
/// multiplication; the two conversion helpers let scalar bookkeeping (losses,
/// learning rates, RNG draws) stay in `f64` regardless of the lattice type.
pub trait Real: NdFloat {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
