use std::ops::{Add, Mul, Neg, Sub};

/// Arithmetic shared by plain floats, tape variables and jets.
///
/// Network evaluation is written once against this trait, so the same
/// sequence of floating-point operations runs whether the caller wants a
/// value, a jet, or a recorded tape.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// A constant living in the same context as `self` (same tape, zero jet).
    fn constant_like(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn scale(self, c: f64) -> Self {
        let k = self.constant_like(c);
        self * k
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}
