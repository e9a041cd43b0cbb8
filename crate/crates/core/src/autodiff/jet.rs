//! Second-order forward jets along a single direction.

use std::ops::{Add, Mul, Neg, Sub};

use super::Scalar;

/// Truncated Taylor expansion `value + d1·ε + d2·ε²/2` along one direction.
///
/// `d1` and `d2` are the first and second directional derivatives. The
/// component type is generic so the same jet can ride on top of a tape
/// variable, which makes the second derivative itself differentiable with
/// respect to whatever the tape tracks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<S = f64> {
    pub value: S,
    pub d1: S,
    pub d2: S,
}

impl<S: Scalar> Jet2<S> {
    pub fn new(value: S, d1: S, d2: S) -> Self {
        Jet2 { value, d1, d2 }
    }

    /// Seeded as the independent variable: derivative 1, curvature 0.
    pub fn variable(value: S) -> Self {
        Jet2 {
            value,
            d1: value.constant_like(1.0),
            d2: value.constant_like(0.0),
        }
    }

    /// Derivatives identically zero.
    pub fn constant(value: S) -> Self {
        let zero = value.constant_like(0.0);
        Jet2 {
            value,
            d1: zero,
            d2: zero,
        }
    }

    /// Composite `f(self)` given `f`, `f'` and `f''` evaluated at `self.value`.
    ///
    /// `h.d2 = f''·d1² + f'·d2`.
    #[inline]
    pub fn chain(self, f: S, df: S, ddf: S) -> Self {
        Jet2 {
            value: f,
            d1: df * self.d1,
            d2: ddf * self.d1 * self.d1 + df * self.d2,
        }
    }
}

impl<S: Scalar> Add for Jet2<S> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Jet2 {
            value: self.value + rhs.value,
            d1: self.d1 + rhs.d1,
            d2: self.d2 + rhs.d2,
        }
    }
}

impl<S: Scalar> Sub for Jet2<S> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Jet2 {
            value: self.value - rhs.value,
            d1: self.d1 - rhs.d1,
            d2: self.d2 - rhs.d2,
        }
    }
}

impl<S: Scalar> Mul for Jet2<S> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let cross = self.d1 * rhs.d1;
        Jet2 {
            value: self.value * rhs.value,
            d1: self.d1 * rhs.value + self.value * rhs.d1,
            d2: self.d2 * rhs.value + cross + cross + self.value * rhs.d2,
        }
    }
}

impl<S: Scalar> Neg for Jet2<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Jet2 {
            value: -self.value,
            d1: -self.d1,
            d2: -self.d2,
        }
    }
}

impl<S: Scalar> Scalar for Jet2<S> {
    fn constant_like(&self, c: f64) -> Self {
        Jet2::constant(self.value.constant_like(c))
    }

    fn value(&self) -> f64 {
        self.value.value()
    }

    fn tanh(self) -> Self {
        let th = self.value.tanh();
        let one = th.constant_like(1.0);
        let sech2 = one - th * th;
        // d/dx sech² = -2 tanh sech²
        let dsech2 = (th * sech2).scale(-2.0);
        self.chain(th, sech2, dsech2)
    }

    fn sin(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.chain(s, c, -s)
    }

    fn cos(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.chain(c, -s, -c)
    }

    fn scale(self, c: f64) -> Self {
        Jet2 {
            value: self.value.scale(c),
            d1: self.d1.scale(c),
            d2: self.d2.scale(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_second_order() {
        // (x²)'' = 2 at any x
        let x = Jet2::variable(1.7);
        let y = x * x;
        assert_eq!(y.value, 1.7 * 1.7);
        assert!((y.d1 - 3.4).abs() < 1e-15);
        assert_eq!(y.d2, 2.0);
    }

    #[test]
    fn tanh_at_origin() {
        let y = Jet2::variable(0.0).tanh();
        assert_eq!((y.value, y.d1, y.d2), (0.0, 1.0, 0.0));
    }

    #[test]
    fn sin_cos_derivatives() {
        let x = 0.3_f64;
        let s = Jet2::variable(x).sin();
        let c = Jet2::variable(x).cos();
        assert_eq!((s.d1, s.d2), (x.cos(), -x.sin()));
        assert_eq!((c.d1, c.d2), (-x.sin(), -x.cos()));
    }

    #[test]
    fn constant_seed_stays_zero() {
        let x = Jet2::constant(0.4);
        let y = (x * x).tanh().sin() - x.cos().scale(3.0);
        assert_eq!(y.d1, 0.0);
        assert_eq!(y.d2, 0.0);
    }
}
