//! Scalar reverse-mode tape.
//!
//! Each recorded node stores at most two parents together with the local
//! partial derivatives, which is all a reverse sweep needs. Parameters are
//! registered first and addressed by the slot index returned at
//! registration time.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use super::Scalar;
use crate::error::{Error, Result};

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default, Debug)]
struct Inner {
    nodes: Vec<Node>,
    values: Vec<f64>,
    /// Node index of each parameter slot.
    params: Vec<u32>,
}

/// Wengert list recording scalar operations for reverse accumulation.
///
/// Variables borrow the tape, so [`Tape::reset`] can only be called once
/// every variable of the previous recording is gone. The allocation is kept
/// across resets.
#[derive(Default, Debug)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a recorded scalar.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} = {})", self.index, self.value)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            inner: RefCell::new(Inner {
                nodes: Vec::with_capacity(nodes),
                values: Vec::with_capacity(nodes),
                params: Vec::new(),
            }),
        }
    }

    /// Forget the recording, keeping allocated memory.
    pub fn reset(&mut self) {
        let inner = self.inner.get_mut();
        inner.nodes.clear();
        inner.values.clear();
        inner.params.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_params(&self) -> usize {
        self.inner.borrow().params.len()
    }

    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let index = inner.nodes.len() as u32;
        inner.nodes.push(Node { parents, partials });
        inner.values.push(value);
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// Register a parameter slot; slots are numbered in registration order.
    pub fn parameter(&self, value: f64) -> Var<'_> {
        let v = self.push(value, [NO_PARENT; 2], [0.0; 2]);
        self.inner.borrow_mut().params.push(v.index);
        v
    }

    pub fn parameters(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.parameter(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(value, [NO_PARENT; 2], [0.0; 2])
    }

    fn unary(&self, a: Var<'_>, value: f64, da: f64) -> Var<'_> {
        self.push(value, [a.index, NO_PARENT], [da, 0.0])
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, value: f64, da: f64, db: f64) -> Var<'_> {
        self.push(value, [a.index, b.index], [da, db])
    }

    /// Reverse sweep from `output`; returns `∂output/∂θ` for every
    /// parameter slot, with exact zeros for slots the output does not
    /// depend on.
    pub fn gradient(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let inner = self.inner.borrow();
        let out = output.index as usize;
        if !inner.values[out].is_finite() {
            return Err(Error::NonFiniteAdjoint { op_index: out });
        }
        let mut adjoint = vec![0.0f64; out + 1];
        adjoint[out] = 1.0;
        for i in (0..=out).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            if !a.is_finite() || !inner.values[i].is_finite() {
                return Err(Error::NonFiniteAdjoint { op_index: i });
            }
            let node = inner.nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NO_PARENT {
                    adjoint[p as usize] += node.partials[k] * a;
                }
            }
        }
        Ok(inner
            .params
            .iter()
            .map(|&p| adjoint.get(p as usize).copied().unwrap_or(0.0))
            .collect())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self, -self.value, -1.0)
    }
}

impl Scalar for Var<'_> {
    fn constant_like(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.tape.unary(self, t, 1.0 - t * t)
    }

    fn sin(self) -> Self {
        self.tape.unary(self, self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.tape.unary(self, self.value.cos(), -self.value.sin())
    }

    fn scale(self, c: f64) -> Self {
        self.tape.unary(self, self.value * c, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let theta = tape.parameter(3.0);
        let loss = theta * theta;
        assert_eq!(tape.gradient(loss).unwrap(), vec![6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let tape = Tape::new();
        let _a = tape.parameter(1.0);
        let _b = tape.parameter(-2.0);
        let c = tape.constant(4.0);
        let loss = c * c;
        assert_eq!(tape.gradient(loss).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn untouched_slot_is_exact_zero() {
        let tape = Tape::new();
        let a = tape.parameter(0.5);
        let _unused = tape.parameter(9.0);
        let loss = a.tanh().sin();
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g[1], 0.0);
        let expected = 0.5f64.tanh().cos() * (1.0 - 0.5f64.tanh().powi(2));
        assert!((g[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let tape = Tape::new();
        let p = tape.parameters(&[0.3, -1.2]);
        let f = p[0] * p[1];
        let g = p[0].sin() + p[1].scale(2.0);
        let gf = tape.gradient(f).unwrap();
        let gg = tape.gradient(g).unwrap();
        let gs = tape.gradient(f + g).unwrap();
        for k in 0..2 {
            assert!((gs[k] - (gf[k] + gg[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_reports_operation_index() {
        let tape = Tape::new();
        let a = tape.parameter(f64::MAX);
        let b = a * a; // overflows to inf
        let err = tape.gradient(b).unwrap_err();
        match err {
            Error::NonFiniteAdjoint { op_index } => assert_eq!(op_index, b.index()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reset_reuses_tape() {
        let mut tape = Tape::with_capacity(16);
        {
            let a = tape.parameter(2.0);
            let _ = a * a;
        }
        tape.reset();
        assert!(tape.is_empty());
        let a = tape.parameter(5.0);
        let g = tape.gradient(a * a).unwrap();
        assert_eq!(g, vec![10.0]);
    }

    #[test]
    fn recording_is_deterministic() {
        let run = || {
            let tape = Tape::new();
            let p = tape.parameters(&[0.1, 0.2, 0.3]);
            let y = (p[0] * p[1] + p[2]).tanh() * p[0].cos();
            tape.gradient(y).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
