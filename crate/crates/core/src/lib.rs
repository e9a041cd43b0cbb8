//! Physics-informed operator networks for the linear wave equation.
//!
//! Two operator architectures map a sampled initial displacement to the
//! wave field `u(x, t)` on `(-1, 1)^d × (0, T)` with homogeneous Dirichlet
//! boundaries and zero initial velocity:
//!
//! * **DeepONet**: `u = Σ_k b_k(s) · t_k(x, t)`, branch net on sensor
//!   values, trunk net on coordinates.
//! * **GreenONet**: `u = (1/m) Σ_i G(x, t, x_i) · s_i`, a learned kernel
//!   averaged against the sensor values.
//!
//! Both are trained by penalizing the wave residual, the boundary values
//! and the initial conditions at random collocation points. The
//! [`reference`] module provides the ground truth used to measure errors.
//!
//! The `book/` directory next to the workspace root walks through each
//! piece; its code listings are compiled and run as doctests of this crate.

pub mod autodiff;
pub mod error;
pub mod network;
pub mod operator;
pub mod physics;
pub mod reference;
pub mod runner;
pub mod sampling;
pub mod training;

pub mod table;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/derivatives.md")]
    mod derivatives {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/physics_loss.md")]
    mod physics_loss {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/reference_solvers.md")]
    mod reference_solvers {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
