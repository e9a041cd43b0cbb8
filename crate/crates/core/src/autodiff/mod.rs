//! Exact derivatives of network outputs.
//!
//! Second input-derivatives come from forward [`Jet2`]s; parameter
//! gradients from a reverse sweep. Running jets whose components are tape
//! [`Var`]s gives second derivatives that are themselves differentiable in
//! the parameters. [`batch`] does the same thing a whole layer at a time
//! and is what the training loop uses.

pub mod batch;
mod jet;
mod scalar;
mod tape;

pub use jet::Jet2;
pub use scalar::Scalar;
pub use tape::{Tape, Var};

use crate::error::{Error, Result};
use crate::network::FnnParams;

impl From<f64> for Jet2<f64> {
    fn from(v: f64) -> Self {
        Jet2::constant(v)
    }
}

impl<'t> From<Var<'t>> for Jet2<Var<'t>> {
    fn from(v: Var<'t>) -> Self {
        Jet2::constant(v)
    }
}

fn check_axis(params: &FnnParams, input: &[f64], axis: usize) -> Result<()> {
    if input.len() != params.input_width() {
        return Err(Error::Config(format!(
            "network expects {} inputs, got {}",
            params.input_width(),
            input.len()
        )));
    }
    if axis >= input.len() {
        return Err(Error::Config(format!(
            "direction axis {axis} outside input width {}",
            input.len()
        )));
    }
    Ok(())
}

/// Network output with first and second derivative along coordinate `axis`.
pub fn jet_forward_all(params: &FnnParams, input: &[f64], axis: usize) -> Result<Vec<Jet2>> {
    check_axis(params, input, axis)?;
    let x: Vec<Jet2> = input
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == axis { Jet2::variable(v) } else { Jet2::constant(v) })
        .collect();
    Ok(crate::network::forward_generic(params, params.as_slice(), &x))
}

/// [`jet_forward_all`] for a scalar-output network.
pub fn jet_forward(params: &FnnParams, input: &[f64], axis: usize) -> Result<Jet2> {
    if params.output_width() != 1 {
        return Err(Error::Config(format!(
            "jet_forward needs a scalar output, network has {}",
            params.output_width()
        )));
    }
    Ok(jet_forward_all(params, input, axis)?[0])
}

/// Second input-derivatives recorded on a tape, one node per axis.
pub struct SecondOrderNodes<'t> {
    /// Parameter variables, slot `i` is parameter `i` of the network.
    pub params: Vec<Var<'t>>,
    /// Output value (from the first axis pass).
    pub value: Var<'t>,
    /// `∂²u/∂x_k²` for each requested axis.
    pub second: Vec<Var<'t>>,
}

/// Record `∂²u/∂x_k²` on `tape` for every axis so that a later reverse
/// sweep gives its gradient with respect to the network parameters.
/// Parameters are registered as the first slots of the tape.
pub fn second_order_through_params<'t>(
    tape: &'t Tape,
    params: &FnnParams,
    input: &[f64],
    axes: &[usize],
) -> Result<SecondOrderNodes<'t>> {
    if params.output_width() != 1 {
        return Err(Error::Config("scalar-output network required".into()));
    }
    if axes.is_empty() {
        return Err(Error::Config("at least one axis required".into()));
    }
    for (i, a) in axes.iter().enumerate() {
        check_axis(params, input, *a)?;
        if axes[..i].contains(a) {
            return Err(Error::Config(format!("axis {a} listed twice")));
        }
    }
    let p = tape.parameters(params.as_slice());
    let mut second = Vec::with_capacity(axes.len());
    let mut value = None;
    for &axis in axes {
        let x: Vec<Jet2<Var<'t>>> = input
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = tape.constant(v);
                if i == axis {
                    Jet2::variable(c)
                } else {
                    Jet2::constant(c)
                }
            })
            .collect();
        let out = crate::network::forward_generic(params, &p, &x)[0];
        value.get_or_insert(out.value);
        second.push(out.d2);
    }
    Ok(SecondOrderNodes {
        params: p,
        value: value.unwrap(),
        second,
    })
}

/// Reverse sweep of a recorded scalar loss.
pub fn grad_loss(tape: &Tape, loss: Var<'_>) -> Result<Vec<f64>> {
    tape.gradient(loss)
}

/// Central finite-difference derivative of `f` at `x`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central finite-difference second derivative.
pub fn central_second_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tanh_neuron_at_origin() {
        // hidden weight 1, output identity
        let net = FnnParams::from_flat(&[1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let j = jet_forward(&net, &[0.0], 0).unwrap();
        assert_eq!((j.value, j.d1, j.d2), (0.0, 1.0, 0.0));
    }

    #[test]
    fn affine_map() {
        // u(x) = 3x + 2 in jet arithmetic
        let x = Jet2::variable(1.0);
        let u = x.scale(3.0) + x.constant_like(2.0);
        assert_eq!((u.value, u.d1, u.d2), (5.0, 3.0, 0.0));
        // affine output of a dead hidden layer: constant
        let net = FnnParams::from_flat(&[1, 1, 1], vec![0.0, 0.0, 0.0, 2.0]).unwrap();
        let j = jet_forward(&net, &[1.0], 0).unwrap();
        assert_eq!((j.value, j.d1, j.d2), (2.0, 0.0, 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let net = FnnParams::zeros(&[2, 3, 1]).unwrap();
        assert!(matches!(jet_forward(&net, &[1.0], 0), Err(Error::Config(_))));
        assert!(matches!(jet_forward(&net, &[1.0, 2.0], 2), Err(Error::Config(_))));
    }

    #[test]
    fn random_net_against_finite_differences() {
        let net = FnnParams::init(&[2, 6, 6, 1], 21).unwrap();
        let x = [0.37, -0.52];
        for axis in 0..2 {
            let j = jet_forward(&net, &x, axis).unwrap();
            let f = |v: f64| {
                let mut p = x;
                p[axis] = v;
                net.forward(&p).unwrap()[0]
            };
            let fd1 = central_difference(f, x[axis], 1e-4);
            let fd2 = central_second_difference(f, x[axis], 1e-4);
            assert!((j.d1 - fd1).abs() / j.d1.abs().max(1e-3) < 1e-6);
            assert!((j.d2 - fd2).abs() / j.d2.abs().max(1e-2) < 1e-6, "{} {}", j.d2, fd2);
        }
    }

    #[test]
    fn second_order_nodes_match_jets() {
        let net = FnnParams::init(&[2, 5, 1], 4).unwrap();
        let x = [0.1, 0.8];
        let tape = Tape::new();
        let nodes = second_order_through_params(&tape, &net, &x, &[0, 1]).unwrap();
        for (k, node) in nodes.second.iter().enumerate() {
            let j = jet_forward(&net, &x, k).unwrap();
            assert!((node.value() - j.d2).abs() <= 1e-12 * j.d2.abs().max(1e-300));
        }
    }

    #[test]
    fn affine_second_order_nodes_vanish() {
        // one hidden unit with zero incoming weight: output is constant in x
        let net = FnnParams::from_flat(&[1, 1, 1], vec![0.0, 0.3, 1.5, -0.2]).unwrap();
        let tape = Tape::new();
        let nodes = second_order_through_params(&tape, &net, &[0.4], &[0]).unwrap();
        assert_eq!(nodes.second[0].value(), 0.0);
        let g = grad_loss(&tape, nodes.second[0]).unwrap();
        // d2 = f''(a)·w² with w = 0 still has ∂/∂w = 2·f''·w = 0
        assert!(g.iter().all(|&v| v == 0.0), "{g:?}");
    }

    #[test]
    fn tanh_w_second_derivative_gradient() {
        // u(x) = tanh(w x) at x = 0 → u'' = -2 w² tanh(wx) sech²(wx) = 0,
        // derivative of u'' in w must match finite differences of u''.
        let make = |w: f64| FnnParams::from_flat(&[1, 1, 1], vec![w, 0.0, 1.0, 0.0]).unwrap();
        let x = [0.0];
        let tape = Tape::new();
        let nodes = second_order_through_params(&tape, &make(1.0), &x, &[0]).unwrap();
        assert_eq!(nodes.second[0].value(), 0.0);
        let g = grad_loss(&tape, nodes.second[0]).unwrap();
        let fd = central_difference(|w| jet_forward(&make(w), &x, 0).unwrap().d2, 1.0, 1e-5);
        assert!((g[0] - fd).abs() < 1e-8);
        // Off the origin the gradient is non-trivial.
        let x = [0.6];
        let tape = Tape::new();
        let nodes = second_order_through_params(&tape, &make(1.0), &x, &[0]).unwrap();
        let g = grad_loss(&tape, nodes.second[0]).unwrap();
        let fd = central_difference(|w| jet_forward(&make(w), &x, 0).unwrap().d2, 1.0, 1e-5);
        assert!((g[0] - fd).abs() / fd.abs() < 1e-5);
    }

    #[test]
    fn squared_node_gradient_cross_check() {
        let net = FnnParams::init(&[2, 4, 1], 8).unwrap();
        let x = [0.25, -0.4];
        let tape = Tape::new();
        let nodes = second_order_through_params(&tape, &net, &x, &[1]).unwrap();
        let node = nodes.second[0];
        let g = grad_loss(&tape, node * node).unwrap();
        for j in 0..net.param_count() {
            let d2_at = |v: f64| {
                let mut data = net.as_slice().to_vec();
                data[j] = v;
                let p = FnnParams::from_flat(net.layer_sizes(), data).unwrap();
                jet_forward(&p, &x, 1).unwrap().d2
            };
            let fd = 2.0 * node.value() * central_difference(d2_at, net.as_slice()[j], 1e-5);
            let scale = fd.abs().max(g[j].abs()).max(1e-6);
            assert!((g[j] - fd).abs() / scale < 1e-5, "slot {j}: {} vs {fd}", g[j]);
        }
    }
}
