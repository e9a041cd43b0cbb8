//! Column-batched jets through a whole network, with a hand-derived reverse
//! pass.
//!
//! This is the same forward-over-reverse computation as running
//! [`Jet2`](super::Jet2) over [`Var`](super::Var), but recorded per layer
//! instead of per scalar: every channel (value, first and second
//! directional derivative per seeded axis) of every column is stacked into
//! one matrix, so each layer costs a single matrix product forward and two
//! backward.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::network::FnnParams;

/// Direction along which derivatives are seeded: the unit vector of one
/// network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisSeed {
    pub input: usize,
    /// Also carry the second derivative along this axis.
    pub second: bool,
}

/// Where each channel lives among the column blocks.
#[derive(Clone, Debug)]
pub struct ChannelLayout {
    cols: usize,
    axes: Vec<AxisSeed>,
    d1: Vec<usize>,
    d2: Vec<Option<usize>>,
    blocks: usize,
}

impl ChannelLayout {
    pub fn new(cols: usize, axes: &[AxisSeed]) -> Self {
        let mut blocks = 1;
        let mut d1 = Vec::with_capacity(axes.len());
        let mut d2 = Vec::with_capacity(axes.len());
        for a in axes {
            d1.push(blocks);
            blocks += 1;
            if a.second {
                d2.push(Some(blocks));
                blocks += 1;
            } else {
                d2.push(None);
            }
        }
        ChannelLayout {
            cols,
            axes: axes.to_vec(),
            d1,
            d2,
            blocks,
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn axes(&self) -> &[AxisSeed] {
        &self.axes
    }

    pub fn width(&self) -> usize {
        self.cols * self.blocks
    }

    fn block(&self, b: usize) -> Range<usize> {
        b * self.cols..(b + 1) * self.cols
    }

    pub fn value(&self) -> Range<usize> {
        self.block(0)
    }

    pub fn d1(&self, axis: usize) -> Range<usize> {
        self.block(self.d1[axis])
    }

    pub fn d2(&self, axis: usize) -> Option<Range<usize>> {
        self.d2[axis].map(|b| self.block(b))
    }
}

/// Everything the reverse pass needs from a forward pass.
#[derive(Debug)]
pub struct BatchTrace {
    layout: ChannelLayout,
    /// Input of affine layer `l`, all channels stacked.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl BatchTrace {
    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    /// Output channels, `N_out × layout.width()`.
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn output_value(&self) -> ArrayView2<'_, f64> {
        self.output.slice(s![.., self.layout.value()])
    }

    pub fn output_d1(&self, axis: usize) -> ArrayView2<'_, f64> {
        self.output.slice(s![.., self.layout.d1(axis)])
    }

    pub fn output_d2(&self, axis: usize) -> Option<ArrayView2<'_, f64>> {
        self.layout
            .d2(axis)
            .map(|r| self.output.slice(s![.., r]))
    }
}

/// Forward jets for a batch of input columns (`N_0 × cols`).
pub fn forward(net: &FnnParams, inputs: ArrayView2<'_, f64>, axes: &[AxisSeed]) -> Result<BatchTrace> {
    let n0 = net.input_width();
    if inputs.nrows() != n0 {
        return Err(Error::Config(format!(
            "network expects {n0} inputs, batch has {} rows",
            inputs.nrows()
        )));
    }
    if let Some(a) = axes.iter().find(|a| a.input >= n0) {
        return Err(Error::Config(format!(
            "seed axis {} outside input width {n0}",
            a.input
        )));
    }
    let cols = inputs.ncols();
    let layout = ChannelLayout::new(cols, axes);
    let width = layout.width();

    let mut z = Array2::<f64>::zeros((n0, width));
    z.slice_mut(s![.., layout.value()]).assign(&inputs);
    for (k, a) in axes.iter().enumerate() {
        z.slice_mut(s![a.input, layout.d1(k)]).fill(1.0);
    }

    let n_layers = net.num_layers();
    let mut inputs_cache = Vec::with_capacity(n_layers);
    let mut pre_cache = Vec::with_capacity(n_layers - 1);
    for l in 0..n_layers {
        let w = net.weight(l);
        let mut a = Array2::<f64>::zeros((w.nrows(), width));
        general_mat_mul(1.0, &w, &z, 0.0, &mut a);
        {
            let b = net.bias(l);
            let mut val = a.slice_mut(s![.., layout.value()]);
            for (mut row, &bi) in val.axis_iter_mut(Axis(0)).zip(b.iter()) {
                row += bi;
            }
        }
        inputs_cache.push(z);
        if l + 1 == n_layers {
            return Ok(BatchTrace {
                layout,
                inputs: inputs_cache,
                pre: pre_cache,
                output: a,
            });
        }
        z = activate(&layout, &a);
        pre_cache.push(a);
    }
    unreachable!("network has at least one layer")
}

fn activate(layout: &ChannelLayout, a: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros(a.raw_dim());
    let cols = layout.cols;
    let width = layout.width();
    let (a_s, z_s) = (a.as_slice().unwrap(), z.as_slice_mut().unwrap());
    for i in 0..a.nrows() {
        let row = i * width;
        for j in 0..cols {
            let v = a_s[row + j].tanh();
            let sech2 = 1.0 - v * v;
            let dsech2 = -2.0 * v * sech2;
            z_s[row + j] = v;
            for k in 0..layout.axes.len() {
                let i1 = row + layout.d1[k] * cols + j;
                let a1 = a_s[i1];
                z_s[i1] = sech2 * a1;
                if let Some(b2) = layout.d2[k] {
                    let i2 = row + b2 * cols + j;
                    z_s[i2] = sech2 * a_s[i2] + dsech2 * a1 * a1;
                }
            }
        }
    }
    z
}

/// Reverse pass. `adjoint` holds `∂L/∂(output channel)` with the layout of
/// the trace; parameter gradients are added into `grad` (slot order).
pub fn backward(
    net: &FnnParams,
    trace: &BatchTrace,
    adjoint: Array2<f64>,
    grad: &mut [f64],
) -> Result<()> {
    let layout = &trace.layout;
    if adjoint.dim() != trace.output.dim() {
        return Err(Error::Config(format!(
            "adjoint shape {:?} does not match output {:?}",
            adjoint.dim(),
            trace.output.dim()
        )));
    }
    if grad.len() != net.param_count() {
        return Err(Error::Config(format!(
            "gradient buffer has {} slots, network {}",
            grad.len(),
            net.param_count()
        )));
    }
    let mut g = adjoint;
    for l in (0..net.num_layers()).rev() {
        let span = net.spans()[l];
        let z = &trace.inputs[l];
        {
            let gw_slice = &mut grad[span.weight_offset..span.bias_offset];
            let mut gw = ArrayViewMut2::from_shape((span.n_out, span.n_in), gw_slice).unwrap();
            general_mat_mul(1.0, &g, &z.t(), 1.0, &mut gw);
        }
        {
            let gb = &mut grad[span.bias_offset..span.end()];
            let val = g.slice(s![.., layout.value()]);
            for (acc, row) in gb.iter_mut().zip(val.axis_iter(Axis(0))) {
                *acc += row.sum();
            }
        }
        if l == 0 {
            break;
        }
        let w = net.weight(l);
        let mut zbar = Array2::<f64>::zeros((span.n_in, layout.width()));
        general_mat_mul(1.0, &w.t(), &g, 0.0, &mut zbar);
        g = deactivate(layout, &trace.pre[l - 1], z, zbar);
    }
    Ok(())
}

/// Adjoint of `activate`: maps output-channel adjoints to pre-activation
/// adjoints, in place.
fn deactivate(
    layout: &ChannelLayout,
    a: &Array2<f64>,
    z: &Array2<f64>,
    mut bar: Array2<f64>,
) -> Array2<f64> {
    let cols = layout.cols;
    let width = layout.width();
    let a_s = a.as_slice().unwrap();
    let z_s = z.as_slice().unwrap();
    let b_s = bar.as_slice_mut().unwrap();
    for i in 0..a.nrows() {
        let row = i * width;
        for j in 0..cols {
            let v = z_s[row + j];
            let sech2 = 1.0 - v * v;
            let dsech2 = -2.0 * v * sech2;
            let ddsech2 = -2.0 * sech2 * sech2 + 4.0 * v * v * sech2;
            let mut s_bar = 0.0;
            let mut ds_bar = 0.0;
            for k in 0..layout.axes.len() {
                let i1 = row + layout.d1[k] * cols + j;
                let a1 = a_s[i1];
                let z1_bar = b_s[i1];
                let mut a1_bar = sech2 * z1_bar;
                s_bar += z1_bar * a1;
                if let Some(b2) = layout.d2[k] {
                    let i2 = row + b2 * cols + j;
                    let z2_bar = b_s[i2];
                    a1_bar += 2.0 * dsech2 * a1 * z2_bar;
                    s_bar += z2_bar * a_s[i2];
                    ds_bar += z2_bar * a1 * a1;
                    b_s[i2] = sech2 * z2_bar;
                }
                b_s[i1] = a1_bar;
            }
            let z_bar = b_s[row + j];
            b_s[row + j] = sech2 * z_bar + dsech2 * s_bar + ddsech2 * ds_bar;
        }
    }
    bar
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Jet2, Scalar, Tape};
    use ndarray::array;

    fn tape_reference(
        net: &FnnParams,
        x: &[f64],
        axis: usize,
        weights: (f64, f64, f64),
    ) -> (Jet2, Vec<f64>) {
        let tape = Tape::new();
        let params = tape.parameters(net.as_slice());
        let input: Vec<Jet2<_>> = x
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
        let ps: Vec<Jet2<_>> = params.iter().map(|&p| Jet2::constant(p)).collect();
        let out = net.forward_with(&ps, &input).unwrap()[0];
        let objective = out.value.scale(weights.0) + out.d1.scale(weights.1) + out.d2.scale(weights.2);
        let g = tape.gradient(objective).unwrap();
        (
            Jet2::new(out.value.value(), out.d1.value(), out.d2.value()),
            g,
        )
    }

    #[test]
    fn matches_scalar_tape() {
        let net = FnnParams::init(&[3, 5, 4, 1], 9).unwrap();
        let pts = array![[0.2, -0.5], [0.7, 0.1], [-0.3, 0.9]];
        let axes = [
            AxisSeed { input: 1, second: true },
            AxisSeed { input: 0, second: false },
        ];
        let trace = forward(&net, pts.view(), &axes).unwrap();
        let lay = trace.layout().clone();
        let weights = (0.3, -1.1, 0.7);

        let mut adj = Array2::zeros(trace.output().raw_dim());
        // only column 1 contributes, axis 0 (input 1) channels
        adj[[0, lay.value().start + 1]] = weights.0;
        adj[[0, lay.d1(0).start + 1]] = weights.1;
        adj[[0, lay.d2(0).unwrap().start + 1]] = weights.2;
        let mut grad = vec![0.0; net.param_count()];
        backward(&net, &trace, adj, &mut grad).unwrap();

        let x = [pts[[0, 1]], pts[[1, 1]], pts[[2, 1]]];
        let (jet, g_ref) = tape_reference(&net, &x, 1, weights);
        assert!((trace.output_value()[[0, 1]] - jet.value).abs() < 1e-14);
        assert!((trace.output_d1(0)[[0, 1]] - jet.d1).abs() < 1e-14);
        assert!((trace.output_d2(0).unwrap()[[0, 1]] - jet.d2).abs() < 1e-13);
        for (a, b) in grad.iter().zip(&g_ref) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn first_order_only_axis() {
        let net = FnnParams::init(&[2, 4, 1], 2).unwrap();
        let pts = array![[0.4], [-0.2]];
        let axes = [AxisSeed { input: 0, second: false }];
        let trace = forward(&net, pts.view(), &axes).unwrap();
        assert!(trace.output_d2(0).is_none());
        let mut adj = Array2::zeros(trace.output().raw_dim());
        adj[[0, trace.layout().d1(0).start]] = 1.0;
        let mut grad = vec![0.0; net.param_count()];
        backward(&net, &trace, adj, &mut grad).unwrap();
        let (jet, g_ref) = tape_reference(&net, &[0.4, -0.2], 0, (0.0, 1.0, 0.0));
        assert!((trace.output_d1(0)[[0, 0]] - jet.d1).abs() < 1e-14);
        for (a, b) in grad.iter().zip(&g_ref) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_axis() {
        let net = FnnParams::zeros(&[2, 3, 1]).unwrap();
        let pts = array![[0.0], [0.0]];
        assert!(forward(&net, pts.view(), &[AxisSeed { input: 2, second: true }]).is_err());
    }
}
