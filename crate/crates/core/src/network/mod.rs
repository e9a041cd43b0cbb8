//! Fully connected tanh networks.
//!
//! Parameters live in one flat buffer, layer by layer, weights (row-major,
//! `N_i × N_{i-1}`) before biases. The same order is used by the
//! checkpoint format, by gradients and by the optimizer, so a slot index
//! means the same thing everywhere.

mod checkpoint;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Offsets of one affine layer inside the flat parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpan {
    pub n_in: usize,
    pub n_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSpan {
    pub fn end(&self) -> usize {
        self.bias_offset + self.n_out
    }
}

/// Weights and biases of a feedforward network with tanh hidden layers and
/// an affine output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FnnParams {
    layer_sizes: Vec<usize>,
    spans: Vec<LayerSpan>,
    data: Vec<f64>,
}

fn spans_for(sizes: &[usize]) -> Vec<LayerSpan> {
    let mut offset = 0;
    sizes
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                n_in: w[0],
                n_out: w[1],
                weight_offset: offset,
                bias_offset: offset + w[0] * w[1],
            };
            offset = span.end();
            span
        })
        .collect()
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::Config("empty layer list".into()));
    }
    if sizes.len() < 3 {
        return Err(Error::Config(format!(
            "network needs an input, at least one hidden layer and an output, got sizes {sizes:?}"
        )));
    }
    if let Some(pos) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("layer {pos} has zero neurons")));
    }
    Ok(())
}

/// Parameter count of a network with the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `[n_in, width × depth, n_out]`.
pub fn layer_sizes(n_in: usize, width: usize, depth: usize, n_out: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(depth + 2);
    sizes.push(n_in);
    sizes.extend(std::iter::repeat_n(width, depth));
    sizes.push(n_out);
    sizes
}

impl FnnParams {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(FnnParams {
            layer_sizes: layer_sizes.to_vec(),
            spans: spans_for(layer_sizes),
            data: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for span in params.spans.clone() {
            let limit = (6.0 / (span.n_in + span.n_out) as f64).sqrt();
            for w in &mut params.data[span.weight_offset..span.bias_offset] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    /// Build from a flat buffer in slot order.
    pub fn from_flat(layer_sizes: &[usize], data: Vec<f64>) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "expected {expected} parameters for sizes {layer_sizes:?}, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("parameter {i} is not finite")));
        }
        Ok(FnnParams {
            layer_sizes: layer_sizes.to_vec(),
            spans: spans_for(layer_sizes),
            data,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn spans(&self) -> &[LayerSpan] {
        &self.spans
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers (hidden layers + output).
    pub fn num_layers(&self) -> usize {
        self.spans.len()
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let s = self.spans[layer];
        ArrayView2::from_shape((s.n_out, s.n_in), &self.data[s.weight_offset..s.bias_offset])
            .expect("span matches buffer")
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let s = self.spans[layer];
        ArrayViewMut2::from_shape(
            (s.n_out, s.n_in),
            &mut self.data[s.weight_offset..s.bias_offset],
        )
        .expect("span matches buffer")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let s = self.spans[layer];
        ArrayView1::from(&self.data[s.bias_offset..s.end()])
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.spans[layer];
        &mut self.data[s.bias_offset..s.end()]
    }

    /// Fail with a message naming the expected widths.
    pub fn expect_widths(&self, input: usize, output: usize, role: &str) -> Result<()> {
        if self.input_width() != input {
            return Err(Error::Validation(format!(
                "{role} network must have input width {input}, found {}",
                self.input_width()
            )));
        }
        if self.output_width() != output {
            return Err(Error::Validation(format!(
                "{role} network must have output width {output}, found {}",
                self.output_width()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Config(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        Ok(forward_generic(self, &self.data, input))
    }

    /// Evaluate with arbitrary scalars: parameters from `params` (slot
    /// order), activations from `input`.
    pub fn forward_with<S: Scalar>(&self, params: &[S], input: &[S]) -> Result<Vec<S>> {
        if input.len() != self.input_width() {
            return Err(Error::Config(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        if params.len() != self.param_count() {
            return Err(Error::Config(format!(
                "network has {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(forward_generic(self, params, input))
    }

    /// `Π_i ‖W_i‖∞`, an upper bound on the ∞-norm Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        (0..self.num_layers())
            .map(|l| {
                self.weight(l)
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|w| w.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .product()
    }
}

/// The one evaluation loop every scalar type goes through.
pub(crate) fn forward_generic<S: Scalar, P: Copy + Into<S>>(
    net: &FnnParams,
    params: &[P],
    input: &[S],
) -> Vec<S> {
    let mut z: Vec<S> = input.to_vec();
    let last = net.num_layers() - 1;
    for (l, span) in net.spans.iter().enumerate() {
        let mut next = Vec::with_capacity(span.n_out);
        for r in 0..span.n_out {
            let row = span.weight_offset + r * span.n_in;
            let mut acc: S = params[row].into() * z[0];
            for c in 1..span.n_in {
                acc = acc + params[row + c].into() * z[c];
            }
            acc = acc + params[span.bias_offset + r].into();
            next.push(if l == last { acc } else { acc.tanh() });
        }
        z = next;
    }
    z
}
