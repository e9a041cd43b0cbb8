//! Batched loss and gradient on the layer-level jet engine.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use super::{wave_speed_sq, LossBreakdown, LossWeights, WaveProblem};
use crate::autodiff::batch::{self, AxisSeed, BatchTrace};
use crate::error::{Error, Result};
use crate::operator::{DeepONet, GreenONet, OperatorModel};
use crate::sampling::InputSample;

/// Loss terms, weighted total, and its gradient in flat parameter order.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub parts: LossBreakdown,
    pub total: f64,
    pub grad: Vec<f64>,
}

/// Unweighted loss terms over `batch`.
pub fn loss_components(
    model: &OperatorModel,
    batch: &[&InputSample],
    problem: &WaveProblem,
) -> Result<LossBreakdown> {
    let unit = LossWeights {
        w_r: 1.0,
        w_bc: 1.0,
        w_ic: 1.0,
    };
    Ok(evaluate(model, batch, problem, &unit, false)?.parts)
}

/// Weighted loss over `batch` with its parameter gradient.
pub fn loss_and_grad(
    model: &OperatorModel,
    batch: &[&InputSample],
    problem: &WaveProblem,
    weights: &LossWeights,
) -> Result<BatchLoss> {
    evaluate(model, batch, problem, weights, true)
}

#[derive(Clone, Copy)]
struct Scales {
    r: f64,
    bc: f64,
    ic: f64,
}

struct SampleResult {
    sum_r: f64,
    sum_bc: f64,
    sum_ic: f64,
    grad: Option<Vec<f64>>,
}

pub(crate) fn check_batch(
    model: &OperatorModel,
    batch: &[&InputSample],
    problem: &WaveProblem,
) -> Result<(usize, usize, usize)> {
    if batch.is_empty() {
        return Err(Error::Config("loss needs a nonempty batch".into()));
    }
    if model.dim() != problem.dim {
        return Err(Error::Config(format!(
            "model dimension {} does not match problem dimension {}",
            model.dim(),
            problem.dim
        )));
    }
    let rows = problem.dim + 1;
    let (mut n_r, mut n_bc, mut n_ic) = (0, 0, 0);
    for (i, s) in batch.iter().enumerate() {
        if s.sensor_values.len() != model.sensors().len() {
            return Err(Error::Config(format!(
                "sample {i} has {} sensor values, model expects {}",
                s.sensor_values.len(),
                model.sensors().len()
            )));
        }
        for (name, pts) in [("residual", &s.res_points), ("boundary", &s.bc_points), ("initial", &s.ic_points)] {
            if pts.ncols() == 0 {
                return Err(Error::Config(format!("sample {i} has no {name} points")));
            }
            if pts.nrows() != rows {
                return Err(Error::Config(format!(
                    "sample {i} {name} points have {} rows, expected {rows}",
                    pts.nrows()
                )));
            }
        }
        if s.ic_values.len() != s.ic_points.ncols() {
            return Err(Error::Config(format!(
                "sample {i} has {} initial values for {} points",
                s.ic_values.len(),
                s.ic_points.ncols()
            )));
        }
        n_r += s.res_points.ncols();
        n_bc += s.bc_points.ncols();
        n_ic += s.ic_points.ncols();
    }
    Ok((n_r, n_bc, n_ic))
}

fn evaluate(
    model: &OperatorModel,
    batch: &[&InputSample],
    problem: &WaveProblem,
    weights: &LossWeights,
    with_grad: bool,
) -> Result<BatchLoss> {
    let (n_r, n_bc, n_ic) = check_batch(model, batch, problem)?;
    let scales = Scales {
        r: weights.w_r / n_r as f64,
        bc: weights.w_bc / n_bc as f64,
        ic: weights.w_ic / n_ic as f64,
    };
    let results: Vec<Result<SampleResult>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, s)| sample_loss(model, s, problem, scales, with_grad).map_err(|e| tag(e, i)))
        .collect();

    let mut sums = (0.0, 0.0, 0.0);
    let mut grad = if with_grad {
        vec![0.0; model.param_count()]
    } else {
        Vec::new()
    };
    for r in results {
        let r = r?;
        sums.0 += r.sum_r;
        sums.1 += r.sum_bc;
        sums.2 += r.sum_ic;
        if let Some(g) = r.grad {
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
    }
    let parts = LossBreakdown {
        l_r: sums.0 / n_r as f64,
        l_bc: sums.1 / n_bc as f64,
        l_ic: sums.2 / n_ic as f64,
        n_r,
        n_bc,
        n_ic,
    };
    Ok(BatchLoss {
        total: parts.total(weights),
        parts,
        grad,
    })
}

fn tag(e: Error, sample: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("sample {sample}: {msg}")),
        other => other,
    }
}

fn finite(v: f64, term: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("non-finite {term} loss")))
    }
}

/// The merge from network outputs to `u`, shared by both architectures.
enum Merge<'a> {
    Deep {
        net: &'a DeepONet,
        b: Vec<f64>,
        b_bar: Vec<f64>,
    },
    Green {
        net: &'a GreenONet,
        s: &'a [f64],
    },
}

impl Merge<'_> {
    fn forward(&self, pts: &Array2<f64>, axes: &[AxisSeed]) -> Result<BatchTrace> {
        match self {
            Merge::Deep { net, .. } => batch::forward(&net.trunk, pts.view(), axes),
            Merge::Green { net, s } => {
                let m = s.len();
                let dim = net.sensors.dim();
                let p = pts.ncols();
                let mut input = Array2::<f64>::zeros((2 * dim + 1, p * m));
                for j in 0..p {
                    for i in 0..m {
                        let col = j * m + i;
                        for r in 0..=dim {
                            input[[r, col]] = pts[[r, j]];
                        }
                        for d in 0..dim {
                            input[[dim + 1 + d, col]] = net.sensors.points()[[d, i]];
                        }
                    }
                }
                batch::forward(&net.kernel, input.view(), axes)
            }
        }
    }

    /// `u` channel over points from one channel block of the network output.
    fn contract(&self, out: ArrayView2<'_, f64>) -> Vec<f64> {
        match self {
            Merge::Deep { b, .. } => (0..out.ncols())
                .map(|j| b.iter().enumerate().map(|(k, bk)| bk * out[[k, j]]).sum())
                .collect(),
            Merge::Green { s, .. } => {
                let m = s.len();
                let inv = 1.0 / m as f64;
                (0..out.ncols() / m)
                    .map(|j| {
                        let row = out.row(0);
                        let mut acc = 0.0;
                        for (i, si) in s.iter().enumerate() {
                            acc += row[j * m + i] * si;
                        }
                        acc * inv
                    })
                    .collect()
            }
        }
    }

    /// Scatter point adjoints of one channel into the network-output
    /// adjoint.
    fn expand(
        &mut self,
        out: ArrayView2<'_, f64>,
        range: Range<usize>,
        u_bar: &[f64],
        adj: &mut Array2<f64>,
    ) {
        match self {
            Merge::Deep { b, b_bar, .. } => {
                let mut a = adj.slice_mut(s![.., range.clone()]);
                let o = out.slice(s![.., range]);
                for (j, &ub) in u_bar.iter().enumerate() {
                    for k in 0..b.len() {
                        a[[k, j]] += b[k] * ub;
                        b_bar[k] += o[[k, j]] * ub;
                    }
                }
            }
            Merge::Green { s, .. } => {
                let m = s.len();
                let inv = 1.0 / m as f64;
                let mut a = adj.slice_mut(s![0, range]);
                for (j, &ub) in u_bar.iter().enumerate() {
                    for (i, si) in s.iter().enumerate() {
                        a[j * m + i] += ub * si * inv;
                    }
                }
            }
        }
    }

    fn backward(&self, trace: &BatchTrace, adj: Array2<f64>, grad: &mut [f64]) -> Result<()> {
        match self {
            Merge::Deep { net, .. } => {
                let nb = net.branch.param_count();
                batch::backward(&net.trunk, trace, adj, &mut grad[nb..])
            }
            Merge::Green { net, .. } => batch::backward(&net.kernel, trace, adj, grad),
        }
    }
}

fn sample_loss(
    model: &OperatorModel,
    sample: &InputSample,
    problem: &WaveProblem,
    scales: Scales,
    with_grad: bool,
) -> Result<SampleResult> {
    let dim = problem.dim;
    let s = sample.sensor_values.as_slice();
    let (mut merge, branch_trace) = match model {
        OperatorModel::DeepONet(net) => {
            let input = Array2::from_shape_vec((s.len(), 1), s.to_vec()).unwrap();
            let trace = batch::forward(&net.branch, input.view(), &[])?;
            let b = trace.output_value().column(0).to_vec();
            let q = b.len();
            (
                Merge::Deep {
                    net,
                    b,
                    b_bar: vec![0.0; q],
                },
                Some(trace),
            )
        }
        OperatorModel::GreenONet(net) => (Merge::Green { net, s }, None),
    };
    let mut grad = with_grad.then(|| vec![0.0; model.param_count()]);

    // residual: every spatial axis and time, second order
    let axes: Vec<AxisSeed> = (0..=dim).map(|input| AxisSeed { input, second: true }).collect();
    let trace = merge.forward(&sample.res_points, &axes)?;
    let lay = trace.layout().clone();
    let out = trace.output().view();
    let u_tt = merge.contract(out.slice(s![.., lay.d2(dim).unwrap()]));
    let mut lap = vec![0.0; u_tt.len()];
    for d in 0..dim {
        for (l, v) in lap.iter_mut().zip(merge.contract(out.slice(s![.., lay.d2(d).unwrap()]))) {
            *l += v;
        }
    }
    let c2: Vec<f64> = sample
        .res_points
        .columns()
        .into_iter()
        .map(|p| wave_speed_sq(problem, &p.to_vec()[..dim]))
        .collect();
    let r: Vec<f64> = (0..u_tt.len()).map(|j| u_tt[j] - c2[j] * lap[j]).collect();
    let sum_r = finite(r.iter().map(|v| v * v).sum(), "residual")?;
    if let Some(g) = grad.as_mut() {
        let mut adj = Array2::zeros(trace.output().raw_dim());
        let r_bar: Vec<f64> = r.iter().map(|v| 2.0 * scales.r * v).collect();
        merge.expand(out, lay.d2(dim).unwrap(), &r_bar, &mut adj);
        let lap_bar: Vec<f64> = r_bar.iter().zip(&c2).map(|(rb, c)| -rb * c).collect();
        for d in 0..dim {
            merge.expand(out, lay.d2(d).unwrap(), &lap_bar, &mut adj);
        }
        merge.backward(&trace, adj, g)?;
    }
    drop(trace);

    // boundary: values only
    let trace = merge.forward(&sample.bc_points, &[])?;
    let lay = trace.layout().clone();
    let out = trace.output().view();
    let u = merge.contract(out.slice(s![.., lay.value()]));
    let sum_bc = finite(u.iter().map(|v| v * v).sum(), "boundary")?;
    if let Some(g) = grad.as_mut() {
        let mut adj = Array2::zeros(trace.output().raw_dim());
        let u_bar: Vec<f64> = u.iter().map(|v| 2.0 * scales.bc * v).collect();
        merge.expand(out, lay.value(), &u_bar, &mut adj);
        merge.backward(&trace, adj, g)?;
    }
    drop(trace);

    // initial: value and first time derivative
    let trace = merge.forward(&sample.ic_points, &[AxisSeed { input: dim, second: false }])?;
    let lay = trace.layout().clone();
    let out = trace.output().view();
    let u = merge.contract(out.slice(s![.., lay.value()]));
    let u_t = merge.contract(out.slice(s![.., lay.d1(0)]));
    let err: Vec<f64> = u.iter().zip(&sample.ic_values).map(|(a, b)| a - b).collect();
    let sum_ic = finite(
        err.iter().zip(&u_t).map(|(e, v)| e * e + v * v).sum(),
        "initial-condition",
    )?;
    if let Some(g) = grad.as_mut() {
        let mut adj = Array2::zeros(trace.output().raw_dim());
        let e_bar: Vec<f64> = err.iter().map(|v| 2.0 * scales.ic * v).collect();
        let v_bar: Vec<f64> = u_t.iter().map(|v| 2.0 * scales.ic * v).collect();
        merge.expand(out, lay.value(), &e_bar, &mut adj);
        merge.expand(out, lay.d1(0), &v_bar, &mut adj);
        merge.backward(&trace, adj, g)?;
    }
    drop(trace);

    if let (Some(g), Merge::Deep { net, b_bar, .. }, Some(bt)) = (grad.as_mut(), &merge, &branch_trace) {
        let adj = Array2::from_shape_vec((b_bar.len(), 1), b_bar.clone()).unwrap();
        let nb = net.branch.param_count();
        batch::backward(&net.branch, bt, adj, &mut g[..nb])?;
    }
    if let Some(g) = &grad {
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient in slot {k}")));
        }
    }
    Ok(SampleResult {
        sum_r,
        sum_bc,
        sum_ic,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::SensorGrid;
    use crate::physics::loss_pointwise;
    use ndarray::array;

    fn zero_ic_sample(m: usize, ic: Vec<f64>, ic_x: Vec<f64>) -> InputSample {
        let p = ic.len();
        let mut ic_points = Array2::zeros((2, p));
        for (j, x) in ic_x.iter().enumerate() {
            ic_points[[0, j]] = *x;
        }
        InputSample {
            sensor_values: vec![0.0; m],
            ic_points,
            ic_values: ic,
            bc_points: array![[-1.0, 1.0], [0.5, 1.5]],
            res_points: array![[0.1, -0.4], [0.3, 1.1]],
        }
    }

    fn tiny_models(m: usize) -> Vec<OperatorModel> {
        let sensors = SensorGrid::uniform(m, 1).unwrap();
        vec![
            GreenONet::init(sensors.clone(), 6, 2, 3).unwrap().into(),
            DeepONet::init(sensors, 6, 2, 4, 3).unwrap().into(),
        ]
    }

    #[test]
    fn zero_model_initial_loss() {
        let sample = zero_ic_sample(4, vec![1.0, -1.0], vec![-0.5, 0.5]);
        let p = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        let sensors = SensorGrid::uniform(4, 1).unwrap();
        let mut g = GreenONet::init(sensors, 5, 2, 0).unwrap();
        g.kernel.as_mut_slice().fill(0.0);
        let model = OperatorModel::from(g);
        let parts = loss_components(&model, &[&sample], &p).unwrap();
        assert_eq!((parts.l_r, parts.l_bc, parts.l_ic), (0.0, 0.0, 1.0));
        assert_eq!((parts.n_r, parts.n_bc, parts.n_ic), (2, 2, 2));
    }

    #[test]
    fn zero_everything_is_zero() {
        let sample = zero_ic_sample(4, vec![0.0, 0.0], vec![-0.5, 0.5]);
        let p = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        for model in tiny_models(4) {
            let l = loss_components(&model, &[&sample], &p).unwrap();
            // the GreenONet output is linear in s and s = 0
            if model.architecture().name() == "greenonet" {
                assert_eq!(l.l_r + l.l_bc + l.l_ic, 0.0);
            }
        }
    }

    #[test]
    fn doubling_weights_doubles_total_only() {
        let sample = zero_ic_sample(4, vec![0.3, -0.2], vec![-0.5, 0.5]);
        let mut s = sample.clone();
        s.sensor_values = vec![0.0, 0.4, -0.1, 0.0];
        let p = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        let w = LossWeights::new(0.1, 10.0, 10.0).unwrap();
        let w2 = LossWeights::new(0.2, 20.0, 20.0).unwrap();
        for model in tiny_models(4) {
            let a = loss_and_grad(&model, &[&s], &p, &w).unwrap();
            let b = loss_and_grad(&model, &[&s], &p, &w2).unwrap();
            assert_eq!(a.parts, b.parts);
            assert!((b.total - 2.0 * a.total).abs() <= 1e-15 * b.total);
        }
    }

    #[test]
    fn agrees_with_pointwise_route() {
        let mut s = zero_ic_sample(5, vec![0.3, -0.2], vec![-0.5, 0.5]);
        s.sensor_values = vec![0.0, 0.4, -0.1, 0.7, 0.0];
        let het = WaveProblem::new(1, 2.0, crate::physics::SpeedField::Heaviside { x0: 0.0 }).unwrap();
        let w = LossWeights::new(0.1, 10.0, 10.0).unwrap();
        for model in tiny_models(5) {
            let batched = loss_and_grad(&model, &[&s, &s], &het, &w).unwrap();
            let point = loss_pointwise(&model, &[&s, &s], &het).unwrap();
            for (a, b) in [
                (batched.parts.l_r, point.l_r),
                (batched.parts.l_bc, point.l_bc),
                (batched.parts.l_ic, point.l_ic),
            ] {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let p = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        let model = &tiny_models(4)[0];
        assert!(matches!(loss_components(model, &[], &p), Err(Error::Config(_))));
        let mut s = zero_ic_sample(4, vec![0.0], vec![0.0]);
        s.bc_points = Array2::zeros((2, 0));
        assert!(matches!(loss_components(model, &[&s], &p), Err(Error::Config(_))));
    }
}
