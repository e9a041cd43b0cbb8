//! Point-by-point loss evaluation through scalar jets.
//!
//! Much slower than the batched route but built from the generic forward
//! loop only, so it serves as an independent check of values and, on the
//! scalar tape, of gradients.

use super::loss::check_batch;
use super::{wave_speed_sq, LossBreakdown, LossWeights, WaveProblem};
use crate::autodiff::{Jet2, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::sampling::InputSample;

/// A loss evaluated on a fresh tape, with its gradient.
#[derive(Clone, Debug)]
pub struct TapeLoss {
    pub parts: LossBreakdown,
    pub total: f64,
    pub grad: Vec<f64>,
}

/// Summed squared terms of the three loss parts.
struct Terms<S> {
    sum_r: S,
    sum_bc: S,
    sum_ic: S,
}

fn accumulate<S, P>(
    model: &OperatorModel,
    params: &[P],
    batch: &[&InputSample],
    problem: &WaveProblem,
    lift: impl Fn(f64) -> S,
) -> Result<Terms<S>>
where
    S: Scalar,
    P: Copy + Into<Jet2<S>>,
{
    let dim = problem.dim;
    let mut sum_r = lift(0.0);
    let mut sum_bc = lift(0.0);
    let mut sum_ic = lift(0.0);
    let eval = |s: &[f64], p: &[f64], seed: Option<usize>| -> Result<Jet2<S>> {
        let q: Vec<Jet2<S>> = p
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if Some(k) == seed {
                    Jet2::variable(lift(v))
                } else {
                    Jet2::constant(lift(v))
                }
            })
            .collect();
        model.apply_with(params, s, &q)
    };
    for (i, sample) in batch.iter().enumerate() {
        let s = sample.sensor_values.as_slice();
        let bad = |term: &str| Error::Numerical(format!("sample {i}: non-finite {term} loss"));
        for p in sample.res_points.columns() {
            let p = p.to_vec();
            let u_tt = eval(s, &p, Some(dim))?.d2;
            let mut lap = eval(s, &p, Some(0))?.d2;
            for d in 1..dim {
                lap = lap + eval(s, &p, Some(d))?.d2;
            }
            let r = u_tt - lap.scale(wave_speed_sq(problem, &p[..dim]));
            if !r.value().is_finite() {
                return Err(bad("residual"));
            }
            sum_r = sum_r + r * r;
        }
        for p in sample.bc_points.columns() {
            let u = eval(s, &p.to_vec(), None)?.value;
            if !u.value().is_finite() {
                return Err(bad("boundary"));
            }
            sum_bc = sum_bc + u * u;
        }
        for (p, &u0) in sample.ic_points.columns().into_iter().zip(&sample.ic_values) {
            let j = eval(s, &p.to_vec(), Some(dim))?;
            let e = j.value - lift(u0);
            if !(e.value().is_finite() && j.d1.value().is_finite()) {
                return Err(bad("initial-condition"));
            }
            sum_ic = sum_ic + e * e + j.d1 * j.d1;
        }
    }
    Ok(Terms {
        sum_r,
        sum_bc,
        sum_ic,
    })
}

/// Unweighted loss terms, evaluated one point at a time in plain `f64`.
pub fn loss_pointwise(
    model: &OperatorModel,
    batch: &[&InputSample],
    problem: &WaveProblem,
) -> Result<LossBreakdown> {
    let (n_r, n_bc, n_ic) = check_batch(model, batch, problem)?;
    let params = model.flat_params();
    let t = accumulate(model, &params, batch, problem, |v| v)?;
    Ok(LossBreakdown {
        l_r: t.sum_r / n_r as f64,
        l_bc: t.sum_bc / n_bc as f64,
        l_ic: t.sum_ic / n_ic as f64,
        n_r,
        n_bc,
        n_ic,
    })
}

/// The weighted loss recorded on a scalar tape, with its gradient.
pub fn loss_on_tape(
    model: &OperatorModel,
    batch: &[&InputSample],
    problem: &WaveProblem,
    weights: &LossWeights,
) -> Result<TapeLoss> {
    let (n_r, n_bc, n_ic) = check_batch(model, batch, problem)?;
    let tape = Tape::new();
    let params: Vec<Var<'_>> = tape.parameters(&model.flat_params());
    let t = accumulate(model, &params, batch, problem, |v| tape.constant(v))?;
    let l_r = t.sum_r.scale(1.0 / n_r as f64);
    let l_bc = t.sum_bc.scale(1.0 / n_bc as f64);
    let l_ic = t.sum_ic.scale(1.0 / n_ic as f64);
    let total = l_r.scale(weights.w_r) + l_bc.scale(weights.w_bc) + l_ic.scale(weights.w_ic);
    let grad = tape.gradient(total)?;
    Ok(TapeLoss {
        parts: LossBreakdown {
            l_r: l_r.value(),
            l_bc: l_bc.value(),
            l_ic: l_ic.value(),
            n_r,
            n_bc,
            n_ic,
        },
        total: total.value(),
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DeepONet, GreenONet, SensorGrid};
    use crate::physics::loss_and_grad;
    use ndarray::array;

    fn sample() -> InputSample {
        InputSample {
            sensor_values: vec![0.0, 0.5, -0.3, 0.0],
            ic_points: array![[-0.2, 0.6], [0.0, 0.0]],
            ic_values: vec![0.4, -0.1],
            bc_points: array![[-1.0, 1.0], [0.2, 1.3]],
            res_points: array![[0.15, -0.55], [0.4, 1.2]],
        }
    }

    #[test]
    fn tape_gradient_matches_batched_and_finite_differences() {
        let sensors = SensorGrid::uniform(4, 1).unwrap();
        let p = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        let w = LossWeights::new(0.1, 10.0, 10.0).unwrap();
        let s = sample();
        let batch = [&s];
        for model in [
            OperatorModel::from(GreenONet::init(sensors.clone(), 5, 2, 8).unwrap()),
            OperatorModel::from(DeepONet::init(sensors.clone(), 5, 2, 3, 8).unwrap()),
        ] {
            let tape = loss_on_tape(&model, &batch, &p, &w).unwrap();
            let fast = loss_and_grad(&model, &batch, &p, &w).unwrap();
            assert!((tape.total - fast.total).abs() <= 1e-12 * (1.0 + fast.total));
            let base = model.flat_params();
            let h = 1e-5;
            for k in 0..base.len() {
                let tol = 1e-9 * (1.0 + tape.grad[k].abs());
                assert!((tape.grad[k] - fast.grad[k]).abs() <= tol, "slot {k}");
                let f = |v: f64| {
                    let mut m = model.clone();
                    let mut q = base.clone();
                    q[k] = v;
                    m.set_flat_params(&q).unwrap();
                    loss_pointwise(&m, &batch, &p).unwrap().total(&w)
                };
                let fd = (f(base[k] + h) - f(base[k] - h)) / (2.0 * h);
                let err = (fd - tape.grad[k]).abs() / (fd.abs().max(tape.grad[k].abs()).max(1e-3));
                assert!(err < 1e-5, "slot {k}: fd {fd} tape {}", tape.grad[k]);
            }
        }
    }
}
