//! Adam with exponential learning-rate decay over shuffled mini-batches.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::physics::{loss_and_grad, loss_components, LossWeights, WaveProblem};
use crate::sampling::{InputSample, TrainingSet};
use crate::table::{fmt_f64, Table};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatches: usize,
    pub lr0: f64,
    pub decay: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
    pub weights: LossWeights,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
}

fn default_eval_every() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_divergence() -> f64 {
    1e6
}

impl TrainConfig {
    pub fn new(epochs: usize, minibatches: usize, lr0: f64, decay: f64, seed: u64, weights: LossWeights) -> Self {
        TrainConfig {
            epochs,
            minibatches,
            lr0,
            decay,
            adam: AdamConfig::default(),
            seed,
            weights,
            eval_every: default_eval_every(),
            shuffle: true,
            divergence_threshold: default_divergence(),
        }
    }

    /// Names of every invalid field with the reason.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.minibatches == 0 {
            bad.push("minibatches: must be at least 1".to_string());
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            bad.push(format!("lr0: must be nonnegative, got {}", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            bad.push(format!("decay: must lie in (0, 1], got {}", self.decay));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) {
            bad.push(format!("adam.beta1: must lie in [0, 1), got {}", self.adam.beta1));
        }
        if !(0.0..1.0).contains(&self.adam.beta2) {
            bad.push(format!("adam.beta2: must lie in [0, 1), got {}", self.adam.beta2));
        }
        if !(self.adam.eps > 0.0) {
            bad.push(format!("adam.eps: must be positive, got {}", self.adam.eps));
        }
        if self.eval_every == 0 {
            bad.push("eval_every: must be at least 1".to_string());
        }
        if !(self.divergence_threshold > 0.0) {
            bad.push(format!(
                "divergence_threshold: must be positive, got {}",
                self.divergence_threshold
            ));
        }
        if let Err(e) = self.weights.validate() {
            bad.push(format!("weights: {e}"));
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.problems();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidFields(bad))
        }
    }
}

/// `lr0 · decay^epoch`, epochs counted from 0.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    config.lr0 * config.decay.powi(epoch as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "Adam sizes disagree: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient in slot {k}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Split `0..n` into `parts` contiguous chunks whose sizes differ by at
/// most one.
pub fn partition(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.min(n).max(1);
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub loss_r: f64,
    pub loss_bc: f64,
    pub loss_ic: f64,
    pub loss_total: f64,
    pub test_loss_total: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub status: TrainStatus,
}

impl TrainHistory {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "epoch",
            "lr",
            "loss_r",
            "loss_bc",
            "loss_ic",
            "loss_total",
            "test_loss_total",
            "seconds",
        ]);
        for r in &self.records {
            t.push_cells(&[
                r.epoch.to_string(),
                fmt_f64(r.lr),
                fmt_f64(r.loss_r),
                fmt_f64(r.loss_bc),
                fmt_f64(r.loss_ic),
                fmt_f64(r.loss_total),
                r.test_loss_total.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.seconds),
            ]);
        }
        t
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn check_sets(model: &OperatorModel, set: &TrainingSet, problem: &WaveProblem, role: &str) -> Result<()> {
    if set.sensors != *model.sensors() {
        return Err(Error::Config(format!("{role} set uses a different sensor grid than the model")));
    }
    if set.problem != *problem {
        return Err(Error::Config(format!("{role} set was built for a different problem")));
    }
    Ok(())
}

/// Full-set loss with the training weights.
pub fn set_loss(model: &OperatorModel, set: &TrainingSet, weights: &LossWeights) -> Result<f64> {
    let all: Vec<&InputSample> = set.samples.iter().collect();
    Ok(loss_components(model, &all, &set.problem)?.total(weights))
}

fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::Numerical(_) | Error::NonFiniteAdjoint { .. })
}

/// Train a copy of `model` and return it with the history.
pub fn train(
    model: &OperatorModel,
    train_set: &TrainingSet,
    test_set: Option<&TrainingSet>,
    problem: &WaveProblem,
    config: &TrainConfig,
) -> Result<(OperatorModel, TrainHistory)> {
    train_observed(model, train_set, test_set, problem, config, |_| {})
}

/// [`train`], calling `on_epoch` after every completed epoch.
pub fn train_observed(
    model: &OperatorModel,
    train_set: &TrainingSet,
    test_set: Option<&TrainingSet>,
    problem: &WaveProblem,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(OperatorModel, TrainHistory)> {
    config.validate()?;
    check_sets(model, train_set, problem, "training")?;
    if let Some(t) = test_set {
        check_sets(model, t, problem, "test")?;
    }
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut model = model.clone();
    let mut params = model.flat_params();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let chunks = partition(train_set.len(), config.minibatches);
    let start = Instant::now();
    let mut records = Vec::with_capacity(config.epochs);

    for e in 0..config.epochs {
        let epoch = e + 1;
        let lr = lr_at(e, config);
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sums = [0.0; 4];
        let mut diverged = None;
        for chunk in &chunks {
            let mut idx = order[chunk.clone()].to_vec();
            idx.sort_unstable();
            let batch: Vec<&InputSample> = idx.iter().map(|&i| &train_set.samples[i]).collect();
            let res = loss_and_grad(&model, &batch, problem, &config.weights).and_then(|b| {
                if !(b.total <= config.divergence_threshold) {
                    return Err(Error::Numerical(format!(
                        "mini-batch loss {} exceeds {}",
                        b.total, config.divergence_threshold
                    )));
                }
                adam_step(&mut params, &b.grad, &mut adam, lr, &config.adam)?;
                model.set_flat_params(&params)?;
                Ok(b)
            });
            match res {
                Ok(b) => {
                    let w = batch.len() as f64;
                    sums[0] += w * b.parts.l_r;
                    sums[1] += w * b.parts.l_bc;
                    sums[2] += w * b.parts.l_ic;
                    sums[3] += w * b.total;
                }
                Err(err) if is_numerical(&err) => {
                    diverged = Some(err.to_string());
                    break;
                }
                Err(err) => return Err(err),
            }
        }
        if let Some(reason) = diverged {
            return Ok((
                model,
                TrainHistory {
                    records,
                    status: TrainStatus::Diverged { epoch, reason },
                },
            ));
        }
        let n = train_set.len() as f64;
        let test_loss_total = match test_set {
            Some(t) if epoch % config.eval_every == 0 || epoch == config.epochs => {
                Some(set_loss(&model, t, &config.weights)?)
            }
            _ => None,
        };
        records.push(EpochRecord {
            epoch,
            lr,
            loss_r: sums[0] / n,
            loss_bc: sums[1] / n,
            loss_ic: sums[2] / n,
            loss_total: sums[3] / n,
            test_loss_total,
            seconds: start.elapsed().as_secs_f64(),
        });
        on_epoch(records.last().unwrap());
    }
    Ok((
        model,
        TrainHistory {
            records,
            status: TrainStatus::Completed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{GreenONet, SensorGrid};
    use crate::sampling::{build_training_set, CollocationCounts, GrfSpec};

    fn cfg(epochs: usize, minibatches: usize) -> TrainConfig {
        TrainConfig::new(epochs, minibatches, 1e-3, 0.9995, 5, LossWeights::new(0.1, 10.0, 10.0).unwrap())
    }

    #[test]
    fn learning_rate_schedule() {
        let c = cfg(1, 1);
        assert_eq!(lr_at(0, &c), 1e-3);
        let lr = lr_at(5000, &c);
        assert!((lr - 1e-3 * (5000.0 * 0.9995f64.ln()).exp()).abs() < 1e-15);
        assert!((lr - 8.2034e-5).abs() < 1e-8, "{lr}");
        let flat = TrainConfig { decay: 1.0, ..c.clone() };
        assert_eq!(lr_at(123, &flat), 1e-3);
        for e in 0..50 {
            assert!(lr_at(e + 1, &c) <= lr_at(e, &c));
        }
    }

    #[test]
    fn adam_first_step() {
        let cfg = AdamConfig::default();
        let mut p = [0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, 1e-3, &cfg).unwrap();
        assert!((p[0] + 9.99999e-4).abs() < 1e-9, "{}", p[0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_zero_gradient() {
        let cfg = AdamConfig::default();
        let mut p = [0.5, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 1e-2, &cfg).unwrap();
        assert_eq!(p, [0.5, -2.0]);
        assert_eq!(st.step, 1);
        assert!(adam_step(&mut p, &[f64::NAN, 0.0], &mut st, 1e-2, &cfg).is_err());
    }

    #[test]
    fn balanced_partition() {
        let parts = partition(100, 16);
        assert_eq!(parts.len(), 16);
        assert!(parts.iter().all(|r| r.len() == 6 || r.len() == 7));
        assert_eq!(parts.last().unwrap().end, 100);
        assert_eq!(partition(3, 8).len(), 3);
    }

    fn setup() -> (OperatorModel, TrainingSet, WaveProblem) {
        let problem = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        let sensors = SensorGrid::uniform(9, 1).unwrap();
        let counts = CollocationCounts { residual: 4, boundary: 4, initial: 4 };
        let set = build_training_set(&problem, &GrfSpec::new(0.5).unwrap(), &sensors, 6, counts, 1).unwrap();
        let model = GreenONet::init(sensors, 6, 2, 2).unwrap().into();
        (model, set, problem)
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (model, set, problem) = setup();
        let (out, hist) = train(&model, &set, None, &problem, &cfg(0, 2)).unwrap();
        assert_eq!(out, model);
        assert!(hist.records.is_empty());
        assert_eq!(hist.status, TrainStatus::Completed);
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let (model, set, problem) = setup();
        let c = TrainConfig { lr0: 0.0, ..cfg(3, 2) };
        let (out, hist) = train(&model, &set, Some(&set), &problem, &c).unwrap();
        assert_eq!(out, model);
        assert_eq!(hist.records.len(), 3);
        assert!(hist.records[2].test_loss_total.is_some());
    }

    #[test]
    fn reproducible_and_order_free_with_one_batch() {
        let (model, set, problem) = setup();
        let (a, ha) = train(&model, &set, None, &problem, &cfg(4, 3)).unwrap();
        let (b, hb) = train(&model, &set, None, &problem, &cfg(4, 3)).unwrap();
        assert_eq!(a, b);
        let strip = |h: &TrainHistory| h.records.iter().map(|r| r.loss_total.to_bits()).collect::<Vec<_>>();
        assert_eq!(strip(&ha), strip(&hb));
        let on = cfg(4, 1);
        let off = TrainConfig { shuffle: false, ..on.clone() };
        assert_eq!(train(&model, &set, None, &problem, &on).unwrap().0, train(&model, &set, None, &problem, &off).unwrap().0);
    }

    #[test]
    fn invalid_config_lists_fields() {
        let c = TrainConfig { minibatches: 0, decay: 1.5, ..cfg(1, 1) };
        match c.validate() {
            Err(Error::InvalidFields(f)) => {
                assert_eq!(f.len(), 2);
                assert!(f[0].starts_with("minibatches") && f[1].starts_with("decay"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divergence_stops_early() {
        let (model, set, problem) = setup();
        let c = TrainConfig { divergence_threshold: 1e-12, ..cfg(5, 1) };
        let (_, hist) = train(&model, &set, None, &problem, &c).unwrap();
        assert!(matches!(hist.status, TrainStatus::Diverged { epoch: 1, .. }));
    }
}
