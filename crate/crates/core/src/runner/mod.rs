//! Experiment driver behind the command-line tool.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    green_slice, load_model, save_model, Architecture, DeepONet, GreenONet, OperatorModel,
    SensorGrid,
};
use crate::physics::{SpeedField, WaveProblem};
use crate::reference::{
    eval_grid, max_pointwise_error, reference_solution, reference_table, InitialCondition,
};
use crate::sampling::{build_training_set, CollocationCounts, GrfSpec, TrainingSet};
use crate::table::Table;
use crate::training::{train_observed, EpochRecord, TrainStatus};

pub use config::{
    preset, ArchitectureChoice, DataConfig, ExperimentConfig, NetworkConfig, Scale,
    TrainingConfig, PRESETS,
};

/// Evaluation grid resolution per axis.
pub fn default_grid_points(dim: usize) -> usize {
    if dim == 1 {
        401
    } else {
        101
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub architecture: Architecture,
    pub param_count: usize,
    pub status: String,
    pub epochs_run: usize,
    pub first_loss_total: Option<f64>,
    pub final_loss_r: Option<f64>,
    pub final_loss_bc: Option<f64>,
    pub final_loss_ic: Option<f64>,
    pub final_loss_total: Option<f64>,
    pub final_test_loss_total: Option<f64>,
    pub train_set_sha256: String,
    pub history: String,
    pub checkpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub seed: u64,
    pub train_set_sha256: String,
    pub test_set_sha256: Option<String>,
    pub runs: Vec<RunSummary>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The training and test sets an experiment uses.
pub fn build_sets(cfg: &ExperimentConfig) -> Result<(TrainingSet, Option<TrainingSet>)> {
    let sensors = SensorGrid::uniform(cfg.data.sensors, cfg.problem.dim)?;
    let grf = GrfSpec::new(cfg.data.length_scale)?;
    let counts = CollocationCounts {
        residual: cfg.data.residual_points,
        boundary: cfg.data.boundary_points,
        initial: cfg.data.initial_points,
    };
    let train = build_training_set(&cfg.problem, &grf, &sensors, cfg.data.samples, counts, cfg.train_set_seed())?;
    let test = if cfg.data.test_samples > 0 {
        Some(build_training_set(
            &cfg.problem,
            &grf,
            &sensors,
            cfg.data.test_samples,
            counts,
            cfg.test_set_seed(),
        )?)
    } else {
        None
    };
    Ok((train, test))
}

/// A freshly initialized model of the given architecture.
pub fn initial_model(cfg: &ExperimentConfig, arch: Architecture) -> Result<OperatorModel> {
    let sensors = SensorGrid::uniform(cfg.data.sensors, cfg.problem.dim)?;
    let (w, d) = (cfg.network.width, cfg.network.depth);
    Ok(match arch {
        Architecture::DeepONet => DeepONet::init(sensors, w, d, w, cfg.init_seed())?.into(),
        Architecture::GreenONet => GreenONet::init(sensors, w, d, cfg.init_seed())?.into(),
    })
}

/// Build the sets, train every requested architecture on them and write
/// all artifacts under `out`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: impl AsRef<Path>,
    mut progress: impl FnMut(Architecture, &EpochRecord),
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;

    let (train_set, test_set) = build_sets(cfg)?;
    let train_hash = train_set.fingerprint();
    let test_hash = test_set.as_ref().map(TrainingSet::fingerprint);

    let archs: &[Architecture] = match cfg.architecture {
        ArchitectureChoice::DeepONet => &[Architecture::DeepONet],
        ArchitectureChoice::GreenONet => &[Architecture::GreenONet],
        ArchitectureChoice::Both => &[Architecture::DeepONet, Architecture::GreenONet],
    };
    let tcfg = cfg.train_config();
    let mut runs = Vec::new();
    for &arch in archs {
        let model = initial_model(cfg, arch)?;
        let (trained, history) = train_observed(
            &model,
            &train_set,
            test_set.as_ref(),
            &cfg.problem,
            &tcfg,
            |r| progress(arch, r),
        )?;
        let history_name = format!("{}_history.csv", arch.name());
        history.to_table().write(out.join(&history_name))?;
        let manifest = save_model(&trained, Some(&cfg.problem), out, arch.name())?;
        let last = history.last();
        runs.push(RunSummary {
            architecture: arch,
            param_count: trained.param_count(),
            status: match &history.status {
                TrainStatus::Completed => "completed".into(),
                TrainStatus::Diverged { epoch, reason } => format!("diverged at epoch {epoch}: {reason}"),
            },
            epochs_run: history.records.len(),
            first_loss_total: history.records.first().map(|r| r.loss_total),
            final_loss_r: last.map(|r| r.loss_r),
            final_loss_bc: last.map(|r| r.loss_bc),
            final_loss_ic: last.map(|r| r.loss_ic),
            final_loss_total: last.map(|r| r.loss_total),
            final_test_loss_total: history.records.iter().rev().find_map(|r| r.test_loss_total),
            train_set_sha256: train_set.fingerprint(),
            history: history_name,
            checkpoint: manifest.file_name().unwrap().to_string_lossy().into_owned(),
        });
    }
    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        train_set_sha256: train_hash,
        test_set_sha256: test_hash,
        runs,
    };
    write_text(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub points: ndarray::Array2<f64>,
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
    pub max_error: f64,
}

impl Evaluation {
    /// `x[,y],u_pred,u_ref,abs_err`.
    pub fn to_table(&self) -> Table {
        let mut cols = vec!["x"];
        if self.points.nrows() == 2 {
            cols.push("y");
        }
        cols.extend(["u_pred", "u_ref", "abs_err"]);
        let mut t = Table::new(&cols);
        for ((p, u), r) in self.points.columns().into_iter().zip(&self.predicted).zip(&self.reference) {
            let mut row = p.to_vec();
            row.extend([*u, *r, (u - r).abs()]);
            t.push(&row);
        }
        t
    }
}

/// Compare `model` against the matching oracle at time `t`.
pub fn evaluate_model(
    model: &OperatorModel,
    problem: &WaveProblem,
    ic: InitialCondition,
    t: f64,
    grid_points: usize,
) -> Result<Evaluation> {
    if model.dim() != problem.dim {
        return Err(Error::Config(format!(
            "model is {}-dimensional, problem {}-dimensional",
            model.dim(),
            problem.dim
        )));
    }
    let sensors = model.sensors();
    let s: Vec<f64> = (0..sensors.len()).map(|i| ic.eval(&sensors.point(i))).collect();
    let points = eval_grid(problem.dim, grid_points);
    let reference = reference_solution(problem, ic, &points, t)?;
    let mut query = Vec::with_capacity(problem.dim + 1);
    let predicted = points
        .columns()
        .into_iter()
        .map(|p| {
            query.clear();
            query.extend(p.iter().copied());
            query.push(t);
            model.apply(&s, &query)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_error = max_pointwise_error(&predicted, &reference)?;
    Ok(Evaluation {
        points,
        predicted,
        reference,
        max_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub checkpoint: String,
    pub architecture: Architecture,
    pub initial_condition: InitialCondition,
    pub t: f64,
    pub max_error: f64,
    pub table: String,
}

/// Load a checkpoint, evaluate it and write `evaluation.csv` and
/// `evaluation.json` under `out`.
pub fn evaluate_checkpoint(
    checkpoint: impl AsRef<Path>,
    k: u32,
    t: f64,
    out: impl AsRef<Path>,
) -> Result<EvaluationReport> {
    let checkpoint = checkpoint.as_ref();
    let saved = load_model(checkpoint)?;
    let problem = saved.problem.ok_or_else(|| {
        Error::Validation(format!("{} records no problem to evaluate against", checkpoint.display()))
    })?;
    let ic = InitialCondition::for_problem(&problem, k);
    let eval = evaluate_model(&saved.model, &problem, ic, t, default_grid_points(problem.dim))?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    eval.to_table().write(out.join("evaluation.csv"))?;
    let report = EvaluationReport {
        checkpoint: checkpoint.display().to_string(),
        architecture: saved.model.architecture(),
        initial_condition: ic,
        t,
        max_error: eval.max_error,
        table: "evaluation.csv".into(),
    };
    write_text(
        &out.join("evaluation.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// `x[,y],t,xi[,yi],G`.
pub fn green_slice_table(model: &GreenONet, xi: &[f64], times: &[f64]) -> Result<Table> {
    let dim = model.sensors.dim();
    let grid = eval_grid(dim, default_grid_points(dim));
    let rows = green_slice(model, xi, times, &grid)?;
    let mut cols: Vec<&str> = vec!["x"];
    if dim == 2 {
        cols.push("y");
    }
    cols.push("t");
    cols.push("xi");
    if dim == 2 {
        cols.push("yi");
    }
    cols.push("G");
    let mut t = Table::new(&cols);
    for r in rows {
        let mut row = r.x.clone();
        row.push(r.t);
        row.extend(&r.xi);
        row.push(r.g);
        t.push(&row);
    }
    Ok(t)
}

/// Write one kernel slice per `ξ`; returns the files written.
pub fn emit_green_slice(
    checkpoint: impl AsRef<Path>,
    xis: &[Vec<f64>],
    times: &[f64],
    out: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let saved = load_model(checkpoint)?;
    let model = match saved.model {
        OperatorModel::GreenONet(g) => g,
        OperatorModel::DeepONet(_) => {
            return Err(Error::Unsupported(
                "green-slice needs a GreenONet checkpoint, got a DeepONet".into(),
            ))
        }
    };
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::with_capacity(xis.len());
    for (i, xi) in xis.iter().enumerate() {
        let path = out.join(format!("green_slice_{i}.csv"));
        green_slice_table(&model, xi, times)?.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Problems named on the command line: a preset family (`exp1`, `exp3`,
/// …) or `homogeneous[:c=<c>]`, `heaviside[:x0=<x0>]`, `2d[:c=<c>]`.
pub fn parse_problem(spec: &str) -> Result<WaveProblem> {
    if let Ok(cfg) = preset(&format!("{spec}-paper")) {
        return Ok(cfg.problem);
    }
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (spec, None),
    };
    let value = |key: &str, default: f64| -> Result<f64> {
        match arg {
            None => Ok(default),
            Some(a) => {
                let (k, v) = a
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("expected {key}=<value>, got {a:?}")))?;
                if k != key {
                    return Err(Error::Config(format!("unknown parameter {k:?} for {kind}")));
                }
                v.parse()
                    .map_err(|_| Error::Config(format!("{key} must be a number, got {v:?}")))
            }
        }
    };
    match kind {
        "homogeneous" => WaveProblem::homogeneous(1, 2.0, value("c", 1.0)?),
        "heaviside" => WaveProblem::new(1, 2.0, SpeedField::Heaviside { x0: value("x0", 0.5)? }),
        "2d" => WaveProblem::homogeneous(2, 1.5, value("c", 1.0)?),
        _ => Err(Error::Config(format!(
            "unknown problem {spec:?}; expected a preset family or homogeneous, heaviside, 2d"
        ))),
    }
}

/// Reference solution on the evaluation grid, written to `reference.csv`.
pub fn run_reference(problem: &WaveProblem, k: u32, t: f64, out: impl AsRef<Path>) -> Result<(PathBuf, f64)> {
    let ic = InitialCondition::for_problem(problem, k);
    let points = eval_grid(problem.dim, default_grid_points(problem.dim));
    let values = reference_solution(problem, ic, &points, t)?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("reference.csv");
    reference_table(&points, t, &values).write(&path)?;
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((path, max_abs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_specs() {
        assert_eq!(parse_problem("exp3").unwrap().speed, SpeedField::Heaviside { x0: 0.5 });
        assert_eq!(parse_problem("homogeneous:c=2").unwrap().speed, SpeedField::Homogeneous { c: 2.0 });
        assert_eq!(parse_problem("2d").unwrap().dim, 2);
        assert!(parse_problem("heaviside:c=1").is_err());
        assert!(parse_problem("spherical").is_err());
    }

    #[test]
    fn zero_model_error_is_reference_peak() {
        let p = WaveProblem::homogeneous(1, 2.0, 1.0).unwrap();
        let sensors = SensorGrid::uniform(21, 1).unwrap();
        let mut g = GreenONet::init(sensors, 5, 2, 0).unwrap();
        g.kernel.as_mut_slice().fill(0.0);
        let e = evaluate_model(&g.into(), &p, InitialCondition::Pulse { k: 2 }, 2.0, 401).unwrap();
        assert!(e.predicted.iter().all(|&u| u == 0.0));
        let peak = e.reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(e.max_error, peak);
        assert!((peak - 1.0).abs() < 1e-6);
        assert_eq!(e.to_table().columns(), &["x", "u_pred", "u_ref", "abs_err"]);
    }

    #[test]
    fn green_slice_rows() {
        let sensors = SensorGrid::uniform(21, 1).unwrap();
        let g = GreenONet::init(sensors, 5, 2, 0).unwrap();
        let t = green_slice_table(&g, &[0.0], &[0.0, 0.5]).unwrap();
        assert_eq!(t.rows(), 802);
        assert_eq!(t.columns(), &["x", "t", "xi", "G"]);
    }
}
