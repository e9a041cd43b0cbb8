//! Random input functions and collocation sets.

mod grf;

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::operator::SensorGrid;
use crate::physics::WaveProblem;
use crate::table::{fmt_f64, Table};

pub use grf::{grf_sample_joint, grf_sample_with, regularized_cholesky, GrfSpec, MAX_JITTER};

/// Subtract the straight line through the endpoint values so the result
/// vanishes at `x = ±1`. Both endpoints must be among `points`.
pub fn enforce_dirichlet_1d(values: &[f64], points: &[f64]) -> Result<Vec<f64>> {
    if values.len() != points.len() {
        return Err(Error::Config(format!(
            "{} values for {} points",
            values.len(),
            points.len()
        )));
    }
    let at = |x: f64| {
        points
            .iter()
            .position(|&p| p == x)
            .map(|i| values[i])
            .ok_or_else(|| Error::Config(format!("endpoint x = {x} missing from points")))
    };
    let left = at(-1.0)?;
    let right = at(1.0)?;
    Ok(values
        .iter()
        .zip(points)
        .map(|(&s, &x)| s - ((1.0 - x) / 2.0 * left + (1.0 + x) / 2.0 * right))
        .collect())
}

/// `s = (1 − x²)(1 − y²) h`. `points` is `2 × n`.
pub fn make_input_2d(h: &[f64], points: &Array2<f64>) -> Vec<f64> {
    h.iter()
        .zip(points.columns())
        .map(|(&h, p)| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]) * h)
        .collect()
}

/// Collocation counts per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub residual: usize,
    pub boundary: usize,
    pub initial: usize,
}

/// One input function with its collocation points.
///
/// Point sets are `(dim + 1) × P` matrices, one column per point, rows
/// `x…, t`, so they feed a trunk network directly.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSample {
    /// `u₀` at the sensors.
    pub sensor_values: Vec<f64>,
    /// Interior points at `t = 0`.
    pub ic_points: Array2<f64>,
    /// `u₀` at `ic_points`.
    pub ic_values: Vec<f64>,
    /// Points on `∂Ω × (0, T)`.
    pub bc_points: Array2<f64>,
    /// Points in `Ω × (0, T)`.
    pub res_points: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub samples: Vec<InputSample>,
    pub sensors: SensorGrid,
    pub problem: WaveProblem,
    pub grf: GrfSpec,
    pub counts: CollocationCounts,
    pub seed: u64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with one row per point: `sample,role,x[,y],t,value`.
    pub fn to_table(&self) -> Table {
        let dim = self.problem.dim;
        let mut cols = vec!["sample".to_string(), "role".to_string(), "x".to_string()];
        if dim == 2 {
            cols.push("y".into());
        }
        cols.push("t".into());
        cols.push("value".into());
        let mut table = Table::new(&cols);
        let row = |table: &mut Table, i: usize, role: &str, coords: &[f64], value: Option<f64>| {
            let mut cells = vec![i.to_string(), role.to_string()];
            cells.extend(coords.iter().map(|&v| fmt_f64(v)));
            cells.push(value.map(fmt_f64).unwrap_or_default());
            table.push_cells(&cells);
        };
        for (i, s) in self.samples.iter().enumerate() {
            for (k, &v) in s.sensor_values.iter().enumerate() {
                let mut c = self.sensors.point(k);
                c.push(0.0);
                row(&mut table, i, "sensor", &c, Some(v));
            }
            for (p, &v) in s.ic_points.columns().into_iter().zip(&s.ic_values) {
                row(&mut table, i, "ic", &p.to_vec(), Some(v));
            }
            for p in s.bc_points.columns() {
                row(&mut table, i, "bc", &p.to_vec(), None);
            }
            for p in s.res_points.columns() {
                row(&mut table, i, "res", &p.to_vec(), None);
            }
        }
        table
    }

    /// SHA-256 of the CSV dump, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_table().render().as_bytes()))
    }
}

fn open_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

fn draw_sample<R: Rng>(
    problem: &WaveProblem,
    grf: &GrfSpec,
    sensors: &SensorGrid,
    counts: CollocationCounts,
    rng: &mut R,
) -> Result<InputSample> {
    let dim = problem.dim;
    let t_max = problem.final_time;

    let mut res_points = Array2::zeros((dim + 1, counts.residual));
    for j in 0..counts.residual {
        for d in 0..dim {
            res_points[[d, j]] = open_uniform(rng, -1.0, 1.0);
        }
        res_points[[dim, j]] = open_uniform(rng, 0.0, t_max);
    }

    let mut bc_points = Array2::zeros((dim + 1, counts.boundary));
    for j in 0..counts.boundary {
        let edge = rng.random_range(0..2 * dim);
        for d in 0..dim {
            bc_points[[d, j]] = if d == edge / 2 {
                if edge % 2 == 0 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                open_uniform(rng, -1.0, 1.0)
            };
        }
        bc_points[[dim, j]] = open_uniform(rng, 0.0, t_max);
    }

    let mut ic_space = Array2::zeros((dim, counts.initial));
    for j in 0..counts.initial {
        for d in 0..dim {
            ic_space[[d, j]] = open_uniform(rng, -1.0, 1.0);
        }
    }

    // One joint draw over sensors ∪ ic points (∪ missing endpoints in 1D).
    let m = sensors.len();
    let mut joint = concatenate(Axis(1), &[sensors.points().view(), ic_space.view()]).unwrap();
    if dim == 1 {
        for end in [-1.0, 1.0] {
            if !joint.row(0).iter().any(|&x| x == end) {
                joint = concatenate(Axis(1), &[joint.view(), Array2::from_elem((1, 1), end).view()])
                    .unwrap();
            }
        }
    }
    let raw = grf_sample_with(grf, joint.view(), rng)?;
    let values = if dim == 1 {
        enforce_dirichlet_1d(&raw, joint.row(0).as_slice().unwrap())?
    } else {
        make_input_2d(&raw, &joint)
    };

    let ic_points = concatenate(Axis(0), &[ic_space.view(), Array2::zeros((1, counts.initial)).view()])
        .unwrap();
    Ok(InputSample {
        sensor_values: values[..m].to_vec(),
        ic_values: values[m..m + counts.initial].to_vec(),
        ic_points,
        bc_points,
        res_points,
    })
}

/// `n` independent samples, deterministic in `seed`.
pub fn build_training_set(
    problem: &WaveProblem,
    grf: &GrfSpec,
    sensors: &SensorGrid,
    n: usize,
    counts: CollocationCounts,
    seed: u64,
) -> Result<TrainingSet> {
    problem.validate()?;
    grf.validate()?;
    if n == 0 {
        return Err(Error::Config("training set needs at least one sample".into()));
    }
    if counts.residual == 0 || counts.boundary == 0 || counts.initial == 0 {
        return Err(Error::Config(format!(
            "every collocation count must be at least 1, got {counts:?}"
        )));
    }
    if sensors.dim() != problem.dim {
        return Err(Error::Config(format!(
            "sensor dimension {} does not match problem dimension {}",
            sensors.dim(),
            problem.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| draw_sample(problem, grf, sensors, counts, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet {
        samples,
        sensors: sensors.clone(),
        problem: problem.clone(),
        grf: *grf,
        counts,
        seed,
    })
}
