//! Reference solutions used to measure model error.

mod fd;
mod modal;

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{SpeedField, WaveProblem};
use crate::table::Table;

pub use fd::{leapfrog_1d, FdSolution1D, Snapshot, MAX_CFL};
pub use modal::{
    dalembert_free_space, modal_solve_1d, modal_solve_2d, simpson_weights, ModalSolution1D,
    ModalSolution2D, ModalStatus,
};

/// Modes kept by the 1D homogeneous oracle.
pub const MODES_1D: usize = 400;
/// Modes per axis kept by the 2D oracle.
pub const MODES_2D: usize = 20;
/// Grid nodes of the heterogeneous oracle.
pub const FD_NODES: usize = 4001;
pub const FD_CFL: f64 = 0.5;

/// Initial conditions used for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `(1 − x²)^k`.
    Pulse { k: u32 },
    /// `cos(πx/2) cos(πy/2)`.
    Eigenmode2D,
}

impl InitialCondition {
    /// The default family for a problem: a pulse in 1D, the eigenmode in
    /// 2D.
    pub fn for_problem(problem: &WaveProblem, k: u32) -> Self {
        if problem.dim == 1 {
            InitialCondition::Pulse { k }
        } else {
            InitialCondition::Eigenmode2D
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialCondition::Pulse { .. } => 1,
            InitialCondition::Eigenmode2D => 2,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            InitialCondition::Pulse { k } => (1.0 - x[0] * x[0]).powi(k as i32),
            InitialCondition::Eigenmode2D => (x[0] * PI / 2.0).cos() * (x[1] * PI / 2.0).cos(),
        }
    }
}

/// `u(·, t)` at the columns of `points` (`dim × n`) from the oracle that
/// matches the problem: sine series for a homogeneous medium, leapfrog
/// otherwise.
pub fn reference_solution(
    problem: &WaveProblem,
    ic: InitialCondition,
    points: &Array2<f64>,
    t: f64,
) -> Result<Vec<f64>> {
    problem.validate()?;
    if ic.dim() != problem.dim || points.nrows() != problem.dim {
        return Err(Error::Config(format!(
            "initial condition, points and problem disagree on dimension ({}, {}, {})",
            ic.dim(),
            points.nrows(),
            problem.dim
        )));
    }
    if let InitialCondition::Pulse { k: 0 } = ic {
        return Err(Error::Config("pulse exponent k must be at least 1".into()));
    }
    let u0 = |x: f64| ic.eval(&[x]);
    match (problem.dim, &problem.speed) {
        (1, SpeedField::Homogeneous { c }) => {
            let sol = ModalSolution1D::project(u0, *c, MODES_1D, 1e-4)?;
            Ok(points.row(0).iter().map(|&x| sol.eval(x, t)).collect())
        }
        (1, SpeedField::Heaviside { .. }) => {
            let fd = leapfrog_1d(u0, problem, &[t], FD_NODES, FD_CFL)?;
            Ok(fd.interpolate_many(0, &points.row(0).to_vec()))
        }
        (2, SpeedField::Homogeneous { c }) => {
            let sol = ModalSolution2D::project(|x, y| ic.eval(&[x, y]), *c, MODES_2D, 1e-4)?;
            Ok(points.columns().into_iter().map(|p| sol.eval(p[0], p[1], t)).collect())
        }
        _ => Err(Error::Unsupported(format!("no reference solver for {problem:?}"))),
    }
}

/// Evaluation grid: `n` points on `[-1, 1]` in 1D, `n × n` in 2D with `x`
/// fastest.
pub fn eval_grid(dim: usize, n: usize) -> Array2<f64> {
    let xs = crate::operator::linspace(n);
    if dim == 1 {
        Array2::from_shape_vec((1, n), xs).unwrap()
    } else {
        let mut g = Array2::zeros((2, n * n));
        for j in 0..n {
            for i in 0..n {
                g[[0, j * n + i]] = xs[i];
                g[[1, j * n + i]] = xs[j];
            }
        }
        g
    }
}

/// `max |pred − ref|`.
pub fn max_pointwise_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} reference values",
            pred.len(),
            reference.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `x[,y],t,u_ref`.
pub fn reference_table(points: &Array2<f64>, t: f64, values: &[f64]) -> Table {
    let mut cols = vec!["x"];
    if points.nrows() == 2 {
        cols.push("y");
    }
    cols.extend(["t", "u_ref"]);
    let mut table = Table::new(&cols);
    for (p, &v) in points.columns().into_iter().zip(values) {
        let mut row = p.to_vec();
        row.push(t);
        row.push(v);
        table.push(&row);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_error_examples() {
        assert_eq!(max_pointwise_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(max_pointwise_error(&[0.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        let xs = crate::operator::linspace(101);
        let reference: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let pred: Vec<f64> = xs
            .iter()
            .zip(&reference)
            .map(|(x, r)| r + 0.04 * (-(x * x) * 50.0).exp())
            .collect();
        assert!((max_pointwise_error(&pred, &reference).unwrap() - 0.04).abs() < 1e-15);
        assert!(max_pointwise_error(&[0.0], &[]).is_err());
    }

    #[test]
    fn eigenmode_reference_2d() {
        let p = WaveProblem::homogeneous(2, 1.5, 1.0).unwrap();
        let grid = eval_grid(2, 11);
        let u = reference_solution(&p, InitialCondition::Eigenmode2D, &grid, 1.5).unwrap();
        let factor = (1.5 * PI / 2f64.sqrt()).cos();
        for (col, v) in grid.columns().into_iter().zip(&u) {
            let u0 = InitialCondition::Eigenmode2D.eval(&[col[0], col[1]]);
            assert!((v - factor * u0).abs() < 1e-10);
        }
    }

    #[test]
    fn table_schema() {
        let grid = eval_grid(1, 3);
        let t = reference_table(&grid, 2.0, &[0.0, 1.0, 0.0]);
        assert_eq!(t.columns(), &["x", "t", "u_ref"]);
        assert_eq!(t.rows(), 3);
    }
}
