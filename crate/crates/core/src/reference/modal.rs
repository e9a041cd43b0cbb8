//! Sine-series solutions for a homogeneous medium.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Whether the truncated series reproduces `u₀` to the requested
/// tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModalStatus {
    Converged,
    TruncationWarning { residual: f64 },
}

/// Composite Simpson weights on `n` equispaced nodes of `[-1, 1]`; `n` must
/// be odd.
pub fn simpson_weights(n: usize) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd node count ≥ 3");
    let h = 2.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 || i + 1 == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

fn quad_nodes(n_modes: usize) -> usize {
    let n = (40 * n_modes).max(2000) + 1;
    n | 1
}

/// `sin(nθ)` for `n = 1..=count` by the Chebyshev recurrence.
fn sines(theta: f64, count: usize, out: &mut Vec<f64>) {
    out.clear();
    let (s1, c1) = theta.sin_cos();
    let two_c = 2.0 * c1;
    let (mut prev, mut cur) = (0.0, s1);
    for _ in 0..count {
        out.push(cur);
        let next = two_c * cur - prev;
        prev = cur;
        cur = next;
    }
}

fn theta(x: f64) -> f64 {
    PI * (x + 1.0) / 2.0
}

/// `u(x, t) = Σ aₙ sin(nπ(x+1)/2) cos(nπct/2)` for `n = 1..=n_modes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalSolution1D {
    pub coefficients: Vec<f64>,
    pub c: f64,
    /// `max |u₀ − Σ aₙ φₙ|` over the quadrature nodes.
    pub residual: f64,
    pub status: ModalStatus,
}

impl ModalSolution1D {
    pub fn project(u0: impl Fn(f64) -> f64, c: f64, n_modes: usize, tolerance: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("wave speed must be positive, got {c}")));
        }
        if n_modes == 0 {
            return Err(Error::Config("need at least one mode".into()));
        }
        for end in [-1.0, 1.0] {
            let v = u0(end);
            if v.abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "initial condition must vanish at x = {end}, got {v}"
                )));
            }
        }
        let nq = quad_nodes(n_modes);
        let w = simpson_weights(nq);
        let xs = crate::operator::linspace(nq);
        let f: Vec<f64> = xs.iter().map(|&x| u0(x)).collect();
        let mut a = vec![0.0; n_modes];
        let mut buf = Vec::with_capacity(n_modes);
        for ((&x, &fx), &wx) in xs.iter().zip(&f).zip(&w) {
            sines(theta(x), n_modes, &mut buf);
            let fw = fx * wx;
            for (an, s) in a.iter_mut().zip(&buf) {
                *an += fw * s;
            }
        }
        if let Some(v) = a.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite modal coefficient {v}")));
        }
        let mut sol = ModalSolution1D {
            coefficients: a,
            c,
            residual: 0.0,
            status: ModalStatus::Converged,
        };
        sol.residual = xs
            .iter()
            .zip(&f)
            .map(|(&x, &fx)| (sol.eval(x, 0.0) - fx).abs())
            .fold(0.0, f64::max);
        if sol.residual > tolerance {
            sol.status = ModalStatus::TruncationWarning {
                residual: sol.residual,
            };
        }
        Ok(sol)
    }

    pub fn n_modes(&self) -> usize {
        self.coefficients.len()
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let n = self.n_modes();
        let mut sx = Vec::with_capacity(n);
        let mut ct = Vec::with_capacity(n);
        sines(theta(x), n, &mut sx);
        cosines(PI * self.c * t / 2.0, n, &mut ct);
        self.coefficients
            .iter()
            .zip(sx.iter().zip(&ct))
            .map(|(a, (s, c))| a * s * c)
            .sum()
    }

    pub fn eval_many(&self, xs: &[f64], t: f64) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x, t)).collect()
    }
}

/// `cos(nφ)` for `n = 1..=count`.
fn cosines(phi: f64, count: usize, out: &mut Vec<f64>) {
    out.clear();
    let c1 = phi.cos();
    let two_c = 2.0 * c1;
    let (mut prev, mut cur) = (1.0, c1);
    for _ in 0..count {
        out.push(cur);
        let next = two_c * cur - prev;
        prev = cur;
        cur = next;
    }
}

/// Values of the modal solution at `xs` and time `t`, with the projection
/// status.
pub fn modal_solve_1d(
    u0: impl Fn(f64) -> f64,
    c: f64,
    xs: &[f64],
    t: f64,
    n_modes: usize,
) -> Result<(Vec<f64>, ModalStatus)> {
    let sol = ModalSolution1D::project(u0, c, n_modes, 1e-6)?;
    Ok((sol.eval_many(xs, t), sol.status))
}

/// Double sine series on `(-1, 1)²` with `ω_mn = cπ√(m² + n²)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalSolution2D {
    /// `a[m][n]`, both 1-based in the mode sense.
    pub coefficients: Vec<Vec<f64>>,
    pub c: f64,
    pub residual: f64,
    pub status: ModalStatus,
}

impl ModalSolution2D {
    pub fn project(
        u0: impl Fn(f64, f64) -> f64,
        c: f64,
        n_modes: usize,
        tolerance: f64,
    ) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("wave speed must be positive, got {c}")));
        }
        if n_modes == 0 {
            return Err(Error::Config("need at least one mode per axis".into()));
        }
        let nq = ((20 * n_modes).max(400) + 1) | 1;
        let w = simpson_weights(nq);
        let xs = crate::operator::linspace(nq);
        let phi: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                let mut v = Vec::with_capacity(n_modes);
                sines(theta(x), n_modes, &mut v);
                v
            })
            .collect();
        let u: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| xs.iter().map(|&y| u0(x, y)).collect())
            .collect();
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in xs.iter().enumerate() {
                if (i == 0 || j == 0 || i + 1 == nq || j + 1 == nq) && u[i][j].abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "initial condition must vanish on the boundary, got {} at ({x}, {y})",
                        u[i][j]
                    )));
                }
            }
        }
        // B[i][n] = Σ_j w_j u(x_i, y_j) φ_n(y_j), then A[m][n] = Σ_i w_i φ_m(x_i) B[i][n]
        let mut b = vec![vec![0.0; n_modes]; nq];
        for i in 0..nq {
            for j in 0..nq {
                let f = w[j] * u[i][j];
                for n in 0..n_modes {
                    b[i][n] += f * phi[j][n];
                }
            }
        }
        let mut a = vec![vec![0.0; n_modes]; n_modes];
        for i in 0..nq {
            for m in 0..n_modes {
                let f = w[i] * phi[i][m];
                for n in 0..n_modes {
                    a[m][n] += f * b[i][n];
                }
            }
        }
        let mut sol = ModalSolution2D {
            coefficients: a,
            c,
            residual: 0.0,
            status: ModalStatus::Converged,
        };
        let stride = (nq / 101).max(1);
        let mut residual: f64 = 0.0;
        for i in (0..nq).step_by(stride) {
            for j in (0..nq).step_by(stride) {
                residual = residual.max((sol.eval(xs[i], xs[j], 0.0) - u[i][j]).abs());
            }
        }
        sol.residual = residual;
        if residual > tolerance {
            sol.status = ModalStatus::TruncationWarning { residual };
        }
        Ok(sol)
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        let n = self.coefficients.len();
        let mut sx = Vec::with_capacity(n);
        let mut sy = Vec::with_capacity(n);
        sines(theta(x), n, &mut sx);
        sines(theta(y), n, &mut sy);
        let mut acc = 0.0;
        for (mi, row) in self.coefficients.iter().enumerate() {
            let mm = (mi + 1) as f64;
            for (ni, a) in row.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let nn = (ni + 1) as f64;
                let omega = self.c * PI * (mm * mm + nn * nn).sqrt() / 2.0;
                acc += a * sx[mi] * sy[ni] * (omega * t).cos();
            }
        }
        acc
    }
}

/// Values of the 2D modal solution at the columns of `points` (`2 × n`).
pub fn modal_solve_2d(
    u0: impl Fn(f64, f64) -> f64,
    c: f64,
    points: &ndarray::Array2<f64>,
    t: f64,
    n_modes: usize,
) -> Result<(Vec<f64>, ModalStatus)> {
    if points.nrows() != 2 {
        return Err(Error::Config(format!("2D points need 2 rows, got {}", points.nrows())));
    }
    let sol = ModalSolution2D::project(u0, c, n_modes, 1e-6)?;
    Ok((
        points.columns().into_iter().map(|p| sol.eval(p[0], p[1], t)).collect(),
        sol.status,
    ))
}

/// `½(u₀(x − ct) + u₀(x + ct))`.
pub fn dalembert_free_space(u0: impl Fn(f64) -> f64, c: f64, x: f64, t: f64) -> f64 {
    0.5 * (u0(x - c * t) + u0(x + c * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse(k: i32) -> impl Fn(f64) -> f64 {
        move |x: f64| (1.0 - x * x).powi(k)
    }

    #[test]
    fn simpson_integrates_cubics() {
        let w = simpson_weights(11);
        let xs = crate::operator::linspace(11);
        let int: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x * x * x + x * x)).sum();
        assert!((int - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_eigenmode() {
        let u0 = |x: f64| (PI * (x + 1.0)).sin();
        let sol = ModalSolution1D::project(u0, 1.0, 10, 1e-10).unwrap();
        assert_eq!(sol.status, ModalStatus::Converged);
        for (x, t) in [(0.3, 0.7), (-0.8, 1.9)] {
            assert!((sol.eval(x, t) - u0(x) * (PI * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn half_and_full_period() {
        let sol = ModalSolution1D::project(pulse(10), 1.0, 400, 1e-8).unwrap();
        for i in 0..=40 {
            let x = -1.0 + i as f64 * 0.05;
            assert!((sol.eval(x, 2.0) + pulse(10)(x)).abs() < 1e-6);
            assert!((sol.eval(x, 4.0) - pulse(10)(x)).abs() < 1e-6);
            assert_eq!(sol.eval(x, 0.3), sol.eval(x, -0.3));
        }
    }

    #[test]
    fn truncation_warning() {
        let sol = ModalSolution1D::project(pulse(2), 1.0, 3, 1e-9).unwrap();
        assert!(matches!(sol.status, ModalStatus::TruncationWarning { residual } if residual > 1e-9));
        assert!(ModalSolution1D::project(|x| x + 2.0, 1.0, 3, 1.0).is_err());
    }

    #[test]
    fn dalembert_examples() {
        let u0 = pulse(10);
        assert_eq!(dalembert_free_space(&u0, 1.0, 0.3, 0.0), u0(0.3));
        let v = dalembert_free_space(&u0, 1.0, 0.0, 0.2);
        assert!((v - 0.96f64.powi(10)).abs() < 1e-15);
        assert!((v - 0.6648).abs() < 1e-4);
    }

    #[test]
    fn eigenmode_2d() {
        let u0 = |x: f64, y: f64| (x * PI / 2.0).cos() * (y * PI / 2.0).cos();
        let sol = ModalSolution2D::project(u0, 1.0, 4, 1e-10).unwrap();
        let factor = (1.5 * PI / 2f64.sqrt()).cos();
        assert!((factor + 0.9819).abs() < 1e-4);
        for (x, y) in [(0.0, 0.0), (0.3, -0.6), (0.9, 0.1)] {
            assert!((sol.eval(x, y, 0.0) - u0(x, y)).abs() < 1e-12);
            assert!((sol.eval(x, y, 1.5) - factor * u0(x, y)).abs() < 1e-12);
        }
        // first zero of cos(πt/√2) at t = 1/√2
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if sol.eval(0.0, 0.0, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.5f64.sqrt()).abs() < 1e-10);
    }
}
