//! Leapfrog finite differences for `u_tt = c²(x) u_xx` in one dimension.

use crate::error::{Error, Result};
use crate::physics::{wave_speed_sq, WaveProblem};

/// Largest accepted Courant number.
pub const MAX_CFL: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub dt: f64,
    pub steps: usize,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdSolution1D {
    pub x: Vec<f64>,
    pub c2: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// `(t, E)` along the run to the last requested time, with
    /// `E = Σ (u_t² + c² u_x²) Δx` on the half steps.
    pub energy: Vec<(f64, f64)>,
}

impl FdSolution1D {
    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Linear interpolation of snapshot `k` at `x`.
    pub fn interpolate(&self, k: usize, x: f64) -> f64 {
        let u = &self.snapshots[k].u;
        let n = self.x.len();
        let pos = ((x + 1.0) / self.dx()).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        u[i] * (1.0 - frac) + u[i + 1] * frac
    }

    pub fn interpolate_many(&self, k: usize, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.interpolate(k, x)).collect()
    }
}

/// Run `problem` from `u₀` (zero initial velocity) to each of `times`.
///
/// Each requested time is reached with its own step `Δt ≤ cfl·Δx/max c`
/// that divides it exactly.
pub fn leapfrog_1d(
    u0: impl Fn(f64) -> f64,
    problem: &WaveProblem,
    times: &[f64],
    n_x: usize,
    cfl: f64,
) -> Result<FdSolution1D> {
    problem.validate()?;
    if problem.dim != 1 {
        return Err(Error::Config("leapfrog reference is one-dimensional".into()));
    }
    if n_x < 3 {
        return Err(Error::Config(format!("need at least 3 grid nodes, got {n_x}")));
    }
    if !(cfl > 0.0 && cfl <= MAX_CFL) {
        return Err(Error::Config(format!(
            "Courant number {cfl} outside (0, {MAX_CFL}]"
        )));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Config(format!("snapshot time {t} must be nonnegative")));
    }
    let x = crate::operator::linspace(n_x);
    let dx = 2.0 / (n_x - 1) as f64;
    let c2: Vec<f64> = x.iter().map(|&xi| wave_speed_sq(problem, &[xi])).collect();
    let mut u_init: Vec<f64> = x.iter().map(|&xi| u0(xi)).collect();
    for i in [0, n_x - 1] {
        if u_init[i].abs() > 1e-12 {
            return Err(Error::Config(format!(
                "initial condition must vanish at x = {}, got {}",
                x[i], u_init[i]
            )));
        }
        u_init[i] = 0.0;
    }
    let dt_max = cfl * dx / problem.max_speed();

    let mut snapshots = Vec::with_capacity(times.len());
    let mut energy = Vec::new();
    let t_last = times.iter().copied().fold(0.0, f64::max);
    for &t in times {
        let steps = (t / dt_max).ceil() as usize;
        let dt = if steps == 0 { dt_max } else { t / steps as f64 };
        let record = t == t_last && energy.is_empty();
        let u = integrate(&u_init, &c2, dx, dt, steps, record.then_some(&mut energy));
        snapshots.push(Snapshot { t, dt, steps, u });
    }
    Ok(FdSolution1D {
        x,
        c2,
        snapshots,
        energy,
    })
}

fn integrate(
    u0: &[f64],
    c2: &[f64],
    dx: f64,
    dt: f64,
    steps: usize,
    mut energy: Option<&mut Vec<(f64, f64)>>,
) -> Vec<f64> {
    let n = u0.len();
    let r = dt * dt / (dx * dx);
    let mut prev = u0.to_vec();
    if steps == 0 {
        return prev;
    }
    let mut cur = vec![0.0; n];
    for i in 1..n - 1 {
        cur[i] = u0[i] + 0.5 * r * c2[i] * (u0[i + 1] - 2.0 * u0[i] + u0[i - 1]);
    }
    let mut push_energy = |k: usize, a: &[f64], b: &[f64]| {
        if let Some(e) = energy.as_deref_mut() {
            e.push(((k as f64 + 0.5) * dt, half_step_energy(a, b, c2, dx, dt)));
        }
    };
    push_energy(0, &prev, &cur);
    let mut next = vec![0.0; n];
    for k in 1..steps {
        for i in 1..n - 1 {
            next[i] = 2.0 * cur[i] - prev[i] + r * c2[i] * (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        push_energy(k, &prev, &cur);
    }
    cur
}

fn half_step_energy(a: &[f64], b: &[f64], c2: &[f64], dx: f64, dt: f64) -> f64 {
    let n = a.len();
    let mut kinetic = 0.0;
    let mut strain = 0.0;
    for i in 0..n {
        let v = (b[i] - a[i]) / dt;
        kinetic += v * v;
    }
    for i in 0..n - 1 {
        let c = 0.5 * (c2[i] + c2[i + 1]);
        strain += c * (a[i + 1] - a[i]) * (b[i + 1] - b[i]) / (dx * dx);
    }
    (kinetic + strain) * dx
}
