//! Wave-equation residuals and the discretized physics-informed loss.
//!
//! For a model `u = Q̂(s)` and per-sample collocation sets the loss is
//!
//! ```text
//! L = w_r · mean R² + w_bc · mean u² + w_ic · mean [(u(x,0) − u₀)² + (∂ₜu(x,0))²]
//! R = ∂ₜₜu − c²(x) Δu
//! ```
//!
//! Means run over every collocation point of every sample in the batch.

mod loss;
mod pointwise;

use serde::{Deserialize, Serialize};

use crate::autodiff::Jet2;
use crate::error::{Error, Result};
use crate::operator::OperatorModel;

pub use loss::{loss_and_grad, loss_components, BatchLoss};
pub use pointwise::{loss_on_tape, loss_pointwise, TapeLoss};

/// Wave-speed distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedField {
    Homogeneous { c: f64 },
    /// `c²(x) = 1 + H(x − x0)` with `H(0) = 1`; one dimension only.
    Heaviside { x0: f64 },
}

/// `∂ₜₜu = c²Δu` on `(-1, 1)^dim × (0, T)`, zero Dirichlet data, zero
/// initial velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveProblem {
    pub dim: usize,
    pub final_time: f64,
    pub speed: SpeedField,
}

impl WaveProblem {
    pub fn new(dim: usize, final_time: f64, speed: SpeedField) -> Result<Self> {
        let p = WaveProblem {
            dim,
            final_time,
            speed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn homogeneous(dim: usize, final_time: f64, c: f64) -> Result<Self> {
        Self::new(dim, final_time, SpeedField::Homogeneous { c })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Config(format!("dimension {} not in 1..=2", self.dim)));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::Config(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        match self.speed {
            SpeedField::Homogeneous { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("wave speed must be positive, got {c}")))
            }
            SpeedField::Heaviside { .. } if self.dim != 1 => Err(Error::Config(
                "Heaviside wave speed is only defined in one dimension".into(),
            )),
            SpeedField::Heaviside { x0 } if !x0.is_finite() => {
                Err(Error::Config(format!("interface position {x0} not finite")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.speed, SpeedField::Homogeneous { .. })
    }

    pub fn max_speed(&self) -> f64 {
        match self.speed {
            SpeedField::Homogeneous { c } => c,
            SpeedField::Heaviside { .. } => 2f64.sqrt(),
        }
    }
}

/// `c²(x)`.
pub fn wave_speed_sq(problem: &WaveProblem, x: &[f64]) -> f64 {
    match problem.speed {
        SpeedField::Homogeneous { c } => c * c,
        SpeedField::Heaviside { x0 } => {
            if x[0] >= x0 {
                2.0
            } else {
                1.0
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_r: f64,
    pub w_bc: f64,
    pub w_ic: f64,
}

impl LossWeights {
    pub fn new(w_r: f64, w_bc: f64, w_ic: f64) -> Result<Self> {
        let w = LossWeights { w_r, w_bc, w_ic };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_r, self.w_bc, self.w_ic];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be nonnegative: {all:?}")));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Unweighted loss terms with the number of points averaged in each.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_r: f64,
    pub l_bc: f64,
    pub l_ic: f64,
    pub n_r: usize,
    pub n_bc: usize,
    pub n_ic: usize,
}

impl LossBreakdown {
    pub fn total(&self, w: &LossWeights) -> f64 {
        total_loss(self, w)
    }
}

/// `w_r L_r + w_bc L_bc + w_ic L_ic`.
pub fn total_loss(parts: &LossBreakdown, w: &LossWeights) -> f64 {
    w.w_r * parts.l_r + w.w_bc * parts.l_bc + w.w_ic * parts.l_ic
}

/// Anything that can be evaluated with jets at a space-time point.
pub trait SpaceTimeField {
    fn dim(&self) -> usize;
    /// `x` has `dim` entries; exactly one of `x` and `t` carries a seed.
    fn eval_jet(&self, x: &[Jet2], t: Jet2) -> Result<Jet2>;
}

/// A closed-form field written in jet arithmetic.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[Jet2], Jet2) -> Jet2> SpaceTimeField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_jet(&self, x: &[Jet2], t: Jet2) -> Result<Jet2> {
        Ok((self.f)(x, t))
    }
}

/// An operator model with fixed sensor values.
pub struct ModelField<'a> {
    pub model: &'a OperatorModel,
    pub sensor_values: &'a [f64],
    params: Vec<f64>,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a OperatorModel, sensor_values: &'a [f64]) -> Self {
        ModelField {
            model,
            sensor_values,
            params: model.flat_params(),
        }
    }
}

impl SpaceTimeField for ModelField<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn eval_jet(&self, x: &[Jet2], t: Jet2) -> Result<Jet2> {
        let mut q = x.to_vec();
        q.push(t);
        self.model.apply_with(&self.params, self.sensor_values, &q)
    }
}

/// Value, time derivatives and per-axis second space derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct PointDerivatives {
    pub u: f64,
    pub u_t: f64,
    pub u_tt: f64,
    pub u_xx: Vec<f64>,
}

pub fn point_derivatives(field: &impl SpaceTimeField, x: &[f64], t: f64) -> Result<PointDerivatives> {
    if x.len() != field.dim() {
        return Err(Error::Config(format!(
            "point has {} coordinates, field is {}-dimensional",
            x.len(),
            field.dim()
        )));
    }
    let xc: Vec<Jet2> = x.iter().map(|&v| Jet2::constant(v)).collect();
    let jt = field.eval_jet(&xc, Jet2::variable(t))?;
    let mut u_xx = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut xs = xc.clone();
        xs[k] = Jet2::variable(x[k]);
        u_xx.push(field.eval_jet(&xs, Jet2::constant(t))?.d2);
    }
    Ok(PointDerivatives {
        u: jt.value,
        u_t: jt.d1,
        u_tt: jt.d2,
        u_xx,
    })
}

/// `R = ∂ₜₜu − c²(x) Δu`.
pub fn pde_residual(
    field: &impl SpaceTimeField,
    x: &[f64],
    t: f64,
    problem: &WaveProblem,
) -> Result<f64> {
    if field.dim() != problem.dim {
        return Err(Error::Config(format!(
            "field dimension {} does not match problem dimension {}",
            field.dim(),
            problem.dim
        )));
    }
    let d = point_derivatives(field, x, t)?;
    let lap: f64 = d.u_xx.iter().sum();
    let r = d.u_tt - wave_speed_sq(problem, x) * lap;
    if !r.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite residual at x = {x:?}, t = {t}"
        )));
    }
    Ok(r)
}
