//! DeepONet and GreenONet operator models.

mod manifest;

use ndarray::Array2;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::network::{layer_sizes, FnnParams};

pub use manifest::{load_model, save_model, ModelManifest, SavedModel};

/// Fixed spatial points where input functions are sampled.
///
/// Stored as a `dim × m` matrix, one column per sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorGrid {
    points: Array2<f64>,
}

impl SensorGrid {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let (dim, m) = points.dim();
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("sensor dimension {dim} not in 1..=2")));
        }
        if m == 0 {
            return Err(Error::Config("sensor grid is empty".into()));
        }
        if let Some(v) = points.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("sensor coordinate {v} outside [-1, 1]")));
        }
        Ok(SensorGrid { points })
    }

    /// `m` equispaced points covering `[-1, 1]^dim`, endpoints included.
    /// In 2D `m` must be a perfect square and the grid is `√m × √m`, with
    /// `x` varying fastest.
    pub fn uniform(m: usize, dim: usize) -> Result<Self> {
        match dim {
            1 => {
                if m < 2 {
                    return Err(Error::Config(format!("need at least 2 sensors, got {m}")));
                }
                let xs = linspace(m);
                SensorGrid::new(Array2::from_shape_vec((1, m), xs).unwrap())
            }
            2 => {
                let side = (m as f64).sqrt().round() as usize;
                if side * side != m {
                    return Err(Error::Config(format!(
                        "2D sensor count must be a perfect square, got {m}"
                    )));
                }
                if side < 2 {
                    return Err(Error::Config(format!("need at least 2×2 sensors, got {m}")));
                }
                let xs = linspace(side);
                let mut pts = Array2::zeros((2, m));
                for j in 0..side {
                    for i in 0..side {
                        pts[[0, j * side + i]] = xs[i];
                        pts[[1, j * side + i]] = xs[j];
                    }
                }
                SensorGrid::new(pts)
            }
            _ => Err(Error::Config(format!("dimension {dim} not supported"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.column(i).to_vec()
    }
}

/// `n` equispaced points on `[-1, 1]` with exact endpoints.
pub fn linspace(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            if i + 1 == n {
                1.0
            } else {
                -1.0 + 2.0 * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Branch net on sensor values, trunk net on `(x, t)`, merged by a dot
/// product of their `q`-wide outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepONet {
    pub branch: FnnParams,
    pub trunk: FnnParams,
    pub sensors: SensorGrid,
}

/// Learned kernel `G(x, t, ξ)` averaged against the sensor values.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenONet {
    pub kernel: FnnParams,
    pub sensors: SensorGrid,
}

impl DeepONet {
    pub fn new(branch: FnnParams, trunk: FnnParams, sensors: SensorGrid) -> Result<Self> {
        let q = branch.output_width();
        branch.expect_widths(sensors.len(), q, "DeepONet branch")?;
        trunk.expect_widths(sensors.dim() + 1, q, "DeepONet trunk")?;
        Ok(DeepONet {
            branch,
            trunk,
            sensors,
        })
    }

    /// Branch and trunk with `depth` hidden layers of `width`, latent
    /// width `q`.
    pub fn init(sensors: SensorGrid, width: usize, depth: usize, q: usize, seed: u64) -> Result<Self> {
        let branch = FnnParams::init(&layer_sizes(sensors.len(), width, depth, q), seed)?;
        let trunk = FnnParams::init(
            &layer_sizes(sensors.dim() + 1, width, depth, q),
            seed.wrapping_add(0x5eed_0001),
        )?;
        DeepONet::new(branch, trunk, sensors)
    }

    pub fn latent_width(&self) -> usize {
        self.branch.output_width()
    }
}

impl GreenONet {
    pub fn new(kernel: FnnParams, sensors: SensorGrid) -> Result<Self> {
        kernel.expect_widths(2 * sensors.dim() + 1, 1, "GreenONet kernel")?;
        Ok(GreenONet { kernel, sensors })
    }

    pub fn init(sensors: SensorGrid, width: usize, depth: usize, seed: u64) -> Result<Self> {
        let kernel = FnnParams::init(&layer_sizes(2 * sensors.dim() + 1, width, depth, 1), seed)?;
        GreenONet::new(kernel, sensors)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    DeepONet,
    GreenONet,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::DeepONet => "deeponet",
            Architecture::GreenONet => "greenonet",
        }
    }
}

/// Either architecture, with a flat parameter vector (branch then trunk
/// for DeepONet).
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorModel {
    DeepONet(DeepONet),
    GreenONet(GreenONet),
}

impl From<DeepONet> for OperatorModel {
    fn from(m: DeepONet) -> Self {
        OperatorModel::DeepONet(m)
    }
}

impl From<GreenONet> for OperatorModel {
    fn from(m: GreenONet) -> Self {
        OperatorModel::GreenONet(m)
    }
}

impl OperatorModel {
    pub fn architecture(&self) -> Architecture {
        match self {
            OperatorModel::DeepONet(_) => Architecture::DeepONet,
            OperatorModel::GreenONet(_) => Architecture::GreenONet,
        }
    }

    pub fn sensors(&self) -> &SensorGrid {
        match self {
            OperatorModel::DeepONet(m) => &m.sensors,
            OperatorModel::GreenONet(m) => &m.sensors,
        }
    }

    pub fn dim(&self) -> usize {
        self.sensors().dim()
    }

    pub fn param_count(&self) -> usize {
        match self {
            OperatorModel::DeepONet(m) => m.branch.param_count() + m.trunk.param_count(),
            OperatorModel::GreenONet(m) => m.kernel.param_count(),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            OperatorModel::DeepONet(m) => {
                let mut v = m.branch.as_slice().to_vec();
                v.extend_from_slice(m.trunk.as_slice());
                v
            }
            OperatorModel::GreenONet(m) => m.kernel.as_slice().to_vec(),
        }
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Config(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        match self {
            OperatorModel::DeepONet(m) => {
                let nb = m.branch.param_count();
                m.branch.as_mut_slice().copy_from_slice(&params[..nb]);
                m.trunk.as_mut_slice().copy_from_slice(&params[nb..]);
            }
            OperatorModel::GreenONet(m) => m.kernel.as_mut_slice().copy_from_slice(params),
        }
        Ok(())
    }

    fn check_inputs(&self, s: &[f64], query_len: usize) -> Result<()> {
        if s.len() != self.sensors().len() {
            return Err(Error::Config(format!(
                "model has {} sensors, got {} sensor values",
                self.sensors().len(),
                s.len()
            )));
        }
        if query_len != self.dim() + 1 {
            return Err(Error::Config(format!(
                "query must be (x, t) with {} coordinates, got {query_len}",
                self.dim() + 1
            )));
        }
        Ok(())
    }

    /// `Q̂(s)(x, t)`; `query` is `[x…, t]`.
    pub fn apply(&self, s: &[f64], query: &[f64]) -> Result<f64> {
        self.check_inputs(s, query.len())?;
        Ok(match self {
            OperatorModel::DeepONet(m) => {
                deeponet_generic(m, m.branch.as_slice(), m.trunk.as_slice(), s, query)
            }
            OperatorModel::GreenONet(m) => greenonet_generic(m, m.kernel.as_slice(), s, query),
        })
    }

    /// Evaluate with parameters and query coordinates of any scalar type.
    /// `params` follows [`OperatorModel::flat_params`] order.
    pub fn apply_with<S: Scalar, P: Copy + Into<S>>(
        &self,
        params: &[P],
        s: &[f64],
        query: &[S],
    ) -> Result<S> {
        self.check_inputs(s, query.len())?;
        if params.len() != self.param_count() {
            return Err(Error::Config(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(match self {
            OperatorModel::DeepONet(m) => {
                let nb = m.branch.param_count();
                deeponet_generic(m, &params[..nb], &params[nb..], s, query)
            }
            OperatorModel::GreenONet(m) => greenonet_generic(m, params, s, query),
        })
    }
}

fn deeponet_generic<S: Scalar, P: Copy + Into<S>>(
    m: &DeepONet,
    branch_params: &[P],
    trunk_params: &[P],
    s: &[f64],
    query: &[S],
) -> S {
    let ctx = query[0];
    let s_in: Vec<S> = s.iter().map(|&v| ctx.constant_like(v)).collect();
    let b = crate::network::forward_generic(&m.branch, branch_params, &s_in);
    let t = crate::network::forward_generic(&m.trunk, trunk_params, query);
    let mut acc = b[0] * t[0];
    for k in 1..b.len() {
        acc = acc + b[k] * t[k];
    }
    acc
}

fn greenonet_generic<S: Scalar, P: Copy + Into<S>>(
    m: &GreenONet,
    kernel_params: &[P],
    s: &[f64],
    query: &[S],
) -> S {
    let ctx = query[0];
    let dim = m.sensors.dim();
    let mut input: Vec<S> = Vec::with_capacity(2 * dim + 1);
    let mut acc = ctx.constant_like(0.0);
    for (i, &si) in s.iter().enumerate() {
        input.clear();
        input.extend_from_slice(query);
        for d in 0..dim {
            input.push(ctx.constant_like(m.sensors.points[[d, i]]));
        }
        let g = crate::network::forward_generic(&m.kernel, kernel_params, &input)[0];
        acc = acc + g.scale(si);
    }
    acc.scale(1.0 / s.len() as f64)
}

/// `Σ_k b_k(s) t_k(x, t)`.
pub fn deeponet_apply(model: &DeepONet, s: &[f64], query: &[f64]) -> Result<f64> {
    if s.len() != model.sensors.len() || query.len() != model.sensors.dim() + 1 {
        return Err(Error::Config(format!(
            "expected {} sensor values and a query of {} coordinates",
            model.sensors.len(),
            model.sensors.dim() + 1
        )));
    }
    Ok(deeponet_generic(
        model,
        model.branch.as_slice(),
        model.trunk.as_slice(),
        s,
        query,
    ))
}

/// `(1/m) Σ_i G(x, t, x_i) s_i`.
pub fn greenonet_apply(model: &GreenONet, s: &[f64], query: &[f64]) -> Result<f64> {
    if s.len() != model.sensors.len() || query.len() != model.sensors.dim() + 1 {
        return Err(Error::Config(format!(
            "expected {} sensor values and a query of {} coordinates",
            model.sensors.len(),
            model.sensors.dim() + 1
        )));
    }
    Ok(greenonet_generic(model, model.kernel.as_slice(), s, query))
}

/// One evaluation of the raw kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub xi: Vec<f64>,
    pub g: f64,
}

/// Raw kernel `G(x, t, ξ)` over `times × grid`, time-major. `grid` is
/// `dim × n`, one column per point.
pub fn green_slice(
    model: &GreenONet,
    xi: &[f64],
    times: &[f64],
    grid: &Array2<f64>,
) -> Result<Vec<GreenSample>> {
    let dim = model.sensors.dim();
    if xi.len() != dim || grid.nrows() != dim {
        return Err(Error::Config(format!(
            "green slice needs {dim}-dimensional ξ and grid, got {} and {}",
            xi.len(),
            grid.nrows()
        )));
    }
    if let Some(v) = xi.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("ξ coordinate {v} outside [-1, 1]")));
    }
    let mut out = Vec::with_capacity(times.len() * grid.ncols());
    let mut input = Vec::with_capacity(2 * dim + 1);
    for &t in times {
        for col in grid.columns() {
            input.clear();
            input.extend(col.iter().copied());
            input.push(t);
            input.extend_from_slice(xi);
            let g = model.kernel.forward(&input)?[0];
            out.push(GreenSample {
                x: col.to_vec(),
                t,
                xi: xi.to_vec(),
                g,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn const_net(n_in: usize, n_out: usize, value: f64) -> FnnParams {
        let mut p = FnnParams::zeros(&[n_in, 3, n_out]).unwrap();
        let last = p.num_layers() - 1;
        p.bias_mut(last).fill(value);
        p
    }

    #[test]
    fn uniform_1d_grid() {
        let g = SensorGrid::uniform(21, 1).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g.points()[[0, 0]], -1.0);
        assert_eq!(g.points()[[0, 20]], 1.0);
        for i in 1..21 {
            let dx = g.points()[[0, i]] - g.points()[[0, i - 1]];
            assert!((dx - 0.1).abs() < 1e-12);
        }
        let two = SensorGrid::uniform(2, 1).unwrap();
        assert_eq!(two.points().row(0).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn uniform_2d_grid() {
        let g = SensorGrid::uniform(49, 2).unwrap();
        assert_eq!(g.len(), 49);
        let xs: std::collections::BTreeSet<_> =
            g.points().row(0).iter().map(|v| v.to_bits()).collect();
        assert_eq!(xs.len(), 7);
        assert!(matches!(SensorGrid::uniform(50, 2), Err(Error::Config(_))));
        assert!(SensorGrid::uniform(1, 1).is_err());
    }

    #[test]
    fn zero_branch_gives_zero() {
        let sensors = SensorGrid::uniform(5, 1).unwrap();
        let mut m = DeepONet::init(sensors, 6, 2, 4, 1).unwrap();
        m.branch.as_mut_slice().fill(0.0);
        for q in [[0.3, 0.1], [-0.9, 1.7]] {
            assert_eq!(deeponet_apply(&m, &[1.0, 2.0, 0.5, -1.0, 0.0], &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_branch_and_trunk() {
        let sensors = SensorGrid::uniform(3, 1).unwrap();
        let m = DeepONet::new(const_net(3, 1, 2.0), const_net(2, 1, 3.0), sensors).unwrap();
        assert_eq!(deeponet_apply(&m, &[0.1, 0.2, 0.3], &[0.0, 0.5]).unwrap(), 6.0);
    }

    #[test]
    fn deeponet_linear_in_branch_output_layer() {
        let sensors = SensorGrid::uniform(4, 1).unwrap();
        let m = DeepONet::init(sensors, 5, 2, 3, 7).unwrap();
        let s = [0.0, 0.4, -0.3, 0.0];
        let q = [0.2, 0.6];
        let base = deeponet_apply(&m, &s, &q).unwrap();
        let mut scaled = m.clone();
        let last = scaled.branch.num_layers() - 1;
        let span = scaled.branch.spans()[last];
        for v in &mut scaled.branch.as_mut_slice()[span.weight_offset..span.end()] {
            *v *= 2.5;
        }
        let u = deeponet_apply(&scaled, &s, &q).unwrap();
        assert!((u - 2.5 * base).abs() < 1e-14 * (1.0 + base.abs()));
    }

    #[test]
    fn greenonet_constant_kernel_averages() {
        let sensors = SensorGrid::uniform(4, 1).unwrap();
        let m = GreenONet::new(const_net(3, 1, 1.0), sensors).unwrap();
        let s = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(greenonet_apply(&m, &s, &[0.1, 0.2]).unwrap(), 3.0);
    }

    #[test]
    fn greenonet_zero_input_zero_output() {
        let sensors = SensorGrid::uniform(7, 1).unwrap();
        let m = GreenONet::init(sensors, 8, 3, 3).unwrap();
        assert_eq!(greenonet_apply(&m, &[0.0; 7], &[0.5, 1.2]).unwrap(), 0.0);
    }

    #[test]
    fn sensor_mismatch_is_config_error() {
        let sensors = SensorGrid::uniform(4, 1).unwrap();
        let m: OperatorModel = GreenONet::init(sensors, 4, 1, 0).unwrap().into();
        assert!(matches!(m.apply(&[0.0; 3], &[0.0, 0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_kernel_width_names_expected() {
        let sensors = SensorGrid::uniform(4, 1).unwrap();
        let err = GreenONet::new(FnnParams::zeros(&[2, 3, 1]).unwrap(), sensors)
            .unwrap_err()
            .to_string();
        assert!(err.contains("input width 3"), "{err}");
    }

    #[test]
    fn deeponet_is_not_linear_in_s() {
        let sensors = SensorGrid::uniform(5, 1).unwrap();
        let m = DeepONet::init(sensors, 8, 2, 4, 12).unwrap();
        let s1 = [0.0, 0.5, -0.2, 0.9, 0.0];
        let s2 = [0.0, -0.7, 0.4, 0.1, 0.0];
        let q = [0.3, 0.4];
        let lhs = deeponet_apply(&m, &s1.map(|v| 2.0 * v), &q).unwrap()
            + deeponet_apply(&m, &s2.map(|v| -3.0 * v), &q).unwrap();
        let combo: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let rhs = deeponet_apply(&m, &combo, &q).unwrap();
        assert!((lhs - rhs).abs() > 1e-6);
    }

    #[test]
    fn green_slice_shape_and_zero_kernel() {
        let sensors = SensorGrid::uniform(5, 1).unwrap();
        let m = GreenONet::new(FnnParams::zeros(&[3, 4, 1]).unwrap(), sensors).unwrap();
        let grid = Array2::from_shape_vec((1, 11), linspace(11)).unwrap();
        let table = green_slice(&m, &[0.0], &[0.0, 0.5, 1.0], &grid).unwrap();
        assert_eq!(table.len(), 33);
        assert!(table.iter().all(|r| r.g == 0.0));
    }

    #[test]
    fn jet_and_plain_agree_bitwise() {
        use crate::autodiff::Jet2;
        let sensors = SensorGrid::uniform(6, 1).unwrap();
        let s = [0.0, 0.3, 0.8, -0.1, 0.2, 0.0];
        for model in [
            OperatorModel::from(GreenONet::init(sensors.clone(), 5, 2, 1).unwrap()),
            OperatorModel::from(DeepONet::init(sensors.clone(), 5, 2, 3, 1).unwrap()),
        ] {
            let q = [0.25, 0.75];
            let plain = model.apply(&s, &q).unwrap();
            let params = model.flat_params();
            let jq: Vec<Jet2> = q.iter().map(|&v| Jet2::constant(v)).collect();
            let jet = model.apply_with(&params, &s, &jq).unwrap();
            assert_eq!(plain.to_bits(), jet.value.to_bits());
        }
    }

    proptest! {
        #[test]
        fn greenonet_superposition(
            seed in 0u64..1000,
            s1 in proptest::collection::vec(-2.0f64..2.0, 6),
            s2 in proptest::collection::vec(-2.0f64..2.0, 6),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            x in -1.0f64..1.0,
            t in 0.0f64..2.0,
        ) {
            let sensors = SensorGrid::uniform(6, 1).unwrap();
            let m = GreenONet::init(sensors, 6, 2, seed).unwrap();
            let q = [x, t];
            let combo: Vec<f64> = s1.iter().zip(&s2).map(|(u, v)| a * u + b * v).collect();
            let lhs = greenonet_apply(&m, &combo, &q).unwrap();
            let rhs = a * greenonet_apply(&m, &s1, &q).unwrap() + b * greenonet_apply(&m, &s2, &q).unwrap();
            let scale = 1.0 + lhs.abs() + rhs.abs();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale * 10.0);
        }
    }
}
