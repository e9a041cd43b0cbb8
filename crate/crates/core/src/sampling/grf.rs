//! Gaussian random fields with a squared-exponential kernel.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest diagonal regularizer tried before giving up.
pub const MAX_JITTER: f64 = 1e-6;

/// Zero-mean, unit-variance field with covariance
/// `k(x, x') = exp(−‖x − x'‖² / (2 l²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub length_scale: f64,
    /// First diagonal regularizer tried; raised tenfold on failure up to
    /// [`MAX_JITTER`].
    pub jitter: f64,
}

impl GrfSpec {
    pub fn new(length_scale: f64) -> Result<Self> {
        let spec = GrfSpec {
            length_scale,
            jitter: 1e-10,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Config(format!(
                "GRF length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !(0.0..=MAX_JITTER).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "GRF jitter must lie in [0, {MAX_JITTER}], got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// Covariance over the columns of `points` (`dim × n`), no jitter.
    pub fn covariance(&self, points: ArrayView2<'_, f64>) -> DMatrix<f64> {
        let n = points.ncols();
        let cols: Vec<Vec<f64>> = points.columns().into_iter().map(|c| c.to_vec()).collect();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                self.kernel(&cols[i], &cols[j])
            }
        })
    }
}

/// Cholesky factor of `K + jitter·I`, escalating the jitter on failure.
/// Returns the factor and the jitter that worked.
pub fn regularized_cholesky(cov: &DMatrix<f64>, start_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = cov.nrows();
    let mut jitter = start_jitter;
    loop {
        let mut k = cov.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(ch) = k.cholesky() {
            return Ok((ch.unpack(), jitter));
        }
        if jitter >= MAX_JITTER {
            return Err(Error::Numerical(format!(
                "GRF covariance over {n} points is not positive definite even with jitter \
                 {MAX_JITTER:e}; use fewer or coarser points, or a shorter length scale"
            )));
        }
        jitter = if jitter == 0.0 {
            1e-12
        } else {
            (jitter * 10.0).min(MAX_JITTER)
        };
    }
}

/// One joint draw at the columns of `points` using `rng`.
pub fn grf_sample_with<R: Rng + ?Sized>(
    spec: &GrfSpec,
    points: ArrayView2<'_, f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = points.ncols();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (l, _) = regularized_cholesky(&spec.covariance(points), spec.jitter)?;
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((l * z).iter().copied().collect())
}

/// One draw from `N(0, K + jitter·I)` at the columns of `points`,
/// deterministic in `seed`.
pub fn grf_sample_joint(spec: &GrfSpec, points: ArrayView2<'_, f64>, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grf_sample_with(spec, points, &mut rng)
}
