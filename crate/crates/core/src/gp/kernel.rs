//! Matérn-5/2 kernel with one lengthscale per input dimension.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Prior variance scale; `k(x, x) = amplitude`.
    pub amplitude: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn new(amplitude: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let params = KernelParams {
            amplitude,
            lengthscales,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn isotropic(amplitude: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::invalid(format!(
                "amplitude must be positive and finite, got {}",
                self.amplitude
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::invalid("kernel needs at least one lengthscale"));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::invalid(format!(
                "lengthscales must be positive and finite, got {l}"
            )));
        }
        Ok(())
    }

    /// Scaled Euclidean distance `sqrt(sum(((x - x2) / l)^2))`.
    #[inline]
    pub(crate) fn scaled_distance(&self, x: &[f64], x2: &[f64]) -> f64 {
        x.iter()
            .zip(x2)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let t = (a - b) / l;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    pub(crate) fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        let s = SQRT5 * self.scaled_distance(x, x2);
        self.amplitude * (1.0 + s + s * s / 3.0) * (-s).exp()
    }

    /// Adds `scale * d k(x, x2) / dx` into `out`.
    #[inline]
    pub(crate) fn accumulate_grad(&self, x: &[f64], x2: &[f64], scale: f64, out: &mut [f64]) {
        let s = SQRT5 * self.scaled_distance(x, x2);
        // dk/dx_j = -(5/3) A (1 + s) e^{-s} (x_j - x2_j) / l_j^2, finite at r = 0
        let common = -scale * (5.0 / 3.0) * self.amplitude * (1.0 + s) * (-s).exp();
        for (((o, a), b), l) in out.iter_mut().zip(x).zip(x2).zip(&self.lengthscales) {
            *o += common * (a - b) / (l * l);
        }
    }
}

/// Matérn-5/2 covariance between two points.
pub fn matern52(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    params.validate()?;
    if x.len() != params.dim() || x2.len() != params.dim() {
        return Err(Error::invalid(format!(
            "point dimensions {} and {} do not match kernel dimension {}",
            x.len(),
            x2.len(),
            params.dim()
        )));
    }
    if x.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel inputs must be finite"));
    }
    Ok(params.eval(x, x2))
}
