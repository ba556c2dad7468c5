//! The heteroskedastic Branin noise field and a GP surrogate for observed
//! noise variances.

use super::BRANIN_OPTIMA;
use crate::acquisition::NoiseField;
use crate::error::Result;
use crate::gp::{
    fit_hyperparameters, GpModel, KernelParams, OutputScaling, TrainingData, AMPLITUDE_PRIOR,
    LENGTHSCALE_PRIOR,
};
use nalgebra::{DMatrix, DVector};

/// Peak noise variance of the heteroskedastic Branin.
pub const BRANIN_NOISE_MAX: f64 = 100.0;
/// Decay rate of the Branin noise with distance.
pub const BRANIN_NOISE_DECAY: f64 = 0.05;
/// Constant noise of the homoskedastic control: the average of the
/// heteroskedastic field over the domain.
pub const BRANIN_HOMOSKEDASTIC_VARIANCE: f64 = 77.5;

/// `σ²_max · exp(-λ · min(‖x - x*₂‖, ‖x - x*₃‖))`; the first optimum is quiet.
pub fn branin_noise(x: &[f64]) -> f64 {
    let dist = |o: &[f64; 2]| ((x[0] - o[0]).powi(2) + (x[1] - o[1]).powi(2)).sqrt();
    let nearest = dist(&BRANIN_OPTIMA[1]).min(dist(&BRANIN_OPTIMA[2]));
    BRANIN_NOISE_MAX * (-BRANIN_NOISE_DECAY * nearest).exp()
}

/// GP regression of observed noise variances over the unit cube.
#[derive(Debug, Clone)]
pub struct NoiseSurrogate {
    model: GpModel,
    scaling: OutputScaling,
}

impl NoiseSurrogate {
    /// Observation noise of the surrogate itself, in standardized units.
    pub const FIXED_NOISE: f64 = 1e-6;

    /// Fit to variances `sigma2` observed at unit-cube `inputs`.
    pub fn fit(inputs: &DMatrix<f64>, sigma2: &DVector<f64>, seed: u64) -> Result<Self> {
        let scaling = OutputScaling::fit(sigma2.as_slice());
        let targets = sigma2.map(|v| scaling.standardize(v));
        let data = TrainingData::homoskedastic(inputs.clone(), targets, Self::FIXED_NOISE)?;
        let kernel = if data.len() >= 2 {
            fit_hyperparameters(&data, seed)?
        } else {
            KernelParams::isotropic(AMPLITUDE_PRIOR.mode(), LENGTHSCALE_PRIOR.mode(), data.dim())?
        };
        Ok(NoiseSurrogate {
            model: GpModel::new(data, kernel)?,
            scaling,
        })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    /// Unclamped prediction in the original variance units.
    fn raw(&self, x: &[f64]) -> Result<f64> {
        let point = DMatrix::from_row_slice(1, x.len(), x);
        let mean = self.model.posterior(&point)?.mean[0];
        Ok(self.scaling.unstandardize(mean))
    }

    /// Predicted noise variance at unit-cube `x`, clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.raw(x)?.max(0.0))
    }

    /// Gradient of [`NoiseSurrogate::predict`]; zero where the clamp is active.
    pub fn predict_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.raw(x)? <= 0.0 {
            return Ok(vec![0.0; x.len()]);
        }
        let point = DMatrix::from_row_slice(1, x.len(), x);
        let parts = self.model.posterior_parts(&point)?;
        let g = self.model.posterior_adjoint(
            &parts,
            &DVector::from_element(1, self.scaling.std),
            &DMatrix::zeros(1, 1),
        );
        Ok(g.row(0).iter().copied().collect())
    }
}

/// Surrogate predictions rescaled into the units of a standardized GP and
/// floored, usable as batch noise for the acquisition.
pub struct StandardizedNoise<'a> {
    pub surrogate: &'a NoiseSurrogate,
    /// Multiplier from raw variance to standardized variance (`1 / std_y²`).
    pub scale: f64,
    pub floor: f64,
}

impl NoiseField for StandardizedNoise<'_> {
    fn variance(&self, x: &[f64]) -> f64 {
        match self.surrogate.predict(x) {
            Ok(v) => (v * self.scale).max(self.floor),
            Err(_) => f64::NAN,
        }
    }

    fn variance_gradient(&self, x: &[f64]) -> Vec<f64> {
        let above = self
            .surrogate
            .predict(x)
            .map(|v| v * self.scale > self.floor)
            .unwrap_or(false);
        if !above {
            return vec![0.0; x.len()];
        }
        match self.surrogate.predict_gradient(x) {
            Ok(g) => g.into_iter().map(|v| v * self.scale).collect(),
            Err(_) => vec![f64::NAN; x.len()],
        }
    }
}
