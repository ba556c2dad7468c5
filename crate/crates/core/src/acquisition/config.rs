use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest softmax inverse temperature for which the closed form is trusted.
pub const MAX_BETA: f64 = 5.0;
/// Default minimal probability mass kept on real batch points.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Default number of quasi-random samples for q-UCB.
pub const DEFAULT_MC_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Energy is the sum of posterior means.
    Mean,
    /// Energy is Q times the expected softmax-weighted sum.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftmaxBeta {
    Fixed(f64),
    /// `β = A^(-1/2)` for kernel amplitude `A`.
    AmplitudeScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub variant: Variant,
    /// Explore weight `T` (not the scaled `T'`).
    pub temperature: f64,
    pub softmax_beta: SoftmaxBeta,
    pub alpha: f64,
    /// Best standardized observation so far, added to the softmax denominator.
    pub y_max_reference: Option<f64>,
    pub mc_samples: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            variant: Variant::Mean,
            temperature: 0.0,
            softmax_beta: SoftmaxBeta::AmplitudeScaled,
            alpha: DEFAULT_ALPHA,
            y_max_reference: None,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

impl AcquisitionConfig {
    pub fn mean(temperature: f64) -> Self {
        AcquisitionConfig {
            temperature,
            ..Default::default()
        }
    }

    pub fn max(temperature: f64, softmax_beta: SoftmaxBeta) -> Self {
        AcquisitionConfig {
            variant: Variant::Max,
            temperature,
            softmax_beta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be finite and nonnegative, got {}",
                self.temperature
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let SoftmaxBeta::Fixed(b) = self.softmax_beta {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::invalid(format!(
                    "softmax beta must be nonnegative, got {b}"
                )));
            }
        }
        if let Some(y) = self.y_max_reference {
            if !y.is_finite() {
                return Err(Error::invalid("y_max reference must be finite"));
            }
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be at least 1"));
        }
        Ok(())
    }

    /// Requested inverse temperature for a model with the given amplitude,
    /// before the closed-form clamp.
    pub fn beta_for(&self, amplitude: f64) -> f64 {
        match self.softmax_beta {
            SoftmaxBeta::Fixed(b) => b,
            SoftmaxBeta::AmplitudeScaled => amplitude.powf(-0.5),
        }
    }
}
