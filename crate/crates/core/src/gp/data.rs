use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Slack allowed when checking that normalized inputs lie in the unit cube.
const UNIT_CUBE_SLACK: f64 = 1e-9;

/// Observed inputs (unit cube), standardized outputs and their noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    noise_variances: DVector<f64>,
}

impl TrainingData {
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        noise_variances: DVector<f64>,
    ) -> Result<Self> {
        let n = inputs.nrows();
        if outputs.len() != n || noise_variances.len() != n {
            return Err(Error::invalid(format!(
                "{} inputs but {} outputs and {} noise variances",
                n,
                outputs.len(),
                noise_variances.len()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::invalid("inputs need at least one dimension"));
        }
        if inputs
            .iter()
            .any(|v| !v.is_finite() || *v < -UNIT_CUBE_SLACK || *v > 1.0 + UNIT_CUBE_SLACK)
        {
            return Err(Error::invalid(
                "inputs must be finite and lie in the unit cube",
            ));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("outputs must be finite"));
        }
        if noise_variances
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::invalid(
                "noise variances must be finite and nonnegative",
            ));
        }
        Ok(TrainingData {
            inputs,
            outputs,
            noise_variances,
        })
    }

    /// Data with constant noise variance on every point.
    pub fn homoskedastic(
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let n = inputs.nrows();
        Self::new(inputs, outputs, DVector::from_element(n, noise_variance))
    }

    pub fn empty(dim: usize) -> Self {
        TrainingData {
            inputs: DMatrix::zeros(0, dim),
            outputs: DVector::zeros(0),
            noise_variances: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn noise_variances(&self) -> &DVector<f64> {
        &self.noise_variances
    }

    /// Same inputs and noise, different outputs.
    pub fn with_outputs(&self, outputs: DVector<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), outputs, self.noise_variances.clone())
    }
}

/// Affine map between a box domain and the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputScaling {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds
            .iter()
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo))
        {
            return Err(Error::invalid("bounds must be finite with lower < upper"));
        }
        Ok(InputScaling {
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_unit(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(points.nrows(), points.ncols(), |i, j| {
            ((points[(i, j)] - self.lower[j]) / (self.upper[j] - self.lower[j])).clamp(0.0, 1.0)
        })
    }

    pub fn from_unit(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(points.nrows(), points.ncols(), |i, j| {
            let v = self.lower[j] + points[(i, j)] * (self.upper[j] - self.lower[j]);
            v.clamp(self.lower[j], self.upper[j])
        })
    }
}

/// Zero-mean, unit-variance standardization of observed outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputScaling {
    pub mean: f64,
    pub std: f64,
}

impl OutputScaling {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return OutputScaling {
                mean: 0.0,
                std: 1.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std = var.sqrt();
        // constant outputs carry no scale information
        let std = if std > 1e-12 * (1.0 + mean.abs()) {
            std
        } else {
            1.0
        };
        OutputScaling { mean, std }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn unstandardize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    /// Converts a variance on the original scale to the standardized scale.
    pub fn standardize_variance(&self, var: f64) -> f64 {
        var / (self.std * self.std)
    }

    pub fn unstandardize_variance(&self, var: f64) -> f64 {
        var * self.std * self.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths_and_negative_noise() {
        let x = DMatrix::from_row_slice(2, 1, &[0.1, 0.2]);
        assert!(
            TrainingData::new(x.clone(), DVector::from_vec(vec![1.0]), DVector::zeros(2)).is_err()
        );
        assert!(TrainingData::new(
            x.clone(),
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![0.0, -1.0])
        )
        .is_err());
        assert!(TrainingData::homoskedastic(x, DVector::from_vec(vec![1.0, 2.0]), 0.0).is_ok());
    }

    #[test]
    fn rejects_inputs_outside_unit_cube() {
        let x = DMatrix::from_row_slice(1, 2, &[0.5, 1.5]);
        assert!(TrainingData::homoskedastic(x, DVector::from_vec(vec![0.0]), 0.0).is_err());
    }

    #[test]
    fn input_scaling_round_trips() {
        let s = InputScaling::new(&[(-5.0, 10.0), (0.0, 15.0)]).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[-5.0, 15.0, 2.5, 7.5]);
        let u = s.to_unit(&x);
        assert_eq!(u, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.5]));
        assert_eq!(s.from_unit(&u), x);
    }

    #[test]
    fn constant_outputs_standardize_to_zero() {
        let s = OutputScaling::fit(&[3.0, 3.0, 3.0]);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.standardize(3.0), 0.0);
        let s = OutputScaling::fit(&[1.0, 3.0]);
        assert!((s.standardize(3.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.unstandardize(s.standardize(2.2)) - 2.2).abs() < 1e-15);
    }
}
