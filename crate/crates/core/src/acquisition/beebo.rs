//! The batch acquisition `a(x) = -E(x) + T·I(x)` and its gradient.

use super::config::{AcquisitionConfig, Variant};
use super::softmax::{softmax_expectation, softmax_expectation_adjoint, SoftmaxExpansion};
use crate::error::{Error, Result};
use crate::gp::linalg::{logdet_svd, symmetrize};
use crate::gp::{GpModel, PosteriorParts};
use nalgebra::{DMatrix, DVector};

/// A differentiable observation-noise variance over the unit cube.
pub trait NoiseField: Send + Sync {
    /// Noise variance at `x` (unit-cube coordinates, standardized units).
    fn variance(&self, x: &[f64]) -> f64;
    /// Gradient of [`NoiseField::variance`] with respect to `x`.
    fn variance_gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Noise variances assumed at the batch points when fantasizing observations.
#[derive(Clone, Copy)]
pub enum BatchNoise<'a> {
    /// The same variance at every batch point.
    Constant(f64),
    /// One variance per batch point, held constant under differentiation.
    Fixed(&'a [f64]),
    /// Variances predicted at the batch points and differentiated through.
    Field(&'a dyn NoiseField),
}

impl std::fmt::Debug for BatchNoise<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchNoise::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            BatchNoise::Fixed(v) => f.debug_tuple("Fixed").field(v).finish(),
            BatchNoise::Field(_) => f.write_str("Field(..)"),
        }
    }
}

impl BatchNoise<'_> {
    /// Variances at the given batch rows.
    pub fn values(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let values: Vec<f64> = match self {
            BatchNoise::Constant(v) => vec![*v; rows.len()],
            BatchNoise::Fixed(v) => v.to_vec(),
            BatchNoise::Field(field) => rows.iter().map(|x| field.variance(x)).collect(),
        };
        if values.len() != rows.len() {
            return Err(Error::invalid(format!(
                "{} noise variances for a batch of {}",
                values.len(),
                rows.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::numerical(
                "batch noise variances must be finite and nonnegative",
            ));
        }
        Ok(values)
    }
}

/// `-Σ μ_q`; the acquisition adds `Σ μ_q`.
pub fn mean_energy(mean: &DVector<f64>) -> f64 {
    -mean.sum()
}

/// `½ logdet C - ½ logdet C_aug`, both log-determinants from singular values.
pub fn information_gain(covariance: &DMatrix<f64>, augmented: &DMatrix<f64>) -> Result<f64> {
    if covariance.shape() != augmented.shape() || !covariance.is_square() {
        return Err(Error::invalid(format!(
            "covariance shapes {:?} and {:?} differ or are not square",
            covariance.shape(),
            augmented.shape()
        )));
    }
    Ok(0.5 * (logdet_svd(covariance)? - logdet_svd(augmented)?))
}

/// Every piece of one acquisition evaluation.
#[derive(Debug, Clone)]
pub struct BeeboEvaluation {
    /// `-E + T·I`.
    pub value: f64,
    /// `-E`: `Σ μ_q` or `Q ×` the softmax expectation.
    pub exploit: f64,
    /// `I`; zero when `T = 0` (not computed).
    pub information_gain: f64,
    /// Softmax state for the max variant.
    pub expansion: Option<SoftmaxExpansion>,
    /// `∂a/∂x` when requested.
    pub gradient: Option<DMatrix<f64>>,
}

/// Acquisition value at `batch` (Q × d, unit cube).
pub fn beebo_score(
    model: &GpModel,
    batch: &DMatrix<f64>,
    batch_noise: &BatchNoise<'_>,
    config: &AcquisitionConfig,
) -> Result<f64> {
    Ok(beebo_evaluate(model, batch, batch_noise, config, false)?.value)
}

/// Gradient of [`beebo_score`] with respect to the batch coordinates.
pub fn beebo_gradient(
    model: &GpModel,
    batch: &DMatrix<f64>,
    batch_noise: &BatchNoise<'_>,
    config: &AcquisitionConfig,
) -> Result<DMatrix<f64>> {
    let eval = beebo_evaluate(model, batch, batch_noise, config, true)?;
    Ok(eval.gradient.expect("gradient requested"))
}

/// Value and, optionally, gradient of the acquisition in one pass.
pub fn beebo_evaluate(
    model: &GpModel,
    batch: &DMatrix<f64>,
    batch_noise: &BatchNoise<'_>,
    config: &AcquisitionConfig,
    with_gradient: bool,
) -> Result<BeeboEvaluation> {
    config.validate()?;
    let parts = model.posterior_parts(batch)?;
    let q = parts.rows.len();
    let mean = &parts.posterior.mean;
    let cov = &parts.posterior.covariance;
    let mut mean_bar = DVector::zeros(q);
    let mut cov_bar = DMatrix::zeros(q, q);
    let mut expansion = None;

    let exploit = match config.variant {
        Variant::Mean => {
            mean_bar.fill(1.0);
            -mean_energy(mean)
        }
        Variant::Max => {
            let beta = config.beta_for(model.amplitude());
            let (v, exp) =
                softmax_expectation(mean, cov, beta, config.y_max_reference, config.alpha)?;
            if with_gradient {
                let (mb, cb) = softmax_expectation_adjoint(&exp, cov);
                mean_bar += mb * q as f64;
                cov_bar += cb * q as f64;
            }
            expansion = Some(exp);
            q as f64 * v
        }
    };

    let mut noise_grad: Option<DMatrix<f64>> = None;
    let information_gain = if config.temperature > 0.0 {
        let noise = batch_noise.values(&parts.rows)?;
        let (gain, inverse, s_eff) = explore_term(model, &parts, &noise)?;
        if with_gradient {
            let t = config.temperature;
            cov_bar += &inverse * (0.5 * t);
            if let BatchNoise::Field(field) = batch_noise {
                let d = model.dim();
                let mut g = DMatrix::zeros(q, d);
                for (i, x) in parts.rows.iter().enumerate() {
                    let s_bar = 0.5 * t * (inverse[(i, i)] - 1.0 / s_eff[i]);
                    for (k, dv) in field.variance_gradient(x).iter().enumerate() {
                        g[(i, k)] = s_bar * dv;
                    }
                }
                noise_grad = Some(g);
            }
        }
        gain
    } else {
        0.0
    };

    let value = exploit + config.temperature * information_gain;
    if !value.is_finite() {
        return Err(Error::numerical("acquisition value is not finite"));
    }
    let gradient = if with_gradient {
        let mut g = model.posterior_adjoint(&parts, &mean_bar, &cov_bar);
        if let Some(ng) = noise_grad {
            g += ng;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("acquisition gradient is not finite"));
        }
        Some(g)
    } else {
        None
    };
    Ok(BeeboEvaluation {
        value,
        exploit,
        information_gain,
        expansion,
        gradient,
    })
}

/// Information gain plus what its gradient needs: `(C + S)⁻¹` and the
/// diagonal of `S`, where `S` is the batch noise including any jitter that
/// the batch factorization required.
fn explore_term(
    model: &GpModel,
    parts: &PosteriorParts,
    noise: &[f64],
) -> Result<(f64, DMatrix<f64>, Vec<f64>)> {
    GpModel::check_batch_noise(parts.rows.len(), noise)?;
    let (block, jitter) = model.batch_block(parts, noise)?;
    let cov = &parts.posterior.covariance;
    let g = block
        .solve_lower_triangular(cov)
        .ok_or_else(|| Error::numerical("triangular solve with batch block failed"))?;
    let mut augmented = cov - g.tr_mul(&g);
    symmetrize(&mut augmented);
    let s_eff: Vec<f64> = noise.iter().map(|s| s + jitter).collect();
    let gain = match information_gain(cov, &augmented) {
        Ok(v) => v,
        // C itself singular to working precision: use the equivalent
        // ½ logdet(C + S) - ½ logdet(S), which stays finite
        Err(Error::Numerical(_)) => {
            let ld_cs: f64 = 2.0 * block.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let ld_s: f64 = s_eff.iter().map(|s| s.ln()).sum();
            0.5 * (ld_cs - ld_s)
        }
        Err(e) => return Err(e),
    };
    let q = parts.rows.len();
    let l_inv = block
        .solve_lower_triangular(&DMatrix::identity(q, q))
        .ok_or_else(|| Error::numerical("batch block inversion failed"))?;
    let inverse = l_inv.tr_mul(&l_inv);
    Ok((gain, inverse, s_eff))
}
