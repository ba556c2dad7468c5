//! Closed-form expectation of the softmax-weighted sum of a Gaussian vector.
//!
//! `ln Σ exp(β f)` is expanded to second order around `a = μ`, which turns
//! the expectation into a ratio of Gaussian integrals. With `w` the softmax
//! weights at `μ`, `W = diag(w) - w wᵀ` and `U = (I + β² C W)⁻¹`:
//!
//! ```text
//! E[Σ softmax(βf)_i f_i] ≈ sqrt(det U) Σ_i w_i exp(c_i) ν_i
//! ν_i = β [U C (e_i - w)]_i + μ_i
//! c_i = (β²/2) (e_i - w)ᵀ U C (e_i - w)
//! ```
//!
//! `U C` is only ever formed through solves with `I + β² C W`.

use super::config::MAX_BETA;
use crate::error::{Error, Result};
use crate::gp::linalg::{logdet_lu, symmetrize};
use nalgebra::{DMatrix, DVector};

/// Softmax state at the expansion point `a = μ`.
#[derive(Debug, Clone)]
pub struct SoftmaxExpansion {
    /// Inverse temperature actually used (after clamping to [`MAX_BETA`]).
    pub beta: f64,
    /// Set when the requested β exceeded [`MAX_BETA`].
    pub beta_clamped: bool,
    /// Softmax weights of the real batch points.
    pub weights: DVector<f64>,
    /// Weight of the optional `y_max` reference term; zero when unused.
    pub reference_weight: f64,
    /// Set when the reference mass was capped so real points keep `α`.
    pub reference_capped: bool,
    pub alpha: f64,
    /// `diag(w) - w wᵀ`.
    pub w_matrix: DMatrix<f64>,
    /// `U⁻¹ = I + β² C W`.
    pub u_inverse: DMatrix<f64>,
    pub log_det_u: f64,
    /// `K = sqrt(det U)`.
    pub det_ratio: f64,
    // U C and U C (I - w 1ᵀ), kept for the adjoint
    uc: DMatrix<f64>,
    z: DMatrix<f64>,
    c: DVector<f64>,
    nu: DVector<f64>,
}

impl SoftmaxExpansion {
    pub fn exponents(&self) -> &DVector<f64> {
        &self.c
    }

    /// `ν^(i)_i` for every i.
    pub fn shifted_means(&self) -> &DVector<f64> {
        &self.nu
    }
}

/// Mass `exp(β_y Δy_max)` of the reference term:
/// `min(((1-α)/α) N, exp(β Δy_max))`, evaluated in log space.
pub fn beta_y(beta: f64, delta_y_max: f64, softmax_partial_sum: f64, alpha: f64) -> f64 {
    reference_mass(beta, delta_y_max, softmax_partial_sum, alpha).0
}

fn reference_mass(beta: f64, delta_y_max: f64, partial_sum: f64, alpha: f64) -> (f64, bool) {
    let ln_cap = ((1.0 - alpha) / alpha).ln() + partial_sum.ln();
    let ln_ref = beta * delta_y_max;
    if ln_ref > ln_cap {
        (ln_cap.exp(), true)
    } else {
        (ln_ref.exp(), false)
    }
}

/// Second-order closed form of `E[Σ softmax(βf)_i f_i]` for `f ~ N(mean, covariance)`.
pub fn softmax_expectation(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    beta: f64,
    y_max: Option<f64>,
    alpha: f64,
) -> Result<(f64, SoftmaxExpansion)> {
    let q = mean.len();
    if q == 0 {
        return Err(Error::invalid(
            "softmax expectation needs at least one point",
        ));
    }
    if covariance.shape() != (q, q) {
        return Err(Error::invalid(format!(
            "covariance is {:?}, expected {q}x{q}",
            covariance.shape()
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let beta_clamped = beta > MAX_BETA;
    if beta_clamped {
        log::warn!("softmax beta {beta} exceeds {MAX_BETA}; clamping");
    }
    let beta = beta.min(MAX_BETA);

    let shift = mean.iter().fold(f64::NEG_INFINITY, |a, &m| a.max(m));
    let expo = mean.map(|m| (beta * (m - shift)).exp());
    let partial: f64 = expo.sum();
    let (mass, reference_capped) = match y_max {
        Some(y) => reference_mass(beta, y - shift, partial, alpha),
        None => (0.0, false),
    };
    let total = partial + mass;
    let weights = expo / total;
    let reference_weight = mass / total;

    let w_matrix = DMatrix::from_diagonal(&weights) - &weights * weights.transpose();
    let b2 = beta * beta;
    let u_inverse = DMatrix::identity(q, q) + covariance * &w_matrix * b2;
    let lu = u_inverse.clone().lu();
    let uc = lu
        .solve(covariance)
        .ok_or_else(|| Error::numerical("I + β²CW is singular"))?;
    let (ld, sign) = logdet_lu(&u_inverse);
    if sign <= 0.0 || !ld.is_finite() {
        return Err(Error::numerical("I + β²CW has a nonpositive determinant"));
    }
    let det_ratio = (-0.5 * ld).exp();

    // columns of B = I - w 1ᵀ are e_i - w
    let b = DMatrix::identity(q, q) - &weights * DVector::from_element(q, 1.0).transpose();
    let z = &uc * &b;
    let c = DVector::from_fn(q, |i, _| 0.5 * b2 * b.column(i).dot(&z.column(i)));
    let nu = DVector::from_fn(q, |i, _| beta * z[(i, i)] + mean[i]);
    let value = det_ratio * (0..q).map(|i| weights[i] * c[i].exp() * nu[i]).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::numerical("softmax expectation is not finite"));
    }
    Ok((
        value,
        SoftmaxExpansion {
            beta,
            beta_clamped,
            weights,
            reference_weight,
            reference_capped,
            alpha,
            w_matrix,
            u_inverse,
            log_det_u: -ld,
            det_ratio,
            uc,
            z,
            c,
            nu,
        },
    ))
}

/// Gradient of the closed form with respect to `(mean, covariance)`.
///
/// Reverse-mode pass through the weights, `U⁻¹ = I + β² C W`, the
/// determinant ratio and the per-point exponents. The covariance adjoint
/// is returned symmetrized.
pub(crate) fn softmax_expectation_adjoint(
    exp: &SoftmaxExpansion,
    covariance: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let q = exp.weights.len();
    let beta = exp.beta;
    let b2 = beta * beta;
    let w = &exp.weights;
    let k = exp.det_ratio;
    let g = DVector::from_fn(q, |i, _| w[i] * exp.c[i].exp());
    let s: f64 = g.dot(&exp.nu);

    let nu_bar = &g * k;
    let c_bar = g.component_mul(&exp.nu) * k;
    let mut w_bar = DVector::from_fn(q, |i, _| k * exp.c[i].exp() * exp.nu[i]);
    let mut mean_bar = nu_bar.clone();

    let h = &c_bar * (0.5 * b2);
    let b = DMatrix::identity(q, q) - w * DVector::from_element(q, 1.0).transpose();
    let mut z_bar = &b * DMatrix::from_diagonal(&h);
    for i in 0..q {
        z_bar[(i, i)] += beta * nu_bar[i];
    }
    let mut b_bar = &exp.z * DMatrix::from_diagonal(&h);
    let p_bar = &z_bar * b.transpose();
    b_bar += exp.uc.transpose() * &z_bar;
    for i in 0..q {
        w_bar[i] -= b_bar.row(i).sum();
    }

    let r_inv = exp
        .u_inverse
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::identity(q, q));
    let y = r_inv.transpose() * &p_bar;
    let mut cov_bar = y.clone();
    let r_bar = -(&y * exp.uc.transpose()) - r_inv.transpose() * (0.5 * s * k);
    cov_bar += &r_bar * exp.w_matrix.transpose() * b2;
    let w_mat_bar = covariance.transpose() * &r_bar * b2;
    for i in 0..q {
        let mut acc = w_mat_bar[(i, i)];
        for j in 0..q {
            acc -= (w_mat_bar[(i, j)] + w_mat_bar[(j, i)]) * w[j];
        }
        w_bar[i] += acc;
    }

    // weights → mean; a capped reference mass scales with the real-point sum
    let phi = if exp.reference_capped {
        1.0 / exp.alpha
    } else {
        1.0
    };
    let sw = w.dot(&w_bar);
    for j in 0..q {
        mean_bar[j] += beta * w[j] * (w_bar[j] - phi * sw);
    }
    symmetrize(&mut cov_bar);
    (mean_bar, cov_bar)
}

/// Closed-form value together with its gradient with respect to the mean
/// and (symmetric) covariance.
pub fn softmax_expectation_gradient(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    beta: f64,
    y_max: Option<f64>,
    alpha: f64,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let (value, exp) = softmax_expectation(mean, covariance, beta, y_max, alpha)?;
    let (mean_bar, cov_bar) = softmax_expectation_adjoint(&exp, covariance);
    Ok((value, mean_bar, cov_bar))
}

/// Exponential of the entropy of the softmax weights, reference term included.
pub fn effective_points(expansion: &SoftmaxExpansion) -> f64 {
    let entropy: f64 = expansion
        .weights
        .iter()
        .chain(std::iter::once(&expansion.reference_weight))
        .filter(|w| **w > 0.0)
        .map(|w| -w * w.ln())
        .sum();
    entropy.exp()
}

/// Effective number of points for an arbitrary weight vector.
pub fn effective_points_of(weights: &[f64]) -> f64 {
    let entropy: f64 = weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| -w * w.ln())
        .sum();
    entropy.exp()
}
