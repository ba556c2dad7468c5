//! Upper-confidence-bound pieces: the κ ↔ T bridge and the Monte-Carlo q-UCB
//! baseline built on the reparameterization `f = μ + L z`.

use crate::error::{Error, Result};
use crate::gp::linalg::{jittered_cholesky, symmetrize};
use crate::gp::GpModel;
use crate::rng::sobol_normals;
use nalgebra::{DMatrix, DVector};

/// `(T, T')` with `T = ½·√A·√κ` and `T' = T/√A = ½·√κ`.
///
/// With this choice a single-point acquisition and UCB have equal gradients
/// where the posterior variance is `A/4`.
pub fn temperature_from_kappa(kappa: f64, amplitude: f64) -> (f64, f64) {
    let t_prime = 0.5 * kappa.max(0.0).sqrt();
    (t_prime * amplitude.sqrt(), t_prime)
}

/// Inverse of the bridge: `κ = 4 T'²`.
pub fn kappa_from_t_prime(t_prime: f64) -> f64 {
    4.0 * t_prime * t_prime
}

/// q-UCB with a fixed set of quasi-random base samples, so the estimator is a
/// deterministic, almost-everywhere differentiable function of the batch.
#[derive(Debug, Clone)]
pub struct QUcb {
    kappa: f64,
    samples: Vec<Vec<f64>>,
}

impl QUcb {
    pub fn new(kappa: f64, batch_size: usize, mc_samples: usize, seed: u64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::invalid(format!(
                "kappa must be finite and nonnegative, got {kappa}"
            )));
        }
        if mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be at least 1"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(QUcb {
            kappa,
            samples: sobol_normals(mc_samples, batch_size, seed),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Estimator value and, optionally, its gradient with respect to the batch.
    pub fn evaluate(
        &self,
        model: &GpModel,
        batch: &DMatrix<f64>,
        with_gradient: bool,
    ) -> Result<(f64, Option<DMatrix<f64>>)> {
        let parts = model.posterior_parts(batch)?;
        let q = parts.rows.len();
        if self.samples.first().map(Vec::len) != Some(q) {
            return Err(Error::invalid(format!(
                "estimator was built for batches of {}, got {q}",
                self.samples.first().map_or(0, Vec::len)
            )));
        }
        let mean = &parts.posterior.mean;
        let mut mean_bar = DVector::zeros(q);

        if self.kappa == 0.0 {
            let (best, value) = argmax(mean.iter().copied());
            mean_bar[best] = 1.0;
            let grad = with_gradient
                .then(|| model.posterior_adjoint(&parts, &mean_bar, &DMatrix::zeros(q, q)));
            return Ok((value, grad));
        }

        let (chol, _) = jittered_cholesky(&parts.posterior.covariance, model.amplitude())?;
        let l = chol.unpack();
        let scale = (self.kappa * std::f64::consts::FRAC_PI_2).sqrt();
        let s = self.samples.len() as f64;
        let mut l_bar = DMatrix::zeros(q, q);
        let mut total = 0.0;
        let mut v = vec![0.0; q];
        for z in &self.samples {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
            }
            let (best, value) = argmax((0..q).map(|i| mean[i] + scale * v[i].abs()));
            total += value;
            if with_gradient {
                mean_bar[best] += 1.0 / s;
                let sign = v[best].signum();
                for j in 0..=best {
                    l_bar[(best, j)] += scale / s * sign * z[j];
                }
            }
        }
        let value = total / s;
        if !value.is_finite() {
            return Err(Error::numerical("q-UCB value is not finite"));
        }
        let grad = if with_gradient {
            let cov_bar = cholesky_backward(&l, &l_bar)?;
            Some(model.posterior_adjoint(&parts, &mean_bar, &cov_bar))
        } else {
            None
        };
        Ok((value, grad))
    }
}

/// `(1/S) Σ_s max_q [μ_q + √(κπ/2)·|(L z_s)_q|]` with `S` scrambled-Sobol normals.
pub fn qucb_score(
    model: &GpModel,
    batch: &DMatrix<f64>,
    kappa: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<f64> {
    Ok(QUcb::new(kappa, batch.nrows(), mc_samples, seed)?
        .evaluate(model, batch, false)?
        .0)
}

/// First index of the maximum and the maximum itself.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
}

/// Adjoint of `C ↦ chol(C)`: maps `L̄` (lower triangular) to a symmetric `C̄`.
pub(crate) fn cholesky_backward(l: &DMatrix<f64>, l_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let mut phi = l.tr_mul(l_bar);
    for i in 0..n {
        phi[(i, i)] *= 0.5;
        for j in (i + 1)..n {
            phi[(i, j)] = 0.0;
        }
    }
    // L⁻ᵀ Φ L⁻¹
    let right = l
        .tr_solve_lower_triangular(&phi.transpose())
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?
        .transpose();
    let mut c_bar = l
        .tr_solve_lower_triangular(&right)
        .ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
    symmetrize(&mut c_bar);
    Ok(c_bar)
}
