//! MAP estimation of kernel hyperparameters.

use super::data::TrainingData;
use super::kernel::KernelParams;
use super::linalg::jittered_cholesky;
use super::model::{rows_of, GpModel};
use crate::error::{Error, Result};
use crate::rng::rng_from;
use nalgebra::DMatrix;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Gamma prior in (concentration, rate) form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub concentration: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn ln_density(&self, x: f64) -> f64 {
        let a = self.concentration;
        let b = self.rate;
        a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x
    }

    /// d ln p(x) / d ln x.
    fn dlog(&self, x: f64) -> f64 {
        (self.concentration - 1.0) - self.rate * x
    }

    pub fn mode(&self) -> f64 {
        ((self.concentration - 1.0) / self.rate).max(f64::MIN_POSITIVE)
    }
}

pub const LENGTHSCALE_PRIOR: GammaPrior = GammaPrior {
    concentration: 3.0,
    rate: 6.0,
};
pub const AMPLITUDE_PRIOR: GammaPrior = GammaPrior {
    concentration: 2.0,
    rate: 0.15,
};

const LN_AMPLITUDE_RANGE: (f64, f64) = (-13.815_510_557_964_274, 6.907_755_278_982_137); // 1e-6 ..= 1e3
const LN_LENGTHSCALE_RANGE: (f64, f64) = (-6.907_755_278_982_137, 4.605_170_185_988_092); // 1e-3 ..= 1e2

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub restarts: usize,
    pub steps: usize,
    /// Adam learning rate in log-parameter space.
    pub step_size: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 8,
            steps: 200,
            step_size: 0.05,
        }
    }
}

/// Pairwise kernel pieces reused across one objective evaluation.
struct Pairwise {
    points: Vec<Vec<f64>>,
}

impl Pairwise {
    /// Objective value and gradient in `[ln A, ln l_1, ..]`.
    fn objective(
        &self,
        data: &TrainingData,
        theta: &[f64],
        with_prior: bool,
    ) -> Result<(f64, Vec<f64>)> {
        let d = data.dim();
        let n = data.len();
        let amplitude = theta[0].exp();
        let ls: Vec<f64> = theta[1..].iter().map(|t| t.exp()).collect();
        let params = KernelParams {
            amplitude,
            lengthscales: ls.clone(),
        };
        let m = GpModel::training_covariance(&self.points, data.noise_variances(), &params);
        let (chol, _) = jittered_cholesky(&m, amplitude)?;
        let alpha = chol.solve(data.outputs());
        let logdet: f64 = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        let mut value = -0.5 * data.outputs().dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * LN_2PI;

        let inv = chol.inverse();
        let mut grad = vec![0.0; d + 1];
        // ½ tr((ααᵀ − M⁻¹) ∂K/∂θ), summed over the lower triangle
        for i in 0..n {
            let gamma_ii = alpha[i] * alpha[i] - inv[(i, i)];
            grad[0] += 0.5 * gamma_ii * amplitude;
            for j in 0..i {
                let gamma = alpha[i] * alpha[j] - inv[(i, j)];
                let (pi, pj) = (&self.points[i], &self.points[j]);
                let mut r2 = 0.0;
                for k in 0..d {
                    let t = (pi[k] - pj[k]) / ls[k];
                    r2 += t * t;
                }
                let s = SQRT5 * r2.sqrt();
                let e = (-s).exp();
                let kval = amplitude * (1.0 + s + s * s / 3.0) * e;
                grad[0] += gamma * kval;
                let common = gamma * (5.0 / 3.0) * amplitude * (1.0 + s) * e;
                for k in 0..d {
                    let t = (pi[k] - pj[k]) / ls[k];
                    grad[k + 1] += common * t * t;
                }
            }
        }
        if with_prior {
            value += AMPLITUDE_PRIOR.ln_density(amplitude);
            grad[0] += AMPLITUDE_PRIOR.dlog(amplitude);
            for k in 0..d {
                value += LENGTHSCALE_PRIOR.ln_density(ls[k]);
                grad[k + 1] += LENGTHSCALE_PRIOR.dlog(ls[k]);
            }
        }
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical("marginal likelihood is not finite"));
        }
        Ok((value, grad))
    }
}

/// `−½ yᵀ M_D⁻¹ y − ½ log det M_D − (N/2) log 2π`, with the jitter policy
/// applied to `M_D`.
pub fn log_marginal_likelihood(data: &TrainingData, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    if params.dim() != data.dim() {
        return Err(Error::invalid("kernel and data dimensions differ"));
    }
    let points = rows_of(data.inputs());
    let m = GpModel::training_covariance(&points, data.noise_variances(), params);
    let (chol, _) = jittered_cholesky(&m, params.amplitude)?;
    let alpha = chol.solve(data.outputs());
    let logdet: f64 = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    Ok(-0.5 * data.outputs().dot(&alpha) - 0.5 * logdet - 0.5 * data.len() as f64 * LN_2PI)
}

/// Gradient of the log marginal likelihood in log-parameter space,
/// `[d/d ln A, d/d ln l_1, ..]`.
pub fn log_marginal_likelihood_gradient(
    data: &TrainingData,
    params: &KernelParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let pw = Pairwise {
        points: rows_of(data.inputs()),
    };
    Ok(pw.objective(data, &pack(params), false)?.1)
}

/// Log marginal likelihood plus the log prior densities of all parameters.
pub fn log_posterior_density(data: &TrainingData, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    let pw = Pairwise {
        points: rows_of(data.inputs()),
    };
    Ok(pw.objective(data, &pack(params), true)?.0)
}

fn pack(params: &KernelParams) -> Vec<f64> {
    std::iter::once(params.amplitude.ln())
        .chain(params.lengthscales.iter().map(|l| l.ln()))
        .collect()
}

fn unpack(theta: &[f64]) -> KernelParams {
    KernelParams {
        amplitude: theta[0].exp(),
        lengthscales: theta[1..].iter().map(|t| t.exp()).collect(),
    }
}

fn clamp_theta(theta: &mut [f64]) {
    theta[0] = theta[0].clamp(LN_AMPLITUDE_RANGE.0, LN_AMPLITUDE_RANGE.1);
    for t in &mut theta[1..] {
        *t = t.clamp(LN_LENGTHSCALE_RANGE.0, LN_LENGTHSCALE_RANGE.1);
    }
}

/// MAP kernel hyperparameters with the default restart schedule.
pub fn fit_hyperparameters(data: &TrainingData, seed: u64) -> Result<KernelParams> {
    fit_hyperparameters_with(data, seed, &FitConfig::default())
}

/// Multi-start Adam ascent on log marginal likelihood + log prior in
/// log-parameter space. Restart 0 starts at the prior modes, the others at
/// prior draws.
pub fn fit_hyperparameters_with(
    data: &TrainingData,
    seed: u64,
    config: &FitConfig,
) -> Result<KernelParams> {
    if data.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: data.len(),
        });
    }
    if config.restarts == 0 || config.steps == 0 || !(config.step_size > 0.0) {
        return Err(Error::invalid(
            "fit needs at least one restart, one step and a positive step size",
        ));
    }
    let d = data.dim();
    let pw = Pairwise {
        points: rows_of(data.inputs()),
    };
    let mut rng = rng_from(seed, &[0x0066_6974]);
    let amp_draw =
        Gamma::new(AMPLITUDE_PRIOR.concentration, 1.0 / AMPLITUDE_PRIOR.rate).expect("valid prior");
    let ls_draw = Gamma::new(
        LENGTHSCALE_PRIOR.concentration,
        1.0 / LENGTHSCALE_PRIOR.rate,
    )
    .expect("valid prior");

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    for restart in 0..config.restarts {
        let mut theta: Vec<f64> = if restart == 0 {
            std::iter::once(AMPLITUDE_PRIOR.mode().ln())
                .chain(std::iter::repeat_n(LENGTHSCALE_PRIOR.mode().ln(), d))
                .collect()
        } else {
            std::iter::once(amp_draw.sample(&mut rng).ln())
                .chain((0..d).map(|_| ls_draw.sample(&mut rng).ln()))
                .collect()
        };
        clamp_theta(&mut theta);
        match adam_ascent(&pw, data, theta, config) {
            Ok((value, theta)) => {
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, theta));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, theta)) => Ok(unpack(&theta)),
        None => {
            Err(last_err
                .unwrap_or_else(|| Error::numerical("no restart produced a finite objective")))
        }
    }
}

/// Returns the best iterate seen.
fn adam_ascent(
    pw: &Pairwise,
    data: &TrainingData,
    mut theta: Vec<f64>,
    config: &FitConfig,
) -> Result<(f64, Vec<f64>)> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let p = theta.len();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let (mut value, mut grad) = pw.objective(data, &theta, true)?;
    let mut best = (value, theta.clone());
    for step in 1..=config.steps {
        let norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if norm < 1e-6 * (1.0 + data.len() as f64).sqrt() {
            break;
        }
        for i in 0..p {
            m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
            v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - B1.powi(step as i32));
            let v_hat = v[i] / (1.0 - B2.powi(step as i32));
            theta[i] += config.step_size * m_hat / (v_hat.sqrt() + EPS);
        }
        clamp_theta(&mut theta);
        match pw.objective(data, &theta, true) {
            Ok((val, g)) => {
                value = val;
                grad = g;
            }
            Err(_) => break,
        }
        if value > best.0 {
            best = (value, theta.clone());
        }
    }
    Ok(best)
}

/// Dense `M_D` used by tests and diagnostics.
pub fn training_matrix(data: &TrainingData, params: &KernelParams) -> DMatrix<f64> {
    GpModel::training_covariance(&rows_of(data.inputs()), data.noise_variances(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::OutputScaling;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, n: usize, d: usize) -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>());
        let y = DVector::from_fn(n, |i, _| (6.0 * x[(i, 0)]).sin() + 0.1 * rng.gen::<f64>());
        let noise = DVector::from_fn(n, |_, _| rng.gen_range(1e-3..1e-2));
        TrainingData::new(x, y, noise).unwrap()
    }

    #[test]
    fn single_point_hand_computation() {
        let x = DMatrix::from_row_slice(1, 1, &[0.3]);
        let y = 0.8;
        let data = TrainingData::homoskedastic(x, DVector::from_vec(vec![y]), 0.5).unwrap();
        let params = KernelParams::new(0.5, vec![0.2]).unwrap();
        // M_D = 1.0 up to the 1e-8·A jitter
        let expected = -0.5 * y * y - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let got = log_marginal_likelihood(&data, &params).unwrap();
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = random_data(4, 12, 2);
        let params = KernelParams::new(1.3, vec![0.25, 0.6]).unwrap();
        let grad = log_marginal_likelihood_gradient(&data, &params).unwrap();
        let theta = pack(&params);
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (log_marginal_likelihood(&data, &unpack(&tp)).unwrap()
                - log_marginal_likelihood(&data, &unpack(&tm)).unwrap())
                / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn duplicate_point_with_large_noise_is_continuous() {
        let data = random_data(8, 6, 1);
        let params = KernelParams::new(1.0, vec![0.3]).unwrap();
        let base = log_marginal_likelihood(&data, &params).unwrap();
        let mut x = data.inputs().clone().insert_row(6, 0.0);
        x[(6, 0)] = x[(0, 0)];
        let mut y = data.outputs().clone().insert_row(6, 0.0);
        y[6] = data.outputs()[0];
        let noise = data.noise_variances().clone().insert_row(6, 1e6);
        let dup = TrainingData::new(x, y, noise).unwrap();
        let with_dup = log_marginal_likelihood(&dup, &params).unwrap();
        // a nearly uninformative duplicate costs about -½ log(2π·1e6)
        let expected_shift = -0.5 * (2.0 * std::f64::consts::PI * 1e6).ln();
        assert!((with_dup - base - expected_shift).abs() < 1e-3);
    }

    #[test]
    fn fit_is_deterministic_and_needs_two_points() {
        let data = random_data(2, 15, 2);
        let a = fit_hyperparameters(&data, 17).unwrap();
        let b = fit_hyperparameters(&data, 17).unwrap();
        assert_eq!(a, b);
        let one = TrainingData::homoskedastic(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DVector::from_vec(vec![1.0]),
            0.0,
        )
        .unwrap();
        assert!(matches!(
            fit_hyperparameters(&one, 0),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn fit_improves_on_the_prior_mode() {
        let data = random_data(6, 20, 2);
        let fitted = fit_hyperparameters(&data, 1).unwrap();
        let mode =
            KernelParams::new(AMPLITUDE_PRIOR.mode(), vec![LENGTHSCALE_PRIOR.mode(); 2]).unwrap();
        assert!(
            log_posterior_density(&data, &fitted).unwrap()
                >= log_posterior_density(&data, &mode).unwrap()
        );
    }

    #[test]
    fn constant_outputs_give_near_zero_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 20;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen::<f64>());
        let raw = vec![4.2; n];
        let scaling = OutputScaling::fit(&raw);
        let y = DVector::from_iterator(n, raw.iter().map(|v| scaling.standardize(*v)));
        let data = TrainingData::homoskedastic(x, y, 1e-6).unwrap();
        let fitted = fit_hyperparameters(&data, 3).unwrap();
        assert!(fitted.amplitude <= 1e-2, "amplitude {}", fitted.amplitude);
    }
}
