//! The round-based experiment protocol and its metrics.
//!
//! Round 0 observes seed points drawn away from the optima. Every later
//! round refits the surrogate from scratch on all data, optimizes the
//! acquisition for a batch on the unit cube, and observes it. The last round
//! switches exploration off.

use crate::acquisition::{
    kappa_from_t_prime, AcquisitionConfig, BatchNoise, BeeboObjective, QUcb, QUcbObjective,
    SoftmaxBeta, DEFAULT_MC_SAMPLES,
};
use crate::error::{Error, Result};
use crate::gp::{
    fit_hyperparameters_with, FitConfig, GpModel, InputScaling, KernelParams, OutputScaling,
    TrainingData, AMPLITUDE_PRIOR, LENGTHSCALE_PRIOR,
};
use crate::optimizer::{optimize_batch, BatchObjective, OptimizerConfig};
use crate::problems::{
    evaluate_batch, observe, problem, sample_seed_points, NoiseKind, NoiseSurrogate, ProblemSpec,
    StandardizedNoise,
};
use crate::rng::{derive_seed, rng_from};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Smallest noise variance, in standardized output units, used for the
/// surrogate and the fantasized batch observations.
pub const NOISE_FLOOR: f64 = 1e-4;
/// Minimum distance of seed points to every optimum.
pub const SEED_MIN_DIST: f64 = 0.5;
/// Uniform points used to estimate the regret of a random batch.
pub const RANDOM_REFERENCE_SAMPLES: usize = 10_000;

const LABEL_SEED_POINTS: u64 = 0x7365_6564;
const LABEL_FIT: u64 = 0x66_6974;
const LABEL_NOISE_FIT: u64 = 0x6e_6669;
const LABEL_OPTIMIZE: u64 = 0x6f_7074;
const LABEL_OBSERVE: u64 = 0x6f_6273;
const LABEL_QUCB: u64 = 0x0075_6362;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MeanBeebo,
    MaxBeebo,
    QUcb,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MeanBeebo => "mean-beebo",
            Method::MaxBeebo => "max-beebo",
            Method::QUcb => "q-ucb",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exploration setting, either as scaled temperature `T'` or UCB `κ`;
/// the two are paired through `κ = 4 T'²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeOff {
    TPrime(f64),
    Kappa(f64),
}

impl TradeOff {
    pub fn t_prime(&self) -> f64 {
        match *self {
            TradeOff::TPrime(t) => t,
            TradeOff::Kappa(k) => 0.5 * k.max(0.0).sqrt(),
        }
    }

    pub fn kappa(&self) -> f64 {
        match *self {
            TradeOff::TPrime(t) => kappa_from_t_prime(t),
            TradeOff::Kappa(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub q: usize,
    pub rounds: usize,
    pub method: Method,
    pub trade_off: TradeOff,
    pub replicate_seed: u64,
    pub final_round_exploit: bool,
    /// Number of seed points; the batch size when `None`.
    pub initial_points: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub fit: FitConfig,
    pub mc_samples: usize,
}

impl ExperimentConfig {
    pub fn new(problem: &str, q: usize, method: Method, trade_off: TradeOff, seed: u64) -> Self {
        ExperimentConfig {
            problem: problem.to_string(),
            q,
            rounds: 10,
            method,
            trade_off,
            replicate_seed: seed,
            final_round_exploit: true,
            initial_points: None,
            optimizer: OptimizerConfig::default(),
            fit: FitConfig::default(),
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<ProblemSpec> {
        if self.q == 0 {
            return Err(Error::invalid("Q >= 1 required"));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("rounds >= 1 required"));
        }
        if self.initial_points == Some(0) {
            return Err(Error::invalid("initial_points >= 1 required"));
        }
        let t = self.trade_off.t_prime();
        if !(t.is_finite() && t >= 0.0) || !(self.trade_off.kappa() >= 0.0) {
            return Err(Error::invalid("trade-off must be finite and nonnegative"));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples >= 1 required"));
        }
        self.optimizer.validate()?;
        problem(&self.problem)
    }
}

/// Everything observed in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    /// Points in original problem coordinates.
    pub batch: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Noise-free objective values of the batch.
    pub true_values: Vec<f64>,
    /// Best noise-free value acquired so far, this round included.
    pub best_so_far: f64,
    /// Optimized acquisition value; absent for the seed round.
    pub acquisition_value: Option<f64>,
    pub wall_time: f64,
}

/// A run that stopped early; `completed` holds the rounds that finished.
#[derive(Debug)]
pub struct ExperimentError {
    pub completed: Vec<RoundRecord>,
    pub source: Error,
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run failed after {} completed rounds: {}",
            self.completed.len(),
            self.source
        )
    }
}

impl std::error::Error for ExperimentError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Surrogate state at the start of a round.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub model: GpModel,
    pub inputs: InputScaling,
    pub outputs: OutputScaling,
    /// Noise model for the observations at batch points, if heteroskedastic.
    pub noise_surrogate: Option<NoiseSurrogate>,
    /// Standardized noise of batch points for homoskedastic problems.
    pub batch_noise: f64,
}

impl Surrogate {
    /// Batch noise as seen by the acquisition.
    pub fn noise_field(&self) -> Option<StandardizedNoise<'_>> {
        self.noise_surrogate.as_ref().map(|s| StandardizedNoise {
            surrogate: s,
            scale: 1.0 / (self.outputs.std * self.outputs.std),
            floor: NOISE_FLOOR,
        })
    }
}

fn stack(records: &[RoundRecord]) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let rows: Vec<&Vec<f64>> = records.iter().flat_map(|r| r.batch.iter()).collect();
    let d = rows.first().map_or(0, |r| r.len());
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let y: Vec<f64> = records
        .iter()
        .flat_map(|r| r.observations.iter().copied())
        .collect();
    let s: Vec<f64> = records
        .iter()
        .flat_map(|r| r.sigma2.iter().copied())
        .collect();
    (x, DVector::from_vec(y), DVector::from_vec(s))
}

/// Fit the surrogate on every record in `history` for round `round`.
pub fn surrogate_for_round(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    history: &[RoundRecord],
    round: usize,
) -> Result<Surrogate> {
    let (x, y, sigma2) = stack(history);
    let inputs = InputScaling::new(&problem.bounds)?;
    let outputs = OutputScaling::fit(y.as_slice());
    let x_unit = inputs.to_unit(&x);
    let y_std = y.map(|v| outputs.standardize(v));
    let var_scale = 1.0 / (outputs.std * outputs.std);
    let train_noise = sigma2.map(|s| (s * var_scale).max(NOISE_FLOOR));
    let data = TrainingData::new(x_unit.clone(), y_std, train_noise)?;
    let fit_seed = derive_seed(config.replicate_seed, &[LABEL_FIT, round as u64]);
    let kernel = if data.len() >= 2 {
        fit_hyperparameters_with(&data, fit_seed, &config.fit)?
    } else {
        KernelParams::isotropic(
            AMPLITUDE_PRIOR.mode(),
            LENGTHSCALE_PRIOR.mode(),
            problem.dim,
        )?
    };
    let model = GpModel::new(data, kernel)?;
    let (noise_surrogate, batch_noise) = match problem.noise {
        NoiseKind::None => (None, NOISE_FLOOR),
        NoiseKind::Constant(v) => (None, (v * var_scale).max(NOISE_FLOOR)),
        NoiseKind::Heteroskedastic => {
            let seed = derive_seed(config.replicate_seed, &[LABEL_NOISE_FIT, round as u64]);
            (
                Some(NoiseSurrogate::fit(&x_unit, &sigma2, seed)?),
                NOISE_FLOOR,
            )
        }
    };
    Ok(Surrogate {
        model,
        inputs,
        outputs,
        noise_surrogate,
        batch_noise,
    })
}

/// Whether exploration is switched off in `round`.
pub fn is_exploit_round(config: &ExperimentConfig, round: usize) -> bool {
    config.final_round_exploit && round == config.rounds
}

/// Acquisition settings for `method` in a round with the given exploration.
pub fn acquisition_for(
    method: Method,
    t_prime: f64,
    amplitude: f64,
    exploit: bool,
) -> AcquisitionConfig {
    let temperature = if exploit {
        0.0
    } else {
        t_prime * amplitude.sqrt()
    };
    match method {
        Method::MaxBeebo => {
            let beta = if exploit {
                SoftmaxBeta::Fixed(0.0)
            } else {
                SoftmaxBeta::AmplitudeScaled
            };
            AcquisitionConfig::max(temperature, beta)
        }
        _ => AcquisitionConfig::mean(temperature),
    }
}

/// Optimize the round's acquisition; returns the batch in original
/// coordinates and the acquisition value.
pub fn propose_batch(
    config: &ExperimentConfig,
    surrogate: &Surrogate,
    round: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let d = surrogate.inputs.dim();
    let exploit = is_exploit_round(config, round);
    let field = surrogate.noise_field();
    let noise = match &field {
        Some(f) => BatchNoise::Field(f),
        None => BatchNoise::Constant(surrogate.batch_noise),
    };
    let objective: Box<dyn BatchObjective + '_> = match config.method {
        Method::MeanBeebo | Method::MaxBeebo => Box::new(BeeboObjective {
            model: &surrogate.model,
            noise,
            config: acquisition_for(
                config.method,
                config.trade_off.t_prime(),
                surrogate.model.amplitude(),
                exploit,
            ),
        }),
        Method::QUcb => {
            let kappa = if exploit {
                0.0
            } else {
                config.trade_off.kappa()
            };
            let seed = derive_seed(config.replicate_seed, &[LABEL_QUCB, round as u64]);
            Box::new(QUcbObjective {
                model: &surrogate.model,
                estimator: QUcb::new(kappa, config.q, config.mc_samples, seed)?,
            })
        }
    };
    let opt = OptimizerConfig {
        seed: derive_seed(config.replicate_seed, &[LABEL_OPTIMIZE, round as u64]),
        ..config.optimizer.clone()
    };
    let result = optimize_batch(objective.as_ref(), &vec![(0.0, 1.0); d], config.q, &opt)?;
    Ok((surrogate.inputs.from_unit(&result.batch), result.value))
}

fn record(
    problem: &ProblemSpec,
    config: &ExperimentConfig,
    round: usize,
    batch: DMatrix<f64>,
    previous_best: f64,
    acquisition_value: Option<f64>,
    started: Instant,
) -> Result<RoundRecord> {
    let seed = derive_seed(config.replicate_seed, &[LABEL_OBSERVE, round as u64]);
    let (y, sigma2) = observe(problem, &batch, seed)?;
    let truth = evaluate_batch(problem, &batch)?;
    let best = truth.iter().copied().fold(previous_best, f64::max);
    Ok(RoundRecord {
        round_index: round,
        batch: batch
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        observations: y.iter().copied().collect(),
        sigma2: sigma2.iter().copied().collect(),
        true_values: truth.iter().copied().collect(),
        best_so_far: best,
        acquisition_value,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Run the protocol; returns `rounds + 1` records.
pub fn run_experiment(
    config: &ExperimentConfig,
) -> std::result::Result<Vec<RoundRecord>, ExperimentError> {
    let fail = |completed: Vec<RoundRecord>, source: Error| ExperimentError { completed, source };
    let problem = config.validate().map_err(|e| fail(Vec::new(), e))?;
    let mut records: Vec<RoundRecord> = Vec::with_capacity(config.rounds + 1);

    let started = Instant::now();
    let n0 = config.initial_points.unwrap_or(config.q);
    let seed = derive_seed(config.replicate_seed, &[LABEL_SEED_POINTS]);
    let first = sample_seed_points(&problem, n0, SEED_MIN_DIST, seed)
        .and_then(|x| record(&problem, config, 0, x, f64::NEG_INFINITY, None, started));
    match first {
        Ok(r) => records.push(r),
        Err(e) => return Err(fail(records, e)),
    }

    for round in 1..=config.rounds {
        let started = Instant::now();
        let previous_best = records.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far);
        let outcome = surrogate_for_round(config, &problem, &records, round)
            .and_then(|s| propose_batch(config, &s, round))
            .and_then(|(batch, value)| {
                record(
                    &problem,
                    config,
                    round,
                    batch,
                    previous_best,
                    Some(value),
                    started,
                )
            });
        match outcome {
            Ok(r) => {
                log::debug!(
                    "{} {} round {round}: best so far {:.6}",
                    config.problem,
                    config.method,
                    r.best_so_far
                );
                records.push(r);
            }
            Err(e) => return Err(fail(records, e)),
        }
    }
    Ok(records)
}

/// Min-max normalized best-so-far: 0 at the best seed value, 1 at the optimum.
pub fn normalized_best(records: &[RoundRecord], problem: &ProblemSpec) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("no records to normalize"))?;
    let best_seed = first
        .true_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let final_best = records.last().expect("non-empty").best_so_far;
    let span = problem.optimum_value - best_seed;
    if span <= 0.0 {
        return Ok(1.0);
    }
    Ok(((final_best - best_seed) / span).max(0.0))
}

/// Summed optimality gap of a batch, relative to that of a random batch.
pub fn relative_batch_regret(
    final_batch_values: &[f64],
    problem: &ProblemSpec,
    random_reference: f64,
) -> f64 {
    final_batch_values
        .iter()
        .map(|f| problem.optimum_value - f)
        .sum::<f64>()
        / random_reference
}

/// Mean optimality gap of one uniformly random point.
pub fn mean_random_regret(problem: &ProblemSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = rng_from(seed, &[0x0072_6566]);
    let mut x = vec![0.0; problem.dim];
    let mut total = 0.0;
    for _ in 0..samples {
        for (v, (lo, hi)) in x.iter_mut().zip(&problem.bounds) {
            *v = lo + (hi - lo) * rng.gen::<f64>();
        }
        total += problem.optimum_value - problem.value(&x);
    }
    total / samples as f64
}

/// Expected summed regret of a uniformly random batch of size `q`.
pub fn random_reference(problem: &ProblemSpec, q: usize, seed: u64) -> f64 {
    q as f64 * mean_random_regret(problem, RANDOM_REFERENCE_SAMPLES, seed)
}

/// Mean Euclidean distance of the batch rows to each listed optimum.
pub fn optima_distances(batch: &[Vec<f64>], problem: &ProblemSpec) -> Vec<f64> {
    problem
        .optima
        .iter()
        .map(|o| {
            batch
                .iter()
                .map(|x| {
                    x.iter()
                        .zip(o)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                / batch.len().max(1) as f64
        })
        .collect()
}

/// Pairwise-distance spread of a batch: mean over distinct pairs.
pub fn mean_pairwise_distance(batch: &[Vec<f64>]) -> f64 {
    let n = batch.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += batch[i]
                .iter()
                .zip(&batch[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem: String,
    pub d: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub method: Method,
    /// `T'`; for q-UCB the paired `½√κ`.
    pub trade_off: f64,
    pub replicate: usize,
    pub seed: u64,
    pub normalized_best: f64,
    #[serde(rename = "R_rel")]
    pub r_rel: f64,
    pub random_reference: f64,
    pub per_round_best: Vec<f64>,
    /// Per round, mean distance to each optimum.
    pub distances: Vec<Vec<f64>>,
}

/// Metrics of a completed run.
pub fn summarize(
    config: &ExperimentConfig,
    replicate: usize,
    records: &[RoundRecord],
    problem: &ProblemSpec,
    random_reference: f64,
) -> Result<ResultRow> {
    let last = records
        .last()
        .ok_or_else(|| Error::invalid("no records to summarize"))?;
    Ok(ResultRow {
        problem: problem.id.clone(),
        d: problem.dim,
        q: config.q,
        method: config.method,
        trade_off: config.trade_off.t_prime(),
        replicate,
        seed: config.replicate_seed,
        normalized_best: normalized_best(records, problem)?,
        r_rel: relative_batch_regret(&last.true_values, problem, random_reference),
        random_reference,
        per_round_best: records.iter().map(|r| r.best_so_far).collect(),
        distances: records
            .iter()
            .map(|r| optima_distances(&r.batch, problem))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_records(seed_values: &[f64], finals: &[f64]) -> Vec<RoundRecord> {
        let mk = |i: usize, v: &[f64], best: f64| RoundRecord {
            round_index: i,
            batch: vec![vec![0.0, 0.0]; v.len()],
            observations: v.to_vec(),
            sigma2: vec![0.0; v.len()],
            true_values: v.to_vec(),
            best_so_far: best,
            acquisition_value: None,
            wall_time: 0.0,
        };
        let b0 = seed_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let b1 = finals.iter().copied().fold(b0, f64::max);
        vec![mk(0, seed_values, b0), mk(1, finals, b1)]
    }

    #[test]
    fn normalized_best_formula() {
        let mut p = problem("ackley-2").unwrap();
        p.optimum_value = 10.0;
        assert!(
            (normalized_best(&fake_records(&[5.0, 1.0], &[8.0]), &p).unwrap() - 0.6).abs() < 1e-12
        );
        assert_eq!(
            normalized_best(&fake_records(&[5.0], &[3.0]), &p).unwrap(),
            0.0
        );
        assert_eq!(
            normalized_best(&fake_records(&[5.0], &[10.0]), &p).unwrap(),
            1.0
        );
        assert_eq!(
            normalized_best(&fake_records(&[10.0], &[3.0]), &p).unwrap(),
            1.0
        );
    }

    #[test]
    fn regret_at_optimum_is_zero() {
        let p = problem("branin-2").unwrap();
        let values = vec![p.optimum_value; 4];
        assert_eq!(relative_batch_regret(&values, &p, 3.0), 0.0);
    }

    #[test]
    fn distances_to_two_optima() {
        let p = problem("branin-2").unwrap();
        let batch = vec![p.optima[0].clone(); 3];
        let d = optima_distances(&batch, &p);
        assert_eq!(d[0], 0.0);
        let expect = ((p.optima[0][0] - p.optima[1][0]).powi(2)
            + (p.optima[0][1] - p.optima[1][1]).powi(2))
        .sqrt();
        assert!((d[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn trade_off_pairing() {
        assert_eq!(TradeOff::TPrime(0.5).kappa(), 1.0);
        assert_eq!(TradeOff::Kappa(4.0).t_prime(), 1.0);
    }

    #[test]
    fn exploit_round_switches_everything_off() {
        let c = acquisition_for(Method::MaxBeebo, 2.0, 4.0, true);
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.softmax_beta, SoftmaxBeta::Fixed(0.0));
        let c = acquisition_for(Method::MeanBeebo, 2.0, 4.0, false);
        assert_eq!(c.temperature, 4.0);
    }
}
