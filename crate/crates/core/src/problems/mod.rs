//! Synthetic maximization problems.
//!
//! Standard minimization benchmarks are negated so that every problem is
//! maximized. Problems are addressed by `"name-d"` ids, e.g. `"ackley-20"`.

pub mod functions;
mod noise;

pub use noise::{branin_noise, NoiseSurrogate, StandardizedNoise, BRANIN_HOMOSKEDASTIC_VARIANCE};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Ackley,
    Levy,
    Rastrigin,
    Rosenbrock,
    StyblinskiTang,
    Shekel,
    Hartmann,
    EmbeddedHartmann,
    Cosine,
    Powell,
    Branin,
    BraninHetero,
    BraninHomo,
}

/// Observation noise of a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    Constant(f64),
    /// Input-dependent variance, see [`branin_noise`].
    Heteroskedastic,
}

/// A test problem: domain, objective and known optima.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub id: String,
    pub name: String,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub optimum_value: f64,
    pub optima: Vec<Vec<f64>>,
    pub noise: NoiseKind,
    family: Family,
}

/// Families accepted by [`problem`], with their dimension rule.
pub const FAMILIES: &[(&str, &str)] = &[
    ("ackley", "any d >= 1"),
    ("levy", "any d >= 1"),
    ("rastrigin", "any d >= 1"),
    ("rosenbrock", "any d >= 2"),
    ("styblinski-tang", "any d >= 1"),
    ("powell", "d a positive multiple of 4"),
    ("shekel", "d = 4"),
    ("hartmann", "d = 6"),
    (
        "embedded-hartmann",
        "d >= 6 (Hartmann-6 plus inert dimensions)",
    ),
    ("cosine", "d = 8"),
    ("branin", "d = 2"),
    (
        "branin-hetero",
        "d = 2, noise decaying away from two of the three optima",
    ),
    (
        "branin-homo",
        "d = 2, constant noise at the heteroskedastic average",
    ),
];

const HARTMANN_OPTIMUM: [f64; 6] = [
    0.201_689_509_234_095_84,
    0.150_010_684_178_764_17,
    0.476_873_972_432_962_2,
    0.275_332_428_312_954,
    0.311_651_611_575_136_7,
    0.657_300_529_380_464_1,
];
const HARTMANN_VALUE: f64 = 3.322_368_011_415_512_5;
const SHEKEL_OPTIMUM: [f64; 4] = [
    4.000_746_860_776_147,
    3.999_509_472_230_561_5,
    4.000_746_860_776_147,
    3.999_509_472_230_561_5,
];
const SHEKEL_VALUE: f64 = 10.536_443_153_483_505;
const STYBLINSKI_TANG_X: f64 = -2.903_534_026_758_425;
const STYBLINSKI_TANG_VALUE: f64 = 39.166_165_703_771_41;
const BRANIN_VALUE: f64 = -0.397_887_357_729_738_16;

/// The three Branin maximizers; the second and third carry the noise bumps
/// of the heteroskedastic variant.
pub const BRANIN_OPTIMA: [[f64; 2]; 3] = [[3.0 * PI, 2.475], [-PI, 12.275], [PI, 2.275]];

/// Look up a problem by its `"name-d"` id.
pub fn problem(id: &str) -> Result<ProblemSpec> {
    let unknown = || Error::UnknownProblem(id.to_string());
    let (name, d) = id.rsplit_once('-').ok_or_else(unknown)?;
    let d: usize = d.parse().map_err(|_| unknown())?;
    let family = match name {
        "ackley" => Family::Ackley,
        "levy" => Family::Levy,
        "rastrigin" => Family::Rastrigin,
        "rosenbrock" => Family::Rosenbrock,
        "styblinski-tang" => Family::StyblinskiTang,
        "shekel" => Family::Shekel,
        "hartmann" => Family::Hartmann,
        "embedded-hartmann" => return make_embedded_hartmann(d),
        "cosine" => Family::Cosine,
        "powell" => Family::Powell,
        "branin" => Family::Branin,
        "branin-hetero" => Family::BraninHetero,
        "branin-homo" => Family::BraninHomo,
        _ => return Err(unknown()),
    };
    let valid = match family {
        Family::Rosenbrock => d >= 2,
        Family::Powell => d >= 4 && d % 4 == 0,
        Family::Shekel => d == 4,
        Family::Hartmann => d == 6,
        Family::Cosine => d == 8,
        Family::Branin | Family::BraninHetero | Family::BraninHomo => d == 2,
        _ => d >= 1,
    };
    if !valid {
        return Err(unknown());
    }
    let uniform = |lo: f64, hi: f64| vec![(lo, hi); d];
    let at = |v: f64| vec![vec![v; d]];
    let (bounds, optima, value) = match family {
        Family::Ackley => (uniform(-32.768, 32.768), at(0.0), 0.0),
        Family::Levy => (uniform(-10.0, 10.0), at(1.0), 0.0),
        Family::Rastrigin => (uniform(-5.12, 5.12), at(0.0), 0.0),
        Family::Rosenbrock => (uniform(-5.0, 10.0), at(1.0), 0.0),
        Family::StyblinskiTang => (
            uniform(-5.0, 5.0),
            at(STYBLINSKI_TANG_X),
            STYBLINSKI_TANG_VALUE * d as f64,
        ),
        Family::Shekel => (
            uniform(0.0, 10.0),
            vec![SHEKEL_OPTIMUM.to_vec()],
            SHEKEL_VALUE,
        ),
        Family::Hartmann => (
            uniform(0.0, 1.0),
            vec![HARTMANN_OPTIMUM.to_vec()],
            HARTMANN_VALUE,
        ),
        Family::Cosine => (uniform(-1.0, 1.0), at(0.0), 0.8),
        Family::Powell => (uniform(-4.0, 5.0), at(0.0), 0.0),
        Family::Branin | Family::BraninHetero | Family::BraninHomo => (
            vec![(-5.0, 10.0), (0.0, 15.0)],
            BRANIN_OPTIMA.iter().map(|o| o.to_vec()).collect(),
            BRANIN_VALUE,
        ),
        Family::EmbeddedHartmann => unreachable!("handled above"),
    };
    let noise = match family {
        Family::BraninHetero => NoiseKind::Heteroskedastic,
        Family::BraninHomo => NoiseKind::Constant(BRANIN_HOMOSKEDASTIC_VARIANCE),
        _ => NoiseKind::None,
    };
    Ok(ProblemSpec {
        id: format!("{name}-{d}"),
        name: name.to_string(),
        dim: d,
        bounds,
        optimum_value: value,
        optima,
        noise,
        family,
    })
}

/// Hartmann-6 on the first six coordinates of a `total_dim`-dimensional
/// unit cube; the remaining coordinates do not affect the value.
pub fn make_embedded_hartmann(total_dim: usize) -> Result<ProblemSpec> {
    if total_dim < 6 {
        return Err(Error::invalid(format!(
            "embedded Hartmann needs at least 6 dimensions, got {total_dim}"
        )));
    }
    let mut optimum = HARTMANN_OPTIMUM.to_vec();
    optimum.resize(total_dim, 0.0);
    Ok(ProblemSpec {
        id: format!("embedded-hartmann-{total_dim}"),
        name: "embedded-hartmann".to_string(),
        dim: total_dim,
        bounds: vec![(0.0, 1.0); total_dim],
        optimum_value: HARTMANN_VALUE,
        optima: vec![optimum],
        noise: NoiseKind::None,
        family: Family::EmbeddedHartmann,
    })
}

impl ProblemSpec {
    /// Noise-free objective value (maximization convention).
    pub fn value(&self, x: &[f64]) -> f64 {
        use functions::*;
        match self.family {
            Family::Ackley => -ackley(x),
            Family::Levy => -levy(x),
            Family::Rastrigin => -rastrigin(x),
            Family::Rosenbrock => -rosenbrock(x),
            Family::StyblinskiTang => -styblinski_tang(x),
            Family::Shekel => -shekel(x),
            Family::Hartmann | Family::EmbeddedHartmann => -hartmann6(x),
            Family::Cosine => cosine_mixture(x),
            Family::Powell => -powell(x),
            Family::Branin | Family::BraninHetero | Family::BraninHomo => -branin(x),
        }
    }

    /// True observation-noise variance at `x`.
    pub fn noise_variance(&self, x: &[f64]) -> f64 {
        match self.noise {
            NoiseKind::None => 0.0,
            NoiseKind::Constant(v) => v,
            NoiseKind::Heteroskedastic => branin_noise(x),
        }
    }

    pub fn is_noisy(&self) -> bool {
        self.noise != NoiseKind::None
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }

    fn check_batch(&self, batch: &DMatrix<f64>) -> Result<()> {
        if batch.ncols() != self.dim {
            return Err(Error::invalid(format!(
                "batch has {} columns, `{}` has {} dimensions",
                batch.ncols(),
                self.id,
                self.dim
            )));
        }
        for (i, row) in batch.row_iter().enumerate() {
            let x: Vec<f64> = row.iter().copied().collect();
            if !self.contains(&x) {
                return Err(Error::Domain {
                    problem: self.id.clone(),
                    index: i,
                });
            }
        }
        Ok(())
    }
}

/// Noise-free values of every batch row.
pub fn evaluate_batch(problem: &ProblemSpec, batch: &DMatrix<f64>) -> Result<DVector<f64>> {
    problem.check_batch(batch)?;
    Ok(DVector::from_iterator(
        batch.nrows(),
        batch
            .row_iter()
            .map(|r| problem.value(&r.iter().copied().collect::<Vec<_>>())),
    ))
}

/// Noisy observations `f(x_q) + ε_q` and the true noise variances.
pub fn observe(
    problem: &ProblemSpec,
    batch: &DMatrix<f64>,
    seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let truth = evaluate_batch(problem, batch)?;
    let sigma2 = DVector::from_iterator(
        batch.nrows(),
        batch
            .row_iter()
            .map(|r| problem.noise_variance(&r.iter().copied().collect::<Vec<_>>())),
    );
    let mut rng = rng_from(seed, &[0x6f6273]);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let y = DVector::from_fn(batch.nrows(), |i, _| {
        if sigma2[i] > 0.0 {
            truth[i] + sigma2[i].sqrt() * normal.sample(&mut rng)
        } else {
            truth[i]
        }
    });
    Ok((y, sigma2))
}

/// Consecutive rejections after which seed sampling gives up.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// `q` uniform points at Euclidean distance at least `min_dist` from every
/// listed optimum (original coordinates).
pub fn sample_seed_points(
    problem: &ProblemSpec,
    q: usize,
    min_dist: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !(min_dist >= 0.0 && min_dist.is_finite()) {
        return Err(Error::invalid(format!(
            "min_dist must be nonnegative, got {min_dist}"
        )));
    }
    let mut rng = rng_from(seed, &[0x73656564]);
    let d = problem.dim;
    let mut out = DMatrix::zeros(q, d);
    let mut x = vec![0.0; d];
    for i in 0..q {
        let mut rejections = 0;
        loop {
            for (v, (lo, hi)) in x.iter_mut().zip(&problem.bounds) {
                *v = lo + (hi - lo) * rng.gen::<f64>();
            }
            let far = problem.optima.iter().all(|o| {
                o.iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    >= min_dist
            });
            if far {
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::Infeasible(format!(
                    "no point of `{}` lies {min_dist} away from all optima after {MAX_REJECTIONS} draws",
                    problem.id
                )));
            }
        }
        for (j, v) in x.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in [
            "ackley-20",
            "styblinski-tang-10",
            "branin-hetero-2",
            "embedded-hartmann-100",
        ] {
            assert_eq!(problem(id).unwrap().id, id);
        }
    }

    #[test]
    fn invalid_ids_are_unknown() {
        for id in [
            "ackley",
            "nope-3",
            "hartmann-5",
            "powell-6",
            "branin-3",
            "ackley-x",
            "ackley-0",
        ] {
            assert!(matches!(problem(id), Err(Error::UnknownProblem(_))), "{id}");
        }
    }

    #[test]
    fn out_of_bounds_is_a_domain_error() {
        let p = problem("branin-2").unwrap();
        let batch = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 11.0, 0.0]);
        assert!(matches!(
            evaluate_batch(&p, &batch),
            Err(Error::Domain { index: 1, .. })
        ));
    }

    #[test]
    fn noisy_problem_declares_noise() {
        assert!(problem("branin-hetero-2").unwrap().is_noisy());
        assert_eq!(
            problem("branin-homo-2")
                .unwrap()
                .noise_variance(&[0.0, 0.0]),
            BRANIN_HOMOSKEDASTIC_VARIANCE
        );
        assert!(!problem("ackley-2").unwrap().is_noisy());
    }
}
