//! Multi-start projected gradient ascent over whole batches.
//!
//! A pool of quasi-random batches is screened by objective value; the best
//! few are refined by gradient ascent with a backtracking step, clamping to
//! the box after every step. Steps are taken in unit-cube coordinates so a
//! single step size works across problems.

use crate::error::{Error, OptimizationDiagnostics, Result};
use crate::rng::sobol_point;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A differentiable objective over Q × d batches, to be maximized.
pub trait BatchObjective {
    fn value(&self, batch: &DMatrix<f64>) -> Result<f64>;
    fn value_and_gradient(&self, batch: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>;
}

/// Adapter turning a closure returning `(value, gradient)` into an objective.
pub struct FnObjective<F>(pub F);

impl<F> BatchObjective for FnObjective<F>
where
    F: Fn(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
{
    fn value(&self, batch: &DMatrix<f64>) -> Result<f64> {
        Ok((self.0)(batch)?.0)
    }

    fn value_and_gradient(&self, batch: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        (self.0)(batch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub raw_candidates: usize,
    pub max_iters: usize,
    /// Initial step size on the unit-cube scale.
    pub step_size: f64,
    pub grad_tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 8,
            raw_candidates: 512,
            max_iters: 200,
            step_size: 0.05,
            grad_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.raw_candidates == 0 || self.max_iters == 0 {
            return Err(Error::invalid(
                "restarts, raw_candidates and max_iters must be at least 1",
            ));
        }
        if self.restarts > self.raw_candidates {
            return Err(Error::invalid(format!(
                "restarts ({}) exceed raw_candidates ({})",
                self.restarts, self.raw_candidates
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(Error::invalid("grad_tolerance must be positive"));
        }
        Ok(())
    }
}

/// Halvings tried before a step is declared impossible.
const MAX_HALVINGS: usize = 40;
/// Growth limit of the adaptive step relative to the initial one.
const MAX_STEP_GROWTH: f64 = 1024.0;

/// Outcome of [`optimize_batch`].
#[derive(Debug, Clone)]
pub struct OptimizedBatch {
    pub batch: DMatrix<f64>,
    pub value: f64,
    /// Best value among the screened raw candidates.
    pub best_initial_value: f64,
    /// Index of the restart that produced `batch`.
    pub restart: usize,
    /// Accepted values of the winning restart, starting point first.
    pub trace: Vec<f64>,
    pub diagnostics: OptimizationDiagnostics,
}

/// Maximize `objective` over Q-point batches in the box `bounds`.
pub fn optimize_batch(
    objective: &dyn BatchObjective,
    bounds: &[(f64, f64)],
    q: usize,
    config: &OptimizerConfig,
) -> Result<OptimizedBatch> {
    config.validate()?;
    if q == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if bounds.is_empty() {
        return Err(Error::invalid("need at least one dimension"));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("invalid bounds [{lo}, {hi}]")));
        }
    }
    let d = bounds.len();
    let to_box = |u: &DMatrix<f64>| {
        DMatrix::from_fn(q, d, |i, j| {
            let (lo, hi) = bounds[j];
            match u[(i, j)] {
                t if t <= 0.0 => lo,
                t if t >= 1.0 => hi,
                t => (lo + (hi - lo) * t).clamp(lo, hi),
            }
        })
    };
    let eval = |u: &DMatrix<f64>| -> Result<f64> {
        let v = objective.value(&to_box(u))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numerical("non-finite objective value"))
        }
    };
    let eval_grad = |u: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
        let (v, g) = objective.value_and_gradient(&to_box(u))?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("non-finite objective value or gradient"));
        }
        // chain rule to unit coordinates
        Ok((
            v,
            DMatrix::from_fn(q, d, |i, j| g[(i, j)] * (bounds[j].1 - bounds[j].0)),
        ))
    };

    let mut diag = OptimizationDiagnostics {
        candidates_evaluated: 0,
        non_finite_candidates: 0,
        last_error: None,
    };
    let note_failure = |diag: &mut OptimizationDiagnostics, e: Error| {
        diag.non_finite_candidates += 1;
        diag.last_error = Some(e.to_string());
    };

    // screening
    let mut flat = vec![0.0; q * d];
    let mut scored: Vec<(usize, f64, DMatrix<f64>)> = Vec::new();
    for idx in 0..config.raw_candidates {
        sobol_point(idx as u32, q * d, config.seed, &mut flat);
        let u = DMatrix::from_row_slice(q, d, &flat);
        diag.candidates_evaluated += 1;
        match eval(&u) {
            Ok(v) => scored.push((idx, v, u)),
            Err(e) => note_failure(&mut diag, e),
        }
    }
    if scored.is_empty() {
        return Err(Error::OptimizationFailed(diag));
    }
    // stable sort keeps the lowest index first among ties
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let best_initial_value = scored[0].1;
    let mut best: Option<(usize, f64, DMatrix<f64>, Vec<f64>)> = None;
    for (restart, (_, _, start)) in scored.into_iter().take(config.restarts).enumerate() {
        match ascend(&eval, &eval_grad, start, config) {
            Ok((u, v, trace)) => {
                if best.as_ref().is_none_or(|b| v > b.1) {
                    best = Some((restart, v, u, trace));
                }
            }
            Err(e) => note_failure(&mut diag, e),
        }
    }
    let (restart, value, u, trace) = best.ok_or_else(|| Error::OptimizationFailed(diag.clone()))?;
    Ok(OptimizedBatch {
        batch: to_box(&u),
        value,
        best_initial_value,
        restart,
        trace,
        diagnostics: diag,
    })
}

fn project(u: &mut DMatrix<f64>) {
    u.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Gradient with components that push against an active bound removed.
fn projected_norm(u: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    u.iter()
        .zip(g.iter())
        .map(|(&x, &gx)| {
            if (x <= 0.0 && gx < 0.0) || (x >= 1.0 && gx > 0.0) {
                0.0
            } else {
                gx * gx
            }
        })
        .sum::<f64>()
        .sqrt()
}

type Ascent = (DMatrix<f64>, f64, Vec<f64>);

fn ascend(
    eval: &dyn Fn(&DMatrix<f64>) -> Result<f64>,
    eval_grad: &dyn Fn(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
    start: DMatrix<f64>,
    config: &OptimizerConfig,
) -> Result<Ascent> {
    let mut u = start;
    let (mut value, mut grad) = eval_grad(&u)?;
    let mut trace = vec![value];
    let mut step = config.step_size;
    for _ in 0..config.max_iters {
        if projected_norm(&u, &grad) <= config.grad_tolerance {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut trial = &u + &grad * step;
            project(&mut trial);
            if let Ok(v) = eval(&trial) {
                if v > value {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        // an objective that evaluates but cannot be differentiated ends the run
        let Ok((v, g)) = eval_grad(&next) else { break };
        if v < value {
            break;
        }
        u = next;
        value = v;
        grad = g;
        trace.push(value);
        step = (step * 2.0).min(config.step_size * MAX_STEP_GROWTH);
    }
    Ok((u, value, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_stops_at_stationary_point() {
        // f = -(x - 0.3)² on [0, 1]
        let obj = FnObjective(|b: &DMatrix<f64>| {
            let x = b[(0, 0)];
            Ok((
                -(x - 0.3).powi(2),
                DMatrix::from_element(1, 1, -2.0 * (x - 0.3)),
            ))
        });
        let out = optimize_batch(&obj, &[(0.0, 1.0)], 1, &OptimizerConfig::default()).unwrap();
        assert!((out.batch[(0, 0)] - 0.3).abs() < 1e-6);
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn all_failing_objective_reports_diagnostics() {
        let obj = FnObjective(|_: &DMatrix<f64>| Ok((f64::NAN, DMatrix::zeros(1, 1))));
        let cfg = OptimizerConfig {
            raw_candidates: 16,
            restarts: 2,
            ..Default::default()
        };
        match optimize_batch(&obj, &[(0.0, 1.0)], 1, &cfg) {
            Err(Error::OptimizationFailed(d)) => {
                assert_eq!(d.candidates_evaluated, 16);
                assert_eq!(d.non_finite_candidates, 16);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let obj = FnObjective(|_: &DMatrix<f64>| Ok((0.0, DMatrix::zeros(1, 1))));
        let cfg = OptimizerConfig {
            restarts: 10,
            raw_candidates: 5,
            ..Default::default()
        };
        assert!(optimize_batch(&obj, &[(0.0, 1.0)], 1, &cfg).is_err());
        assert!(optimize_batch(&obj, &[(1.0, 0.0)], 1, &OptimizerConfig::default()).is_err());
    }
}
