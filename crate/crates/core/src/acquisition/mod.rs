//! Batch acquisition functions.
//!
//! The main acquisition scores a whole batch `x` (Q × d) as
//! `a(x) = -E(x) + T·I(x)`: an energy term that rewards high posterior means
//! (their sum, or a softmax-weighted sum that leans towards the batch
//! maximum) plus `T` times the information the batch would gain about the
//! function at its own locations.

mod beebo;
mod config;
mod objective;
mod softmax;
mod ucb;

pub use beebo::{
    beebo_evaluate, beebo_gradient, beebo_score, information_gain, mean_energy, BatchNoise,
    BeeboEvaluation, NoiseField,
};
pub use config::{
    AcquisitionConfig, SoftmaxBeta, Variant, DEFAULT_ALPHA, DEFAULT_MC_SAMPLES, MAX_BETA,
};
pub use objective::{BeeboObjective, QUcbObjective};
pub use softmax::{
    beta_y, effective_points, effective_points_of, softmax_expectation,
    softmax_expectation_gradient, SoftmaxExpansion,
};
pub use ucb::{kappa_from_t_prime, qucb_score, temperature_from_kappa, QUcb};
