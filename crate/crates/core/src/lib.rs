//! Batched Bayesian optimization with the energy-entropy acquisition.
//!
//! The crate is organized bottom-up:
//!
//! - [`gp`]: exact GP regression, hyperparameter fitting, fantasy covariances.
//! - [`acquisition`]: the batch acquisition (mean and softmax energies plus
//!   information gain), its gradient, and a Monte-Carlo q-UCB baseline.
//! - [`optimizer`]: multi-start projected gradient ascent over whole batches.
//! - [`problems`]: synthetic test functions and the heteroskedastic Branin.
//! - [`bo_loop`]: the round-based experiment protocol and its metrics.

pub mod acquisition;
pub mod bo_loop;
pub mod error;
pub mod gp;
pub mod optimizer;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
