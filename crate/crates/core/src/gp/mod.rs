//! Exact Gaussian-process regression with a Matérn-5/2 ARD kernel.
//!
//! Inputs are expected on the unit cube and outputs standardized; see
//! [`InputScaling`] and [`OutputScaling`] for the transforms.

mod data;
mod fit;
mod kernel;
pub mod linalg;
mod model;

pub use data::{InputScaling, OutputScaling, TrainingData};
pub use fit::{
    fit_hyperparameters, fit_hyperparameters_with, log_marginal_likelihood,
    log_marginal_likelihood_gradient, log_posterior_density, training_matrix, FitConfig,
    GammaPrior, AMPLITUDE_PRIOR, LENGTHSCALE_PRIOR,
};
pub use kernel::{matern52, KernelParams};
pub use model::{AugmentedFactor, GpModel, PosteriorGaussian};

pub(crate) use model::PosteriorParts;
