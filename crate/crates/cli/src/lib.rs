//! Configuration-driven runner for batched Bayesian-optimization benchmarks.

pub mod error;
pub mod export;
pub mod runner;
pub mod spec;

pub use error::CliError;
pub use export::export_plot_data;
pub use runner::{run, RunOptions, RunReport};
pub use spec::{parse_runspec, RunSpec};
