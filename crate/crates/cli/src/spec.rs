//! Run specifications: a TOML file listing experiment cells.
//!
//! ```toml
//! output_dir = "results"
//! parallelism = 2
//! meta_seed = 0
//!
//! [[cells]]
//! problem = "ackley-2"
//! q = 10
//! rounds = 5
//! methods = ["mean-beebo", "q-ucb"]
//! t_prime = [0.05, 5.0]
//! replicates = 3
//! ```

use crate::error::CliError;
use beebo_core::bo_loop::{ExperimentConfig, Method, TradeOff};
use beebo_core::problems::problem;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker count; all available cores when absent.
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub meta_seed: u64,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

/// One grid of runs on a single problem. Every method and trade-off runs on
/// every replicate; runs of the same replicate share their seed points.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub problem: String,
    pub q: usize,
    pub rounds: usize,
    pub methods: Vec<String>,
    /// Temperatures `T'`; q-UCB runs at `κ = 4T'²`.
    #[serde(default)]
    pub t_prime: Option<Vec<f64>>,
    /// UCB `κ` values; BEEBO runs at `T' = ½√κ`.
    #[serde(default)]
    pub kappa: Option<Vec<f64>>,
    pub replicates: usize,
    #[serde(default = "default_true")]
    pub final_round_exploit: bool,
    /// Seed points in round 0; `q` when absent.
    #[serde(default)]
    pub initial_points: Option<usize>,
}

impl CellSpec {
    pub fn methods(&self, cell: usize) -> Result<Vec<Method>, CliError> {
        self.methods
            .iter()
            .map(|m| {
                serde_json::from_value(serde_json::Value::String(m.clone())).map_err(|_| {
                    CliError::Config(format!(
                        "cells[{cell}].methods: unknown method `{m}` (expected mean-beebo, max-beebo or q-ucb)"
                    ))
                })
            })
            .collect()
    }

    pub fn trade_offs(&self, cell: usize) -> Result<Vec<TradeOff>, CliError> {
        match (&self.t_prime, &self.kappa) {
            (Some(t), None) => Ok(t.iter().map(|&v| TradeOff::TPrime(v)).collect()),
            (None, Some(k)) => Ok(k.iter().map(|&v| TradeOff::Kappa(v)).collect()),
            _ => Err(CliError::Config(format!(
                "cells[{cell}]: exactly one of `t_prime` and `kappa` is required"
            ))),
        }
    }

    fn validate(&self, cell: usize) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(format!("cells[{cell}]: {msg}")));
        if self.q == 0 {
            return bad("Q ≥ 1 required");
        }
        if self.rounds == 0 {
            return bad("rounds ≥ 1 required");
        }
        if self.methods.is_empty() {
            return bad("at least one method required");
        }
        if self.initial_points == Some(0) {
            return bad("initial_points ≥ 1 required");
        }
        self.methods(cell)?;
        let trade_offs = self.trade_offs(cell)?;
        if trade_offs.is_empty() {
            return bad("at least one trade-off value required");
        }
        if trade_offs
            .iter()
            .any(|t| !(t.t_prime().is_finite() && t.t_prime() >= 0.0))
        {
            return bad("trade-off values must be finite and nonnegative");
        }
        problem(&self.problem)?;
        Ok(())
    }
}

impl RunSpec {
    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let spec: RunSpec = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.parallelism == Some(0) {
            return Err(CliError::Config("parallelism ≥ 1 required".into()));
        }
        for (i, cell) in self.cells.iter().enumerate() {
            cell.validate(i)?;
        }
        Ok(())
    }

    /// Every run of the spec, in a fixed order.
    pub fn jobs(&self) -> Result<Vec<Job>, CliError> {
        let mut jobs = Vec::new();
        for (cell_index, cell) in self.cells.iter().enumerate() {
            let methods = cell.methods(cell_index)?;
            let trade_offs = cell.trade_offs(cell_index)?;
            for replicate in 0..cell.replicates {
                let seed = beebo_core::rng::derive_seed(
                    self.meta_seed,
                    &[cell_index as u64, replicate as u64],
                );
                for &method in &methods {
                    for &trade_off in &trade_offs {
                        let mut config =
                            ExperimentConfig::new(&cell.problem, cell.q, method, trade_off, seed);
                        config.rounds = cell.rounds;
                        config.final_round_exploit = cell.final_round_exploit;
                        config.initial_points = cell.initial_points;
                        jobs.push(Job {
                            cell: cell_index,
                            replicate,
                            config,
                        });
                    }
                }
            }
        }
        Ok(jobs)
    }
}

/// Reads and validates a spec file.
pub fn parse_runspec(path: &Path) -> Result<RunSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
        _ => CliError::io(path, e),
    })?;
    RunSpec::parse_str(&text)
}

/// A single experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub cell: usize,
    pub replicate: usize,
    pub config: ExperimentConfig,
}

impl Job {
    /// Identity of the run in the manifest. Includes the seed so that a
    /// changed meta-seed never reuses stale results.
    pub fn key(&self) -> String {
        let c = &self.config;
        let trade_off = match c.trade_off {
            TradeOff::TPrime(t) => format!("t_prime={t}"),
            TradeOff::Kappa(k) => format!("kappa={k}"),
        };
        format!(
            "cell={}/problem={}/q={}/rounds={}/exploit={}/init={}/method={}/{}/replicate={}/seed={}",
            self.cell,
            c.problem,
            c.q,
            c.rounds,
            c.final_round_exploit,
            c.initial_points.map_or("q".to_string(), |n| n.to_string()),
            c.method,
            trade_off,
            self.replicate,
            c.replicate_seed
        )
    }
}
