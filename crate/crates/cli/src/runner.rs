//! Executes the runs of a spec on a worker pool and persists their results.
//!
//! Output directory layout:
//! - `results.jsonl`  one [`ResultLine`] per completed run
//! - `failures.jsonl` one [`FailureLine`] per failed attempt
//! - `manifest.txt`   keys of completed runs; a key is added only after its
//!   result line has been synced to disk
//! - `summary.csv`    mean ± std per cell, method and trade-off

use crate::error::CliError;
use crate::spec::{Job, RunSpec};
use beebo_core::bo_loop::{random_reference, run_experiment, summarize, ResultRow};
use beebo_core::problems::problem;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Seed of the random-batch regret reference, shared by all runs of a problem.
pub const REFERENCE_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub cell: usize,
    pub key: String,
    #[serde(flatten)]
    pub row: ResultRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureLine {
    pub cell: usize,
    pub key: String,
    pub error: String,
    pub completed_rounds: usize,
    pub numerical: bool,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    pub parallelism: usize,
}

impl RunOptions {
    /// Spec values, overridden by explicit settings when given.
    pub fn resolve(
        spec: &RunSpec,
        output_dir: Option<PathBuf>,
        parallelism: Option<usize>,
    ) -> Self {
        let default_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        RunOptions {
            output_dir: output_dir.unwrap_or_else(|| spec.output_dir.clone()),
            parallelism: parallelism
                .or(spec.parallelism)
                .unwrap_or(default_threads)
                .max(1),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    pub total: usize,
    pub skipped: usize,
    pub executed: usize,
    pub failed: usize,
    pub numerical_failures: usize,
}

impl RunReport {
    /// The error matching the outcome, if any run failed.
    pub fn failure(&self) -> Option<CliError> {
        match self.failed {
            0 => None,
            n if n == self.numerical_failures => Some(CliError::Numerical(n)),
            n => Some(CliError::PartialFailure {
                failed: n,
                total: self.total,
            }),
        }
    }
}

enum Outcome {
    Done(ResultLine),
    Failed(FailureLine),
}

fn execute(job: &Job) -> Outcome {
    let key = job.key();
    let fail = |error: String, completed_rounds: usize, numerical: bool| {
        Outcome::Failed(FailureLine {
            cell: job.cell,
            key: key.clone(),
            error,
            completed_rounds,
            numerical,
        })
    };
    let spec = match problem(&job.config.problem) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string(), 0, false),
    };
    let records = match run_experiment(&job.config) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string(), e.completed.len(), e.source.is_numerical()),
    };
    let reference = random_reference(&spec, job.config.q, REFERENCE_SEED);
    match summarize(&job.config, job.replicate, &records, &spec, reference) {
        Ok(row) => Outcome::Done(ResultLine {
            cell: job.cell,
            key,
            row,
        }),
        Err(e) => fail(e.to_string(), records.len(), e.is_numerical()),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    match File::open(path) {
        Ok(f) => BufReader::new(f)
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io(path, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(CliError::io(path, e)),
    }
}

/// All result lines in `dir`, in file order.
pub fn load_results(dir: &Path) -> Result<Vec<ResultLine>, CliError> {
    let path = dir.join(RESULTS_FILE);
    read_lines(&path)?
        .iter()
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Config(format!("malformed line in {}: {e}", path.display())))
        })
        .collect()
}

/// All failure lines in `dir`, in file order.
pub fn load_failures(dir: &Path) -> Result<Vec<FailureLine>, CliError> {
    let path = dir.join(FAILURES_FILE);
    read_lines(&path)?
        .iter()
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Config(format!("malformed line in {}: {e}", path.display())))
        })
        .collect()
}

/// Keys of runs recorded as complete in `dir`.
pub fn load_manifest(dir: &Path) -> Result<HashSet<String>, CliError> {
    Ok(read_lines(&dir.join(MANIFEST_FILE))?.into_iter().collect())
}

/// Single writer for all persistent output of a run.
struct Appender {
    dir: PathBuf,
    results: File,
    failures: File,
    manifest: File,
}

impl Appender {
    fn open(dir: &Path) -> Result<Self, CliError> {
        let unwritable = |e: std::io::Error| {
            CliError::Config(format!(
                "output directory {} is not writable: {e}",
                dir.display()
            ))
        };
        std::fs::create_dir_all(dir).map_err(unwritable)?;
        let open = |name: &str| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(name))
                .map_err(unwritable)
        };
        Ok(Appender {
            dir: dir.to_path_buf(),
            results: open(RESULTS_FILE)?,
            failures: open(FAILURES_FILE)?,
            manifest: open(MANIFEST_FILE)?,
        })
    }

    fn append(file: &mut File, path: PathBuf, line: &str) -> Result<(), CliError> {
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .and_then(|_| file.sync_data())
            .map_err(|e| CliError::io(path, e))
    }

    fn write(&mut self, outcome: &Outcome) -> Result<(), CliError> {
        match outcome {
            Outcome::Done(line) => {
                Self::append(
                    &mut self.results,
                    self.dir.join(RESULTS_FILE),
                    &encode(line),
                )?;
                Self::append(&mut self.manifest, self.dir.join(MANIFEST_FILE), &line.key)
            }
            Outcome::Failed(line) => Self::append(
                &mut self.failures,
                self.dir.join(FAILURES_FILE),
                &encode(line),
            ),
        }
    }
}

fn encode<T: Serialize>(line: &T) -> String {
    serde_json::to_string(line).expect("result lines serialize")
}

/// Runs every job of `spec` not yet in the manifest.
///
/// Results are appended in job order regardless of completion order, so the
/// output files do not depend on the degree of parallelism.
pub fn run(spec: &RunSpec, options: &RunOptions) -> Result<RunReport, CliError> {
    spec.validate()?;
    let jobs = spec.jobs()?;
    let done = load_manifest(&options.output_dir)?;
    let mut appender = Appender::open(&options.output_dir)?;
    let pending: Vec<&Job> = jobs.iter().filter(|j| !done.contains(&j.key())).collect();
    let mut report = RunReport {
        total: jobs.len(),
        skipped: jobs.len() - pending.len(),
        ..Default::default()
    };
    info!(
        "{} runs in spec, {} already complete, {} to execute on {} workers",
        report.total,
        report.skipped,
        pending.len(),
        options.parallelism
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<(usize, Outcome)>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        let work = &pending;
        scope.spawn(move || {
            pool.install(|| {
                work.par_iter()
                    .enumerate()
                    .for_each_with(tx, |tx, (slot, job)| {
                        // the receiver only hangs up after every sender is gone
                        let _ = tx.send((slot, execute(job)));
                    });
            });
        });

        let mut waiting = BTreeMap::new();
        let mut next = 0;
        for (slot, outcome) in rx {
            waiting.insert(slot, outcome);
            while let Some(outcome) = waiting.remove(&next) {
                next += 1;
                match &outcome {
                    Outcome::Done(line) => {
                        report.executed += 1;
                        info!(
                            "[{next}/{}] {}: normalized best {:.4}, R_rel {:.4}",
                            pending.len(),
                            line.key,
                            line.row.normalized_best,
                            line.row.r_rel
                        );
                    }
                    Outcome::Failed(line) => {
                        report.executed += 1;
                        report.failed += 1;
                        report.numerical_failures += usize::from(line.numerical);
                        warn!(
                            "[{next}/{}] {} failed: {}",
                            pending.len(),
                            line.key,
                            line.error
                        );
                    }
                }
                if write_error.is_none() {
                    write_error = appender.write(&outcome).err();
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    write_summary(&options.output_dir)?;
    Ok(report)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub problem: String,
    pub d: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub method: String,
    pub trade_off: f64,
    pub replicates: usize,
    pub normalized_best_mean: f64,
    pub normalized_best_std: f64,
    #[serde(rename = "R_rel_mean")]
    pub r_rel_mean: f64,
    #[serde(rename = "R_rel_std")]
    pub r_rel_std: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups result lines by cell, method and trade-off, in order of first appearance.
pub fn summarize_results(lines: &[ResultLine]) -> Vec<SummaryRow> {
    let mut groups: Vec<(SummaryRow, Vec<f64>, Vec<f64>)> = Vec::new();
    for line in lines {
        let r = &line.row;
        let found = groups.iter_mut().find(|(s, _, _)| {
            s.cell == line.cell && s.method == r.method.as_str() && s.trade_off == r.trade_off
        });
        let entry = match found {
            Some(g) => g,
            None => {
                groups.push((
                    SummaryRow {
                        cell: line.cell,
                        problem: r.problem.clone(),
                        d: r.d,
                        q: r.q,
                        method: r.method.as_str().to_string(),
                        trade_off: r.trade_off,
                        replicates: 0,
                        normalized_best_mean: 0.0,
                        normalized_best_std: 0.0,
                        r_rel_mean: 0.0,
                        r_rel_std: 0.0,
                    },
                    Vec::new(),
                    Vec::new(),
                ));
                groups.last_mut().expect("just pushed")
            }
        };
        entry.1.push(r.normalized_best);
        entry.2.push(r.r_rel);
    }
    groups
        .into_iter()
        .map(|(mut s, best, regret)| {
            s.replicates = best.len();
            (s.normalized_best_mean, s.normalized_best_std) = mean_std(&best);
            (s.r_rel_mean, s.r_rel_std) = mean_std(&regret);
            s
        })
        .collect()
}

/// Rewrites `summary.csv` from every result line in `dir`.
pub fn write_summary(dir: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let rows = summarize_results(&load_results(dir)?);
    let path = dir.join(SUMMARY_FILE);
    let csv_err = |e: csv::Error| CliError::io(&path, e.into());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&path)
        .map_err(csv_err)?;
    // explicit header so that an empty summary still names its columns
    w.write_record([
        "cell",
        "problem",
        "d",
        "Q",
        "method",
        "trade_off",
        "replicates",
        "normalized_best_mean",
        "normalized_best_std",
        "R_rel_mean",
        "R_rel_std",
    ])
    .map_err(csv_err)?;
    for row in &rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn report_maps_to_exit_codes() {
        let ok = RunReport {
            total: 3,
            ..Default::default()
        };
        assert!(ok.failure().is_none());
        let numerical = RunReport {
            total: 3,
            executed: 3,
            failed: 1,
            numerical_failures: 1,
            ..Default::default()
        };
        assert_eq!(numerical.failure().unwrap().exit_code(), 4);
        let partial = RunReport {
            numerical_failures: 0,
            ..numerical
        };
        assert_eq!(partial.failure().unwrap().exit_code(), 3);
    }
}
