//! Plot-ready CSV series from a results directory.

use crate::error::CliError;
use crate::runner::{load_failures, load_results, ResultLine};
use log::{info, warn};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// Subdirectory of the results directory receiving exported series.
pub const EXPORT_DIR: &str = "plot_data";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportReport {
    pub runs: usize,
    /// Failed runs without a completed result, not exported.
    pub failed: usize,
    pub files: Vec<PathBuf>,
}

/// File-name stem identifying one run.
pub fn run_stem(line: &ResultLine) -> String {
    let r = &line.row;
    format!(
        "cell{}_{}_Q{}_{}_t{}_rep{}",
        line.cell,
        r.problem,
        r.q,
        r.method.as_str(),
        r.trade_off,
        r.replicate
    )
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes, per completed run, `curve_<run>.csv` (round, best_so_far) and
/// `distances_<run>.csv` (round, mean distance to each optimum).
pub fn export_plot_data(results_dir: &Path) -> Result<ExportReport, CliError> {
    if !results_dir.is_dir() {
        return Err(CliError::MissingFile(results_dir.to_path_buf()));
    }
    let lines = load_results(results_dir)?;
    let completed: HashSet<&str> = lines.iter().map(|l| l.key.as_str()).collect();
    let failed: HashSet<String> = load_failures(results_dir)?
        .into_iter()
        .map(|f| f.key)
        .filter(|k| !completed.contains(k.as_str()))
        .collect();
    let mut report = ExportReport {
        runs: lines.len(),
        failed: failed.len(),
        files: Vec::new(),
    };
    if report.failed > 0 {
        info!(
            "{} failed runs have no results and are not exported",
            report.failed
        );
    }
    if lines.is_empty() {
        warn!(
            "no completed runs in {}; nothing to export",
            results_dir.display()
        );
        return Ok(report);
    }

    let out = results_dir.join(EXPORT_DIR);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    for line in &lines {
        let stem = run_stem(line);
        let curve = out.join(format!("curve_{stem}.csv"));
        let rows: Vec<Vec<String>> = line
            .row
            .per_round_best
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), v.to_string()])
            .collect();
        write_csv(&curve, &["round".into(), "best_so_far".into()], &rows)?;

        let distances = out.join(format!("distances_{stem}.csv"));
        let optima = line.row.distances.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("round".to_string())
            .chain((1..=optima).map(|j| format!("optimum_{j}")))
            .collect();
        let rows: Vec<Vec<String>> = line
            .row
            .distances
            .iter()
            .enumerate()
            .map(|(i, d)| {
                std::iter::once(i.to_string())
                    .chain(d.iter().map(f64::to_string))
                    .collect()
            })
            .collect();
        write_csv(&distances, &header, &rows)?;
        report.files.extend([curve, distances]);
    }
    info!("exported {} runs to {}", report.runs, out.display());
    Ok(report)
}
