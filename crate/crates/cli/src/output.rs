use std::fs;
use std::path::{Path, PathBuf};

use nlpca::gibbs::SweepRecord;
use nlpca::metrics::HistogramSpec;
use serde::Serialize;

use crate::CliError;

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io(nlpca::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Fails early when the output path cannot be a directory.
pub fn check_out_dir(dir: &Path) -> Result<(), CliError> {
    if dir.as_os_str().is_empty() {
        return Err(CliError::Usage("--out must not be empty".into()));
    }
    match fs::metadata(dir) {
        Ok(m) if !m.is_dir() => Err(CliError::Usage(format!(
            "--out {} exists and is not a directory",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

pub fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// `dir/name`, the only way commands name their outputs.
pub fn artifact(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn write_rows<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(nlpca::Error::from)?;
    for row in rows {
        w.serialize(row).map_err(nlpca::Error::from)?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

#[derive(Serialize)]
struct TraceRow {
    sweep: usize,
    sigma2: f64,
    log_posterior: f64,
    kept: bool,
    rejection_draws: usize,
    fallback_draws: usize,
    rejection_attempts: usize,
}

pub fn write_trace(path: &Path, records: &[SweepRecord]) -> Result<(), CliError> {
    write_rows(
        path,
        records.iter().map(|r| TraceRow {
            sweep: r.sweep,
            sigma2: r.sigma2,
            log_posterior: r.log_posterior,
            kept: r.kept,
            rejection_draws: r.counts.rejection_draws,
            fallback_draws: r.counts.fallback_draws,
            rejection_attempts: r.counts.rejection_attempts,
        }),
    )
}

#[derive(Serialize)]
struct HistogramRow<'a> {
    histogram: &'a str,
    bin_lower: f64,
    bin_upper: f64,
    count: usize,
}

/// Long format: one row per bin, tagged with the histogram name.
pub fn write_histograms(path: &Path, hists: &[(&str, HistogramSpec)]) -> Result<(), CliError> {
    write_rows(
        path,
        hists.iter().flat_map(|(name, h)| {
            h.counts
                .iter()
                .enumerate()
                .map(move |(k, &count)| HistogramRow {
                    histogram: name,
                    bin_lower: h.bin_edges[k],
                    bin_upper: h.bin_edges[k + 1],
                    count,
                })
        }),
    )
}
