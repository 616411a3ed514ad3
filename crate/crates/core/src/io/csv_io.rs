//! Plot-ready CSV exports: factor matrices and correlation maps.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::matrix::Matrix;
use crate::selection::CorrelationReport;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Writes `m` with a `{prefix}_1..{prefix}_C` header.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Matrix, prefix: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record((1..=m.cols()).map(|c| format!("{prefix}_{c}")))
        .map_err(|e| csv_error(path, e))?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|&v| format_value(v)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let cols = r.headers().map_err(|e| csv_error(path, e))?.len();
    if cols == 0 || r.headers().map_err(|e| csv_error(path, e))?.iter().all(str::is_empty) {
        return Err(Error::Format(format!("{}: empty header", path.display())));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for field in &record {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad number {field:?}", path.display())))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn factor_file(dir: &Path, mode: usize) -> PathBuf {
    dir.join(format!("mode_{}.csv", mode + 1))
}

/// Writes `mode_1.csv .. mode_N.csv` under `dir` and returns their paths.
pub fn export_factors(factors: &FactorSet, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    factors
        .matrices()
        .iter()
        .enumerate()
        .map(|(n, m)| {
            let path = factor_file(dir, n);
            write_matrix_csv(&path, m, "component")?;
            Ok(path)
        })
        .collect()
}

/// Reads `mode_1.csv, mode_2.csv, ..` from `dir` until the first missing file.
pub fn import_factors(dir: impl AsRef<Path>) -> Result<FactorSet> {
    let dir = dir.as_ref();
    let mut matrices = Vec::new();
    loop {
        let path = factor_file(dir, matrices.len());
        if !path.exists() {
            break;
        }
        matrices.push(read_matrix_csv(&path)?);
    }
    if matrices.is_empty() {
        return Err(Error::Format(format!("no mode_1.csv in {}", dir.display())));
    }
    FactorSet::new(matrices)
}

/// Writes `corr_mode_{n}.csv` per coupled mode, `corr_summed.csv`, and
/// `corr_long.csv` with one `(mode, client1_component, client2_component, value)`
/// row per entry (mode `0` for the summed map). Indices are 1-based.
pub fn export_correlation(report: &CorrelationReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (mode, m) in &report.per_mode {
        let path = dir.join(format!("corr_mode_{}.csv", mode + 1));
        write_matrix_csv(&path, m, "client2_component")?;
        paths.push(path);
    }
    let path = dir.join("corr_summed.csv");
    write_matrix_csv(&path, &report.summed, "client2_component")?;
    paths.push(path);

    let path = dir.join("corr_long.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["mode", "client1_component", "client2_component", "value"])
        .map_err(|e| csv_error(&path, e))?;
    let maps = report
        .per_mode
        .iter()
        .map(|(mode, m)| (mode + 1, m))
        .chain(std::iter::once((0, &report.summed)));
    for (mode, m) in maps {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                w.write_record([
                    mode.to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    format_value(m[(i, j)]),
                ])
                .map_err(|e| csv_error(&path, e))?;
            }
        }
    }
    w.flush()?;
    paths.push(path);
    Ok(paths)
}
