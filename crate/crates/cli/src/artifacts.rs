//! Writing run-directory files.

use std::path::Path;

use anyhow::{Context, Result};
use mtst_core::metrics::{MetricsReport, CSV_COLUMNS};
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes a CSV file with `header` and pre-rendered rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header of a metrics table keyed by leading label columns.
pub fn metrics_header<'a>(keys: &[&'a str]) -> Vec<&'a str> {
    keys.iter().copied().chain(CSV_COLUMNS).collect()
}

pub fn metrics_row(keys: &[&str], report: &MetricsReport) -> Vec<String> {
    keys.iter().map(|k| k.to_string()).chain(report.csv_row()).collect()
}
