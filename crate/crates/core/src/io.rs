//! Plain-text artifact writers. Numbers are written with 17 significant
//! digits so every f64 round-trips exactly and reruns are byte-identical.

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use std::fmt::Write as _;
use std::path::Path;

/// Shortest-exact style is deliberately avoided: a fixed 17-digit format
/// keeps column widths stable and makes diffs trivial.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write one CSV with a mandatory header; `columns` pairs names with
/// equal-length value slices.
pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::InvalidParameter("csv needs at least one column".into()));
    }
    let rows = columns[0].1.len();
    for (name, vals) in columns {
        if vals.len() != rows {
            return Err(Error::GridMismatch(format!(
                "csv column '{name}' has {} rows, expected {rows}",
                vals.len()
            )));
        }
    }
    let mut text = String::new();
    let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    text.push_str(&names.join(","));
    text.push('\n');
    for r in 0..rows {
        for (c, (_, vals)) in columns.iter().enumerate() {
            if c > 0 {
                text.push(',');
            }
            let _ = write!(text, "{}", format_f64(vals[r]));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Trajectory -> CSV with a leading `t` column.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut columns: Vec<(&str, &[f64])> = vec![("t", tr.grid())];
    for (name, vals) in tr.series() {
        columns.push((name, vals));
    }
    write_csv(path, &columns)
}

/// Serialize any serde value as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidParameter(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
