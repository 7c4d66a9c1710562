//! Time grids and named solution series.

use crate::error::{Error, Result};

/// Uniform grid of `points >= 2` times from 0 to `t_end` inclusive.
pub fn uniform_grid(t_end: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid end must be positive and finite, got {t_end}"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidParameter(
            "grid needs at least two points".into(),
        ));
    }
    let step = t_end / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| i as f64 * step).collect();
    // land exactly on the requested endpoint despite rounding
    grid[points - 1] = t_end;
    Ok(grid)
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::GridMismatch("empty grid".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::GridMismatch(format!(
            "grid must start at 0, got {}",
            grid[0]
        )));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::GridMismatch(format!(
                "grid must be strictly increasing and finite ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Largest absolute difference between two series on a shared grid.
pub fn sup_abs_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Largest signed difference `max_t (a - b)`; the natural quantity when a
/// limit curve is known to dominate its finite counterpart.
pub fn sup_signed_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::GridMismatch("empty series".into()));
    }
    Ok(())
}

/// Named series sharing one strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Vec<f64>,
    series: Vec<(String, Vec<f64>)>,
}

impl Trajectory {
    pub fn new(grid: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        Ok(Trajectory {
            grid,
            series: Vec::new(),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn push_series(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "series '{name}' has {} values for {} grid points",
                values.len(),
                self.grid.len()
            )));
        }
        if self.series.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidParameter(format!(
                "duplicate series name '{name}'"
            )));
        }
        self.series.push((name, values));
        Ok(())
    }

    /// Like `push_series` but also checks the values stay within [0, 1]
    /// up to a small numerical slack, as adoption fractions must.
    pub fn push_fraction_series(
        &mut self,
        name: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<()> {
        const SLACK: f64 = 1e-9;
        let name = name.into();
        for &v in &values {
            if !((-SLACK..=1.0 + SLACK).contains(&v)) {
                return Err(Error::Invariant(format!(
                    "series '{name}' leaves [0,1]: value {v}"
                )));
            }
        }
        self.push_series(name, values)
    }

    pub fn series(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.series.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}
