//! Exact survival-probability systems for finite networks.
//!
//! `full` integrates every node subset of an arbitrary small network; the
//! sibling modules exploit symmetry to collapse that exponential system to
//! one unknown per occupancy level (complete graphs, rings) or per group
//! composition (complete multi-group graphs), and `limit` handles the
//! infinite-population ladders these converge to.

pub mod circle;
pub mod complete;
pub mod full;
pub mod kgroup;
pub mod limit;

pub use circle::solve_circle_reduced;
pub use complete::solve_complete_reduced;
pub use full::{solve_full_master, SubsetTable, MAX_FULL_NODES};
pub use kgroup::{solve_kgroup_reduced, KGroupOptions, KGroupSolution, KGroupTable};
pub use limit::{
    coefficient_gap_sup, embedded_diff_norm, solve_truncated_circle, solve_truncated_complete,
    solve_truncated_kgroup, EmbeddedFamily, KGroupLimit, TopClosure,
};

use crate::error::{Error, Result};

/// Survival probabilities organized by occupancy level: `level(n)` is the
/// common survival series of any admissible n-node subset (all n-subsets on
/// a complete graph, contiguous n-runs on a ring).
#[derive(Debug, Clone)]
pub struct ReducedLadder {
    m: usize,
    grid: Vec<f64>,
    /// levels[n - 1][ti] for n = 1..=m
    levels: Vec<Vec<f64>>,
    f_discrete: Vec<f64>,
}

impl ReducedLadder {
    pub(crate) fn from_levels(m: usize, grid: Vec<f64>, levels: Vec<Vec<f64>>) -> Self {
        let f_discrete = levels[0].iter().map(|&s| 1.0 - s).collect();
        ReducedLadder {
            m,
            grid,
            levels,
            f_discrete,
        }
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Survival series of an n-node subset, `1 <= n <= m`.
    pub fn level(&self, n: usize) -> Result<&[f64]> {
        if n == 0 || n > self.levels.len() {
            return Err(Error::InvalidParameter(format!(
                "level {n} out of range 1..={}",
                self.levels.len()
            )));
        }
        Ok(&self.levels[n - 1])
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Expected adopted fraction `1 - [S^1]`.
    pub fn f_discrete(&self) -> &[f64] {
        &self.f_discrete
    }
}
