//! Level reduction on the ring.
//!
//! On a circle, the survival probability of a contiguous run of n < M nodes
//! is translation invariant and obeys
//!
//!   [S^n]' = -(n p + q) [S^n] + q [S^(n+1)],
//!
//! because only the two outside neighbours of the run exert pressure (q/2
//! each) and adding either extends the run by one. The full ring has no
//! outside nodes: `[S^M]' = -M p [S^M]`.

use super::ReducedLadder;
use crate::error::{Error, Result};
use crate::odeint::{integrate_observed, IntegratorConfig};
use crate::params::BassParams;
use crate::trajectory::validate_grid;

pub fn solve_circle_reduced(
    m: usize,
    params: &BassParams,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ReducedLadder> {
    validate_grid(grid)?;
    if m < 3 {
        return Err(Error::InvalidNetwork(format!(
            "ring reduction needs at least 3 nodes, got {m}"
        )));
    }
    let (p, q) = (params.p, params.q);
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        for n in 1..m {
            dy[n - 1] = -(n as f64 * p + q) * y[n - 1] + q * y[n];
        }
        dy[m - 1] = -(m as f64 * p) * y[m - 1];
    };
    let mut levels: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); m];
    integrate_observed(rhs, &vec![1.0; m], grid, cfg, |_, _, y| {
        for (col, &v) in levels.iter_mut().zip(y) {
            col.push(v);
        }
    })?;
    Ok(ReducedLadder::from_levels(m, grid.to_vec(), levels))
}
