//! Level reduction on the complete homogeneous graph.
//!
//! By exchangeability, `[S_A]` depends only on n = |A|, collapsing the
//! subset system to the ladder
//!
//!   [S^n]' = -n (p + q_n) [S^n] + n q_n [S^(n+1)],   q_n = q (M - n) / (M - 1),
//!
//! with `q_M = 0`, so the top equation reads `[S^M]' = -M p [S^M]`. All
//! levels start at one and the adopted fraction is `1 - [S^1]`.

use super::ReducedLadder;
use crate::error::Result;
use crate::odeint::{integrate_observed, IntegratorConfig};
use crate::params::BassParams;
use crate::trajectory::validate_grid;

pub fn solve_complete_reduced(
    m: usize,
    params: &BassParams,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ReducedLadder> {
    validate_grid(grid)?;
    if m == 0 {
        return Err(crate::error::Error::InvalidNetwork(
            "need at least one node".into(),
        ));
    }
    let (p, q) = (params.p, params.q);
    let mut decay = vec![0.0f64; m];
    let mut gain = vec![0.0f64; m];
    for n in 1..=m {
        let qn = if m > 1 {
            q * (m - n) as f64 / (m - 1) as f64
        } else {
            0.0
        };
        decay[n - 1] = n as f64 * (p + qn);
        gain[n - 1] = n as f64 * qn; // zero at n = m, closing the ladder
    }
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        for n in 0..m {
            let up = if n + 1 < m { y[n + 1] } else { 0.0 };
            dy[n] = -decay[n] * y[n] + gain[n] * up;
        }
    };
    let mut levels: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); m];
    integrate_observed(rhs, &vec![1.0; m], grid, cfg, |_, _, y| {
        for (col, &v) in levels.iter_mut().zip(y) {
            col.push(v);
        }
    })?;
    Ok(ReducedLadder::from_levels(m, grid.to_vec(), levels))
}
