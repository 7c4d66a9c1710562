//! Exact survival probabilities for every node subset of a small network.
//!
//! For a subset A of nodes, `[S_A](t)` is the probability that nobody in A
//! has adopted by time t. These expectations close under differentiation:
//!
//!   d/dt [S_A] = -(sum_{i in A} p_i + sum_{j not in A} w(j, A)) [S_A]
//!                + sum_{j not in A} w(j, A) [S_{A + j}]
//!
//! where `w(j, A) = sum_{i in A} q_{j,i} / d_i` is the total rate at which
//! an adopted outside node j would push the members of A. The full system
//! over all nonempty subsets is linear with 2^M - 1 unknowns, so M is capped
//! at 14. It serves as the ground-truth oracle for every reduction.

use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::odeint::{integrate_observed, IntegratorConfig};
use crate::trajectory::validate_grid;

pub const MAX_FULL_NODES: usize = 14;

/// Survival series for every nonempty node subset, keyed by bitmask.
#[derive(Debug, Clone)]
pub struct SubsetTable {
    m: usize,
    grid: Vec<f64>,
    /// values[mask - 1][ti]
    values: Vec<Vec<f64>>,
    f_discrete: Vec<f64>,
}

impl SubsetTable {
    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Survival series of a subset given as node indices (any order,
    /// duplicates rejected).
    pub fn survival(&self, nodes: &[usize]) -> Result<&[f64]> {
        let mask = self.mask_of(nodes)?;
        Ok(&self.values[mask as usize - 1])
    }

    pub fn survival_mask(&self, mask: u32) -> Result<&[f64]> {
        if mask == 0 || mask >= (1u32 << self.m) {
            return Err(Error::InvalidParameter(format!(
                "subset mask {mask:#b} out of range for {} nodes",
                self.m
            )));
        }
        Ok(&self.values[mask as usize - 1])
    }

    /// Expected adopted fraction `1 - (1/M) sum_j [S_j]`.
    pub fn f_discrete(&self) -> &[f64] {
        &self.f_discrete
    }

    pub fn mask_of(&self, nodes: &[usize]) -> Result<u32> {
        let mut mask = 0u32;
        for &j in nodes {
            if j >= self.m {
                return Err(Error::InvalidParameter(format!(
                    "node {j} out of range for {} nodes",
                    self.m
                )));
            }
            let bit = 1u32 << j;
            if mask & bit != 0 {
                return Err(Error::InvalidParameter(format!("duplicate node {j}")));
            }
            mask |= bit;
        }
        if mask == 0 {
            return Err(Error::InvalidParameter("empty subset".into()));
        }
        Ok(mask)
    }

    /// Canonical column name for CSV export: `S_3_7` for nodes {3, 7},
    /// 1-based and ascending.
    pub fn column_name(mask: u32) -> String {
        let mut name = String::from("S");
        for j in 0..32 {
            if mask & (1 << j) != 0 {
                name.push('_');
                name.push_str(&(j + 1).to_string());
            }
        }
        name
    }

    pub fn masks(&self) -> impl Iterator<Item = u32> + '_ {
        1..(1u32 << self.m)
    }
}

/// Integrate the full subset system for `net` on `grid`.
pub fn solve_full_master(
    net: &NetworkInstance,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<SubsetTable> {
    validate_grid(grid)?;
    let m = net.node_count();
    if m > MAX_FULL_NODES {
        return Err(Error::StateBudget {
            required: (1usize << m) - 1,
            budget: (1usize << MAX_FULL_NODES) - 1,
        });
    }
    let states = (1usize << m) - 1;

    // per-pair hazard q_{i,j} / d_j, indexed [source][target]
    let mut hz = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                hz[i][j] = net.edge_hazard(i, j);
            }
        }
    }

    // sparse linear operator: one diagonal entry per subset plus one
    // off-diagonal entry per (subset, outside node) pair with positive rate
    let mut diag = vec![0.0f64; states];
    let mut offsets = Vec::with_capacity(states + 1);
    let mut entries: Vec<(u32, f64)> = Vec::new();
    offsets.push(0u32);
    for mask in 1..=(states as u32) {
        let mut d = 0.0;
        for i in 0..m {
            if mask & (1 << i) != 0 {
                d += net.external_rate(i);
            }
        }
        for j in 0..m {
            if mask & (1 << j) == 0 {
                let mut w = 0.0;
                for i in 0..m {
                    if mask & (1 << i) != 0 {
                        w += hz[j][i];
                    }
                }
                if w > 0.0 {
                    d += w;
                    entries.push((mask | (1 << j), w));
                }
            }
        }
        diag[mask as usize - 1] = d;
        offsets.push(entries.len() as u32);
    }

    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        for s in 0..states {
            let mut acc = -diag[s] * y[s];
            let lo = offsets[s] as usize;
            let hi = offsets[s + 1] as usize;
            for &(target, w) in &entries[lo..hi] {
                acc += w * y[target as usize - 1];
            }
            dy[s] = acc;
        }
    };

    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); states];
    integrate_observed(rhs, &vec![1.0; states], grid, cfg, |_, _, y| {
        for (col, &v) in values.iter_mut().zip(y) {
            col.push(v);
        }
    })?;

    let f_discrete: Vec<f64> = (0..grid.len())
        .map(|ti| {
            let surviving: f64 = (0..m)
                .map(|j| values[(1usize << j) - 1][ti])
                .sum();
            1.0 - surviving / m as f64
        })
        .collect();

    Ok(SubsetTable {
        m,
        grid: grid.to_vec(),
        values,
        f_discrete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{from_weight_matrix, make_complete};
    use crate::params::BassParams;
    use crate::trajectory::uniform_grid;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn single_node_survival_is_exponential() {
        let net = make_complete(1, &BassParams::new(0.07, 0.3).unwrap()).unwrap();
        let grid = uniform_grid(20.0, 41).unwrap();
        let table = solve_full_master(&net, &grid, &cfg()).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = (-0.07 * t).exp();
            assert!((table.survival(&[0]).unwrap()[i] - exact).abs() < 1e-10);
            assert!((table.f_discrete()[i] - (1.0 - exact)).abs() < 1e-10);
        }
    }

    #[test]
    fn two_node_complete_matches_closed_form() {
        let (p, q) = (0.04, 0.25);
        let net = make_complete(2, &BassParams::new(p, q).unwrap()).unwrap();
        let grid = uniform_grid(30.0, 61).unwrap();
        let table = solve_full_master(&net, &grid, &cfg()).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let pair = (-2.0 * p * t).exp();
            // [S_1]' = -(p + q)[S_1] + q [S_12]  (indegree 1)
            let single = (-(p + q) * t).exp()
                + q * ((-2.0 * p * t).exp() - (-(p + q) * t).exp()) / (q - p);
            assert!((table.survival(&[0, 1]).unwrap()[i] - pair).abs() < 1e-10);
            assert!((table.survival(&[0]).unwrap()[i] - single).abs() < 1e-10);
            assert!((table.survival(&[1]).unwrap()[i] - single).abs() < 1e-10);
        }
    }

    #[test]
    fn influence_direction_is_source_to_target() {
        // one edge 0 -> 1: node 0 never feels internal pressure, node 1 does
        let (p0, p1, w) = (0.03, 0.05, 0.4);
        let weights = vec![vec![0.0, w], vec![0.0, 0.0]];
        let net = from_weight_matrix(vec![p0, p1], &weights).unwrap();
        let grid = uniform_grid(25.0, 51).unwrap();
        let table = solve_full_master(&net, &grid, &cfg()).unwrap();
        // decay of [S_1]: alpha = p1 + w/d_1 with d_1 = 1; source term from [S_01]
        let alpha = p1 + w;
        let beta = p0 + p1;
        for (i, &t) in grid.iter().enumerate() {
            assert!((table.survival(&[0]).unwrap()[i] - (-p0 * t).exp()).abs() < 1e-10);
            let s1 = (-alpha * t).exp()
                + w * ((-beta * t).exp() - (-alpha * t).exp()) / (alpha - beta);
            assert!((table.survival(&[1]).unwrap()[i] - s1).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_internal_rates_decouple() {
        let p = [0.11, 0.05, 0.2, 0.08];
        let w = vec![vec![0.0; 4]; 4];
        let net = from_weight_matrix(p.to_vec(), &w).unwrap();
        let grid = uniform_grid(15.0, 31).unwrap();
        let table = solve_full_master(&net, &grid, &cfg()).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = (-(p[0] + p[2]) * t).exp();
            assert!((table.survival(&[0, 2]).unwrap()[i] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn subset_monotonicity_and_range() {
        let mut lcg = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (lcg >> 11) as f64 / (1u64 << 53) as f64
        };
        let m = 6;
        let mut w = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    w[i][j] = next();
                }
            }
        }
        let p: Vec<f64> = (0..m).map(|_| 0.01 + 0.19 * next()).collect();
        let net = from_weight_matrix(p, &w).unwrap();
        let grid = uniform_grid(12.0, 25).unwrap();
        let table = solve_full_master(&net, &grid, &cfg()).unwrap();
        for mask in table.masks() {
            let vals = table.survival_mask(mask).unwrap();
            assert!(vals.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
            assert!(vals.windows(2).all(|p| p[1] <= p[0] + 1e-9), "nonincreasing");
            // adding one node can only lower the survival probability
            for j in 0..m {
                if mask & (1 << j) == 0 {
                    let bigger = table.survival_mask(mask | (1 << j)).unwrap();
                    for (a, b) in vals.iter().zip(bigger) {
                        assert!(*b <= a + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn node_cap_is_enforced() {
        let net = make_complete(15, &BassParams::new(0.02, 0.1).unwrap()).unwrap();
        let grid = uniform_grid(1.0, 3).unwrap();
        assert!(matches!(
            solve_full_master(&net, &grid, &cfg()),
            Err(Error::StateBudget { .. })
        ));
    }

    #[test]
    fn column_names() {
        assert_eq!(SubsetTable::column_name(0b1), "S_1");
        assert_eq!(SubsetTable::column_name(0b1010), "S_2_4");
    }
}
