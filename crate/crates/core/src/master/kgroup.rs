//! Composition reduction on the complete multi-group graph.
//!
//! Within-group exchangeability collapses the subset system to one unknown
//! per composition vector k = (k_1..k_K), 0 <= k_j <= M_j: `u_k` is the
//! survival probability of any subset containing k_j members of group j.
//! With `v_m(k) = (M_m - k_m) / (M - 1)` and `(Qk)_m = sum_j Q[m][j] k_j`,
//!
//!   u_k' = -(k.p + sum_m v_m (Qk)_m) u_k + sum_m v_m (Qk)_m u_{k + e_m}.
//!
//! The coefficients vanish exactly at the box faces k_m = M_m, so one flat
//! array over the full box (empty composition pinned at 1) gives a uniform,
//! allocation-free right-hand side. Coefficients are time independent and
//! precomputed once; the dominant cost is streaming the state vector.

use crate::error::{Error, Result};
use crate::odeint::{integrate_observed, IntegratorConfig};
use crate::params::{GroupSizes, HeteroSpec};
use crate::trajectory::validate_grid;

#[derive(Debug, Clone, Copy)]
pub struct KGroupOptions {
    /// Upper bound on the flat state count prod(M_j + 1).
    pub state_budget: usize,
    /// Keep the full per-composition table (small systems only).
    pub store_table: bool,
}

impl Default for KGroupOptions {
    fn default() -> Self {
        KGroupOptions {
            state_budget: 2_000_000,
            store_table: false,
        }
    }
}

const TABLE_CELL_CAP: usize = 4_000_000;

/// Full per-composition survival table, kept only on request.
#[derive(Debug, Clone)]
pub struct KGroupTable {
    dims: Vec<usize>,
    strides: Vec<usize>,
    /// rows[flat_state][ti]
    rows: Vec<Vec<f64>>,
}

impl KGroupTable {
    pub fn value(&self, comp: &[usize]) -> Result<&[f64]> {
        if comp.len() != self.dims.len() {
            return Err(Error::InvalidParameter(format!(
                "composition has {} groups, table has {}",
                comp.len(),
                self.dims.len()
            )));
        }
        let mut s = 0usize;
        for (j, (&kj, &dj)) in comp.iter().zip(&self.dims).enumerate() {
            if kj >= dj {
                return Err(Error::InvalidParameter(format!(
                    "composition entry {kj} exceeds group {j} size {}",
                    dj - 1
                )));
            }
            s += kj * self.strides[j];
        }
        Ok(&self.rows[s])
    }

    /// All compositions in flat (first group fastest) order.
    pub fn compositions(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut k = vec![0usize; self.dims.len()];
        for _ in 0..self.rows.len() {
            out.push(k.clone());
            advance(&mut k, &self.dims);
        }
        out
    }

    /// CSV column name for a composition, e.g. `u_2_0_1`.
    pub fn column_name(comp: &[usize]) -> String {
        let mut name = String::from("u");
        for kj in comp {
            name.push('_');
            name.push_str(&kj.to_string());
        }
        name
    }
}

#[derive(Debug, Clone)]
pub struct KGroupSolution {
    grid: Vec<f64>,
    sizes: Vec<usize>,
    f_discrete: Vec<f64>,
    /// singletons[j] = u_{e_j}(t)
    singletons: Vec<Vec<f64>>,
    table: Option<KGroupTable>,
}

impl KGroupSolution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn f_discrete(&self) -> &[f64] {
        &self.f_discrete
    }

    pub fn singleton(&self, group: usize) -> &[f64] {
        &self.singletons[group]
    }

    pub fn table(&self) -> Option<&KGroupTable> {
        self.table.as_ref()
    }
}

pub fn solve_kgroup_reduced(
    spec: &HeteroSpec,
    sizes: &GroupSizes,
    grid: &[f64],
    cfg: &IntegratorConfig,
    opts: &KGroupOptions,
) -> Result<KGroupSolution> {
    validate_grid(grid)?;
    let kdim = spec.groups();
    if sizes.sizes().len() != kdim {
        return Err(Error::InvalidParameter(format!(
            "spec has {kdim} groups but sizes list {}",
            sizes.sizes().len()
        )));
    }
    let m_total = sizes.total();
    let dims: Vec<usize> = sizes.sizes().iter().map(|&mk| mk + 1).collect();
    let mut states = 1usize;
    for &d in &dims {
        states = states
            .checked_mul(d)
            .ok_or(Error::StateBudget {
                required: usize::MAX,
                budget: opts.state_budget,
            })?;
    }
    if states > opts.state_budget {
        return Err(Error::StateBudget {
            required: states,
            budget: opts.state_budget,
        });
    }
    if opts.store_table && states.saturating_mul(grid.len()) > TABLE_CELL_CAP {
        return Err(Error::InvalidParameter(format!(
            "full table of {states} states x {} grid points exceeds the cell cap",
            grid.len()
        )));
    }

    let mut strides = vec![0usize; kdim];
    let mut acc = 1usize;
    for j in 0..kdim {
        strides[j] = acc;
        acc *= dims[j];
    }

    // Time-independent coefficients, one pass over the box.
    let p = spec.p();
    let q = spec.q_matrix();
    let denom = if m_total > 1 {
        (m_total - 1) as f64
    } else {
        1.0 // unused: v is forced to zero below when M = 1
    };
    let mut decay = vec![0.0f64; states];
    let mut gains: Vec<Vec<f64>> = vec![vec![0.0f64; states]; kdim];
    let mut k = vec![0usize; kdim];
    for s in 0..states {
        let mut kp = 0.0;
        for j in 0..kdim {
            kp += k[j] as f64 * p[j];
        }
        let mut d = kp;
        for m in 0..kdim {
            let mut qk = 0.0;
            for j in 0..kdim {
                qk += q[m][j] * k[j] as f64;
            }
            let v = if m_total > 1 {
                (sizes.sizes()[m] - k[m]) as f64 / denom
            } else {
                0.0
            };
            let g = v * qk;
            gains[m][s] = g;
            d += g;
        }
        decay[s] = d;
        advance(&mut k, &dims);
    }

    let lims: Vec<usize> = strides.iter().map(|&st| states - st).collect();
    let rhs = {
        let decay = &decay;
        let gains = &gains;
        let lims = &lims;
        let strides = &strides;
        move |_t: f64, y: &[f64], dy: &mut [f64]| {
            for s in 0..states {
                let mut acc = -decay[s] * y[s];
                for m in 0..kdim {
                    // gains vanish on the face k_m = M_m, which covers every
                    // index whose upward neighbour would leave the box
                    if s < lims[m] {
                        acc += gains[m][s] * y[s + strides[m]];
                    }
                }
                dy[s] = acc;
            }
        }
    };

    let weights: Vec<f64> = sizes
        .sizes()
        .iter()
        .map(|&mk| mk as f64 / m_total as f64)
        .collect();
    let mut f_discrete = Vec::with_capacity(grid.len());
    let mut singletons: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); kdim];
    let mut rows: Vec<Vec<f64>> = if opts.store_table {
        vec![Vec::with_capacity(grid.len()); states]
    } else {
        Vec::new()
    };
    integrate_observed(rhs, &vec![1.0; states], grid, cfg, |_, _, y| {
        let mut surviving = 0.0;
        for j in 0..kdim {
            let u = y[strides[j]];
            singletons[j].push(u);
            surviving += weights[j] * u;
        }
        f_discrete.push(1.0 - surviving);
        if opts.store_table {
            for (row, &v) in rows.iter_mut().zip(y) {
                row.push(v);
            }
        }
    })?;

    let table = if opts.store_table {
        Some(KGroupTable {
            dims,
            strides,
            rows,
        })
    } else {
        None
    };
    Ok(KGroupSolution {
        grid: grid.to_vec(),
        sizes: sizes.sizes().to_vec(),
        f_discrete,
        singletons,
        table,
    })
}

fn advance(k: &mut [usize], dims: &[usize]) {
    for j in 0..k.len() {
        k[j] += 1;
        if k[j] < dims[j] {
            return;
        }
        k[j] = 0;
    }
}
