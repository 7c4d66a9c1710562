//! Infinite-population survival ladders and their finite truncations.
//!
//! As the population grows, the level systems of `complete` and `circle`
//! converge to ladders with M-independent coefficients,
//!
//!   complete:  u_n' = -n (p + q) u_n + n q u_{n+1},
//!   ring:      u_n' = -(n p + q) u_n + q u_{n+1},
//!
//! whose solutions are known in closed form: `(1 - f)^n` with `f` the
//! logistic adoption curve, and `exp(-(n-1) p t) (1 - f)` with `f` the ring
//! limit curve. The ladders are infinite, so numerical work truncates at a
//! top index and closes the system there; `TopClosure` selects between
//! substituting the closed-form value (exact for these families) and
//! substituting zero (a crude cap whose effect decays geometrically per
//! level, at rate q / (p + q)).
//!
//! The multi-group analogue truncates at a total occupancy and closes with
//! a per-group product, which solves the limiting hierarchy exactly; the
//! product factors are integrated alongside the truncated states.
//!
//! `embedded_diff_norm` and `coefficient_gap_sup` are the two sides of the
//! convergence estimate: the weighted sup distance between a finite-M level
//! family and its limit, and the weighted sup gap between their ladder
//! coefficients. Indices above M compare the finite family as extended by
//! the limit itself, so they contribute nothing to the distance.

use std::collections::HashMap;

use crate::compartmental::{bass_formula, bass_series, circle_limit, circle_series};
use crate::error::{Error, Result};
use crate::master::circle::solve_circle_reduced;
use crate::master::complete::solve_complete_reduced;
use crate::master::ReducedLadder;
use crate::odeint::{integrate_observed, IntegratorConfig};
use crate::params::{BassParams, HeteroSpec};
use crate::trajectory::validate_grid;

/// How to close the truncated ladder at its top level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopClosure {
    /// Substitute the closed-form limit value for the level above the top.
    Ansatz,
    /// Substitute zero.
    Zero,
}

/// Level family whose finite-M version is being compared against the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddedFamily {
    Complete,
    Circle,
}

/// Truncated limit ladder for the complete family, levels `1..=n_max`.
pub fn solve_truncated_complete(
    n_max: usize,
    params: &BassParams,
    closure: TopClosure,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ReducedLadder> {
    validate_grid(grid)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter(
            "truncation level must be at least 1".into(),
        ));
    }
    if closure == TopClosure::Ansatz {
        params.require_positive_p()?;
    }
    let pr = *params;
    let (p, q) = (params.p, params.q);
    // the closure is evaluated at internal stage times as well as grid
    // points, so it must be exact everywhere, not sampled
    let rhs = move |t: f64, y: &[f64], dy: &mut [f64]| {
        let top = match closure {
            TopClosure::Ansatz => {
                let f = bass_formula(t, &pr).expect("rates validated before integration");
                (1.0 - f).powi(n_max as i32 + 1)
            }
            TopClosure::Zero => 0.0,
        };
        for n in 1..=n_max {
            let next = if n < n_max { y[n] } else { top };
            dy[n - 1] = -(n as f64) * (p + q) * y[n - 1] + (n as f64) * q * next;
        }
    };
    let levels = integrate_levels(rhs, n_max, grid, cfg)?;
    Ok(ReducedLadder::from_levels(n_max, grid.to_vec(), levels))
}

/// Truncated limit ladder for the ring family, levels `1..=n_max`.
pub fn solve_truncated_circle(
    n_max: usize,
    params: &BassParams,
    closure: TopClosure,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ReducedLadder> {
    validate_grid(grid)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter(
            "truncation level must be at least 1".into(),
        ));
    }
    if closure == TopClosure::Ansatz {
        params.require_positive_p()?;
    }
    let pr = *params;
    let (p, q) = (params.p, params.q);
    let rhs = move |t: f64, y: &[f64], dy: &mut [f64]| {
        let top = match closure {
            TopClosure::Ansatz => {
                let f = circle_limit(t, &pr).expect("rates validated before integration");
                (-(n_max as f64) * p * t).exp() * (1.0 - f)
            }
            TopClosure::Zero => 0.0,
        };
        for n in 1..=n_max {
            let next = if n < n_max { y[n] } else { top };
            dy[n - 1] = -((n as f64) * p + q) * y[n - 1] + q * next;
        }
    };
    let levels = integrate_levels(rhs, n_max, grid, cfg)?;
    Ok(ReducedLadder::from_levels(n_max, grid.to_vec(), levels))
}

fn integrate_levels(
    rhs: impl FnMut(f64, &[f64], &mut [f64]),
    n_max: usize,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut levels = vec![Vec::with_capacity(grid.len()); n_max];
    integrate_observed(rhs, &vec![1.0; n_max], grid, cfg, |_, _, y| {
        for (lv, &v) in levels.iter_mut().zip(y) {
            lv.push(v);
        }
    })?;
    Ok(levels)
}

/// Truncated limiting hierarchy for the multi-group family: one unknown per
/// composition with total occupancy `1..=n_max`, closed at the top either
/// with zero or with the per-group product, whose factors `c_j` satisfy
///
///   c_j' = -(p_j + sum_i a_i Q[i][j] (1 - c_i)) c_j,  c_j(0) = 1,
///
/// and are integrated as augmented components of the same system.
pub fn solve_truncated_kgroup(
    spec: &HeteroSpec,
    n_max: usize,
    closure: TopClosure,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<KGroupLimit> {
    validate_grid(grid)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter(
            "truncation level must be at least 1".into(),
        ));
    }
    let kdim = spec.groups();
    let comps = enumerate_compositions(kdim, n_max);
    let index: HashMap<Vec<usize>, usize> =
        comps.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    let states = comps.len();

    // Per state: decay coefficient, and per direction the gain plus either
    // the upward neighbour index or the top marker.
    const TOP: usize = usize::MAX;
    let a = spec.a();
    let p = spec.p();
    let q = spec.q_matrix();
    let mut decay = vec![0.0f64; states];
    let mut gains = vec![vec![0.0f64; kdim]; states];
    let mut links = vec![vec![0usize; kdim]; states];
    for (s, comp) in comps.iter().enumerate() {
        let n: usize = comp.iter().sum();
        let mut d = 0.0;
        for j in 0..kdim {
            d += comp[j] as f64 * p[j];
        }
        for m in 0..kdim {
            let mut qk = 0.0;
            for j in 0..kdim {
                qk += q[m][j] * comp[j] as f64;
            }
            let g = a[m] * qk;
            gains[s][m] = g;
            d += g;
            links[s][m] = if n < n_max {
                let mut up = comp.clone();
                up[m] += 1;
                index[&up]
            } else {
                TOP
            };
        }
        decay[s] = d;
    }

    // State layout: truncated hierarchy, then the K product factors.
    let use_product = closure == TopClosure::Ansatz;
    let comps_rhs = comps.clone();
    let a_owned = a.to_vec();
    let p_owned = p.to_vec();
    let q_owned: Vec<Vec<f64>> = q.to_vec();
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (u, c) = y.split_at(states);
        for s in 0..states {
            let mut acc = -decay[s] * u[s];
            for m in 0..kdim {
                let g = gains[s][m];
                if g == 0.0 {
                    continue;
                }
                let neighbour = if links[s][m] != TOP {
                    u[links[s][m]]
                } else if use_product {
                    let mut prod = c[m];
                    for (j, &kj) in comps_rhs[s].iter().enumerate() {
                        prod *= c[j].powi(kj as i32);
                    }
                    prod
                } else {
                    0.0
                };
                acc += g * neighbour;
            }
            dy[s] = acc;
        }
        for j in 0..kdim {
            let mut rate = p_owned[j];
            for i in 0..kdim {
                rate += a_owned[i] * q_owned[i][j] * (1.0 - c[i]);
            }
            dy[states + j] = -rate * c[j];
        }
    };

    let mut series = vec![Vec::with_capacity(grid.len()); states];
    let mut factors = vec![Vec::with_capacity(grid.len()); kdim];
    integrate_observed(rhs, &vec![1.0; states + kdim], grid, cfg, |_, _, y| {
        for (sv, &v) in series.iter_mut().zip(y) {
            sv.push(v);
        }
        for j in 0..kdim {
            factors[j].push(y[states + j]);
        }
    })?;

    let singles: Vec<usize> = (0..kdim)
        .map(|j| {
            let mut e = vec![0usize; kdim];
            e[j] = 1;
            index[&e]
        })
        .collect();
    let mut f_limit = vec![1.0; grid.len()];
    for (j, &sj) in singles.iter().enumerate() {
        for (fi, &u) in f_limit.iter_mut().zip(&series[sj]) {
            *fi -= a[j] * u;
        }
    }
    Ok(KGroupLimit {
        grid: grid.to_vec(),
        comps,
        index,
        series,
        singles,
        factors,
        f_limit,
    })
}

fn enumerate_compositions(kdim: usize, n_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; kdim];
    fn rec(j: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if j == cur.len() {
            if cur.iter().any(|&k| k > 0) {
                out.push(cur.clone());
            }
            return;
        }
        for k in 0..=left {
            cur[j] = k;
            rec(j + 1, left - k, cur, out);
        }
        cur[j] = 0;
    }
    rec(0, n_max, &mut cur, &mut out);
    out
}

/// Solution of the truncated multi-group limit hierarchy.
#[derive(Debug, Clone)]
pub struct KGroupLimit {
    grid: Vec<f64>,
    comps: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    series: Vec<Vec<f64>>,
    singles: Vec<usize>,
    factors: Vec<Vec<f64>>,
    f_limit: Vec<f64>,
}

impl KGroupLimit {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn compositions(&self) -> &[Vec<usize>] {
        &self.comps
    }

    pub fn value(&self, comp: &[usize]) -> Result<&[f64]> {
        let idx = self
            .index
            .get(comp)
            .ok_or_else(|| Error::InvalidParameter(format!("composition {comp:?} not stored")))?;
        Ok(&self.series[*idx])
    }

    /// Survival of a single member of the group, `u_{e_j}`.
    pub fn singleton(&self, group: usize) -> &[f64] {
        &self.series[self.singles[group]]
    }

    /// Product factor `c_j` of the closure ansatz.
    pub fn factor(&self, group: usize) -> &[f64] {
        &self.factors[group]
    }

    /// Limiting total adopted fraction `1 - sum_j a_j u_{e_j}`.
    pub fn f_limit(&self) -> &[f64] {
        &self.f_limit
    }
}

/// Weighted sup distance between the finite-M level family and its limit:
/// `sup over grid times and 1 <= n <= M of exp(-eps n) |u_n^(M) - u_n^inf|`.
pub fn embedded_diff_norm(
    family: EmbeddedFamily,
    m: usize,
    params: &BassParams,
    eps: f64,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "weight exponent must be finite and nonnegative, got {eps}"
        )));
    }
    let ladder = match family {
        EmbeddedFamily::Complete => solve_complete_reduced(m, params, grid, cfg)?,
        EmbeddedFamily::Circle => solve_circle_reduced(m, params, grid, cfg)?,
    };
    let limit_base = match family {
        EmbeddedFamily::Complete => bass_series(grid, params)?,
        EmbeddedFamily::Circle => circle_series(grid, params)?,
    };
    let p = params.p;
    let mut sup = 0.0f64;
    for n in 1..=m {
        let weight = (-eps * n as f64).exp();
        let level = ladder.level(n)?;
        for (i, &t) in grid.iter().enumerate() {
            let lim = match family {
                EmbeddedFamily::Complete => (1.0 - limit_base[i]).powi(n as i32),
                EmbeddedFamily::Circle => {
                    (-((n - 1) as f64) * p * t).exp() * (1.0 - limit_base[i])
                }
            };
            let d = weight * (level[i] - lim).abs();
            if d > sup {
                sup = d;
            }
        }
    }
    Ok(sup)
}

/// Weighted sup gap between the finite-M ladder coefficients and the limit
/// coefficients, returned as `(exact, analytic)` where `analytic` is the
/// closed-form majorant used in the convergence estimate.
///
/// Complete family: the gap at level n is `q (n - 1) / (M - 1)`, so the
/// exact sup is `max over n of q (n - 1) exp(-eps n) / (M - 1)`, majorized
/// by `q / (e eps (M - 1))` via `x exp(-eps x) <= 1 / (e eps)`.
///
/// Ring family: the ladders differ only in the missing top coupling, a
/// single gap of size q at level M, so both values equal `q exp(-eps M)`.
pub fn coefficient_gap_sup(
    family: EmbeddedFamily,
    m: usize,
    params: &BassParams,
    eps: f64,
) -> Result<(f64, f64)> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "weight exponent must be finite and positive, got {eps}"
        )));
    }
    let q = params.q;
    match family {
        EmbeddedFamily::Complete => {
            if m < 2 {
                return Err(Error::InvalidParameter(
                    "coefficient gap needs at least 2 nodes on the complete graph".into(),
                ));
            }
            let mut exact = 0.0f64;
            for n in 1..=m {
                let g = q * (n - 1) as f64 / (m - 1) as f64 * (-eps * n as f64).exp();
                if g > exact {
                    exact = g;
                }
            }
            let analytic = q / (std::f64::consts::E * eps * (m - 1) as f64);
            Ok((exact, analytic))
        }
        EmbeddedFamily::Circle => {
            if m < 3 {
                return Err(Error::InvalidParameter(
                    "ring needs at least 3 nodes".into(),
                ));
            }
            let exact = q * (-eps * m as f64).exp();
            Ok((exact, exact))
        }
    }
}
