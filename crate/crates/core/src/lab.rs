//! Experiment drivers: convergence-rate studies, heterogeneity comparisons,
//! bound verification, and the cautionary truncation toys.
//!
//! A convergence study fixes rates, solves the exact finite-M system for a
//! list of population sizes, measures the sup distance to the limiting
//! compartmental curve on a shared grid, and fits a rate law: a power law
//! in M for the complete and multi-group families, an exponential in M for
//! the ring. The horizon is chosen so the limit curve has saturated, which
//! guarantees the sup over all time is captured by the grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::compartmental::{
    bass_formula, bass_series, circle_limit, circle_series, initial_curvature, solve_hetero,
    solve_mild_hetero, two_group_cross_example, CurvatureSystem, InitialCurvature,
};
use crate::epsnorm::EpsNormParams;
use crate::error::{Error, Result};
use crate::fit::{fit_line, FitModel, FitResult};
use crate::master::kgroup::KGroupOptions;
use crate::master::limit::{coefficient_gap_sup, embedded_diff_norm, EmbeddedFamily};
use crate::master::{solve_circle_reduced, solve_complete_reduced, solve_kgroup_reduced};
use crate::odeint::{integrate_observed, IntegratorConfig};
use crate::params::{BassParams, GroupSizes, HeteroSpec};
use crate::trajectory::{sup_signed_diff, uniform_grid, validate_grid};

/// Grid resolution used by all studies. Doubling it must not move any
/// reported sup by more than one percent.
pub const STUDY_GRID_POINTS: usize = 400;

/// A horizon is long enough once the limit curve is this close to full
/// adoption.
pub const SATURATION_GAP: f64 = 1e-4;

/// Differences at or below this floor are indistinguishable from integrator
/// noise and are excluded from rate fits.
pub const DIFF_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyFamily {
    Complete,
    Circle,
    KGroup,
}

impl std::fmt::Display for StudyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StudyFamily::Complete => "complete",
            StudyFamily::Circle => "circle",
            StudyFamily::KGroup => "kgroup",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub family: StudyFamily,
    /// Population sizes actually solved (a prefix of the request when the
    /// study truncates).
    pub ms: Vec<usize>,
    /// `sup over grid of (f_limit - f_discrete)` per entry of `ms`.
    pub sup_diffs: Vec<f64>,
    /// Rate-law fit; absent when fewer than two usable differences remain.
    pub fit: Option<FitResult>,
    pub horizon: f64,
    pub grid_points: usize,
    /// True when the M list was cut short (difference floor or state budget).
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Fixed horizon; computed from the limit curve when absent.
    pub horizon: Option<f64>,
    pub grid_points: usize,
    pub cfg: IntegratorConfig,
    /// Flat state cap for the multi-group family.
    pub state_budget: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            horizon: None,
            grid_points: STUDY_GRID_POINTS,
            cfg: IntegratorConfig::default(),
            state_budget: KGroupOptions::default().state_budget,
        }
    }
}

impl StudyOptions {
    /// Preset for the multi-group study, whose state counts reach the
    /// millions: tolerances are relaxed to 1e-8, still three orders below
    /// the finite-M effects being measured.
    pub fn kgroup_default() -> Self {
        StudyOptions {
            cfg: IntegratorConfig::with_tolerances(1e-8, 1e-10),
            ..Default::default()
        }
    }
}

fn check_ms(ms: &[usize], min: usize) -> Result<()> {
    if ms.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one population size is required".into(),
        ));
    }
    if ms[0] < min {
        return Err(Error::InvalidParameter(format!(
            "population sizes must be at least {min}, got {}",
            ms[0]
        )));
    }
    if ms.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "population sizes must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Smallest t with `1 - f(t) < SATURATION_GAP` for a scalar limit curve.
fn saturation_time(f: impl Fn(f64) -> Result<f64>, label: &str) -> Result<f64> {
    let target = 1.0 - SATURATION_GAP;
    let mut hi = 1.0f64;
    while f(hi)? < target {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::InvalidParameter(format!(
                "{label} does not saturate; pass a horizon explicitly"
            )));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Horizon at which the logistic limit curve has saturated.
pub fn bass_horizon(params: &BassParams) -> Result<f64> {
    saturation_time(|t| bass_formula(t, params), "the logistic limit curve")
}

/// Horizon at which the ring limit curve has saturated.
pub fn circle_horizon(params: &BassParams) -> Result<f64> {
    saturation_time(|t| circle_limit(t, params), "the ring limit curve")
}

/// Horizon at which the heterogeneous compartmental limit has saturated,
/// found by integrating on doubling windows and refining on a dense grid.
pub fn hetero_horizon(spec: &HeteroSpec, cfg: &IntegratorConfig) -> Result<f64> {
    let target = 1.0 - SATURATION_GAP;
    let mut hi = 50.0f64;
    loop {
        let grid = uniform_grid(hi, 33)?;
        let tr = solve_hetero(spec, &grid, cfg)?;
        if *tr.total().last().unwrap() >= target {
            break;
        }
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParameter(
                "the heterogeneous limit does not saturate; pass a horizon explicitly".into(),
            ));
        }
    }
    let grid = uniform_grid(hi, 2001)?;
    let tr = solve_hetero(spec, &grid, cfg)?;
    let total = tr.total();
    let i = total
        .iter()
        .position(|&f| f >= target)
        .expect("saturation bracketed above");
    if i == 0 {
        return Ok(grid[0].max(grid[1]));
    }
    let (t0, t1) = (grid[i - 1], grid[i]);
    let (f0, f1) = (total[i - 1], total[i]);
    Ok(t0 + (target - f0) / (f1 - f0) * (t1 - t0))
}

/// Convergence of the complete-graph adoption curve to the logistic limit.
/// The distance decays like 1/M, so the fit is a power law.
pub fn study_complete(
    params: &BassParams,
    ms: &[usize],
    opts: &StudyOptions,
) -> Result<ConvergenceStudy> {
    check_ms(ms, 2)?;
    let horizon = match opts.horizon {
        Some(h) => h,
        None => bass_horizon(params)?,
    };
    let grid = uniform_grid(horizon, opts.grid_points)?;
    let limit = bass_series(&grid, params)?;
    let sup_diffs = ms
        .par_iter()
        .map(|&m| {
            let ladder = solve_complete_reduced(m, params, &grid, &opts.cfg)?;
            sup_signed_diff(&limit, ladder.f_discrete())
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_diffs(ms, &sup_diffs, FitModel::LogLog);
    Ok(ConvergenceStudy {
        family: StudyFamily::Complete,
        ms: ms.to_vec(),
        sup_diffs,
        fit,
        horizon,
        grid_points: opts.grid_points,
        truncated: false,
    })
}

/// Convergence of the ring adoption curve to its limit. The distance decays
/// exponentially in M, so the fit is semi-log and the M list is cut off
/// once differences sink to the noise floor.
pub fn study_circle(
    params: &BassParams,
    ms: &[usize],
    opts: &StudyOptions,
) -> Result<ConvergenceStudy> {
    check_ms(ms, 3)?;
    let horizon = match opts.horizon {
        Some(h) => h,
        None => circle_horizon(params)?,
    };
    let grid = uniform_grid(horizon, opts.grid_points)?;
    let limit = circle_series(&grid, params)?;
    let diffs = ms
        .par_iter()
        .map(|&m| {
            let ladder = solve_circle_reduced(m, params, &grid, &opts.cfg)?;
            sup_signed_diff(&limit, ladder.f_discrete())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut realized = Vec::new();
    let mut sup_diffs = Vec::new();
    let mut truncated = false;
    for (&m, diff) in ms.iter().zip(diffs) {
        if diff < DIFF_FLOOR {
            truncated = true;
            break;
        }
        realized.push(m);
        sup_diffs.push(diff);
    }
    let fit = fit_diffs(&realized, &sup_diffs, FitModel::SemiLog);
    Ok(ConvergenceStudy {
        family: StudyFamily::Circle,
        ms: realized,
        sup_diffs,
        fit,
        horizon,
        grid_points: opts.grid_points,
        truncated,
    })
}

/// Convergence of the multi-group adoption curve to the heterogeneous
/// compartmental limit. Group sizes follow the floor-plus-remainder rule,
/// so the realized fractions are within O(1/M) of the spec and the measured
/// distance keeps the 1/M law. Sizes whose state count exceeds the budget
/// truncate the study rather than failing it.
pub fn study_kgroup(
    spec: &HeteroSpec,
    ms: &[usize],
    opts: &StudyOptions,
) -> Result<ConvergenceStudy> {
    check_ms(ms, spec.groups())?;
    let horizon = match opts.horizon {
        Some(h) => h,
        None => hetero_horizon(spec, &opts.cfg)?,
    };
    let grid = uniform_grid(horizon, opts.grid_points)?;
    let limit = solve_hetero(spec, &grid, &opts.cfg)?;
    let kopts = KGroupOptions {
        state_budget: opts.state_budget,
        store_table: false,
    };
    let solved: Vec<Result<f64>> = ms
        .par_iter()
        .map(|&m| {
            let sizes = GroupSizes::from_fractions(spec, m)?;
            let sol = solve_kgroup_reduced(spec, &sizes, &grid, &opts.cfg, &kopts)?;
            sup_signed_diff(limit.total(), sol.f_discrete())
        })
        .collect();
    let mut realized = Vec::new();
    let mut sup_diffs = Vec::new();
    let mut truncated = false;
    for (&m, outcome) in ms.iter().zip(solved) {
        match outcome {
            Ok(diff) => {
                realized.push(m);
                sup_diffs.push(diff);
            }
            Err(Error::StateBudget { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let fit = fit_diffs(&realized, &sup_diffs, FitModel::LogLog);
    Ok(ConvergenceStudy {
        family: StudyFamily::KGroup,
        ms: realized,
        sup_diffs,
        fit,
        horizon,
        grid_points: opts.grid_points,
        truncated,
    })
}

fn fit_diffs(ms: &[usize], diffs: &[f64], model: FitModel) -> Option<FitResult> {
    if ms.len() < 2 || diffs.iter().any(|&d| d <= DIFF_FLOOR) {
        return None;
    }
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    fit_line(&xs, diffs, model).ok()
}

/// Side-by-side solution of a mildly heterogeneous population and its
/// homogenized stand-in, with the diagnostics behind the comparison
/// theorems.
#[derive(Debug, Clone, Serialize)]
pub struct HeteroComparison {
    pub grid: Vec<f64>,
    /// Total adopted fraction of the heterogeneous model.
    pub f_het: Vec<f64>,
    /// Within-group adopted fractions `f_k / a_k`.
    pub group_fractions: Vec<Vec<f64>>,
    /// Logistic curve of the homogenized rates.
    pub f_hom: Vec<f64>,
    /// Pointwise `f_hom - f_het`; positive when heterogeneity slows adoption.
    pub gap: Vec<f64>,
    /// Drive mismatch `y = sum_k f_k p_k - pbar f + f (sum_k f_k q_k - qbar f)`:
    /// the homogenized drive at the heterogeneous adoption level minus the
    /// actual heterogeneous drive. Positive y forces f_het below f_hom.
    pub y: Vec<f64>,
    pub hom: BassParams,
    /// Gap strictly positive at every grid time after zero.
    pub gap_positive: bool,
    /// y strictly positive at every grid time after zero.
    pub y_positive: bool,
    /// Within-group fractions pointwise ascending in the group index.
    pub fractions_ascending: bool,
}

pub fn hetero_compare(
    p: &[f64],
    q: &[f64],
    a: &[f64],
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<HeteroComparison> {
    validate_grid(grid)?;
    let spec = HeteroSpec::mild(a.to_vec(), p.to_vec(), q.to_vec())?;
    let het = solve_mild_hetero(a.to_vec(), p.to_vec(), q.to_vec(), grid, cfg)?;
    let hom = spec.homogenize();
    let f_hom = bass_series(grid, &hom)?;
    let k = spec.groups();
    let f_het = het.total().to_vec();
    let group_fractions: Vec<Vec<f64>> = (0..k)
        .map(|j| het.group(j).iter().map(|&f| f / a[j]).collect())
        .collect();
    let gap: Vec<f64> = f_hom.iter().zip(&f_het).map(|(&h, &e)| h - e).collect();
    let mut y = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let f = f_het[i];
        let mut fp = 0.0;
        let mut fq = 0.0;
        for j in 0..k {
            fp += het.group(j)[i] * p[j];
            fq += het.group(j)[i] * q[j];
        }
        y.push(fp - hom.p * f + f * (fq - hom.q * f));
    }
    let after_zero = |v: &[f64]| {
        grid.iter()
            .zip(v)
            .skip(1)
            .all(|(&t, &x)| t <= 0.0 || x > 0.0)
    };
    let gap_positive = after_zero(&gap);
    let y_positive = after_zero(&y);
    let fractions_ascending = (1..k).all(|j| {
        group_fractions[j - 1]
            .iter()
            .zip(&group_fractions[j])
            .all(|(&lo, &hi)| lo <= hi + 1e-12)
    });
    Ok(HeteroComparison {
        grid: grid.to_vec(),
        f_het,
        group_fractions,
        f_hom,
        gap,
        y,
        hom,
        gap_positive,
        y_positive,
        fractions_ascending,
    })
}

/// Two-group cross-influence population that beats its homogenized Bass
/// curve early: group 1 adopts only through influence from group 2, which
/// adopts only externally, yet both homogenize to the same (p, q).
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub grid: Vec<f64>,
    pub f_het: Vec<f64>,
    pub f_hom: Vec<f64>,
    /// Pointwise `f_het - f_hom`; positive where heterogeneity is ahead.
    pub diff: Vec<f64>,
    /// Heterogeneity leads on an initial interval.
    pub initial_positive: bool,
    /// Interpolated time where the lead is surrendered, if on the grid.
    pub crossing_time: Option<f64>,
    pub het_curvature: InitialCurvature,
    pub hom_curvature: InitialCurvature,
    /// p = q makes both second derivatives vanish; only the derivative
    /// values are informative then.
    pub degenerate: bool,
}

pub fn hetero_counterexample(
    params: &BassParams,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<CounterexampleReport> {
    validate_grid(grid)?;
    params.require_positive_p()?;
    params.require_positive_q()?;
    let spec = two_group_cross_example(params);
    let het = solve_hetero(&spec, grid, cfg)?;
    let f_het = het.total().to_vec();
    let f_hom = bass_series(grid, params)?;
    let diff: Vec<f64> = f_het.iter().zip(&f_hom).map(|(&e, &h)| e - h).collect();
    let first_positive = grid.iter().position(|&t| t > 0.0);
    let initial_positive = first_positive.map(|i| diff[i] > 0.0).unwrap_or(false);
    let mut crossing_time = None;
    if initial_positive {
        let start = first_positive.unwrap();
        for i in start + 1..grid.len() {
            if diff[i] <= 0.0 {
                let (t0, t1) = (grid[i - 1], grid[i]);
                let (d0, d1) = (diff[i - 1], diff[i]);
                crossing_time = Some(t0 + d0 / (d0 - d1) * (t1 - t0));
                break;
            }
        }
    }
    let het_curvature = initial_curvature(&CurvatureSystem::TwoGroupCross(*params), cfg)?;
    let hom_curvature = initial_curvature(&CurvatureSystem::Homogeneous(*params), cfg)?;
    Ok(CounterexampleReport {
        grid: grid.to_vec(),
        f_het,
        f_hom,
        diff,
        initial_positive,
        crossing_time,
        het_curvature,
        hom_curvature,
        degenerate: params.p == params.q,
    })
}

/// Coefficient rule of the truncation toy ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyRule {
    /// a(k) = 1: truncations converge to the formal limit u = 1.
    Constant,
    /// a(k) = 3^k: truncations stay bounded away from the formal limit.
    Geometric,
}

impl std::fmt::Display for ToyRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ToyRule::Constant => "constant",
            ToyRule::Geometric => "geometric",
        })
    }
}

/// Truncated toy ladder `u_k' = a(k)(u_{k+1} - u_k)`, `u_k(0) = 1`, closed
/// with `u_{M+1} = 0`. The formal infinite-system solution is u = 1, but
/// whether truncations approach it depends entirely on a(k).
#[derive(Debug, Clone)]
pub struct ToyRun {
    pub rule: ToyRule,
    pub m: usize,
    pub grid: Vec<f64>,
    /// series[k - 1] holds u_k.
    pub series: Vec<Vec<f64>>,
}

/// Top rung of the geometric rule beyond which the explicit integrator
/// would need prohibitively many stability-limited steps.
pub const TOY_GEOMETRIC_MAX: usize = 12;

impl ToyRun {
    /// u_k, 1-indexed.
    pub fn u(&self, k: usize) -> Result<&[f64]> {
        if k == 0 || k > self.m {
            return Err(Error::InvalidParameter(format!(
                "rung {k} out of range 1..={}",
                self.m
            )));
        }
        Ok(&self.series[k - 1])
    }

    /// Closed-form reference for u_k where one exists: every rung of the
    /// constant rule (`u_{M-j} = P_j(t) e^{-t}` with P_j the degree-j Taylor
    /// polynomial of e^t), only the top rung of the geometric rule
    /// (`u_M = exp(-3^M t)`).
    pub fn reference(&self, k: usize) -> Option<Vec<f64>> {
        if k == 0 || k > self.m {
            return None;
        }
        match self.rule {
            ToyRule::Constant => {
                let j = self.m - k;
                Some(
                    self.grid
                        .iter()
                        .map(|&t| taylor_exp(t, j) * (-t).exp())
                        .collect(),
                )
            }
            ToyRule::Geometric => {
                if k == self.m {
                    let rate = 3f64.powi(self.m as i32);
                    Some(self.grid.iter().map(|&t| (-rate * t).exp()).collect())
                } else {
                    None
                }
            }
        }
    }

    /// Decay envelope `2 exp(-3^k t)` that every geometric rung obeys.
    pub fn geometric_envelope(&self, k: usize) -> Vec<f64> {
        let rate = 3f64.powi(k as i32);
        self.grid.iter().map(|&t| 2.0 * (-rate * t).exp()).collect()
    }
}

fn taylor_exp(t: f64, degree: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=degree {
        term *= t / i as f64;
        sum += term;
    }
    sum
}

pub fn toy_embedding(
    rule: ToyRule,
    m: usize,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ToyRun> {
    validate_grid(grid)?;
    if m == 0 {
        return Err(Error::InvalidParameter(
            "the ladder needs at least one rung".into(),
        ));
    }
    if rule == ToyRule::Geometric && m > TOY_GEOMETRIC_MAX {
        return Err(Error::InvalidParameter(format!(
            "geometric rule is limited to {TOY_GEOMETRIC_MAX} rungs (top rate 3^{m} is \
             out of reach for the explicit integrator)"
        )));
    }
    let rates: Vec<f64> = (1..=m)
        .map(|k| match rule {
            ToyRule::Constant => 1.0,
            ToyRule::Geometric => 3f64.powi(k as i32),
        })
        .collect();
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        for k in 0..m {
            let next = if k + 1 < m { y[k + 1] } else { 0.0 };
            dy[k] = rates[k] * (next - y[k]);
        }
    };
    let mut series = vec![Vec::with_capacity(grid.len()); m];
    integrate_observed(rhs, &vec![1.0; m], grid, cfg, |_, _, y| {
        for (sv, &v) in series.iter_mut().zip(y) {
            sv.push(v);
        }
    })?;
    Ok(ToyRun {
        rule,
        m,
        grid: grid.to_vec(),
        series,
    })
}

/// One convergence-estimate check: the weighted distance between the
/// finite-M family and its limit against the analytic majorant.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub family: EmbeddedFamily,
    pub m: usize,
    pub eps: f64,
    pub eps_tilde: f64,
    pub theta: f64,
    /// Measured `|||u^(M) - u^inf|||_eps`.
    pub lhs: f64,
    /// Exact weighted sup of the coefficient gap.
    pub gap_exact: f64,
    /// Closed-form majorant of the gap.
    pub gap_analytic: f64,
    /// `2 gap_analytic / ((p + q)(1 - theta))`.
    pub rhs: f64,
    pub passes: bool,
}

pub fn verify_bound(
    family: EmbeddedFamily,
    m: usize,
    params: &BassParams,
    eps: f64,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<BoundReport> {
    let np = EpsNormParams::strict(params, eps)?;
    let lhs = embedded_diff_norm(family, m, params, eps, grid, cfg)?;
    let (gap_exact, gap_analytic) = coefficient_gap_sup(family, m, params, eps)?;
    let rhs = 2.0 * gap_analytic / ((params.p + params.q) * (1.0 - np.theta));
    Ok(BoundReport {
        family,
        m,
        eps: np.eps,
        eps_tilde: np.eps_tilde,
        theta: np.theta,
        lhs,
        gap_exact,
        gap_analytic,
        rhs,
        passes: lhs <= rhs,
    })
}

/// Analytic cap on the ring study's per-M sup difference: the distance at
/// level one is at most `e^eps` times the weighted norm, which the estimate
/// bounds by `2 q e^(-M eps) / ((p + q)(1 - theta))`.
pub fn circle_study_bound(m: usize, params: &BassParams, eps: f64) -> Result<f64> {
    let np = EpsNormParams::strict(params, eps)?;
    if m < 3 {
        return Err(Error::InvalidParameter("ring needs at least 3 nodes".into()));
    }
    let norm_bound =
        2.0 * params.q * (-eps * m as f64).exp() / ((params.p + params.q) * (1.0 - np.theta));
    Ok(eps.exp() * norm_bound)
}
