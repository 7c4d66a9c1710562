//! Deterministic compartmental (infinite-population) adoption curves.
//!
//! Includes the classic closed form for well-mixed populations, the ring
//! limit, and ODE solvers for populations split into finitely many groups
//! with group-to-group influence weights.

use crate::error::{Error, Result};
use crate::odeint::{integrate, IntegratorConfig};
use crate::params::{BassParams, GroupSizes, HeteroSpec};
use crate::trajectory::validate_grid;

/// Closed-form adopted fraction for the well-mixed limit (Bass 1969):
/// `f(t) = (1 - e^-(p+q)t) / (1 + (q/p) e^-(p+q)t)`. Requires `p > 0`.
pub fn bass_formula(t: f64, params: &BassParams) -> Result<f64> {
    params.require_positive_p()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let e = (-(params.p + params.q) * t).exp();
    Ok((1.0 - e) / (1.0 + (params.q / params.p) * e))
}

pub fn bass_series(grid: &[f64], params: &BassParams) -> Result<Vec<f64>> {
    validate_grid(grid)?;
    grid.iter().map(|&t| bass_formula(t, params)).collect()
}

/// Adopted fraction in the infinite-ring limit:
/// `f(t) = 1 - exp(-(p+q)t + q(1 - e^-pt)/p)`. Requires `p > 0`.
pub fn circle_limit(t: f64, params: &BassParams) -> Result<f64> {
    params.require_positive_p()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let (p, q) = (params.p, params.q);
    Ok(1.0 - (-(p + q) * t + q * (1.0 - (-p * t).exp()) / p).exp())
}

pub fn circle_series(grid: &[f64], params: &BassParams) -> Result<Vec<f64>> {
    validate_grid(grid)?;
    grid.iter().map(|&t| circle_limit(t, params)).collect()
}

/// Per-group adopted fractions on a shared grid. `groups[k]` is the series
/// for group k (as a fraction of the whole population, so it saturates at
/// the group's share), and `total` is their sum.
#[derive(Debug, Clone)]
pub struct HeteroTrajectory {
    grid: Vec<f64>,
    groups: Vec<Vec<f64>>,
    total: Vec<f64>,
}

impl HeteroTrajectory {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn group(&self, k: usize) -> &[f64] {
        &self.groups[k]
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn total(&self) -> &[f64] {
        &self.total
    }
}

const BOUND_SLACK: f64 = 1e-9;

/// Group fractions in the infinite-population limit:
/// `f_k' = (a_k - f_k)(p_k + sum_m Q[m][k] f_m)`, all starting at zero.
pub fn solve_hetero(
    spec: &HeteroSpec,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<HeteroTrajectory> {
    let caps: Vec<f64> = spec.a().to_vec();
    solve_group_system(spec, &caps, grid, cfg)
}

/// Finite-population variant: the group ceilings are the realized shares
/// `M_k / M` instead of the nominal fractions `a_k`.
pub fn solve_hetero_finite_m(
    spec: &HeteroSpec,
    sizes: &GroupSizes,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<HeteroTrajectory> {
    if sizes.sizes().len() != spec.groups() {
        return Err(Error::InvalidParameter(format!(
            "spec has {} groups but sizes list {}",
            spec.groups(),
            sizes.sizes().len()
        )));
    }
    let m = sizes.total() as f64;
    let caps: Vec<f64> = sizes.sizes().iter().map(|&mk| mk as f64 / m).collect();
    solve_group_system(spec, &caps, grid, cfg)
}

/// Influence depending only on the recipient: `f_k' = (a_k - f_k)(p_k + q_k f)`
/// with `f` the total adopted fraction.
pub fn solve_mild_hetero(
    a: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<HeteroTrajectory> {
    let spec = HeteroSpec::mild(a, p, q)?;
    solve_hetero(&spec, grid, cfg)
}

fn solve_group_system(
    spec: &HeteroSpec,
    caps: &[f64],
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<HeteroTrajectory> {
    validate_grid(grid)?;
    let k = spec.groups();
    let q = spec.q_matrix();
    let p = spec.p();
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        for j in 0..k {
            let mut hazard = p[j];
            for m in 0..k {
                hazard += q[m][j] * y[m];
            }
            dy[j] = (caps[j] - y[j]) * hazard;
        }
    };
    let rows = integrate(rhs, &vec![0.0; k], grid, cfg)?;
    let mut groups: Vec<Vec<f64>> = (0..k)
        .map(|j| rows.iter().map(|row| row[j]).collect())
        .collect();
    for (j, series) in groups.iter_mut().enumerate() {
        let mut prev = f64::NEG_INFINITY;
        for &v in series.iter() {
            if v < -BOUND_SLACK || v > caps[j] + BOUND_SLACK {
                return Err(Error::Invariant(format!(
                    "group {j} fraction {v} leaves [0, {}]",
                    caps[j]
                )));
            }
            if v < prev - BOUND_SLACK {
                return Err(Error::Invariant(format!(
                    "group {j} fraction decreases ({prev} then {v})"
                )));
            }
            prev = v;
        }
    }
    let total: Vec<f64> = (0..grid.len())
        .map(|i| groups.iter().map(|g| g[i]).sum())
        .collect();
    Ok(HeteroTrajectory {
        grid: grid.to_vec(),
        groups,
        total,
    })
}

/// Two-group example with purely cross-directed influence: group 1 has no
/// external rate and adopts only under pressure from group 2's adopters;
/// group 2 is driven externally at rate 2p and influences nobody else's
/// equations beyond that coupling. Homogenizes to exactly (p, q).
pub fn two_group_cross_example(params: &BassParams) -> HeteroSpec {
    HeteroSpec::new(
        vec![0.5, 0.5],
        vec![0.0, 2.0 * params.p],
        vec![vec![0.0, 0.0], vec![4.0 * params.q, 0.0]],
    )
    .expect("fixed example spec is valid")
}

/// Two-group example with recipient-only influence: group 1 is externally
/// quiet but maximally receptive (q_1 = 2q), group 2 is driven externally
/// at 2p and receives nothing. Homogenizes to exactly (p, q).
pub fn two_group_mild_example(params: &BassParams) -> HeteroSpec {
    HeteroSpec::mild(
        vec![0.5, 0.5],
        vec![0.0, 2.0 * params.p],
        vec![2.0 * params.q, 0.0],
    )
    .expect("fixed example spec is valid")
}

/// Which total-adoption curve to probe for initial derivatives.
#[derive(Debug, Clone, Copy)]
pub enum CurvatureSystem {
    /// The well-mixed curve `f' = (1 - f)(p + q f)`.
    Homogeneous(BassParams),
    /// Total curve of `two_group_cross_example`.
    TwoGroupCross(BassParams),
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct InitialCurvature {
    pub first: f64,
    pub second: f64,
}

/// Estimate f'(0) and f''(0) by 5-point one-sided finite differences on the
/// integrated curve, sampled with spacing `h = 1e-3 / (p + q)`.
pub fn initial_curvature(
    system: &CurvatureSystem,
    cfg: &IntegratorConfig,
) -> Result<InitialCurvature> {
    let params = match system {
        CurvatureSystem::Homogeneous(p) | CurvatureSystem::TwoGroupCross(p) => *p,
    };
    let scale = params.p + params.q;
    if scale <= 0.0 {
        return Err(Error::InvalidParameter(
            "curvature probe needs p + q > 0".into(),
        ));
    }
    let h = 1e-3 / scale;
    let grid: Vec<f64> = (0..5).map(|i| i as f64 * h).collect();
    let f: Vec<f64> = match system {
        CurvatureSystem::Homogeneous(bp) => {
            let bp = *bp;
            let rows = integrate(
                move |_, y, dy| dy[0] = (1.0 - y[0]) * (bp.p + bp.q * y[0]),
                &[0.0],
                &grid,
                cfg,
            )?;
            rows.iter().map(|r| r[0]).collect()
        }
        CurvatureSystem::TwoGroupCross(bp) => {
            let spec = two_group_cross_example(bp);
            let tr = solve_hetero(&spec, &grid, cfg)?;
            tr.total().to_vec()
        }
    };
    let first = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h);
    let second =
        (35.0 * f[0] - 104.0 * f[1] + 114.0 * f[2] - 56.0 * f[3] + 11.0 * f[4]) / (12.0 * h * h);
    Ok(InitialCurvature { first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::uniform_grid;
    use proptest::prelude::*;

    fn params() -> BassParams {
        BassParams::new(0.02, 0.1).unwrap()
    }

    #[test]
    fn classic_curve_reference_value() {
        let f = bass_formula(10.0, &params()).unwrap();
        assert!((f - 0.278856288233).abs() < 1e-10, "f(10) = {f}");
        assert_eq!(bass_formula(0.0, &params()).unwrap(), 0.0);
    }

    #[test]
    fn classic_curve_matches_its_ode() {
        let grid = uniform_grid(60.0, 121).unwrap();
        let cfg = IntegratorConfig::default();
        let p = params();
        let rows = integrate(
            |_, y, dy| dy[0] = (1.0 - y[0]) * (p.p + p.q * y[0]),
            &[0.0],
            &grid,
            &cfg,
        )
        .unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = bass_formula(t, &p).unwrap();
            assert!((rows[i][0] - exact).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn classic_curve_degenerate_cases() {
        let pure_external = BassParams::new(0.05, 0.0).unwrap();
        for &t in &[0.0, 1.0, 7.3] {
            let f = bass_formula(t, &pure_external).unwrap();
            assert!((f - (1.0 - (-0.05 * t).exp())).abs() < 1e-15);
        }
        let no_external = BassParams::new(0.0, 0.1).unwrap();
        assert!(bass_formula(1.0, &no_external).is_err());
        assert!(bass_formula(-1.0, &params()).is_err());
    }

    #[test]
    fn ring_limit_reference_value() {
        let p = BassParams::new(0.02, 0.11).unwrap();
        let f = circle_limit(10.0, &p).unwrap();
        assert!((f - 0.2614).abs() < 5e-5, "f(10) = {f}");
        assert_eq!(circle_limit(0.0, &p).unwrap(), 0.0);
        let pure_external = BassParams::new(0.05, 0.0).unwrap();
        let f = circle_limit(3.0, &pure_external).unwrap();
        assert!((f - (1.0 - (-0.15f64).exp())).abs() < 1e-15);
        assert!(circle_limit(1.0, &BassParams::new(0.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn ring_limit_is_slower_than_well_mixed() {
        // same rates: the ring's constrained contact structure delays uptake
        let p = BassParams::new(0.02, 0.1).unwrap();
        for &t in &[1.0, 5.0, 20.0, 60.0] {
            let ring = circle_limit(t, &p).unwrap();
            let mixed = bass_formula(t, &p).unwrap();
            assert!(ring < mixed, "t = {t}: {ring} vs {mixed}");
        }
    }

    #[test]
    fn single_group_reduces_to_classic_curve() {
        let spec = HeteroSpec::new(vec![1.0], vec![0.02], vec![vec![0.1]]).unwrap();
        let grid = uniform_grid(80.0, 161).unwrap();
        let cfg = IntegratorConfig::default();
        let tr = solve_hetero(&spec, &grid, &cfg).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = bass_formula(t, &params()).unwrap();
            assert!((tr.total()[i] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn group_fractions_respect_caps_and_monotonicity() {
        let spec = HeteroSpec::new(
            vec![0.4, 0.1, 0.3, 0.2],
            vec![0.0, 0.02, 0.04, 0.01],
            vec![
                vec![0.1, 0.05, 0.01, 0.0],
                vec![0.05, 0.025, 0.08, 0.05],
                vec![0.01, 0.02, 0.03, 0.04],
                vec![0.15, 0.05, 0.05, 0.05],
            ],
        )
        .unwrap();
        let grid = uniform_grid(400.0, 401).unwrap();
        let cfg = IntegratorConfig::default();
        let tr = solve_hetero(&spec, &grid, &cfg).unwrap();
        // saturation: by the end everyone has adopted
        let last = *tr.total().last().unwrap();
        assert!(last > 0.999, "f(400) = {last}");
        for k in 0..4 {
            let series = tr.group(k);
            assert!(series.iter().all(|&v| v <= spec.a()[k] + 1e-9));
            assert!(series.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
    }

    #[test]
    fn all_external_rates_zero_means_no_adoption() {
        let spec = HeteroSpec::mild(
            vec![0.5, 0.5],
            vec![0.0, 0.0],
            vec![0.3, 0.2],
        )
        .unwrap();
        let grid = uniform_grid(50.0, 26).unwrap();
        let tr = solve_hetero(&spec, &grid, &IntegratorConfig::default()).unwrap();
        assert!(tr.total().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn finite_population_caps_match_exact_shares() {
        let spec = two_group_mild_example(&params());
        let sizes = GroupSizes::explicit(vec![2, 2]).unwrap();
        let grid = uniform_grid(60.0, 61).unwrap();
        let cfg = IntegratorConfig::default();
        let a = solve_hetero(&spec, &grid, &cfg).unwrap();
        let b = solve_hetero_finite_m(&spec, &sizes, &grid, &cfg).unwrap();
        for i in 0..grid.len() {
            assert!((a.total()[i] - b.total()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mild_solver_agrees_with_full_table() {
        let a = vec![0.3, 0.45, 0.25];
        let p = vec![0.01, 0.03, 0.02];
        let q = vec![0.2, 0.05, 0.4];
        let grid = uniform_grid(100.0, 101).unwrap();
        let cfg = IntegratorConfig::default();
        let mild = solve_mild_hetero(a.clone(), p.clone(), q.clone(), &grid, &cfg).unwrap();
        let spec = HeteroSpec::mild(a, p, q).unwrap();
        let full = solve_hetero(&spec, &grid, &cfg).unwrap();
        for i in 0..grid.len() {
            assert!((mild.total()[i] - full.total()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn example_specs_homogenize_to_the_same_pair() {
        let p = BassParams::new(0.03, 0.08).unwrap();
        for spec in [two_group_cross_example(&p), two_group_mild_example(&p)] {
            let hom = spec.homogenize();
            assert!((hom.p - p.p).abs() < 1e-15);
            assert!((hom.q - p.q).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_curvature_matches_analytic_values() {
        let bp = params();
        let cfg = IntegratorConfig::default();
        // well-mixed: f'(0) = p, f''(0) = p(q - p)
        let hom = initial_curvature(&CurvatureSystem::Homogeneous(bp), &cfg).unwrap();
        assert!((hom.first - bp.p).abs() / bp.p < 0.05);
        let exact = bp.p * (bp.q - bp.p);
        assert!((hom.second - exact).abs() / exact.abs() < 0.05);
        // cross-directed pair: f'(0) = p, f''(0) = 2p(q - p)
        let cross = initial_curvature(&CurvatureSystem::TwoGroupCross(bp), &cfg).unwrap();
        assert!((cross.first - bp.p).abs() / bp.p < 0.05);
        let exact = 2.0 * bp.p * (bp.q - bp.p);
        assert!((cross.second - exact).abs() / exact.abs() < 0.05);
    }

    proptest! {
        #[test]
        // The classic curve starts at zero, stays in [0, 1), and increases.
        fn classic_curve_ramps_monotonically(
            p in 0.001f64..0.5,
            q in 0.0f64..1.0,
            t in 0.0f64..100.0,
            dt in 0.01f64..10.0,
        ) {
            let bp = BassParams::new(p, q).unwrap();
            prop_assert!(bass_formula(0.0, &bp).unwrap().abs() < 1e-15);
            let f1 = bass_formula(t, &bp).unwrap();
            let f2 = bass_formula(t + dt, &bp).unwrap();
            prop_assert!((0.0..=1.0).contains(&f1));
            prop_assert!(f2 > f1 || 1.0 - f1 < 1e-14);
        }

        #[test]
        // Two influencing neighbors instead of everyone: the ring limit
        // never overtakes the well-mixed one at equal rates.
        fn ring_limit_stays_below_the_classic_curve(
            p in 0.001f64..1.0,
            q in 0.0f64..2.0,
            t in 0.0f64..100.0,
        ) {
            let bp = BassParams::new(p, q).unwrap();
            let ring = circle_limit(t, &bp).unwrap();
            let mixed = bass_formula(t, &bp).unwrap();
            prop_assert!((0.0..=1.0).contains(&ring));
            prop_assert!(ring <= mixed + 1e-12);
        }
    }
}
