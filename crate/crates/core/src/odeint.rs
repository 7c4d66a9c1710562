//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)).
//!
//! The solver walks a user-supplied strictly increasing time grid and lands
//! on every grid point exactly by clamping the step size, so reported values
//! are genuine 5th-order solution values rather than interpolants. Step-size
//! selection uses the standard PI controller with the first-same-as-last
//! trick. State is `&[f64]`; the right-hand side writes its derivative into
//! a caller-provided buffer, which keeps large linear systems allocation-free
//! inside the step loop.

use crate::error::{Error, Result};
use crate::trajectory::validate_grid;

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive, got rel {} abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau. The 7th stage equals the next step's first
// stage (FSAL); row B doubles as A7*.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;

/// Integrate `y' = rhs(t, y)` from `grid[0] = 0`, invoking `observe` with
/// the state at every grid point (including the initial one). Returns the
/// number of accepted steps.
pub fn integrate_observed<F, O>(
    mut rhs: F,
    y0: &[f64],
    grid: &[f64],
    cfg: &IntegratorConfig,
    mut observe: O,
) -> Result<usize>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(usize, f64, &[f64]),
{
    cfg.validate()?;
    validate_grid(grid)?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: grid[0] });
    }

    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = grid[0];
    observe(0, t, &y);
    if grid.len() == 1 || n == 0 {
        return Ok(0);
    }

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    rhs(t, &y, &mut k[0]);
    if !all_finite(&k[0]) {
        return Err(Error::NonFinite { t });
    }

    let t_end = *grid.last().unwrap();
    let mut h = initial_step(&mut rhs, t, &y, &k[0], t_end - t, cfg, &mut ytmp, &mut ynew);
    let mut facold: f64 = 1e-4;
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut bad_steps = 0usize;

    for (gi, &tg) in grid.iter().enumerate().skip(1) {
        while t < tg {
            attempts += 1;
            if attempts > cfg.max_steps {
                return Err(Error::StepBudget { t, steps: attempts });
            }
            let remaining = tg - t;
            let clamped = remaining <= h;
            let hs = if clamped { remaining } else { h };
            if t + hs == t {
                return Err(Error::StepUnderflow { t });
            }

            stages(&mut rhs, t, &y, hs, &mut k, &mut ytmp, &mut ynew);

            let err = error_norm(&k, hs, &y, &ynew, cfg);
            if !err.is_finite() {
                bad_steps += 1;
                if bad_steps > 64 {
                    return Err(Error::NonFinite { t });
                }
                h = hs * 0.1;
                continue;
            }
            bad_steps = 0;

            if err <= 1.0 {
                accepted += 1;
                t = if clamped { tg } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6); // FSAL
                let fac11 = err.powf(EXPO1);
                let scale = (SAFETY / (fac11 / facold.powf(BETA)))
                    .clamp(MIN_SCALE, MAX_SCALE);
                let grown = hs * scale;
                // A step truncated to hit a grid point must not drag the
                // free step length down with it.
                h = if clamped { h.max(grown) } else { grown };
                facold = err.max(1e-4);
            } else {
                let fac11 = err.powf(EXPO1);
                h = hs * (SAFETY / fac11).max(MIN_SCALE);
            }
        }
        observe(gi, tg, &y);
    }
    Ok(accepted)
}

/// Convenience wrapper returning the full state at every grid point.
pub fn integrate<F>(
    rhs: F,
    y0: &[f64],
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    integrate_observed(rhs, y0, grid, cfg, |_, _, y| out.push(y.to_vec()))?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn stages<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    h: f64,
    k: &mut [Vec<f64>],
    ytmp: &mut [f64],
    ynew: &mut [f64],
) where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    macro_rules! stage {
        ($idx:literal, $coeffs:expr) => {{
            let coeffs: &[f64] = &$coeffs;
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &a) in coeffs.iter().enumerate() {
                    acc += a * k[j][i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut($idx);
            let _ = &head;
            rhs(t + C[$idx] * h, ytmp, &mut tail[0]);
        }};
    }
    stage!(1, A2);
    stage!(2, A3);
    stage!(3, A4);
    stage!(4, A5);
    stage!(5, A6);
    for i in 0..n {
        let acc = B[0] * k[0][i]
            + B[2] * k[2][i]
            + B[3] * k[3][i]
            + B[4] * k[4][i]
            + B[5] * k[5][i];
        ynew[i] = y[i] + h * acc;
    }
    let (head, tail) = k.split_at_mut(6);
    let _ = &head;
    rhs(t + h, ynew, &mut tail[0]);
}

fn error_norm(k: &[Vec<f64>], h: f64, y: &[f64], ynew: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = y.len();
    let mut acc = 0.0;
    for i in 0..n {
        let e = E[0] * k[0][i]
            + E[2] * k[2][i]
            + E[3] * k[3][i]
            + E[4] * k[4][i]
            + E[5] * k[5][i]
            + E[6] * k[6][i];
        let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(ynew[i].abs());
        let r = h * e / sk;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

/// Classic two-evaluation starting-step heuristic.
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IntegratorConfig,
    ytmp: &mut [f64],
    ftmp: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sk = |yi: f64| cfg.abs_tol + cfg.rel_tol * yi.abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let s = sk(y[i]);
        d0 += (y[i] / s) * (y[i] / s);
        d1 += (f0[i] / s) * (f0[i] / s);
    }
    d0 = (d0 / n as f64).sqrt();
    d1 = (d1 / n as f64).sqrt();
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    for i in 0..n {
        ytmp[i] = y[i] + h0 * f0[i];
    }
    rhs(t + h0, ytmp, ftmp);
    let mut d2 = 0.0;
    for i in 0..n {
        let s = sk(y[i]);
        let dfi = (ftmp[i] - f0[i]) / s;
        d2 += dfi * dfi;
    }
    d2 = (d2 / n as f64).sqrt() / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::uniform_grid;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let grid = uniform_grid(1.0, 11).unwrap();
        let cfg = IntegratorConfig::default();
        let rows = integrate(|_, y, dy| dy[0] = -y[0], &[1.0], &grid, &cfg).unwrap();
        for (ti, row) in grid.iter().zip(&rows) {
            assert!((row[0] - (-ti).exp()).abs() < 1e-9, "t = {ti}");
        }
    }

    #[test]
    fn nonautonomous_rhs() {
        let grid = uniform_grid(3.0, 7).unwrap();
        let cfg = IntegratorConfig::default();
        let rows = integrate(|t, _, dy| dy[0] = t.cos(), &[0.0], &grid, &cfg).unwrap();
        for (ti, row) in grid.iter().zip(&rows) {
            assert!((row[0] - ti.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn widely_separated_decay_rates() {
        let grid = uniform_grid(1.0, 5).unwrap();
        let cfg = IntegratorConfig::default();
        let rows = integrate(
            |_, y, dy| {
                dy[0] = -y[0];
                dy[1] = -1000.0 * y[1];
            },
            &[1.0, 1.0],
            &grid,
            &cfg,
        )
        .unwrap();
        for (ti, row) in grid.iter().zip(&rows) {
            assert!((row[0] - (-ti).exp()).abs() < 1e-9);
            assert!((row[1] - (-1000.0 * ti).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_is_constant() {
        let grid = uniform_grid(5.0, 4).unwrap();
        let cfg = IntegratorConfig::default();
        let rows = integrate(|_, _, dy| dy.fill(0.0), &[2.5, -1.0], &grid, &cfg).unwrap();
        for row in &rows {
            assert_eq!(row, &[2.5, -1.0]);
        }
    }

    #[test]
    fn observer_sees_exact_grid_times() {
        let grid = uniform_grid(2.0, 9).unwrap();
        let cfg = IntegratorConfig::default();
        let mut seen = Vec::new();
        integrate_observed(
            |_, y, dy| dy[0] = 0.3 * y[0],
            &[1.0],
            &grid,
            &cfg,
            |i, t, _| seen.push((i, t)),
        )
        .unwrap();
        assert_eq!(seen.len(), grid.len());
        for (i, &(gi, t)) in seen.iter().enumerate() {
            assert_eq!(gi, i);
            assert_eq!(t.to_bits(), grid[i].to_bits());
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let grid = uniform_grid(1.0, 2).unwrap();
        let cfg = IntegratorConfig {
            max_steps: 3,
            ..Default::default()
        };
        let err = integrate(|_, y, dy| dy[0] = -50.0 * y[0], &[1.0], &grid, &cfg).unwrap_err();
        assert!(matches!(err, Error::StepBudget { .. }));
    }

    #[test]
    fn non_finite_rhs_is_reported() {
        let grid = uniform_grid(1.0, 2).unwrap();
        let cfg = IntegratorConfig::default();
        let err = integrate(|_, _, dy| dy[0] = f64::NAN, &[1.0], &grid, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn halved_tolerances_move_results_less_than_ten_tolerances() {
        let grid = uniform_grid(4.0, 21).unwrap();
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = (1.0 - y[0]) * (0.02 + 0.1 * y[0]);
        };
        let cfg = IntegratorConfig::default();
        let half = IntegratorConfig::with_tolerances(cfg.rel_tol / 2.0, cfg.abs_tol / 2.0);
        let a = integrate(rhs, &[0.0], &grid, &cfg).unwrap();
        let b = integrate(rhs, &[0.0], &grid, &half).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            let allowed = 10.0 * (cfg.rel_tol * ra[0].abs().max(1.0) + cfg.abs_tol);
            assert!((ra[0] - rb[0]).abs() < allowed);
        }
    }
}
