//! Least-squares line fits in transformed coordinates, used to extract
//! empirical convergence rates from difference-versus-size data.

use crate::error::{Error, Result};
use serde::Serialize;

/// Coordinate transform applied before the straight-line fit. Both use the
/// natural logarithm; power-law slopes are base-independent either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitModel {
    /// ln y against ln x: a power law y = C x^slope.
    #[serde(rename = "log-log")]
    LogLog,
    /// ln y against x: an exponential y = C e^(slope x).
    #[serde(rename = "semi-log")]
    SemiLog,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub model: FitModel,
}

/// Ordinary least squares on the transformed points. Requires at least two
/// points, positive ordinates, and (for the power law) positive abscissae.
pub fn fit_line(x: &[f64], y: &[f64], model: FitModel) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::GridMismatch(format!(
            "fit needs matching lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::FitDomain("at least two points".into()));
    }
    let mut u = Vec::with_capacity(x.len());
    let mut v = Vec::with_capacity(y.len());
    for (&xi, &yi) in x.iter().zip(y) {
        if !xi.is_finite() || !yi.is_finite() {
            return Err(Error::FitDomain(format!("finite data, got ({xi}, {yi})")));
        }
        if yi <= 0.0 {
            return Err(Error::FitDomain(format!(
                "positive ordinates for the log transform, got {yi}"
            )));
        }
        let ui = match model {
            FitModel::LogLog => {
                if xi <= 0.0 {
                    return Err(Error::FitDomain(format!(
                        "positive abscissae for the log transform, got {xi}"
                    )));
                }
                xi.ln()
            }
            FitModel::SemiLog => xi,
        };
        u.push(ui);
        v.push(yi.ln());
    }
    let n = u.len() as f64;
    let um = u.iter().sum::<f64>() / n;
    let vm = v.iter().sum::<f64>() / n;
    let mut suv = 0.0;
    let mut suu = 0.0;
    for (&ui, &vi) in u.iter().zip(&v) {
        suv += (ui - um) * (vi - vm);
        suu += (ui - um) * (ui - um);
    }
    if suu == 0.0 {
        return Err(Error::FitDomain("distinct abscissae".into()));
    }
    let slope = suv / suu;
    let intercept = vm - slope * um;
    let mut ss = 0.0;
    for (&ui, &vi) in u.iter().zip(&v) {
        let r = vi - (intercept + slope * ui);
        ss += r * r;
    }
    Ok(FitResult {
        slope,
        intercept,
        rms_residual: (ss / n).sqrt(),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x: Vec<f64> = (1..=6).map(|i| (i * i) as f64).collect();
        let c = 3.7;
        let y: Vec<f64> = x.iter().map(|&xi| c / xi).collect();
        let fit = fit_line(&x, &y, FitModel::LogLog).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - c.ln()).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn exact_exponential() {
        let x: Vec<f64> = (3..=14).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 8.8 * (-1.3 * xi).exp()).collect();
        let fit = fit_line(&x, &y, FitModel::SemiLog).unwrap();
        assert!((fit.slope + 1.3).abs() < 1e-12);
        assert!((fit.intercept - 8.8f64.ln()).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn two_points_fit_exactly() {
        let fit = fit_line(&[1.0, 2.0], &[1.0, 4.0], FitModel::LogLog).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(fit_line(&[1.0], &[1.0], FitModel::LogLog).is_err());
        assert!(fit_line(&[1.0, 2.0], &[0.0, 1.0], FitModel::SemiLog).is_err());
        assert!(fit_line(&[-1.0, 2.0], &[1.0, 1.0], FitModel::LogLog).is_err());
        assert!(fit_line(&[2.0, 2.0], &[1.0, 3.0], FitModel::SemiLog).is_err());
    }
}
