//! Exponentially weighted supremum norms over index ladders.
//!
//! For a sequence v_n the norm is `sup_n e^(-eps n) |v_n|`; families of
//! increasingly large finite systems embedded in a common infinite ladder
//! are compared in this norm. The weight makes room for components that
//! grow geometrically in n while still controlling every fixed index.

use crate::error::{Error, Result};
use crate::params::BassParams;

/// The decay weight eps together with the two derived constants that govern
/// the comparison machinery: `eps_tilde = ln(1 + p/q)` is the largest usable
/// weight, and `theta = q e^eps / (p + q)` is the ladder contraction factor,
/// strictly below one exactly when `eps < eps_tilde`.
#[derive(Debug, Clone, Copy)]
pub struct EpsNormParams {
    pub eps: f64,
    pub eps_tilde: f64,
    pub theta: f64,
}

impl EpsNormParams {
    pub fn new(params: &BassParams, eps: f64) -> Result<Self> {
        params.require_positive_p()?;
        params.require_positive_q()?;
        if !(eps >= 0.0) {
            return Err(Error::EpsilonRange(format!(
                "eps must be nonnegative, got {eps}"
            )));
        }
        let eps_tilde = (1.0 + params.p / params.q).ln();
        let theta = params.q * eps.exp() / (params.p + params.q);
        Ok(EpsNormParams {
            eps,
            eps_tilde,
            theta,
        })
    }

    /// Variant for bound evaluation, where the contraction must be strict:
    /// requires `0 < eps < eps_tilde`.
    pub fn strict(params: &BassParams, eps: f64) -> Result<Self> {
        let np = EpsNormParams::new(params, eps)?;
        if eps <= 0.0 || eps >= np.eps_tilde {
            return Err(Error::EpsilonRange(format!(
                "eps must lie strictly inside (0, {}), got {eps}",
                np.eps_tilde
            )));
        }
        Ok(np)
    }
}

/// `sup e^(-eps n) |v_n|` over the supplied (index, value) pairs. The caller
/// owns the truncation: indices beyond the representation must be known to
/// vanish or be bounded separately.
pub fn eps_norm<I>(values: I, eps: f64) -> Result<f64>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    if !(eps >= 0.0) {
        return Err(Error::EpsilonRange(format!(
            "eps must be nonnegative, got {eps}"
        )));
    }
    let mut sup = 0.0f64;
    for (n, v) in values {
        let w = (-eps * n as f64).exp() * v.abs();
        if w > sup {
            sup = w;
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weighted_sup() {
        let v = vec![(1usize, 0.5), (2, -4.0), (3, 1.0)];
        let norm = eps_norm(v.clone(), 0.0).unwrap();
        assert_eq!(norm, 4.0);
        let eps = 0.7;
        let norm = eps_norm(v, eps).unwrap();
        assert!((norm - 4.0 * (-2.0 * eps).exp()).abs() < 1e-15);
        assert!(eps_norm([(1usize, 1.0)], -0.1).is_err());
    }

    #[test]
    fn geometric_sequence_saturates_at_one() {
        let eps = 0.3;
        let v: Vec<(usize, f64)> = (1..40).map(|n| (n, (eps * n as f64).exp())).collect();
        let norm = eps_norm(v, eps).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_factor_hits_one_at_the_critical_weight() {
        let params = BassParams::new(0.02, 0.1).unwrap();
        let np = EpsNormParams::new(&params, 0.0).unwrap();
        assert!((np.eps_tilde - (1.2f64).ln()).abs() < 1e-15);
        assert!((np.theta - 0.1 / 0.12).abs() < 1e-15);
        let critical = EpsNormParams::new(&params, np.eps_tilde).unwrap();
        assert!((critical.theta - 1.0).abs() < 4e-16);
        for i in 0..20 {
            let eps = np.eps_tilde * i as f64 / 20.0;
            let theta = EpsNormParams::new(&params, eps).unwrap().theta;
            assert!(theta < 1.0, "theta({eps}) = {theta}");
        }
    }

    #[test]
    fn strict_range_enforced() {
        let params = BassParams::new(0.02, 0.1).unwrap();
        let et = EpsNormParams::new(&params, 0.0).unwrap().eps_tilde;
        assert!(EpsNormParams::strict(&params, 0.0).is_err());
        assert!(EpsNormParams::strict(&params, et).is_err());
        assert!(EpsNormParams::strict(&params, et / 2.0).is_ok());
        let zero_p = BassParams::new(0.0, 0.1).unwrap();
        assert!(EpsNormParams::new(&zero_p, 0.1).is_err());
    }

    proptest! {
        #[test]
        // Strictly inside (0, eps_tilde) the ladder contracts.
        fn contraction_is_strict_below_the_critical_weight(
            p in 0.001f64..1.0,
            q in 0.001f64..1.0,
            frac in 0.01f64..0.99,
        ) {
            let params = BassParams::new(p, q).unwrap();
            let eps_tilde = EpsNormParams::new(&params, 0.0).unwrap().eps_tilde;
            let np = EpsNormParams::strict(&params, frac * eps_tilde).unwrap();
            prop_assert!(np.theta < 1.0);
            prop_assert!(np.theta > 0.0);
        }

        #[test]
        // The norm scales linearly and never exceeds the unweighted sup.
        fn norm_is_homogeneous_and_dominated_by_the_flat_sup(
            values in proptest::collection::vec((1usize..50, -10.0f64..10.0), 1..20),
            eps in 0.0f64..2.0,
            scale in 0.1f64..10.0,
        ) {
            let norm = eps_norm(values.iter().copied(), eps).unwrap();
            let scaled = eps_norm(values.iter().map(|&(n, v)| (n, scale * v)), eps).unwrap();
            prop_assert!((scaled - scale * norm).abs() <= 1e-12 * scaled.max(1.0));
            let flat = eps_norm(values.iter().copied(), 0.0).unwrap();
            prop_assert!(norm <= flat + 1e-15);
        }
    }
}
