//! JSON description of a network instance, shared by `simulate` and the
//! full master-equation solve. The `family` tag selects the constructor;
//! the built-in families also carry a natural horizon (saturation of their
//! limit curve), while arbitrary weight matrices need an explicit one.

use std::path::Path;

use basslab_core::lab::{bass_horizon, circle_horizon, hetero_horizon};
use basslab_core::{
    from_weight_matrix, make_circle, make_complete, make_kgroup, BassParams, Error, GroupSizes,
    HeteroSpec, IntegratorConfig, NetworkInstance, Result,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkConfig {
    Complete {
        m: usize,
        p: f64,
        q: f64,
    },
    Circle {
        m: usize,
        p: f64,
        q: f64,
    },
    KGroup {
        spec: serde_json::Value,
        /// Total population, split by the floor rule. Ignored when `sizes`
        /// is present.
        #[serde(skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        sizes: Option<Vec<usize>>,
    },
    Weights {
        p: Vec<f64>,
        w: Vec<Vec<f64>>,
    },
}

impl NetworkConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidParameter(format!("network config {}: {e}", path.display()))
        })
    }

    pub fn build(&self) -> Result<NetworkInstance> {
        match self {
            NetworkConfig::Complete { m, p, q } => {
                make_complete(*m, &BassParams::new(*p, *q)?)
            }
            NetworkConfig::Circle { m, p, q } => make_circle(*m, &BassParams::new(*p, *q)?),
            NetworkConfig::KGroup { spec, m, sizes } => {
                let spec = parse_spec(spec)?;
                let sizes = match (sizes, m) {
                    (Some(s), _) => GroupSizes::explicit(s.clone())?,
                    (None, Some(m)) => GroupSizes::from_fractions(&spec, *m)?,
                    (None, None) => {
                        return Err(Error::InvalidParameter(
                            "kgroup network needs either `m` or `sizes`".into(),
                        ))
                    }
                };
                make_kgroup(&spec, &sizes)
            }
            NetworkConfig::Weights { p, w } => from_weight_matrix(p.clone(), w),
        }
    }

    /// Saturation horizon of the family's limit curve, when one exists.
    pub fn default_horizon(&self, cfg: &IntegratorConfig) -> Result<f64> {
        match self {
            NetworkConfig::Complete { p, q, .. } => bass_horizon(&BassParams::new(*p, *q)?),
            NetworkConfig::Circle { p, q, .. } => circle_horizon(&BassParams::new(*p, *q)?),
            NetworkConfig::KGroup { spec, .. } => hetero_horizon(&parse_spec(spec)?, cfg),
            NetworkConfig::Weights { .. } => Err(Error::InvalidParameter(
                "weight-matrix networks need an explicit --horizon".into(),
            )),
        }
    }
}

/// An embedded spec object uses the same schema as a standalone spec file.
pub fn parse_spec(value: &serde_json::Value) -> Result<HeteroSpec> {
    HeteroSpec::from_json(&value.to_string())
}

pub fn load_spec_value(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("spec {}: {e}", path.display())))
}
