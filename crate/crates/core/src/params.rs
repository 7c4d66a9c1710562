//! Model parameter types: homogeneous rate pairs, multi-group rate tables,
//! and the floor rule that turns group proportions into integer group sizes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Homogeneous adoption rates: `p` external (advertising), `q` internal
/// (imitation). Both finite and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BassParams {
    pub p: f64,
    pub q: f64,
}

impl BassParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rates must be finite, got p = {p}, q = {q}"
            )));
        }
        if p < 0.0 || q < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rates must be nonnegative, got p = {p}, q = {q}"
            )));
        }
        Ok(BassParams { p, q })
    }

    /// Operations whose formulas divide by `p` (closed forms, decay-rate
    /// norms) call this to fail fast instead of producing infinities.
    pub fn require_positive_p(&self) -> Result<()> {
        if self.p <= 0.0 {
            return Err(Error::InvalidParameter(
                "p must be strictly positive for this operation".into(),
            ));
        }
        Ok(())
    }

    pub fn require_positive_q(&self) -> Result<()> {
        if self.q <= 0.0 {
            return Err(Error::InvalidParameter(
                "q must be strictly positive for this operation".into(),
            ));
        }
        Ok(())
    }
}

/// Rates for `K` consumer groups. `a` holds the population fractions
/// (positive, summing to one), `p` the external rates, and `q_matrix` the
/// internal-influence table: `q_matrix[m][k]` is the strength with which an
/// adopter in group `m` pushes a nonadopter in group `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroSpec {
    a: Vec<f64>,
    p: Vec<f64>,
    q_matrix: Vec<Vec<f64>>,
}

/// Serialized form: `{"K":2,"a":[..],"p":[..],"Q":[[..],[..]]}` with `Q`
/// rows indexed by the influencing group and columns by the influenced one.
#[derive(Serialize, Deserialize)]
struct HeteroSpecWire {
    #[serde(rename = "K")]
    k: usize,
    a: Vec<f64>,
    p: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
}

const FRACTION_SUM_TOL: f64 = 1e-12;

impl HeteroSpec {
    pub fn new(a: Vec<f64>, p: Vec<f64>, q_matrix: Vec<Vec<f64>>) -> Result<Self> {
        let k = a.len();
        if k == 0 {
            return Err(Error::InvalidParameter("need at least one group".into()));
        }
        if p.len() != k || q_matrix.len() != k || q_matrix.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidParameter(format!(
                "group count mismatch: a has {k} entries, p has {}, Q is {}x{}",
                p.len(),
                q_matrix.len(),
                q_matrix.first().map_or(0, |r| r.len())
            )));
        }
        for (i, &ai) in a.iter().enumerate() {
            if !ai.is_finite() || ai <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "group fraction a[{i}] = {ai} must be positive"
                )));
            }
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > FRACTION_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "group fractions must sum to 1 (got {sum})"
            )));
        }
        for (i, &pi) in p.iter().enumerate() {
            if !pi.is_finite() || pi < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "external rate p[{i}] = {pi} must be nonnegative"
                )));
            }
        }
        for (m, row) in q_matrix.iter().enumerate() {
            for (j, &qmj) in row.iter().enumerate() {
                if !qmj.is_finite() || qmj < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "influence Q[{m}][{j}] = {qmj} must be nonnegative"
                    )));
                }
            }
        }
        Ok(HeteroSpec { a, p, q_matrix })
    }

    /// Single-influence-column table: every group pushes a group-`k`
    /// nonadopter with the same strength `q[k]`, so the internal hazard of
    /// group `k` depends only on the total adopted fraction.
    pub fn mild(a: Vec<f64>, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if q.len() != a.len() {
            return Err(Error::InvalidParameter(format!(
                "group count mismatch: a has {} entries, q has {}",
                a.len(),
                q.len()
            )));
        }
        let k = a.len();
        let q_matrix = (0..k).map(|_| q.clone()).collect();
        HeteroSpec::new(a, p, q_matrix)
    }

    pub fn groups(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q_matrix(&self) -> &[Vec<f64>] {
        &self.q_matrix
    }

    pub fn q_entry(&self, from: usize, to: usize) -> f64 {
        self.q_matrix[from][to]
    }

    /// Population-weighted influence on group `k`: `q_k = sum_m a_m Q[m][k]`.
    pub fn weighted_influence(&self, k: usize) -> f64 {
        self.q_matrix
            .iter()
            .zip(&self.a)
            .map(|(row, &am)| am * row[k])
            .sum()
    }

    /// Collapse to homogeneous rates by population-weighted averaging:
    /// `p = sum_k a_k p_k`, `q = sum_k a_k q_k`.
    pub fn homogenize(&self) -> BassParams {
        let p = self.p.iter().zip(&self.a).map(|(&pk, &ak)| ak * pk).sum();
        let q = (0..self.groups())
            .map(|k| self.a[k] * self.weighted_influence(k))
            .sum();
        BassParams { p, q }
    }

    pub fn to_json(&self) -> String {
        let wire = HeteroSpecWire {
            k: self.groups(),
            a: self.a.clone(),
            p: self.p.clone(),
            q: self.q_matrix.clone(),
        };
        serde_json::to_string_pretty(&wire).expect("spec serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: HeteroSpecWire = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("bad group spec JSON: {e}")))?;
        if wire.k != wire.a.len() {
            return Err(Error::InvalidParameter(format!(
                "declared K = {} but a has {} entries",
                wire.k,
                wire.a.len()
            )));
        }
        HeteroSpec::new(wire.a, wire.p, wire.q)
    }
}

/// Integer group sizes for a finite population: `M_k = floor(a_k * M)` for
/// all but the last group, which absorbs the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSizes {
    sizes: Vec<usize>,
}

impl GroupSizes {
    pub fn from_fractions(spec: &HeteroSpec, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("population must be positive".into()));
        }
        let k = spec.groups();
        let mut sizes = Vec::with_capacity(k);
        let mut assigned = 0usize;
        for ak in &spec.a()[..k - 1] {
            let mk = (ak * m as f64).floor() as usize;
            sizes.push(mk);
            assigned += mk;
        }
        if assigned > m {
            return Err(Error::InvalidParameter(format!(
                "group sizes overflow population {m}"
            )));
        }
        sizes.push(m - assigned);
        for (idx, &mk) in sizes.iter().enumerate() {
            if mk == 0 {
                return Err(Error::InvalidParameter(format!(
                    "population {m} leaves group {idx} empty; increase M or adjust fractions"
                )));
            }
        }
        Ok(GroupSizes { sizes })
    }

    pub fn explicit(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(
                "every group needs at least one member".into(),
            ));
        }
        Ok(GroupSizes { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}
