//! Finite network instances for the discrete adoption process.
//!
//! A nonadopter j feels hazard `p_j + sum_{adopters i} q_{i,j} / d_j` where
//! `d_j` counts the edges leading into j. Two storage layouts cover every
//! case used here: an all-to-all "dense" layout with group-level weights
//! (complete and multi-group populations, where d_j = M-1 by construction)
//! and an explicit edge list (rings and arbitrary weighted digraphs).

use crate::error::{Error, Result};
use crate::params::{BassParams, GroupSizes, HeteroSpec};

#[derive(Debug, Clone)]
pub enum Structure {
    /// Every ordered pair of distinct nodes is coupled; the weight depends
    /// only on the groups, and the hazard of one adopter in group m on a
    /// nonadopter in group k is `q[m][k] / (M - 1)`. Zero entries are edges
    /// of weight zero, so indegrees stay M - 1.
    Dense { sizes: Vec<usize>, q: Vec<Vec<f64>> },
    /// Explicit weighted edges. `in_edges[j]` lists (source, weight) pairs;
    /// `out_edges[i]` mirrors them for event-driven simulation.
    Sparse {
        in_edges: Vec<Vec<(usize, f64)>>,
        out_edges: Vec<Vec<(usize, f64)>>,
    },
}

#[derive(Debug, Clone)]
pub struct NetworkInstance {
    m: usize,
    p: Vec<f64>,
    group_of: Vec<usize>,
    structure: Structure,
}

/// Complete homogeneous network on `m >= 1` nodes: every adopter pushes
/// every nonadopter with hazard `q / (m - 1)`.
pub fn make_complete(m: usize, params: &BassParams) -> Result<NetworkInstance> {
    if m == 0 {
        return Err(Error::InvalidNetwork("need at least one node".into()));
    }
    Ok(NetworkInstance {
        m,
        p: vec![params.p; m],
        group_of: vec![0; m],
        structure: Structure::Dense {
            sizes: vec![m],
            q: vec![vec![params.q]],
        },
    })
}

/// Ring on `m >= 3` nodes; each node is influenced by its two neighbours
/// with weight `q` each, so the per-edge hazard is `q / 2`.
pub fn make_circle(m: usize, params: &BassParams) -> Result<NetworkInstance> {
    if m < 3 {
        return Err(Error::InvalidNetwork(format!(
            "ring needs at least 3 nodes, got {m}; smaller rings degenerate to multi-edges"
        )));
    }
    let mut in_edges = vec![Vec::with_capacity(2); m];
    let mut out_edges = vec![Vec::with_capacity(2); m];
    for j in 0..m {
        let left = (j + m - 1) % m;
        let right = (j + 1) % m;
        in_edges[j].push((left, params.q));
        in_edges[j].push((right, params.q));
        out_edges[left].push((j, params.q));
        out_edges[right].push((j, params.q));
    }
    Ok(NetworkInstance {
        m,
        p: vec![params.p; m],
        group_of: vec![0; m],
        structure: Structure::Sparse { in_edges, out_edges },
    })
}

/// Complete multi-group network: nodes are laid out group by group, and an
/// adopter in group m pushes any nonadopter in group k with hazard
/// `Q[m][k] / (M - 1)`.
pub fn make_kgroup(spec: &HeteroSpec, sizes: &GroupSizes) -> Result<NetworkInstance> {
    if sizes.sizes().len() != spec.groups() {
        return Err(Error::InvalidNetwork(format!(
            "spec has {} groups but sizes list {}",
            spec.groups(),
            sizes.sizes().len()
        )));
    }
    let m = sizes.total();
    let mut p = Vec::with_capacity(m);
    let mut group_of = Vec::with_capacity(m);
    for (g, &mk) in sizes.sizes().iter().enumerate() {
        p.extend(std::iter::repeat(spec.p()[g]).take(mk));
        group_of.extend(std::iter::repeat(g).take(mk));
    }
    Ok(NetworkInstance {
        m,
        p,
        group_of,
        structure: Structure::Dense {
            sizes: sizes.sizes().to_vec(),
            q: spec.q_matrix().to_vec(),
        },
    })
}

/// Arbitrary weighted digraph from a full weight matrix. Entry `w[i][j]` is
/// the influence of i on j; zero means no edge, and the diagonal must be
/// zero (nodes do not influence themselves).
pub fn from_weight_matrix(p: Vec<f64>, w: &[Vec<f64>]) -> Result<NetworkInstance> {
    let m = p.len();
    if m == 0 {
        return Err(Error::InvalidNetwork("need at least one node".into()));
    }
    if w.len() != m || w.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidNetwork(format!(
            "weight matrix must be {m}x{m}"
        )));
    }
    for (i, &pi) in p.iter().enumerate() {
        if !pi.is_finite() || pi < 0.0 {
            return Err(Error::InvalidNetwork(format!(
                "external rate p[{i}] = {pi} must be nonnegative"
            )));
        }
    }
    let mut in_edges = vec![Vec::new(); m];
    let mut out_edges = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..m {
            let wij = w[i][j];
            if !wij.is_finite() || wij < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "weight w[{i}][{j}] = {wij} must be nonnegative"
                )));
            }
            if i == j && wij != 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "self-influence w[{i}][{i}] must be zero"
                )));
            }
            if wij > 0.0 {
                in_edges[j].push((i, wij));
                out_edges[i].push((j, wij));
            }
        }
    }
    Ok(NetworkInstance {
        m,
        p,
        group_of: vec![0; m],
        structure: Structure::Sparse { in_edges, out_edges },
    })
}

impl NetworkInstance {
    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn external_rate(&self, j: usize) -> f64 {
        self.p[j]
    }

    pub fn external_rates(&self) -> &[f64] {
        &self.p
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.group_of[j]
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn min_external_rate(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fail fast for operations whose analysis assumes every node has a
    /// positive external rate.
    pub fn require_positive_external(&self) -> Result<()> {
        if self.min_external_rate() <= 0.0 {
            return Err(Error::InvalidNetwork(
                "operation requires a positive external rate on every node".into(),
            ));
        }
        Ok(())
    }

    /// Count of edges leading into node j. For the dense layout this is
    /// M - 1 regardless of zero weights, matching the hazard denominator.
    pub fn indegree(&self, j: usize) -> usize {
        match &self.structure {
            Structure::Dense { .. } => self.m - 1,
            Structure::Sparse { in_edges, .. } => in_edges[j].len(),
        }
    }

    /// Raw weight of the i -> j coupling (zero when absent).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.structure {
            Structure::Dense { q, .. } => q[self.group_of[i]][self.group_of[j]],
            Structure::Sparse { in_edges, .. } => in_edges[j]
                .iter()
                .find(|&&(src, _)| src == i)
                .map_or(0.0, |&(_, w)| w),
        }
    }

    /// Per-edge hazard of adopter i on nonadopter j: `q_{i,j} / d_j`.
    pub fn edge_hazard(&self, i: usize, j: usize) -> f64 {
        let w = self.weight(i, j);
        if w == 0.0 {
            0.0
        } else {
            w / self.indegree(j) as f64
        }
    }

    /// Largest possible internal hazard on node j (all others adopted).
    pub fn max_internal_hazard(&self, j: usize) -> f64 {
        (0..self.m)
            .filter(|&i| i != j)
            .map(|i| self.edge_hazard(i, j))
            .sum()
    }
}
