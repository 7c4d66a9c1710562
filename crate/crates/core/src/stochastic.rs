//! Event-driven simulation of the adoption Markov chain.
//!
//! Nonadopter j converts at rate `p_j + sum over adopted in-neighbours i of
//! q_ij / d_j`. Between adoptions all rates are constant, so the chain is
//! simulated exactly: draw the holding time from the total rate, pick the
//! converting node with probability proportional to its rate, repeat until
//! everyone has adopted, the rate vanishes, or the horizon passes.
//!
//! Dense networks (complete graphs, group blocks) never need per-node
//! rates: all nonadopters of a group share one hazard determined by the
//! per-group adopter counts, so an event costs O(K). Sparse networks keep
//! a per-node hazard updated from the adopter's out-edges.
//!
//! Replicates are reproducible by construction. Each replicate seeds its
//! own generator from `replicate_seed(master_seed, index)`, and the
//! aggregator combines fixed-size replicate chunks in index order, so the
//! summary is bitwise identical across runs and thread counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_trajectory_csv;
use crate::network::{NetworkInstance, Structure};
use crate::trajectory::{validate_grid, Trajectory};

/// One realization: who adopted and when, in event order.
#[derive(Debug, Clone)]
pub struct AdoptionRecord {
    m: usize,
    horizon: f64,
    times: Vec<f64>,
    nodes: Vec<usize>,
}

impl AdoptionRecord {
    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Adoption times in increasing order.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Adopting node per event, aligned with `times`.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn adoption_count(&self) -> usize {
        self.times.len()
    }

    /// Adopted fraction sampled at the given times (step function).
    pub fn fraction_on_grid(&self, grid: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        let mut k = 0usize;
        for &t in grid {
            while k < self.times.len() && self.times[k] <= t {
                k += 1;
            }
            out.push(k as f64 / self.m as f64);
        }
        out
    }
}

/// Deterministic per-replicate seed: the master seed is mixed with the
/// golden-ratio multiple of the index and scrambled (splitmix64 finalizer),
/// so nearby indices get statistically independent streams.
pub fn replicate_seed(master_seed: u64, replicate: u64) -> u64 {
    let mut z = master_seed ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn exponential(rng: &mut impl Rng, rate: f64) -> f64 {
    // gen() is in [0, 1), so the argument of ln stays in (0, 1]
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

pub fn simulate_once(
    net: &NetworkInstance,
    horizon: f64,
    rng: &mut impl Rng,
) -> Result<AdoptionRecord> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let (times, nodes) = match net.structure() {
        Structure::Dense { sizes, q } => simulate_dense(net, sizes, q, horizon, rng),
        Structure::Sparse { out_edges, .. } => simulate_sparse(net, out_edges, horizon, rng),
    };
    Ok(AdoptionRecord {
        m: net.node_count(),
        horizon,
        times,
        nodes,
    })
}

fn simulate_dense(
    net: &NetworkInstance,
    sizes: &[usize],
    q: &[Vec<f64>],
    horizon: f64,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<usize>) {
    let m = net.node_count();
    let kdim = sizes.len();
    let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
    // remaining[g] lists the group's nonadopters for uniform node draws
    let mut remaining: Vec<Vec<usize>> = Vec::with_capacity(kdim);
    let mut node = 0usize;
    for &sz in sizes {
        remaining.push((node..node + sz).collect());
        node += sz;
    }
    let mut adopted = vec![0usize; kdim];
    let mut times = Vec::with_capacity(m);
    let mut nodes = Vec::with_capacity(m);
    let mut t = 0.0f64;
    let mut hazard = vec![0.0f64; kdim];
    for _ in 0..m {
        let mut total = 0.0;
        for g in 0..kdim {
            if remaining[g].is_empty() {
                hazard[g] = 0.0;
                continue;
            }
            // all nonadopters of a group are exchangeable, so any remaining
            // node carries the group rate
            let mut h = net.external_rate(remaining[g][0]);
            for (src, row) in q.iter().enumerate() {
                h += adopted[src] as f64 * row[g] / denom;
            }
            hazard[g] = h;
            total += remaining[g].len() as f64 * h;
        }
        if total <= 0.0 {
            break;
        }
        t += exponential(rng, total);
        if t > horizon {
            break;
        }
        // pick the group, then a uniform nonadopter inside it
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = kdim - 1;
        for g in 0..kdim {
            let w = remaining[g].len() as f64 * hazard[g];
            if pick < w {
                chosen = g;
                break;
            }
            pick -= w;
        }
        while remaining[chosen].is_empty() {
            // guard against an exhausted group reached by rounding
            chosen = (chosen + kdim - 1) % kdim;
        }
        let slot = rng.gen_range(0..remaining[chosen].len());
        let who = remaining[chosen].swap_remove(slot);
        adopted[chosen] += 1;
        times.push(t);
        nodes.push(who);
    }
    (times, nodes)
}

fn simulate_sparse(
    net: &NetworkInstance,
    out_edges: &[Vec<(usize, f64)>],
    horizon: f64,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<usize>) {
    let m = net.node_count();
    let mut is_adopter = vec![false; m];
    let mut rate: Vec<f64> = (0..m).map(|j| net.external_rate(j)).collect();
    let mut times = Vec::with_capacity(m);
    let mut nodes = Vec::with_capacity(m);
    let mut t = 0.0f64;
    for _ in 0..m {
        let total: f64 = rate
            .iter()
            .zip(&is_adopter)
            .filter(|(_, &a)| !a)
            .map(|(&r, _)| r)
            .sum();
        if total <= 0.0 {
            break;
        }
        t += exponential(rng, total);
        if t > horizon {
            break;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut who = usize::MAX;
        for j in 0..m {
            if is_adopter[j] {
                continue;
            }
            if pick < rate[j] {
                who = j;
                break;
            }
            pick -= rate[j];
        }
        if who == usize::MAX {
            // rounding pushed the cursor past the last nonadopter
            who = (0..m).rev().find(|&j| !is_adopter[j]).unwrap();
        }
        is_adopter[who] = true;
        for &(dst, w) in &out_edges[who] {
            if !is_adopter[dst] {
                rate[dst] += w / net.indegree(dst) as f64;
            }
        }
        times.push(t);
        nodes.push(who);
    }
    (times, nodes)
}

/// Monte Carlo estimate of the adopted-fraction curve.
#[derive(Debug, Clone)]
pub struct McSummary {
    grid: Vec<f64>,
    f_mean: Vec<f64>,
    f_se: Vec<f64>,
    replicates: usize,
    master_seed: u64,
}

impl McSummary {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn f_mean(&self) -> &[f64] {
        &self.f_mean
    }

    /// Standard error of the mean at each grid time (zero for one replicate).
    pub fn f_se(&self) -> &[f64] {
        &self.f_se
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut tr = Trajectory::new(self.grid.clone())?;
        tr.push_fraction_series("f_mean", self.f_mean.clone())?;
        tr.push_series("f_se", self.f_se.clone())?;
        write_trajectory_csv(path, &tr)
    }
}

/// Replicates per aggregation chunk. Fixed so that the combination tree,
/// and with it every rounding, is independent of the thread count.
const CHUNK: usize = 1024;

struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Welford {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((mu, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let d = x - *mu;
            *mu += d / n;
            *m2 += d * (x - *mu);
        }
    }

    fn merge(mut self, other: Welford) -> Welford {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
        self
    }
}

pub fn monte_carlo(
    net: &NetworkInstance,
    grid: &[f64],
    replicates: usize,
    master_seed: u64,
) -> Result<McSummary> {
    validate_grid(grid)?;
    if replicates == 0 {
        return Err(Error::InvalidParameter(
            "at least one replicate is required".into(),
        ));
    }
    let horizon = *grid.last().unwrap();
    if horizon <= 0.0 {
        return Err(Error::InvalidParameter(
            "grid must extend past t = 0".into(),
        ));
    }
    let chunks: Vec<(usize, usize)> = (0..replicates)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(replicates)))
        .collect();
    let partials: Vec<Result<Welford>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = Welford::new(grid.len());
            for r in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(master_seed, r as u64));
                let rec = simulate_once(net, horizon, &mut rng)?;
                acc.push(&rec.fraction_on_grid(grid));
            }
            Ok(acc)
        })
        .collect();
    // collect() preserves chunk order, so this fold is index-ordered
    let mut total = Welford::new(grid.len());
    for partial in partials {
        total = total.merge(partial?);
    }
    let n = total.count as f64;
    let f_se = if total.count > 1 {
        total
            .m2
            .iter()
            .map(|&m2| (m2 / (n * (n - 1.0))).sqrt())
            .collect()
    } else {
        vec![0.0; grid.len()]
    };
    Ok(McSummary {
        grid: grid.to_vec(),
        f_mean: total.mean,
        f_se,
        replicates,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::complete::solve_complete_reduced;
    use crate::master::{solve_circle_reduced, solve_full_master};
    use crate::network::{from_weight_matrix, make_circle, make_complete, make_kgroup};
    use crate::odeint::IntegratorConfig;
    use crate::params::{BassParams, GroupSizes, HeteroSpec};
    use crate::trajectory::uniform_grid;

    #[test]
    fn isolated_node_adoption_time_is_exponential() {
        let rate = 0.7;
        let net = make_complete(1, &BassParams::new(rate, 0.0).unwrap()).unwrap();
        let n = 100_000usize;
        let mut samples = Vec::with_capacity(n);
        for r in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(42, r as u64));
            let rec = simulate_once(&net, 200.0, &mut rng).unwrap();
            assert_eq!(rec.adoption_count(), 1);
            samples.push(rec.times()[0]);
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (i, &x) in samples.iter().enumerate() {
            let cdf = 1.0 - (-rate * x).exp();
            d = d.max(((i + 1) as f64 / n as f64 - cdf).abs());
            d = d.max((cdf - i as f64 / n as f64).abs());
        }
        // Kolmogorov-Smirnov at the 1% level
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} above {critical}");
    }

    #[test]
    fn no_external_rate_means_no_adoptions() {
        let net = make_complete(5, &BassParams::new(0.0, 0.3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rec = simulate_once(&net, 50.0, &mut rng).unwrap();
        assert_eq!(rec.adoption_count(), 0);
        assert!(rec.fraction_on_grid(&[0.0, 25.0, 50.0]).iter().all(|&f| f == 0.0));
    }

    #[test]
    fn empty_network_probability_matches_closed_form() {
        // with two nodes, no adoptions by time t means both resisted their
        // external rate for the whole of [0, t]: probability exp(-2 p t)
        let p = 0.08;
        let net = make_complete(2, &BassParams::new(p, 0.4).unwrap()).unwrap();
        let t = 5.0;
        let n = 20_000usize;
        let mut empty = 0usize;
        for r in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(7, r as u64));
            let rec = simulate_once(&net, t, &mut rng).unwrap();
            if rec.adoption_count() == 0 {
                empty += 1;
            }
        }
        let expect = (-2.0 * p * t).exp();
        let phat = empty as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (phat - expect).abs() < 4.0 * se,
            "phat {phat} vs {expect} (se {se})"
        );
    }

    #[test]
    fn mean_curve_matches_exact_master_within_error_bars() {
        let params = BassParams::new(0.05, 0.2).unwrap();
        let net = make_complete(8, &params).unwrap();
        let grid = uniform_grid(20.0, 11).unwrap();
        let mc = monte_carlo(&net, &grid, 20_000, 2024).unwrap();
        let exact = solve_complete_reduced(8, &params, &grid, &IntegratorConfig::default())
            .unwrap();
        for i in 0..grid.len() {
            let diff = (mc.f_mean()[i] - exact.f_discrete()[i]).abs();
            assert!(
                diff <= 4.0 * mc.f_se()[i] + 1e-12,
                "t = {}: diff {diff}, se {}",
                grid[i],
                mc.f_se()[i]
            );
        }
    }

    #[test]
    fn ring_simulation_matches_exact_master() {
        let params = BassParams::new(0.04, 0.25).unwrap();
        let net = make_circle(6, &params).unwrap();
        let grid = uniform_grid(25.0, 6).unwrap();
        let mc = monte_carlo(&net, &grid, 20_000, 99).unwrap();
        let exact = solve_circle_reduced(6, &params, &grid, &IntegratorConfig::default())
            .unwrap();
        for i in 0..grid.len() {
            let diff = (mc.f_mean()[i] - exact.f_discrete()[i]).abs();
            assert!(diff <= 4.0 * mc.f_se()[i] + 1e-12, "t = {}", grid[i]);
        }
    }

    #[test]
    fn group_blocks_match_exact_master() {
        let spec = HeteroSpec::new(
            vec![0.5, 0.5],
            vec![0.02, 0.06],
            vec![vec![0.1, 0.3], vec![0.2, 0.05]],
        )
        .unwrap();
        let sizes = GroupSizes::explicit(vec![3, 3]).unwrap();
        let net = make_kgroup(&spec, &sizes).unwrap();
        let grid = uniform_grid(30.0, 7).unwrap();
        let mc = monte_carlo(&net, &grid, 20_000, 5150).unwrap();
        let exact = solve_full_master(&net, &grid, &IntegratorConfig::default()).unwrap();
        for i in 0..grid.len() {
            let diff = (mc.f_mean()[i] - exact.f_discrete()[i]).abs();
            assert!(diff <= 4.0 * mc.f_se()[i] + 1e-12, "t = {}", grid[i]);
        }
    }

    #[test]
    fn directed_pair_respects_edge_orientation() {
        // node 0 influences node 1 but not vice versa; with p_1 = 0 node 1
        // can only adopt after node 0
        let net = from_weight_matrix(
            vec![0.3, 0.0],
            &[vec![0.0, 2.0], vec![0.0, 0.0]],
        )
        .unwrap();
        for r in 0..500u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(3, r));
            let rec = simulate_once(&net, 300.0, &mut rng).unwrap();
            if rec.adoption_count() == 0 {
                continue;
            }
            assert_eq!(rec.nodes()[0], 0, "replicate {r} adopted out of order");
            if rec.adoption_count() == 2 {
                assert!(rec.times()[1] > rec.times()[0]);
            }
        }
    }

    #[test]
    fn summary_is_bitwise_reproducible() {
        let params = BassParams::new(0.05, 0.2).unwrap();
        let net = make_complete(5, &params).unwrap();
        let grid = uniform_grid(15.0, 16).unwrap();
        let a = monte_carlo(&net, &grid, 3000, 7).unwrap();
        let b = monte_carlo(&net, &grid, 3000, 7).unwrap();
        assert!(a
            .f_mean()
            .iter()
            .zip(b.f_mean())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a
            .f_se()
            .iter()
            .zip(b.f_se())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = monte_carlo(&net, &grid, 3000, 8).unwrap();
        assert!(a.f_mean().iter().zip(c.f_mean()).any(|(x, y)| x != y));
    }

    #[test]
    fn single_replicate_is_a_step_function_with_zero_se() {
        let params = BassParams::new(0.3, 0.1).unwrap();
        let net = make_complete(4, &params).unwrap();
        let grid = uniform_grid(40.0, 81).unwrap();
        let mc = monte_carlo(&net, &grid, 1, 11).unwrap();
        assert!(mc.f_se().iter().all(|&s| s == 0.0));
        for w in mc.f_mean().windows(2) {
            let step = w[1] - w[0];
            assert!(step >= 0.0);
            // steps are whole numbers of quarters
            assert!((step * 4.0 - (step * 4.0).round()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_nodes_adopt_equally_often() {
        let params = BassParams::new(0.06, 0.3).unwrap();
        let net = make_complete(6, &params).unwrap();
        let n = 12_000usize;
        let horizon = 8.0;
        let mut counts = vec![0usize; 6];
        for r in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(13, r as u64));
            let rec = simulate_once(&net, horizon, &mut rng).unwrap();
            for &node in rec.nodes() {
                counts[node] += 1;
            }
        }
        let mean = counts.iter().sum::<usize>() as f64 / 6.0;
        let phat = mean / n as f64;
        let sigma = (n as f64 * phat * (1.0 - phat)).sqrt();
        for (node, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() < 5.0 * sigma,
                "node {node}: {c} vs mean {mean}"
            );
        }
    }
}
