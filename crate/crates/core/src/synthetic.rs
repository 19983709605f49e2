//! Planted networks and benchmark targets.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dichotomization, WeightedGraph};
use crate::math::ln_binomial;
use crate::models::{simulate_equilibrium_ising, simulate_gaussian, simulate_kinetic_ising, Dataset, ModelKind};

fn check_density(n: usize, avg_degree: f64) -> Result<usize> {
    if !(avg_degree >= 0.0) || (n > 1 && avg_degree >= (n - 1) as f64) || (n <= 1 && avg_degree > 0.0) {
        return Err(Error::Config(format!("average degree {avg_degree} is not below N-1 = {}", n.saturating_sub(1))));
    }
    Ok((n as f64 * avg_degree / 2.0).round() as usize)
}

/// `e` distinct uniform pairs among `n` nodes.
pub fn gen_er<R: Rng + ?Sized>(n: usize, e: usize, rng: &mut R) -> Result<Dichotomization> {
    let max = n * n.saturating_sub(1) / 2;
    if e > max {
        return Err(Error::Config(format!("{e} edges do not fit in {n} nodes")));
    }
    let mut g = Dichotomization::new(n);
    if 2 * e > max {
        // dense: shuffle all pairs
        let mut all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        all.shuffle(rng);
        all.into_iter().take(e).for_each(|(i, j)| {
            g.insert(i, j);
        });
        return Ok(g);
    }
    while g.n_edges() < e {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            g.insert(i, j);
        }
    }
    Ok(g)
}

/// Erdős–Rényi graph with `round(N * avg_degree / 2)` edges and i.i.d.
/// normal weights.
pub fn gen_er_weighted<R: Rng + ?Sized>(n: usize, avg_degree: f64, w_mean: f64, w_sd: f64, rng: &mut R) -> Result<WeightedGraph> {
    let e = check_density(n, avg_degree)?;
    let normal = Normal::new(w_mean, w_sd).map_err(|e| Error::Config(e.to_string()))?;
    let d = gen_er(n, e, rng)?;
    Ok(weigh(&d, |r| normal.sample(r), rng))
}

/// Attaches weights drawn by `draw` to every edge (redrawing exact zeros).
pub fn weigh<R: Rng + ?Sized>(d: &Dichotomization, mut draw: impl FnMut(&mut R) -> f64, rng: &mut R) -> WeightedGraph {
    let mut g = WeightedGraph::new(d.n_nodes());
    for (i, j) in d.edges() {
        let mut w = draw(rng);
        while w == 0.0 {
            w = draw(rng);
        }
        g.set_unchecked(i, j, w);
    }
    g
}

/// Result of [`gen_triangle_enriched`].
#[derive(Clone, Debug)]
pub struct TriangleEnriched {
    pub graph: Dichotomization,
    /// True if some round ran out of open triads and was filled with random pairs.
    pub exhausted: bool,
}

/// Random graph with exactly `e` edges and extra triangles: start from a
/// random graph, keep `e/(n+1)` of its edges, then in each of `n` rounds
/// close a batch of uniformly chosen open triads.
pub fn gen_triangle_enriched<R: Rng + ?Sized>(n_nodes: usize, e: usize, rounds: usize, rng: &mut R) -> Result<TriangleEnriched> {
    let mut g = gen_er(n_nodes, e, rng)?;
    let per_round = e / (rounds + 1);
    let keep = e - per_round * rounds;
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.shuffle(rng);
    for &(i, j) in &edges[keep..] {
        g.remove(i, j);
    }
    let mut exhausted = false;
    for _ in 0..rounds {
        let mut open: Vec<(usize, usize)> = Vec::new();
        let mut seen = HashSet::new();
        for u in 0..n_nodes {
            let nb = g.neighbors(u);
            for a in 0..nb.len() {
                for b in a + 1..nb.len() {
                    let (x, y) = (nb[a] as usize, nb[b] as usize);
                    if !g.contains(x, y) && seen.insert((x, y)) {
                        open.push((x, y));
                    }
                }
            }
        }
        open.shuffle(rng);
        let target = g.n_edges() + per_round;
        for (x, y) in open {
            if g.n_edges() >= target {
                break;
            }
            g.insert(x, y);
        }
        while g.n_edges() < target {
            exhausted = true;
            let i = rng.random_range(0..n_nodes);
            let j = rng.random_range(0..n_nodes);
            if i != j {
                g.insert(i, j);
            }
        }
    }
    Ok(TriangleEnriched { graph: g, exhausted })
}

/// Planted partition: `groups` equal-ish blocks, average degree split
/// between within-block edges (fraction `within`) and across-block edges.
pub fn gen_planted_partition<R: Rng + ?Sized>(
    n: usize,
    groups: usize,
    avg_degree: f64,
    within: f64,
    rng: &mut R,
) -> Result<(Dichotomization, Vec<usize>)> {
    let e = check_density(n, avg_degree)?;
    if groups == 0 || groups > n || !(0.0..=1.0).contains(&within) {
        return Err(Error::Config("need 1 <= groups <= N and 0 <= within <= 1".into()));
    }
    let labels: Vec<usize> = (0..n).map(|i| i * groups / n).collect();
    let members: Vec<Vec<usize>> = (0..groups).map(|r| (0..n).filter(|&i| labels[i] == r).collect()).collect();
    let inside: usize = members.iter().map(|m| m.len() * m.len().saturating_sub(1) / 2).sum();
    let e_in = ((e as f64 * within).round() as usize).min(inside);
    let e_out = (e - e_in).min(n * (n - 1) / 2 - inside);
    let mut g = Dichotomization::new(n);
    let mut added = 0;
    while added < e_in {
        let r = rng.random_range(0..groups);
        let m = &members[r];
        if m.len() < 2 {
            continue;
        }
        let (a, b) = (m[rng.random_range(0..m.len())], m[rng.random_range(0..m.len())]);
        if a != b && g.insert(a, b) {
            added += 1;
        }
    }
    added = 0;
    while added < e_out {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if labels[a] != labels[b] && g.insert(a, b) {
            added += 1;
        }
    }
    Ok((g, labels))
}

/// Generator parameters of a [`PlantedInstance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedMeta {
    pub model: ModelKind,
    pub n: usize,
    pub m: usize,
    pub avg_degree: f64,
    pub w_mean: f64,
    pub w_sd: f64,
    pub seed: u64,
}

/// A planted graph and data simulated from it.
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    pub truth: WeightedGraph,
    pub data: Dataset,
    pub meta: PlantedMeta,
}

/// Simulates `m` samples from `truth` under `model`. Markov models start
/// from a uniform random state; equilibrium models use Gibbs sampling with
/// a burn-in of 100 sweeps and a thinning of 10.
pub fn simulate<R: Rng + ?Sized>(truth: &WeightedGraph, model: ModelKind, m: usize, rng: &mut R) -> Result<Dataset> {
    let n = truth.n_nodes();
    match model {
        ModelKind::KineticIsing => {
            let x0: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            simulate_kinetic_ising(truth, m, &x0, rng)
        }
        ModelKind::EquilibriumIsing => simulate_equilibrium_ising(truth, m, 100, 10, false, rng),
        ModelKind::ZeroIsing => simulate_equilibrium_ising(truth, m, 100, 10, true, rng),
        ModelKind::Gaussian => simulate_gaussian(truth, m, rng),
    }
}

/// Erdős–Rényi weighted truth plus simulated data. For the Gaussian model
/// node parameters are set to 1.
pub fn planted_er<R: Rng + ?Sized>(meta: PlantedMeta, rng: &mut R) -> Result<PlantedInstance> {
    let mut truth = gen_er_weighted(meta.n, meta.avg_degree, meta.w_mean, meta.w_sd, rng)?;
    if meta.model == ModelKind::Gaussian {
        truth.theta.iter_mut().for_each(|t| *t = 1.0);
    }
    let data = simulate(&truth, meta.model, meta.m, rng)?;
    Ok(PlantedInstance { truth, data, meta })
}

/// Independent-edge target: each pair of `G` is present with probability
/// `p`, every other pair with probability `eps`.
#[derive(Clone, Debug)]
pub struct FactorizedTarget {
    g: Dichotomization,
    p: f64,
    eps: f64,
    // log odds of presence on edges and non-edges
    odds_edge: f64,
    odds_other: f64,
}

impl FactorizedTarget {
    pub fn new(g: Dichotomization, p: f64, eps: f64) -> Result<Self> {
        if !(0.0 < eps && eps < 1.0 && 0.0 < p && p < 1.0) {
            return Err(Error::Config(format!("need probabilities in (0, 1), got p={p}, eps={eps}")));
        }
        let odds = |x: f64| x.ln() - (-x).ln_1p();
        Ok(FactorizedTarget { odds_edge: odds(p), odds_other: odds(eps), g, p, eps })
    }

    pub fn n_nodes(&self) -> usize {
        self.g.n_nodes()
    }

    pub fn reference(&self) -> &Dichotomization {
        &self.g
    }

    /// Exact marginal presence probability of `(i, j)`.
    pub fn marginal(&self, i: usize, j: usize) -> f64 {
        if self.g.contains(i, j) {
            self.p
        } else {
            self.eps
        }
    }

    /// Presence probability of every pair outside the reference graph.
    pub fn marginal_off(&self) -> f64 {
        self.eps
    }

    /// Log probability of a whole dichotomization.
    pub fn log_prob(&self, a: &Dichotomization) -> f64 {
        let n = self.g.n_nodes() as u64;
        let pairs = ln_binomial(n, 2).exp().round();
        let e_g = self.g.n_edges() as f64;
        let both = a.edges().filter(|&(i, j)| self.g.contains(i, j)).count() as f64;
        let only_a = a.n_edges() as f64 - both;
        let base = e_g * (-self.p).ln_1p() + (pairs - e_g) * (-self.eps).ln_1p();
        base + both * self.odds_edge + only_a * self.odds_other
    }

    /// Change of [`Self::log_prob`] when `(i, j)` is added (or removed).
    pub fn delta_toggle(&self, i: usize, j: usize, add: bool) -> f64 {
        let o = if self.g.contains(i, j) { self.odds_edge } else { self.odds_other };
        if add {
            o
        } else {
            -o
        }
    }
}

/// Convenience wrapper matching the generator naming.
pub fn factorized_target(g: Dichotomization, p: f64, eps: f64) -> Result<FactorizedTarget> {
    FactorizedTarget::new(g, p, eps)
}
