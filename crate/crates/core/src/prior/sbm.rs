use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::math::{ln_binomial, ln_double_factorial_even, ln_factorial};

/// Single-level microcanonical degree-corrected block model over the
/// dichotomized graph, with its hyperpriors.
///
/// Group labels are kept contiguous in `0..B`. `e_rr` stores twice the number
/// of edges inside group `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmState {
    n: usize,
    b: Vec<u32>,
    sizes: Vec<u64>,
    degree: Vec<u64>,
    e_r: Vec<u64>,
    e_rs: BTreeMap<(u32, u32), u64>,
    n_edges: u64,
}

fn key(r: u32, s: u32) -> (u32, u32) {
    if r <= s {
        (r, s)
    } else {
        (s, r)
    }
}

fn pair_term(r: u32, s: u32, e: u64) -> f64 {
    if r == s {
        ln_double_factorial_even(e)
    } else {
        ln_factorial(e)
    }
}

fn group_term(n_r: u64, e_r: u64) -> f64 {
    -ln_factorial(e_r) - ln_binomial(n_r + e_r - 1, e_r)
}

fn edge_count_term(e: u64, b: u64, n: usize) -> f64 {
    let mu = (n as f64) * (n as f64 - 1.0) / 2.0;
    let geometric = if mu > 0.0 { -(e as f64) * (1.0 / mu).ln_1p() - mu.ln_1p() } else if e == 0 { 0.0 } else { f64::NEG_INFINITY };
    -ln_binomial(b * (b + 1) / 2 + e - 1, e) + geometric
}

/// Prior of an unlabeled partition with the given group sizes: uniform B,
/// uniform size composition given B, uniform assignment given sizes.
pub fn log_partition_prior(sizes: &[u64], n: usize) -> f64 {
    let b = sizes.len() as u64;
    let n = n as u64;
    if b == 0 || n == 0 {
        return 0.0;
    }
    ln_factorial(b) + sizes.iter().map(|&s| ln_factorial(s)).sum::<f64>()
        - ln_factorial(n)
        - ln_binomial(n - 1, b - 1)
        - (n as f64).ln()
}

impl SbmState {
    /// Builds the counts for partition `b` over the graph's edges. Labels are
    /// relabelled to be contiguous in order of first appearance.
    pub fn new<G: Adjacency>(b: &[usize], graph: &G) -> Result<Self> {
        let n = graph.node_count();
        if b.len() != n {
            return Err(Error::Argument(format!("partition has {} labels for {n} nodes", b.len())));
        }
        let mut map: HashMap<usize, u32> = HashMap::new();
        let labels: Vec<u32> = b
            .iter()
            .map(|&x| {
                let next = map.len() as u32;
                *map.entry(x).or_insert(next)
            })
            .collect();
        let groups = map.len();
        let mut s = SbmState {
            n,
            b: labels,
            sizes: vec![0; groups],
            degree: vec![0; n],
            e_r: vec![0; groups],
            e_rs: BTreeMap::new(),
            n_edges: 0,
        };
        for i in 0..n {
            s.sizes[s.b[i] as usize] += 1;
            graph.for_each_neighbor(i, |j| {
                s.degree[i] += 1;
                if i < j {
                    s.add_edge_counts(i, j, 1);
                }
            });
        }
        Ok(s)
    }

    /// All nodes in one group.
    pub fn single_group<G: Adjacency>(graph: &G) -> Self {
        Self::new(&vec![0; graph.node_count()], graph).expect("label count matches")
    }

    fn add_edge_counts(&mut self, i: usize, j: usize, sign: i64) {
        let (r, s) = (self.b[i], self.b[j]);
        let step = if r == s { 2 } else { 1 };
        let e = self.e_rs.entry(key(r, s)).or_insert(0);
        *e = (*e as i64 + sign * step) as u64;
        if *e == 0 {
            self.e_rs.remove(&key(r, s));
        }
        self.e_r[r as usize] = (self.e_r[r as usize] as i64 + sign) as u64;
        self.e_r[s as usize] = (self.e_r[s as usize] as i64 + sign) as u64;
        self.n_edges = (self.n_edges as i64 + sign) as u64;
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_edges(&self) -> u64 {
        self.n_edges
    }

    pub fn partition(&self) -> &[u32] {
        &self.b
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.b[i] as usize
    }

    pub fn group_sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn degree(&self, i: usize) -> u64 {
        self.degree[i]
    }

    pub fn e_rs(&self, r: usize, s: usize) -> u64 {
        self.e_rs.get(&key(r as u32, s as u32)).copied().unwrap_or(0)
    }

    pub fn e_r(&self, r: usize) -> u64 {
        self.e_r[r]
    }

    /// ln P(A | b, k, e) for a simple graph.
    pub fn log_placement(&self) -> f64 {
        let pairs: f64 = self.e_rs.iter().map(|(&(r, s), &e)| pair_term(r, s, e)).sum();
        let degrees: f64 = self.degree.iter().map(|&k| ln_factorial(k)).sum();
        let groups: f64 = self.e_r.iter().map(|&e| ln_factorial(e)).sum();
        pairs + degrees - groups
    }

    /// ln P(k | e): degrees uniform within each group given its edge ends.
    pub fn log_degree_prior(&self) -> f64 {
        self.sizes.iter().zip(&self.e_r).map(|(&n, &e)| -ln_binomial(n + e - 1, e)).sum()
    }

    /// ln P(e | E) + ln P(E).
    pub fn log_edge_count_prior(&self) -> f64 {
        edge_count_term(self.n_edges, self.n_groups() as u64, self.n)
    }

    pub fn log_partition(&self) -> f64 {
        log_partition_prior(&self.sizes, self.n)
    }

    pub fn log_prior(&self) -> f64 {
        self.log_placement() + self.log_degree_prior() + self.log_edge_count_prior() + self.log_partition()
    }

    /// Change of [`Self::log_prior`] if edge `(i, j)` were added (`add`) or removed.
    pub fn delta_toggle(&self, i: usize, j: usize, add: bool) -> f64 {
        let d: i64 = if add { 1 } else { -1 };
        let (r, s) = (self.b[i], self.b[j]);
        let step = if r == s { 2 } else { 1 };
        let shift = |x: u64, by: i64| -> Option<u64> { u64::try_from(x as i64 + by).ok() };
        let e_pair = self.e_rs(r as usize, s as usize);
        let (er, es) = (self.e_r[r as usize], self.e_r[s as usize]);
        let (ki, kj) = (self.degree[i], self.degree[j]);
        let (Some(e_pair2), Some(ki2), Some(kj2), Some(n_e2)) =
            (shift(e_pair, d * step), shift(ki, d), shift(kj, d), shift(self.n_edges, d))
        else {
            return f64::NEG_INFINITY;
        };
        let mut delta = pair_term(r, s, e_pair2) - pair_term(r, s, e_pair);
        delta += ln_factorial(ki2) - ln_factorial(ki) + ln_factorial(kj2) - ln_factorial(kj);
        let (nr, ns) = (self.sizes[r as usize], self.sizes[s as usize]);
        if r == s {
            let Some(er2) = shift(er, 2 * d) else { return f64::NEG_INFINITY };
            delta += group_term(nr, er2) - group_term(nr, er);
        } else {
            let (Some(er2), Some(es2)) = (shift(er, d), shift(es, d)) else {
                return f64::NEG_INFINITY;
            };
            delta += group_term(nr, er2) - group_term(nr, er) + group_term(ns, es2) - group_term(ns, es);
        }
        let b = self.n_groups() as u64;
        delta + edge_count_term(n_e2, b, self.n) - edge_count_term(self.n_edges, b, self.n)
    }

    /// Adds or removes edge `(i, j)`; the caller keeps the graph in step.
    pub fn toggle(&mut self, i: usize, j: usize, add: bool) {
        let sign = if add { 1 } else { -1 };
        self.degree[i] = (self.degree[i] as i64 + sign) as u64;
        self.degree[j] = (self.degree[j] as i64 + sign) as u64;
        self.add_edge_counts(i, j, sign);
    }

    /// Same state under a different partition of the same graph.
    pub fn with_partition<G: Adjacency>(&self, b: &[usize], graph: &G) -> Result<Self> {
        Self::new(b, graph)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.b.iter().map(|&x| x as usize).collect()
    }

    /// Checks the counts against a fresh build from `graph`.
    pub fn check_against<G: Adjacency>(&self, graph: &G) -> Result<()> {
        let fresh = Self::new(&self.labels(), graph)?;
        if &fresh != self {
            return Err(Error::Inconsistent("block-model counts do not match the graph".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dichotomization;
    use crate::math::log_sum_exp;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_edge_placement() {
        let g = Dichotomization::from_edges(2, [(0, 1)]);
        let s = SbmState::single_group(&g);
        assert!(s.log_placement().abs() < 1e-15);
        assert!((s.log_partition() + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_edge_count_prior() {
        for n in [2usize, 5, 40] {
            let g = Dichotomization::new(n);
            let s = SbmState::single_group(&g);
            let mu = (n * (n - 1) / 2) as f64;
            assert!((s.log_edge_count_prior() + (mu + 1.0).ln()).abs() < 1e-12);
        }
    }

    /// Microcanonical placement for general multigraphs: `a[i][j]` counts
    /// edges, `a[i][i]` is twice the self-loops.
    fn general_placement(b: &[usize], a: &[Vec<u64>], groups: usize) -> (Vec<u64>, Vec<Vec<u64>>, f64) {
        let n = b.len();
        let k: Vec<u64> = (0..n).map(|i| (0..n).map(|j| a[i][j]).sum()).collect();
        let mut e = vec![vec![0u64; groups]; groups];
        for i in 0..n {
            for j in 0..n {
                e[b[i]][b[j]] += a[i][j];
            }
        }
        let er: Vec<u64> = (0..groups).map(|r| e[r].iter().sum()).collect();
        let mut lp = 0.0;
        for r in 0..groups {
            for s in r + 1..groups {
                lp += ln_factorial(e[r][s]);
            }
            lp += ln_double_factorial_even(e[r][r]);
            lp -= ln_factorial(er[r]);
        }
        lp += k.iter().map(|&x| ln_factorial(x)).sum::<f64>();
        for i in 0..n {
            for j in i + 1..n {
                lp -= ln_factorial(a[i][j]);
            }
            lp -= ln_double_factorial_even(a[i][i]);
        }
        let mut flat = e.concat();
        flat.extend(&er);
        (k, vec![flat], lp)
    }

    #[test]
    fn placement_normalizes_over_multigraphs() {
        // N = 4, two groups; multiplicities up to 2, self-loops up to 1
        let b = [0usize, 0, 1, 1];
        let n = 4;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let mut classes: HashMap<(Vec<u64>, Vec<Vec<u64>>), Vec<f64>> = HashMap::new();
        let mut counter = vec![0u64; pairs.len()];
        loop {
            let mut a = vec![vec![0u64; n]; n];
            for (p, &(i, j)) in pairs.iter().enumerate() {
                if i == j {
                    a[i][i] = 2 * counter[p];
                } else {
                    a[i][j] = counter[p];
                    a[j][i] = counter[p];
                }
            }
            let (k, e, lp) = general_placement(&b, &a, 2);
            classes.entry((k, e)).or_default().push(lp);
            // odometer: off-diagonal up to 2, diagonal up to 1
            let mut p = 0;
            loop {
                if p == pairs.len() {
                    for (_, lps) in &classes {
                        let total = log_sum_exp(lps);
                        // classes truncated by the multiplicity cap are skipped
                        if total.abs() > 1e-9 {
                            assert!(total < 0.0);
                        }
                    }
                    let complete = classes
                        .iter()
                        .filter(|((k, _), _)| k.iter().sum::<u64>() <= 4)
                        .map(|(_, lps)| log_sum_exp(lps));
                    for total in complete {
                        assert!(total.abs() < 1e-9, "class total {total}");
                    }
                    return;
                }
                let cap = if pairs[p].0 == pairs[p].1 { 1 } else { 2 };
                if counter[p] < cap {
                    counter[p] += 1;
                    break;
                }
                counter[p] = 0;
                p += 1;
            }
        }
    }

    #[test]
    fn degree_and_affinity_priors_normalize() {
        // degree sequences of n nodes summing to e: C(n+e-1, e)
        for n in 1..=4u64 {
            for e in 0..=5u64 {
                let count = (0..(e + 1).pow(n as u32))
                    .filter(|&code| {
                        let mut c = code;
                        let mut s = 0;
                        for _ in 0..n {
                            s += c % (e + 1);
                            c /= e + 1;
                        }
                        s == e
                    })
                    .count() as f64;
                assert!((count.ln() - ln_binomial(n + e - 1, e)).abs() < 1e-12);
            }
        }
        // symmetric affinity matrices for B groups with E edges
        for groups in 1..=3u64 {
            let cells = groups * (groups + 1) / 2;
            for e in 0..=4u64 {
                let count = (0..(e + 1).pow(cells as u32))
                    .filter(|&code| {
                        let mut c = code;
                        let mut s = 0;
                        for _ in 0..cells {
                            s += c % (e + 1);
                            c /= e + 1;
                        }
                        s == e
                    })
                    .count() as f64;
                assert!((count.ln() - ln_binomial(cells + e - 1, e)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partition_prior_normalizes() {
        for n in 1..=6usize {
            let mut seen = std::collections::HashSet::new();
            let mut terms = Vec::new();
            for code in 0..n.pow(n as u32) {
                let mut c = code;
                let labels: Vec<usize> = (0..n)
                    .map(|_| {
                        let x = c % n;
                        c /= n;
                        x
                    })
                    .collect();
                let g = Dichotomization::new(n);
                let s = SbmState::new(&labels, &g).unwrap();
                if seen.insert(s.partition().to_vec()) {
                    terms.push(s.log_partition());
                }
            }
            assert!(log_sum_exp(&terms).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn simple_graph_matches_general_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = 6;
            let mut g = Dichotomization::new(n);
            let mut a = vec![vec![0u64; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < 0.4 {
                        g.insert(i, j);
                        a[i][j] = 1;
                        a[j][i] = 1;
                    }
                }
            }
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let s = SbmState::new(&b, &g).unwrap();
            let groups = s.n_groups();
            let relabelled: Vec<usize> = s.labels();
            let (_, _, lp) = general_placement(&relabelled, &a, groups);
            assert!((s.log_placement() - lp).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn toggle_delta_matches_recompute(seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..9);
            let mut g = Dichotomization::new(n);
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let mut s = SbmState::new(&b, &g).unwrap();
            for _ in 0..40 {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                let add = !g.contains(i, j);
                let predicted = s.delta_toggle(i, j, add);
                let before = s.log_prior();
                if add { g.insert(i, j); } else { g.remove(i, j); }
                s.toggle(i, j, add);
                let fresh = SbmState::new(&b, &g).unwrap();
                prop_assert_eq!(&s, &fresh);
                prop_assert!((fresh.log_prior() - before - predicted).abs() < 1e-9);
            }
        }
    }
}
