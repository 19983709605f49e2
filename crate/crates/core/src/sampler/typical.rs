use std::collections::HashSet;

use rand::Rng;

use crate::graph::{Adjacency, Reach};

/// Estimated set of node pairs with non-negligible marginal probability.
///
/// Grows by union until frozen; afterwards insertions are ignored so the
/// proposal distribution stays fixed.
#[derive(Clone, Debug, Default)]
pub struct TypicalEdgeSet {
    set: HashSet<(u32, u32)>,
    list: Vec<(u32, u32)>,
    adj: Vec<Vec<u32>>,
    frozen: bool,
}

fn ordered(i: usize, j: usize) -> (u32, u32) {
    if i < j {
        (i as u32, j as u32)
    } else {
        (j as u32, i as u32)
    }
}

impl TypicalEdgeSet {
    pub fn new(n: usize) -> Self {
        TypicalEdgeSet { adj: vec![Vec::new(); n], ..Default::default() }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut t = Self::new(n);
        for (i, j) in pairs {
            t.insert(i, j);
        }
        t
    }

    /// Adds a pair; returns whether the set changed.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        if self.frozen || i == j {
            return false;
        }
        let key = ordered(i, j);
        if !self.set.insert(key) {
            return false;
        }
        self.list.push(key);
        self.adj[i].push(j as u32);
        self.adj[j].push(i as u32);
        true
    }

    pub fn extend(&mut self, pairs: impl IntoIterator<Item = (usize, usize)>) -> usize {
        pairs.into_iter().filter(|&(i, j)| self.insert(i, j)).count()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.set.contains(&ordered(i, j))
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Pairs in insertion order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.list.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    pub fn sorted_pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.pairs().collect();
        v.sort_unstable();
        v
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let (i, j) = self.list[rng.random_range(0..self.list.len())];
        (i as usize, j as usize)
    }

    /// P(j | i): uniform over typical-set neighbours of `i`, or uniform over
    /// all nodes when there are none.
    pub fn conditional(&self, i: usize, j: usize) -> f64 {
        let k = self.adj[i].len();
        if k == 0 {
            1.0 / self.adj.len() as f64
        } else if self.contains(i, j) {
            1.0 / k as f64
        } else {
            0.0
        }
    }

    pub fn sample_conditional<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let nb = &self.adj[i];
        if nb.is_empty() {
            rng.random_range(0..self.adj.len())
        } else {
            nb[rng.random_range(0..nb.len())] as usize
        }
    }
}

/// Mixture of typical-set, uniform and nearby pair proposals.
#[derive(Clone, Debug)]
pub struct EntrySelector {
    n: usize,
    w_t: f64,
    w_u: f64,
    w_n: f64,
    d: usize,
    reach: Reach,
}

impl EntrySelector {
    pub fn new(n: usize, w_t: f64, w_u: f64, w_n: f64, d: usize) -> Self {
        EntrySelector { n, w_t, w_u, w_n, d, reach: Reach::new(n) }
    }

    fn weights(&self, typical: &TypicalEdgeSet) -> (f64, f64, f64) {
        let w_t = if typical.is_empty() { 0.0 } else { self.w_t };
        let total = w_t + self.w_u + self.w_n;
        (w_t / total, self.w_u / total, self.w_n / total)
    }

    pub fn sample<G: Adjacency, R: Rng + ?Sized>(&mut self, g: &G, typical: &TypicalEdgeSet, rng: &mut R) -> (usize, usize) {
        let (t, u, _) = self.weights(typical);
        let x: f64 = rng.random();
        let (i, j) = if x < t {
            typical.sample(rng)
        } else if x < t + u {
            let i = rng.random_range(0..self.n);
            let j = (i + rng.random_range(1..self.n)) % self.n;
            (i, j)
        } else {
            let i = rng.random_range(0..self.n);
            let found = self.reach.reachable(g, i, self.d);
            let j = if found.is_empty() {
                (i + rng.random_range(1..self.n)) % self.n
            } else {
                found[rng.random_range(0..found.len())] as usize
            };
            (i, j)
        };
        if i < j {
            (i, j)
        } else {
            (j, i)
        }
    }

    /// R(i, j) + R(j, i) for the current graph.
    pub fn nearby_density<G: Adjacency>(&mut self, g: &G, i: usize, j: usize) -> f64 {
        let n = self.n as f64;
        let fallback = 1.0 / (n * (n - 1.0));
        let mut total = 0.0;
        for (a, b) in [(i, j), (j, i)] {
            let size = self.reach.reachable(g, a, self.d).len();
            if size == 0 {
                total += fallback;
            } else if self.reach.was_reached(b, a) {
                total += 1.0 / (size as f64 * n);
            }
        }
        total
    }

    /// Probability of proposing the unordered pair `{i, j}` in graph `g`.
    pub fn density<G: Adjacency>(&mut self, g: &G, typical: &TypicalEdgeSet, i: usize, j: usize) -> f64 {
        let (t, u, nb) = self.weights(typical);
        let n = self.n as f64;
        let mut q = u * 2.0 / (n * (n - 1.0));
        if t > 0.0 && typical.contains(i, j) {
            q += t / typical.len() as f64;
        }
        if nb > 0.0 {
            q += nb * self.nearby_density(g, i, j);
        }
        q
    }

    /// Whether the density depends on the graph at all.
    pub fn uses_graph(&self) -> bool {
        self.w_n > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dichotomization;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixture_arithmetic() {
        let n = 15; // C(15, 2) = 105
        let typical = TypicalEdgeSet::from_pairs(n, (0..10).map(|k| (k, k + 1)));
        let g = Dichotomization::new(n);
        let mut sel = EntrySelector::new(n, 1.0, 1.0, 0.0, 2);
        let q_in = sel.density(&g, &typical, 3, 4);
        assert!((q_in - (0.1 + 1.0 / 105.0) / 2.0).abs() < 1e-15);
        let q_out = sel.density(&g, &typical, 0, 14);
        assert!((q_out - 1.0 / 210.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_fallback() {
        let n = 6;
        let g = Dichotomization::from_edges(n, [(1, 2)]);
        let mut sel = EntrySelector::new(n, 0.0, 1.0, 1.0, 2);
        // node 0 is isolated, node 5 too
        assert!((sel.nearby_density(&g, 0, 5) - 2.0 / 30.0).abs() < 1e-15);
        assert!((sel.nearby_density(&g, 1, 2) - 2.0 / 6.0).abs() < 1e-15);
        assert!((sel.nearby_density(&g, 0, 1) - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn densities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 9;
        let mut g = Dichotomization::new(n);
        for _ in 0..7 {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            g.insert(i, j);
        }
        let typical = TypicalEdgeSet::from_pairs(n, [(0, 3), (2, 7), (4, 5)]);
        let mut sel = EntrySelector::new(n, 1.0, 0.3, 0.7, 2);
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += sel.density(&g, &typical, i, j);
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frequencies_match_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 7;
        let g = Dichotomization::from_edges(n, [(0, 1), (1, 2), (4, 5)]);
        let typical = TypicalEdgeSet::from_pairs(n, [(0, 6), (2, 3)]);
        let mut sel = EntrySelector::new(n, 1.0, 0.2, 0.6, 2);
        let draws = 1_000_000;
        let mut counts = vec![vec![0usize; n]; n];
        for _ in 0..draws {
            let (i, j) = sel.sample(&g, &typical, &mut rng);
            counts[i][j] += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                let p = sel.density(&g, &typical, i, j);
                let sd = (p * (1.0 - p) / draws as f64).sqrt();
                let f = counts[i][j] as f64 / draws as f64;
                assert!((f - p).abs() <= 3.5 * sd + 1e-9, "({i},{j}) f={f} p={p}");
            }
        }
    }

    #[test]
    fn frozen_set_ignores_inserts() {
        let mut t = TypicalEdgeSet::new(4);
        assert!(t.insert(0, 1));
        assert!(!t.insert(1, 0));
        t.freeze();
        assert!(!t.insert(2, 3));
        assert_eq!(t.len(), 1);
        assert_eq!(t.conditional(0, 1), 1.0);
        assert_eq!(t.conditional(2, 0), 0.25);
    }
}
