//! Sparse symmetric weighted graphs with node parameters.

use crate::error::{Error, Result};

/// Weighted undirected graph over `n` nodes with one real parameter per node.
///
/// Nonzero weights are kept in per-node neighbor lists sorted by neighbor id,
/// mirrored on both endpoints, so reads are symmetric and zero entries are
/// never stored. There are no self-entries.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    adj: Vec<Vec<(u32, f64)>>,
    n_edges: usize,
    pub theta: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph {
            n,
            adj: vec![Vec::new(); n],
            n_edges: 0,
            theta: vec![0.0; n],
        }
    }

    pub fn with_theta(n: usize, theta: f64) -> Self {
        let mut g = Self::new(n);
        g.theta.iter_mut().for_each(|t| *t = theta);
        g
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::Argument(format!("self-entry ({i},{i}) is not allowed")));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::Argument(format!(
                "entry ({i},{j}) out of range for {} nodes",
                self.n
            )));
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if self.adj[i].len() <= self.adj[j].len() { (i, j) } else { (j, i) };
        match self.adj[a].binary_search_by_key(&(b as u32), |e| e.0) {
            Ok(k) => self.adj[a][k].1,
            Err(_) => 0.0,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.get(i, j) != 0.0
    }

    /// Sets `W_ij = W_ji = w` and returns the previous value. Setting zero
    /// removes the entry.
    pub fn set_entry(&mut self, i: usize, j: usize, w: f64) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.set_unchecked(i, j, w))
    }

    pub(crate) fn set_unchecked(&mut self, i: usize, j: usize, w: f64) -> f64 {
        let old = upsert(&mut self.adj[i], j as u32, w);
        upsert(&mut self.adj[j], i as u32, w);
        match (old != 0.0, w != 0.0) {
            (false, true) => self.n_edges += 1,
            (true, false) => self.n_edges -= 1,
            _ => {}
        }
        old
    }

    /// Neighbors of `i` with their weights, sorted by neighbor id.
    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adj[i]
    }

    /// All nonzero entries `(i, j, w)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |(j, _)| (*j as usize) > i)
                .map(move |&(j, w)| (i, j as usize, w))
        })
    }

    pub fn dichotomize(&self) -> Dichotomization {
        let mut d = Dichotomization::new(self.n);
        for (i, j, _) in self.edges() {
            d.insert(i, j);
        }
        d
    }

    /// Rebuilds the neighbor lists from the edge set; used to check the
    /// incrementally maintained structure.
    pub fn rebuilt(&self) -> WeightedGraph {
        let mut g = WeightedGraph::new(self.n);
        g.theta = self.theta.clone();
        for (i, j, w) in self.edges() {
            g.adj[i].push((j as u32, w));
            g.adj[j].push((i as u32, w));
            g.n_edges += 1;
        }
        for row in &mut g.adj {
            row.sort_by_key(|e| e.0);
        }
        g
    }

    /// Sum of |w| over all stored entries.
    pub fn total_abs_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w.abs()).sum()
    }
}

fn upsert(row: &mut Vec<(u32, f64)>, j: u32, w: f64) -> f64 {
    match row.binary_search_by_key(&j, |e| e.0) {
        Ok(k) => {
            let old = row[k].1;
            if w == 0.0 {
                row.remove(k);
            } else {
                row[k].1 = w;
            }
            old
        }
        Err(k) => {
            if w != 0.0 {
                row.insert(k, (j, w));
            }
            0.0
        }
    }
}

/// Unweighted simple graph: the nonzero pattern of a weight matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dichotomization {
    n: usize,
    adj: Vec<Vec<u32>>,
    n_edges: usize,
}

impl Dichotomization {
    pub fn new(n: usize) -> Self {
        Dichotomization { n, adj: vec![Vec::new(); n], n_edges: 0 }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut d = Self::new(n);
        for (i, j) in edges {
            d.insert(i, j);
        }
        d
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.adj[i].binary_search(&(j as u32)).is_ok()
    }

    /// Returns true if the edge was newly inserted.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        assert!(i != j && i < self.n && j < self.n, "invalid pair ({i},{j})");
        match self.adj[i].binary_search(&(j as u32)) {
            Ok(_) => false,
            Err(k) => {
                self.adj[i].insert(k, j as u32);
                let k2 = self.adj[j].binary_search(&(i as u32)).unwrap_err();
                self.adj[j].insert(k2, i as u32);
                self.n_edges += 1;
                true
            }
        }
    }

    pub fn remove(&mut self, i: usize, j: usize) -> bool {
        match self.adj[i].binary_search(&(j as u32)) {
            Ok(k) => {
                self.adj[i].remove(k);
                let k2 = self.adj[j].binary_search(&(i as u32)).unwrap();
                self.adj[j].remove(k2);
                self.n_edges -= 1;
                true
            }
            Err(_) => false,
        }
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter().filter(move |&&j| (j as usize) > i).map(move |&j| (i, j as usize))
        })
    }

    /// Number of triangles.
    pub fn triangle_count(&self) -> usize {
        let mut count = 0;
        for (i, j) in self.edges() {
            let (a, b) = (&self.adj[i], &self.adj[j]);
            let (mut x, mut y) = (0, 0);
            while x < a.len() && y < b.len() {
                match a[x].cmp(&b[y]) {
                    std::cmp::Ordering::Less => x += 1,
                    std::cmp::Ordering::Greater => y += 1,
                    std::cmp::Ordering::Equal => {
                        if a[x] as usize > j {
                            count += 1;
                        }
                        x += 1;
                        y += 1;
                    }
                }
            }
        }
        count
    }
}

/// Anything with sorted integer adjacency that a breadth-first search can walk.
pub trait Adjacency {
    fn node_count(&self) -> usize;
    fn for_each_neighbor(&self, i: usize, f: impl FnMut(usize));
}

impl Adjacency for WeightedGraph {
    fn node_count(&self) -> usize {
        self.n
    }
    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        self.adj[i].iter().for_each(|e| f(e.0 as usize));
    }
}

impl Adjacency for Dichotomization {
    fn node_count(&self) -> usize {
        self.n
    }
    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        self.adj[i].iter().for_each(|&j| f(j as usize));
    }
}

/// Reusable scratch space for bounded-depth breadth-first search.
///
/// The visited marks are generation stamps, so repeated queries do not
/// clear or reallocate anything.
#[derive(Clone, Debug, Default)]
pub struct Reach {
    stamp: Vec<u32>,
    generation: u32,
    frontier: Vec<u32>,
    next: Vec<u32>,
    found: Vec<u32>,
}

impl Reach {
    pub fn new(n: usize) -> Self {
        Reach { stamp: vec![0; n], ..Default::default() }
    }

    /// Nodes at distance `1..=d` from `i`, excluding `i` itself, in BFS order.
    pub fn reachable<G: Adjacency>(&mut self, g: &G, i: usize, d: usize) -> &[u32] {
        let n = g.node_count();
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let gen = self.generation;
        self.found.clear();
        self.frontier.clear();
        self.frontier.push(i as u32);
        self.stamp[i] = gen;
        for _ in 0..d {
            self.next.clear();
            for &u in &self.frontier {
                let (stamp, next) = (&mut self.stamp, &mut self.next);
                g.for_each_neighbor(u as usize, |v| {
                    if stamp[v] != gen {
                        stamp[v] = gen;
                        next.push(v as u32);
                    }
                });
            }
            if self.next.is_empty() {
                break;
            }
            self.found.extend_from_slice(&self.next);
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
        &self.found
    }

    /// Whether `j` was reached by the most recent query.
    pub fn was_reached(&self, j: usize, origin: usize) -> bool {
        j != origin && self.stamp[j] == self.generation
    }
}

/// Set of nodes reachable from `i` within `d` hops in the nonzero pattern.
pub fn reachable_set(g: &WeightedGraph, i: usize, d: usize) -> Result<Vec<usize>> {
    if i >= g.n_nodes() {
        return Err(Error::Argument(format!("node {i} out of range")));
    }
    if d == 0 {
        return Err(Error::Argument("hop bound must be at least 1".into()));
    }
    let mut reach = Reach::new(g.n_nodes());
    let mut out: Vec<usize> = reach.reachable(g, i, d).iter().map(|&v| v as usize).collect();
    out.sort_unstable();
    Ok(out)
}

/// s(a, b) = 1 - sum|a_ij - b_ij| / sum|a_ij + b_ij| over pairs i<j.
pub fn jaccard_similarity(a: &WeightedGraph, b: &WeightedGraph) -> Result<f64> {
    if a.n_nodes() != b.n_nodes() {
        return Err(Error::Argument("graphs differ in node count".into()));
    }
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (i, j, w) in a.edges() {
        let v = b.get(i, j);
        diff += (w - v).abs();
        sum += (w + v).abs();
    }
    for (i, j, v) in b.edges() {
        if !a.has_edge(i, j) {
            diff += v.abs();
            sum += v.abs();
        }
    }
    if sum == 0.0 {
        return Err(Error::EmptySimilarity);
    }
    Ok(1.0 - diff / sum)
}
