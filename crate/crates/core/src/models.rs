//! Generative models: likelihoods with incremental updates, and simulators.
//!
//! Every supported likelihood factorizes over nodes once the local fields
//! `m_i(s) = sum_j W_ij x_j(s)` are known, so a change of one entry `W_ij`
//! touches only the terms of `i` and `j`. [`FieldCache`] keeps the fields and
//! the per-node log-likelihood terms in sync with the graph.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::math::{ln_1p2cosh, ln_2cosh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    KineticIsing,
    EquilibriumIsing,
    ZeroIsing,
    Gaussian,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::KineticIsing => "kinetic-ising",
            ModelKind::EquilibriumIsing => "equilibrium-ising",
            ModelKind::ZeroIsing => "zero-ising",
            ModelKind::Gaussian => "gaussian",
        }
    }

    pub fn is_ising(self) -> bool {
        !matches!(self, ModelKind::Gaussian)
    }

    /// Whether `theta` must be strictly positive (Gaussian diagonal).
    pub fn positive_theta(self) -> bool {
        matches!(self, ModelKind::Gaussian)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kinetic-ising" => Ok(ModelKind::KineticIsing),
            "equilibrium-ising" => Ok(ModelKind::EquilibriumIsing),
            "zero-ising" => Ok(ModelKind::ZeroIsing),
            "gaussian" => Ok(ModelKind::Gaussian),
            other => Err(Error::Config(format!("unknown model tag `{other}`"))),
        }
    }
}

/// How the columns of a dataset relate to each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Independent samples.
    Iid,
    /// One time series `x_0, x_1, ..., x_M`.
    Markov,
    /// `M` independent transitions `(x_in(m), x_out(m))`.
    Pairs,
}

impl DatasetKind {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::Iid => "iid",
            DatasetKind::Markov => "markov",
            DatasetKind::Pairs => "pairs",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(DatasetKind::Iid),
            "markov" => Ok(DatasetKind::Markov),
            "pairs" => Ok(DatasetKind::Pairs),
            other => Err(Error::Data(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Observations of `n` nodes over `m` samples, stored node-major.
///
/// For transition data `input` holds the states the fields are computed from
/// and `output` the states being predicted; for i.i.d. data both coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    kind: DatasetKind,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Dataset {
    /// I.i.d. samples; `columns[s][i]` is node `i` in sample `s`.
    pub fn from_columns(n: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.len();
        let mut input = vec![0.0; n * m];
        for (s, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Data(format!("sample {s} has {} values, expected {n}", col.len())));
            }
            for i in 0..n {
                input[i * m + s] = col[i];
            }
        }
        Ok(Dataset { n, m, kind: DatasetKind::Iid, input, output: Vec::new() })
    }

    /// A time series `states[0..=M]`, with `states[0]` the initial state.
    pub fn from_series(n: usize, states: &[Vec<f64>]) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Data("a markov dataset needs x_0 and at least one transition".into()));
        }
        let m = states.len() - 1;
        let mut input = vec![0.0; n * m];
        let mut output = vec![0.0; n * m];
        for (t, st) in states.iter().enumerate() {
            if st.len() != n {
                return Err(Error::Data(format!("state {t} has {} values, expected {n}", st.len())));
            }
            for i in 0..n {
                if t < m {
                    input[i * m + t] = st[i];
                }
                if t > 0 {
                    output[i * m + t - 1] = st[i];
                }
            }
        }
        Ok(Dataset { n, m, kind: DatasetKind::Markov, input, output })
    }

    /// Independent transitions `(inputs[s], outputs[s])`.
    pub fn from_pairs(n: usize, inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::Data("input/output sample counts differ".into()));
        }
        let m = inputs.len();
        let mut input = vec![0.0; n * m];
        let mut output = vec![0.0; n * m];
        for s in 0..m {
            if inputs[s].len() != n || outputs[s].len() != n {
                return Err(Error::Data(format!("transition {s} has the wrong width")));
            }
            for i in 0..n {
                input[i * m + s] = inputs[s][i];
                output[i * m + s] = outputs[s][i];
            }
        }
        Ok(Dataset { n, m, kind: DatasetKind::Pairs, input, output })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_samples(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    /// States of node `i` that enter the fields.
    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.m..(i + 1) * self.m]
    }

    /// States of node `i` being modelled.
    pub fn output_row(&self, i: usize) -> &[f64] {
        if self.kind == DatasetKind::Iid {
            self.input_row(i)
        } else {
            &self.output[i * self.m..(i + 1) * self.m]
        }
    }

    /// Sample `s` as a column (i.i.d. data) or output state (transitions).
    pub fn column(&self, s: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.output_row(i)[s]).collect()
    }

    pub fn input_column(&self, s: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.input_row(i)[s]).collect()
    }

    pub fn validate_for(&self, kind: ModelKind) -> Result<()> {
        match (kind, self.kind) {
            (ModelKind::KineticIsing, DatasetKind::Iid) => {
                return Err(Error::Data("kinetic Ising needs transition data".into()))
            }
            (ModelKind::KineticIsing, _) => {}
            (_, DatasetKind::Iid) => {}
            (k, d) => {
                return Err(Error::Data(format!("model {k} needs i.i.d. data, got {}", d.tag())))
            }
        }
        let allowed: &[f64] = match kind {
            ModelKind::KineticIsing | ModelKind::EquilibriumIsing => &[-1.0, 1.0],
            ModelKind::ZeroIsing => &[-1.0, 0.0, 1.0],
            ModelKind::Gaussian => &[],
        };
        let all = self.input.iter().chain(self.output.iter());
        if allowed.is_empty() {
            if let Some(v) = all.clone().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite value {v}")));
            }
        } else if let Some(v) = all.clone().find(|v| !allowed.contains(v)) {
            return Err(Error::Data(format!("value {v} not allowed for model {kind}")));
        }
        Ok(())
    }
}

/// Log-likelihood contribution of one node given its fields (excluding theta).
fn node_term(kind: ModelKind, y: &[f64], fields: impl Iterator<Item = f64>, theta: f64) -> f64 {
    match kind {
        ModelKind::KineticIsing | ModelKind::EquilibriumIsing => y
            .iter()
            .zip(fields)
            .map(|(&y, m)| {
                let h = m + theta;
                y * h - ln_2cosh(h)
            })
            .sum(),
        ModelKind::ZeroIsing => y
            .iter()
            .zip(fields)
            .map(|(&y, m)| {
                let h = m + theta;
                y * h - ln_1p2cosh(h)
            })
            .sum(),
        ModelKind::Gaussian => {
            if theta <= 0.0 || !theta.is_finite() {
                return f64::NEG_INFINITY;
            }
            let t2 = theta * theta;
            let norm = 0.5 * (2.0 * PI).ln() + theta.ln();
            y.iter()
                .zip(fields)
                .map(|(&x, m)| {
                    let r = x + t2 * m;
                    -r * r / (2.0 * t2) - norm
                })
                .sum()
        }
    }
}

fn check_sizes(data: &Dataset, graph: &WeightedGraph) -> Result<()> {
    if data.n_nodes() != graph.n_nodes() {
        return Err(Error::Argument(format!(
            "dataset has {} nodes but graph has {}",
            data.n_nodes(),
            graph.n_nodes()
        )));
    }
    Ok(())
}

/// Full log-likelihood, computed from scratch.
pub fn log_likelihood(data: &Dataset, graph: &WeightedGraph, kind: ModelKind) -> Result<f64> {
    check_sizes(data, graph)?;
    if kind.positive_theta() {
        if let Some(i) = graph.theta.iter().position(|&t| t <= 0.0) {
            return Err(Error::Domain(format!("gaussian theta_{i} = {} must be positive", graph.theta[i])));
        }
    }
    let m = data.n_samples();
    let mut total = 0.0;
    let mut fields = vec![0.0; m];
    for i in 0..data.n_nodes() {
        fields.iter_mut().for_each(|f| *f = 0.0);
        for &(j, w) in graph.neighbors(i) {
            for (f, x) in fields.iter_mut().zip(data.input_row(j as usize)) {
                *f += w * x;
            }
        }
        total += node_term(kind, data.output_row(i), fields.iter().copied(), graph.theta[i]);
    }
    Ok(total)
}

/// Cached local fields and per-node log-likelihood terms.
#[derive(Clone, Debug)]
pub struct FieldCache {
    kind: ModelKind,
    m: usize,
    fields: Vec<f64>,
    node_ll: Vec<f64>,
    updates: usize,
}

/// Accepted updates between full resynchronizations of the cache.
pub const RESYNC_INTERVAL: usize = 10_000;

impl FieldCache {
    pub fn new(data: &Dataset, graph: &WeightedGraph, kind: ModelKind) -> Result<Self> {
        check_sizes(data, graph)?;
        let mut cache = FieldCache {
            kind,
            m: data.n_samples(),
            fields: vec![0.0; data.n_nodes() * data.n_samples()],
            node_ll: vec![0.0; data.n_nodes()],
            updates: 0,
        };
        cache.resync(data, graph);
        Ok(cache)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn fields(&self, i: usize) -> &[f64] {
        &self.fields[i * self.m..(i + 1) * self.m]
    }

    pub fn node_log_likelihood(&self, i: usize) -> f64 {
        self.node_ll[i]
    }

    /// Sum of the cached node terms.
    pub fn log_likelihood(&self) -> f64 {
        self.node_ll.iter().sum()
    }

    pub fn resync(&mut self, data: &Dataset, graph: &WeightedGraph) {
        let m = self.m;
        self.fields.iter_mut().for_each(|f| *f = 0.0);
        for i in 0..data.n_nodes() {
            let row = &mut self.fields[i * m..(i + 1) * m];
            for &(j, w) in graph.neighbors(i) {
                for (f, x) in row.iter_mut().zip(data.input_row(j as usize)) {
                    *f += w * x;
                }
            }
        }
        for i in 0..data.n_nodes() {
            self.node_ll[i] = self.term(data, i, graph.theta[i]);
        }
        self.updates = 0;
    }

    fn term(&self, data: &Dataset, i: usize, theta: f64) -> f64 {
        node_term(self.kind, data.output_row(i), self.fields(i).iter().copied(), theta)
    }

    fn shifted_term(&self, data: &Dataset, i: usize, theta: f64, shifts: &[(usize, f64)]) -> f64 {
        let base = self.fields(i);
        match shifts {
            [] => node_term(self.kind, data.output_row(i), base.iter().copied(), theta),
            [(j, dw)] => {
                let x = data.input_row(*j);
                node_term(
                    self.kind,
                    data.output_row(i),
                    base.iter().zip(x).map(|(m, x)| m + dw * x),
                    theta,
                )
            }
            _ => {
                let mut f = base.to_vec();
                for &(j, dw) in shifts {
                    for (v, x) in f.iter_mut().zip(data.input_row(j)) {
                        *v += dw * x;
                    }
                }
                node_term(self.kind, data.output_row(i), f.into_iter(), theta)
            }
        }
    }

    /// Change in log-likelihood if `W_ij` were set to `w_new`.
    pub fn delta_entry(&self, data: &Dataset, graph: &WeightedGraph, i: usize, j: usize, w_new: f64) -> f64 {
        let dw = w_new - graph.get(i, j);
        if dw == 0.0 {
            return 0.0;
        }
        let ti = self.shifted_term(data, i, graph.theta[i], &[(j, dw)]);
        let tj = self.shifted_term(data, j, graph.theta[j], &[(i, dw)]);
        ti + tj - self.node_ll[i] - self.node_ll[j]
    }

    /// Change in log-likelihood for several simultaneous entry changes
    /// `(i, j, w_new)`; pairs must be distinct.
    pub fn delta_entries(&self, data: &Dataset, graph: &WeightedGraph, changes: &[(usize, usize, f64)]) -> f64 {
        let mut shifts: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        let mut push = |a: usize, b: usize, dw: f64| match shifts.iter_mut().find(|s| s.0 == a) {
            Some(s) => s.1.push((b, dw)),
            None => shifts.push((a, vec![(b, dw)])),
        };
        for &(i, j, w) in changes {
            let dw = w - graph.get(i, j);
            if dw != 0.0 {
                push(i, j, dw);
                push(j, i, dw);
            }
        }
        shifts
            .iter()
            .map(|(a, s)| self.shifted_term(data, *a, graph.theta[*a], s) - self.node_ll[*a])
            .sum()
    }

    /// Change in log-likelihood if `theta_i` were set to `theta_new`.
    pub fn delta_node(&self, data: &Dataset, graph: &WeightedGraph, i: usize, theta_new: f64) -> f64 {
        if theta_new == graph.theta[i] {
            return 0.0;
        }
        self.term(data, i, theta_new) - self.node_ll[i]
    }

    /// Sets `W_ij = w_new` in the graph and updates the cache; returns the
    /// log-likelihood change.
    pub fn apply_entry(&mut self, data: &Dataset, graph: &mut WeightedGraph, i: usize, j: usize, w_new: f64) -> f64 {
        let old = graph.set_unchecked(i, j, w_new);
        let dw = w_new - old;
        if dw == 0.0 {
            return 0.0;
        }
        let m = self.m;
        for (a, b) in [(i, j), (j, i)] {
            let x = data.input_row(b);
            for (f, x) in self.fields[a * m..(a + 1) * m].iter_mut().zip(x) {
                *f += dw * x;
            }
        }
        let before = self.node_ll[i] + self.node_ll[j];
        self.node_ll[i] = self.term(data, i, graph.theta[i]);
        self.node_ll[j] = self.term(data, j, graph.theta[j]);
        let delta = self.node_ll[i] + self.node_ll[j] - before;
        self.bump(data, graph);
        delta
    }

    pub fn apply_node(&mut self, data: &Dataset, graph: &mut WeightedGraph, i: usize, theta_new: f64) -> f64 {
        graph.theta[i] = theta_new;
        let before = self.node_ll[i];
        self.node_ll[i] = self.term(data, i, theta_new);
        self.bump(data, graph);
        self.node_ll[i] - before
    }

    fn bump(&mut self, data: &Dataset, graph: &WeightedGraph) {
        self.updates += 1;
        if self.updates >= RESYNC_INTERVAL {
            self.resync(data, graph);
        }
    }

    /// Largest absolute deviation of the cached fields from a recomputation.
    pub fn max_field_drift(&self, data: &Dataset, graph: &WeightedGraph) -> f64 {
        let fresh = FieldCache::new(data, graph, self.kind).expect("sizes checked at construction");
        self.fields
            .iter()
            .zip(&fresh.fields)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-sample first derivative and negated second derivative of node
    /// `a`'s log-likelihood term with respect to its field.
    pub fn field_derivatives(&self, data: &Dataset, graph: &WeightedGraph, a: usize) -> (Vec<f64>, Vec<f64>) {
        let theta = graph.theta[a];
        let y = data.output_row(a);
        let f = self.fields(a);
        let mut d1 = Vec::with_capacity(self.m);
        let mut d2 = Vec::with_capacity(self.m);
        for s in 0..self.m {
            let h = f[s] + theta;
            let (u, v) = match self.kind {
                ModelKind::KineticIsing | ModelKind::EquilibriumIsing => {
                    let t = h.tanh();
                    (y[s] - t, 1.0 - t * t)
                }
                ModelKind::ZeroIsing => {
                    // mean and variance of the three-state conditional
                    let (sh, ch) = (h.sinh(), h.cosh());
                    let z = 1.0 + 2.0 * ch;
                    let (mean, second) = if z.is_finite() { (2.0 * sh / z, 2.0 * ch / z) } else { (h.signum(), 1.0) };
                    (y[s] - mean, second - mean * mean)
                }
                ModelKind::Gaussian => {
                    let t2 = theta * theta;
                    (-(y[s] + t2 * f[s]), t2)
                }
            };
            d1.push(u);
            d2.push(v);
        }
        (d1, d2)
    }

    /// Derivatives of the log-likelihood with respect to `W_ij` at its
    /// current value: (first, second).
    pub fn entry_derivatives(&self, data: &Dataset, graph: &WeightedGraph, i: usize, j: usize) -> (f64, f64) {
        let di = self.field_derivatives(data, graph, i);
        let dj = self.field_derivatives(data, graph, j);
        pair_derivatives(data, &di, &dj, i, j)
    }
}

/// [`FieldCache::entry_derivatives`] from precomputed field derivatives of
/// both endpoints.
pub fn pair_derivatives(data: &Dataset, di: &(Vec<f64>, Vec<f64>), dj: &(Vec<f64>, Vec<f64>), i: usize, j: usize) -> (f64, f64) {
    let mut g1 = 0.0;
    let mut g2 = 0.0;
    for ((d1, d2), b) in [(di, j), (dj, i)] {
        for ((u, v), x) in d1.iter().zip(d2).zip(data.input_row(b)) {
            g1 += u * x;
            g2 -= v * x * x;
        }
    }
    (g1, g2)
}

/// Precomputed input sums for moving several groups of entries at once,
/// each group by its own common shift.
#[derive(Clone, Debug)]
pub struct GroupShift {
    nodes: Vec<usize>,
    // node-major: sums[k][g] is the M-vector for node nodes[k] and group g
    sums: Vec<Vec<Vec<f64>>>,
}

impl GroupShift {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

impl FieldCache {
    /// Prepares [`Self::delta_group_shift`] for the given entry groups.
    pub fn group_shift(&self, data: &Dataset, groups: &[&[(usize, usize)]]) -> GroupShift {
        let mut nodes: Vec<usize> = groups.iter().flat_map(|g| g.iter().flat_map(|&(i, j)| [i, j])).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let mut sums = vec![vec![vec![0.0; self.m]; groups.len()]; nodes.len()];
        for (g, entries) in groups.iter().enumerate() {
            for &(i, j) in entries.iter() {
                for (a, b) in [(i, j), (j, i)] {
                    let k = nodes.binary_search(&a).expect("node collected above");
                    for (s, x) in sums[k][g].iter_mut().zip(data.input_row(b)) {
                        *s += x;
                    }
                }
            }
        }
        GroupShift { nodes, sums }
    }

    /// Log-likelihood change when every entry of group `g` is shifted by `shifts[g]`.
    pub fn delta_group_shift(&self, data: &Dataset, graph: &WeightedGraph, gs: &GroupShift, shifts: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.m];
        let mut total = 0.0;
        for (k, &i) in gs.nodes.iter().enumerate() {
            buf.copy_from_slice(self.fields(i));
            for (g, &dx) in shifts.iter().enumerate() {
                if dx != 0.0 {
                    for (f, s) in buf.iter_mut().zip(&gs.sums[k][g]) {
                        *f += dx * s;
                    }
                }
            }
            total += node_term(self.kind, data.output_row(i), buf.iter().copied(), graph.theta[i]) - self.node_ll[i];
        }
        total
    }
}

/// Log-likelihood change of setting `W_ij = w_new`, via a fresh cache.
pub fn delta_log_likelihood_entry(
    data: &Dataset,
    graph: &WeightedGraph,
    cache: &FieldCache,
    i: usize,
    j: usize,
    w_new: f64,
) -> f64 {
    cache.delta_entry(data, graph, i, j, w_new)
}

pub fn delta_log_likelihood_node(data: &Dataset, graph: &WeightedGraph, cache: &FieldCache, i: usize, theta_new: f64) -> f64 {
    cache.delta_node(data, graph, i, theta_new)
}

fn spin_from_prob<R: Rng + ?Sized>(rng: &mut R, h: f64) -> f64 {
    // P(+1) = e^h / (2 cosh h)
    let p = 1.0 / (1.0 + (-2.0 * h).exp());
    if rng.random::<f64>() < p {
        1.0
    } else {
        -1.0
    }
}

fn zero_state_from_field<R: Rng + ?Sized>(rng: &mut R, h: f64) -> f64 {
    let lz = ln_1p2cosh(h);
    let p_plus = (h - lz).exp();
    let p_minus = (-h - lz).exp();
    let u: f64 = rng.random();
    if u < p_plus {
        1.0
    } else if u < p_plus + p_minus {
        -1.0
    } else {
        0.0
    }
}

fn local_field(graph: &WeightedGraph, i: usize, x: &[f64]) -> f64 {
    graph.neighbors(i).iter().map(|&(j, w)| w * x[j as usize]).sum::<f64>() + graph.theta[i]
}

fn kinetic_step<R: Rng + ?Sized>(graph: &WeightedGraph, x: &[f64], rng: &mut R) -> Vec<f64> {
    (0..graph.n_nodes()).map(|i| spin_from_prob(rng, local_field(graph, i, x))).collect()
}

/// `m` transitions of one kinetic Ising chain started at `x0`.
pub fn simulate_kinetic_ising<R: Rng + ?Sized>(graph: &WeightedGraph, m: usize, x0: &[f64], rng: &mut R) -> Result<Dataset> {
    if x0.len() != graph.n_nodes() || x0.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::Argument("x0 must hold one ±1 value per node".into()));
    }
    let mut states = Vec::with_capacity(m + 1);
    states.push(x0.to_vec());
    for t in 0..m {
        let next = kinetic_step(graph, &states[t], rng);
        states.push(next);
    }
    Dataset::from_series(graph.n_nodes(), &states)
}

/// `m` independent transitions, each from a fresh uniformly random state.
pub fn simulate_kinetic_ising_parallel<R: Rng + ?Sized>(graph: &WeightedGraph, m: usize, rng: &mut R) -> Result<Dataset> {
    let n = graph.n_nodes();
    let mut inputs = Vec::with_capacity(m);
    let mut outputs = Vec::with_capacity(m);
    for _ in 0..m {
        let x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        outputs.push(kinetic_step(graph, &x, rng));
        inputs.push(x);
    }
    Dataset::from_pairs(n, &inputs, &outputs)
}

/// Equilibrium samples by Gibbs sampling, `thin` full sweeps apart after
/// `burn_in` sweeps. `zero_state` selects the {-1,0,1} variant.
pub fn simulate_equilibrium_ising<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    m: usize,
    burn_in: usize,
    thin: usize,
    zero_state: bool,
    rng: &mut R,
) -> Result<Dataset> {
    let n = graph.n_nodes();
    let mut x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let sweep = |x: &mut Vec<f64>, rng: &mut R| {
        for i in 0..n {
            let h = local_field(graph, i, x);
            x[i] = if zero_state { zero_state_from_field(rng, h) } else { spin_from_prob(rng, h) };
        }
    };
    for _ in 0..burn_in {
        sweep(&mut x, rng);
    }
    let mut cols = Vec::with_capacity(m);
    for _ in 0..m {
        for _ in 0..thin.max(1) {
            sweep(&mut x, rng);
        }
        cols.push(x.clone());
    }
    Dataset::from_columns(n, &cols)
}

/// Dense precision matrix with off-diagonals from `W` and `W_ii = 1/theta_i^2`.
pub fn precision_matrix(graph: &WeightedGraph) -> Result<DMatrix<f64>> {
    let n = graph.n_nodes();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let t = graph.theta[i];
        if t <= 0.0 {
            return Err(Error::Domain(format!("theta_{i} = {t} must be positive")));
        }
        p[(i, i)] = 1.0 / (t * t);
    }
    for (i, j, w) in graph.edges() {
        p[(i, j)] = w;
        p[(j, i)] = w;
    }
    Ok(p)
}

/// `m` i.i.d. zero-mean Gaussian samples with the graph's precision matrix.
pub fn simulate_gaussian<R: Rng + ?Sized>(graph: &WeightedGraph, m: usize, rng: &mut R) -> Result<Dataset> {
    let n = graph.n_nodes();
    let p = precision_matrix(graph)?;
    let chol = p
        .cholesky()
        .ok_or_else(|| Error::Domain("precision matrix is not positive definite".into()))?;
    let lt = chol.l().transpose();
    let mut cols = Vec::with_capacity(m);
    for _ in 0..m {
        let z = nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // P = L L^T, so x = L^{-T} z has covariance P^{-1}
        let x = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
        cols.push(x.iter().copied().collect());
    }
    Dataset::from_columns(n, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn random_graph(n: usize, rng: &mut ChaCha8Rng, density: f64) -> WeightedGraph {
        let mut g = WeightedGraph::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < density {
                    g.set_entry(i, j, rng.random_range(-1.0..1.0)).unwrap();
                }
            }
            g.theta[i] = rng.random_range(-0.5..0.5);
        }
        g
    }

    fn random_spins(n: usize, m: usize, zero: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if zero && u < 1.0 / 3.0 {
                            0.0
                        } else if u < 2.0 / 3.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn random_dataset(kind: ModelKind, n: usize, m: usize, rng: &mut ChaCha8Rng) -> Dataset {
        match kind {
            ModelKind::KineticIsing => Dataset::from_series(n, &random_spins(n, m + 1, false, rng)).unwrap(),
            ModelKind::EquilibriumIsing => Dataset::from_columns(n, &random_spins(n, m, false, rng)).unwrap(),
            ModelKind::ZeroIsing => Dataset::from_columns(n, &random_spins(n, m, true, rng)).unwrap(),
            ModelKind::Gaussian => {
                let cols: Vec<Vec<f64>> =
                    (0..m).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
                Dataset::from_columns(n, &cols).unwrap()
            }
        }
    }

    const KINDS: [ModelKind; 4] =
        [ModelKind::KineticIsing, ModelKind::EquilibriumIsing, ModelKind::ZeroIsing, ModelKind::Gaussian];

    #[test]
    fn zero_coupling_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, m) = (5, 7);
        let g = WeightedGraph::new(n);
        let d = random_dataset(ModelKind::KineticIsing, n, m, &mut rng);
        let ll = log_likelihood(&d, &g, ModelKind::KineticIsing).unwrap();
        assert!((ll + (n * m) as f64 * LN_2).abs() < 1e-12);

        let d = random_dataset(ModelKind::EquilibriumIsing, n, 1, &mut rng);
        let ll = log_likelihood(&d, &g, ModelKind::EquilibriumIsing).unwrap();
        assert!((ll + n as f64 * LN_2).abs() < 1e-12);

        let d = random_dataset(ModelKind::ZeroIsing, n, 1, &mut rng);
        let ll = log_likelihood(&d, &g, ModelKind::ZeroIsing).unwrap();
        assert!((ll + n as f64 * 3f64.ln()).abs() < 1e-12);

        let d = Dataset::from_columns(n, &[vec![0.0; n]]).unwrap();
        let g1 = WeightedGraph::with_theta(n, 1.0);
        let ll = log_likelihood(&d, &g1, ModelKind::Gaussian).unwrap();
        assert!((ll + n as f64 * 0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        assert!(matches!(log_likelihood(&d, &g, ModelKind::Gaussian), Err(Error::Domain(_))));
    }

    #[test]
    fn kinetic_two_node_delta_by_hand() {
        let d = Dataset::from_series(2, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let g = WeightedGraph::new(2);
        let cache = FieldCache::new(&d, &g, ModelKind::KineticIsing).unwrap();
        for w in [0.3, -1.2, 2.0] {
            let expected = 2.0 * w - 2.0 * (2.0 * f64::cosh(w)).ln() + 2.0 * LN_2;
            assert!((cache.delta_entry(&d, &g, 0, 1, w) - expected).abs() < 1e-12);
        }
        assert_eq!(cache.delta_entry(&d, &g, 0, 1, 0.0), 0.0);
    }

    #[test]
    fn equilibrium_single_node_theta_delta() {
        let d = Dataset::from_columns(1, &[vec![1.0]]).unwrap();
        let g = WeightedGraph::new(1);
        let cache = FieldCache::new(&d, &g, ModelKind::EquilibriumIsing).unwrap();
        for t in [0.4, -2.0] {
            let expected = t - (2.0 * f64::cosh(t)).ln() + LN_2;
            assert!((cache.delta_node(&d, &g, 0, t) - expected).abs() < 1e-12);
        }
        assert_eq!(cache.delta_node(&d, &g, 0, 0.0), 0.0);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let d = Dataset::from_columns(2, &[vec![1.0, -1.0]]).unwrap();
        let g = WeightedGraph::new(3);
        assert!(matches!(log_likelihood(&d, &g, ModelKind::EquilibriumIsing), Err(Error::Argument(_))));
        assert!(d.validate_for(ModelKind::KineticIsing).is_err());
        let bad = Dataset::from_columns(2, &[vec![0.0, 1.0]]).unwrap();
        assert!(bad.validate_for(ModelKind::EquilibriumIsing).is_err());
        assert!(bad.validate_for(ModelKind::ZeroIsing).is_ok());
    }

    #[test]
    fn conditional_normalization() {
        for h in [-5.0, -0.3, 0.0, 1.7, 30.0] {
            let p: f64 = [-1.0, 1.0].iter().map(|x: &f64| (x * h - ln_2cosh(h)).exp()).sum();
            assert!((p - 1.0).abs() < 1e-12);
            let p: f64 = [-1.0, 0.0, 1.0].iter().map(|x: &f64| (x * h - ln_1p2cosh(h)).exp()).sum();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    /// Pseudolikelihood as a product of exact conditionals, each found by
    /// enumerating the states of x_i in the full Boltzmann weight.
    fn brute_pseudolikelihood(g: &WeightedGraph, x: &[f64], states: &[f64]) -> f64 {
        let n = x.len();
        let energy = |y: &[f64]| {
            let mut e: f64 = (0..n).map(|i| g.theta[i] * y[i]).sum();
            for (i, j, w) in g.edges() {
                e += w * y[i] * y[j];
            }
            e
        };
        let mut total = 0.0;
        for i in 0..n {
            let mut y = x.to_vec();
            let weights: Vec<f64> = states
                .iter()
                .map(|&s| {
                    y[i] = s;
                    energy(&y)
                })
                .collect();
            total += energy(x) - crate::math::log_sum_exp(&weights);
        }
        total
    }

    proptest! {
        #[test]
        fn pseudolikelihood_matches_enumerated_conditionals(seed in 0u64..1000, n in 1usize..=10, zero in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(n, &mut rng, 0.5);
            let kind = if zero { ModelKind::ZeroIsing } else { ModelKind::EquilibriumIsing };
            let d = random_dataset(kind, n, 1, &mut rng);
            let states: &[f64] = if zero { &[-1.0, 0.0, 1.0] } else { &[-1.0, 1.0] };
            let ll = log_likelihood(&d, &g, kind).unwrap();
            let brute = brute_pseudolikelihood(&g, &d.column(0), states);
            prop_assert!((ll - brute).abs() < 1e-9);
        }

        #[test]
        fn deltas_match_recompute(seed in 0u64..10_000, k in 0usize..4) {
            let kind = KINDS[k];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..8);
            let m = rng.random_range(1..12);
            let mut g = random_graph(n, &mut rng, 0.4);
            if kind == ModelKind::Gaussian {
                g.theta.iter_mut().for_each(|t| *t = rng.random_range(0.3..1.5));
            }
            let d = random_dataset(kind, n, m, &mut rng);
            let cache = FieldCache::new(&d, &g, kind).unwrap();
            let base = log_likelihood(&d, &g, kind).unwrap();
            prop_assert!((cache.log_likelihood() - base).abs() < 1e-9);

            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            let w = if rng.random::<bool>() { 0.0 } else { rng.random_range(-1.5..1.5) };
            let mut g2 = g.clone();
            g2.set_entry(i, j, w).unwrap();
            let full = log_likelihood(&d, &g2, kind).unwrap() - base;
            prop_assert!((cache.delta_entry(&d, &g, i, j, w) - full).abs() < 1e-9);

            let theta = if kind == ModelKind::Gaussian { rng.random_range(0.2..2.0) } else { rng.random_range(-1.0..1.0) };
            let mut g3 = g.clone();
            g3.theta[i] = theta;
            let full = log_likelihood(&d, &g3, kind).unwrap() - base;
            prop_assert!((cache.delta_node(&d, &g, i, theta) - full).abs() < 1e-9);

            // several simultaneous changes
            let mut changes = Vec::new();
            let mut g4 = g.clone();
            for _ in 0..3 {
                let a = rng.random_range(0..n);
                let b = (a + rng.random_range(1..n)) % n;
                if changes.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a)) {
                    continue;
                }
                let w = rng.random_range(-1.0..1.0);
                changes.push((a, b, w));
                g4.set_entry(a, b, w).unwrap();
            }
            let full = log_likelihood(&d, &g4, kind).unwrap() - base;
            prop_assert!((cache.delta_entries(&d, &g, &changes) - full).abs() < 1e-9);
        }

        #[test]
        fn derivatives_match_finite_differences(seed in 0u64..1000, k in 0usize..4) {
            let kind = KINDS[k];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let mut g = random_graph(n, &mut rng, 0.5);
            if kind == ModelKind::Gaussian {
                g.theta.iter_mut().for_each(|t| *t = rng.random_range(0.5..1.5));
            }
            let d = random_dataset(kind, n, 6, &mut rng);
            let cache = FieldCache::new(&d, &g, kind).unwrap();
            let w0 = g.get(0, 1);
            let h = 1e-4;
            let fp = cache.delta_entry(&d, &g, 0, 1, w0 + h);
            let fm = cache.delta_entry(&d, &g, 0, 1, w0 - h);
            let (g1, g2) = cache.entry_derivatives(&d, &g, 0, 1);
            prop_assert!((g1 - (fp - fm) / (2.0 * h)).abs() < 1e-5 * (1.0 + g1.abs()));
            prop_assert!((g2 - (fp + fm) / (h * h)).abs() < 1e-3 * (1.0 + g2.abs()));
        }
    }

    #[test]
    fn group_shift_matches_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in KINDS {
            let n = 8;
            let mut g = random_graph(n, &mut rng, 0.0);
            if kind == ModelKind::Gaussian {
                g.theta.iter_mut().for_each(|t| *t = 1.0);
            }
            let a = [(0usize, 1usize), (2, 3), (1, 4)];
            let b = [(5usize, 6usize), (0, 7)];
            for &(i, j) in &a {
                g.set_entry(i, j, 0.3).unwrap();
            }
            for &(i, j) in &b {
                g.set_entry(i, j, -0.2).unwrap();
            }
            let d = random_dataset(kind, n, 10, &mut rng);
            let cache = FieldCache::new(&d, &g, kind).unwrap();
            let gs = cache.group_shift(&d, &[&a, &b]);
            let base = log_likelihood(&d, &g, kind).unwrap();
            let mut g2 = g.clone();
            for &(i, j) in &a {
                g2.set_entry(i, j, 0.3 + 0.15).unwrap();
            }
            for &(i, j) in &b {
                g2.set_entry(i, j, -0.2 - 0.4).unwrap();
            }
            let full = log_likelihood(&d, &g2, kind).unwrap() - base;
            assert!((cache.delta_group_shift(&d, &g, &gs, &[0.15, -0.4]) - full).abs() < 1e-9);
        }
    }

    #[test]
    fn cache_tracks_random_applies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in KINDS {
            let n = 12;
            let mut g = WeightedGraph::with_theta(n, 1.0);
            let d = random_dataset(kind, n, 20, &mut rng);
            let mut cache = FieldCache::new(&d, &g, kind).unwrap();
            let mut tracked = cache.log_likelihood();
            for _ in 0..1000 {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                let w = if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(-0.2..0.2) };
                tracked += cache.apply_entry(&d, &mut g, i, j, w);
                assert_eq!(cache.delta_entry(&d, &g, i, j, w), 0.0);
                if w == 0.0 {
                    assert!(!g.neighbors(i).iter().any(|e| e.0 as usize == j));
                }
            }
            assert!(cache.max_field_drift(&d, &g) < 1e-9);
            assert!((tracked - log_likelihood(&d, &g, kind).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_pseudolikelihood_at_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let mut g = WeightedGraph::new(n);
        g.theta = vec![0.5, 1.0, 1.5, 2.0];
        let d = random_dataset(ModelKind::Gaussian, n, 9, &mut rng);
        let ll = log_likelihood(&d, &g, ModelKind::Gaussian).unwrap();
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        let mut expected = 0.0;
        for i in 0..n {
            let sd = g.theta[i];
            for &x in d.output_row(i) {
                use statrs::distribution::Continuous;
                expected += normal.ln_pdf(x / sd) - sd.ln();
            }
        }
        assert!((ll - expected).abs() < 1e-10);
    }

    #[test]
    fn kinetic_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = WeightedGraph::with_theta(3, 50.0);
        let d = simulate_kinetic_ising(&g, 20, &[-1.0, 1.0, -1.0], &mut rng).unwrap();
        assert!((0..3).all(|i| d.output_row(i).iter().all(|&x| x == 1.0)));

        let g = WeightedGraph::new(1);
        let m = 10_000;
        let d = simulate_kinetic_ising(&g, m, &[1.0], &mut rng).unwrap();
        let mean: f64 = d.output_row(0).iter().sum::<f64>() / m as f64;
        assert!(mean.abs() < 3.0 / (m as f64).sqrt());

        let a = simulate_kinetic_ising_parallel(&g, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = simulate_kinetic_ising_parallel(&g, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kind(), DatasetKind::Pairs);
    }

    #[test]
    fn gaussian_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = WeightedGraph::with_theta(1, 0.5);
        let m = 100_000;
        let d = simulate_gaussian(&g, m, &mut rng).unwrap();
        let var: f64 = d.output_row(0).iter().map(|x| x * x).sum::<f64>() / m as f64;
        assert!((var - 0.25).abs() < 0.005, "var={var}");

        let g = WeightedGraph::with_theta(3, 1.0);
        let d = simulate_gaussian(&g, 20_000, &mut rng).unwrap();
        for i in 0..3 {
            let var: f64 = d.output_row(i).iter().map(|x| x * x).sum::<f64>() / 20_000.0;
            assert!((var - 1.0).abs() < 0.05);
        }

        let mut bad = WeightedGraph::with_theta(2, 1.0);
        bad.set_entry(0, 1, 2.0).unwrap();
        assert!(matches!(simulate_gaussian(&bad, 10, &mut rng), Err(Error::Domain(_))));
    }
}
