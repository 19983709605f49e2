use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bli;
use crate::error::{Error, Result};
use crate::graph::{Reach, WeightedGraph};
use crate::math::ln_binomial;
use crate::models::{Dataset, ModelKind};
use crate::prior::SbmState;

use super::config::{SamplerConfig, Schedule};
use super::greedy;
use super::proposal::ValueProposal;
use super::state::ChainState;
use super::typical::{EntrySelector, TypicalEdgeSet};

/// Grid values further out than this are treated as impossible.
const GRID_LIMIT: f64 = 1e15;
/// Above this many existing categories, old-category proposals weight them
/// by a BLI interpolant instead of evaluating each one.
const EXACT_OLD_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveCounts {
    fn record(&mut self, accepted: bool) -> bool {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
        accepted
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn add(&mut self, o: &MoveCounts) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
    }
}

/// Acceptance counts per move class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub entry: MoveCounts,
    pub node: MoveCounts,
    pub collective: MoveCounts,
    pub merge_split: MoveCounts,
    pub partition: MoveCounts,
    pub replacement: MoveCounts,
    pub swap: MoveCounts,
}

impl MoveStats {
    pub fn merge(&mut self, o: &MoveStats) {
        self.entry.add(&o.entry);
        self.node.add(&o.node);
        self.collective.add(&o.collective);
        self.merge_split.add(&o.merge_split);
        self.partition.add(&o.partition);
        self.replacement.add(&o.replacement);
        self.swap.add(&o.swap);
    }
}

/// Result of one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub sweep: usize,
    pub moves: MoveStats,
    pub log_posterior: f64,
    pub n_edges: usize,
    pub typical_size: usize,
}

/// Which value proposal an entry or category move uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CategoryMove {
    /// Any grid value (or zero).
    New,
    /// One of the existing categories (or zero).
    Old,
    /// One whole category to a new value.
    Collective,
    MergeSplit,
}

/// One Markov chain over weighted graphs.
pub struct Chain<'a> {
    state: ChainState<'a>,
    typical: TypicalEdgeSet,
    selector: EntrySelector,
    reach: Reach,
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
    sweeps: usize,
    totals: MoveStats,
    current: MoveStats,
}

/// Per-chain generator: the master seed with its own stream.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

fn ln_split_count(m: u64) -> f64 {
    // ln(2^(m-1) - 1), the number of unordered two-way splits of m items
    let e = (m - 1) as f64;
    e * std::f64::consts::LN_2 + (-(-e * std::f64::consts::LN_2).exp()).ln_1p()
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_a: f64) -> bool {
    if log_a.is_nan() {
        return false;
    }
    log_a >= 0.0 || rng.random::<f64>().ln() < log_a
}

fn to_grid(x: f64, delta: f64) -> Option<i64> {
    let g = (x / delta).round();
    (g.is_finite() && g.abs() < GRID_LIMIT).then_some(g as i64)
}

/// Half-width of the initial bracket: the largest magnitude among `others`.
fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let s = values.fold(0.0, |a: f64, v| a.max(v.abs()));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

impl<'a> Chain<'a> {
    /// Chain started at `init` with a given typical set.
    pub fn new(
        data: &'a Dataset,
        kind: ModelKind,
        init: &WeightedGraph,
        typical: TypicalEdgeSet,
        cfg: SamplerConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let state = ChainState::new(data, kind, init, &cfg, None)?;
        let n = data.n_nodes();
        let p = &cfg.proposal;
        let selector = EntrySelector::new(n, p.w_t, p.w_u, p.w_n, p.d);
        let mut typical = match typical.node_count() {
            m if m == n => typical,
            _ if typical.is_empty() => TypicalEdgeSet::new(n),
            m => return Err(Error::Argument(format!("typical set is for {m} nodes, data has {n}"))),
        };
        typical.extend(state.graph().edges().map(|e| (e.0, e.1)));
        if cfg.proposal.tau == 0 {
            typical.freeze();
        }
        Ok(Chain {
            state,
            typical,
            selector,
            reach: Reach::new(n),
            cfg,
            rng,
            sweeps: 0,
            totals: MoveStats::default(),
            current: MoveStats::default(),
        })
    }

    /// Chain started at the greedy MAP estimate, whose candidates seed the typical set.
    pub fn from_map(data: &'a Dataset, kind: ModelKind, cfg: SamplerConfig, rng: ChaCha8Rng) -> Result<Self> {
        let map = greedy::greedy_map(data, kind, &cfg)?;
        Self::new(data, kind, &map.graph, map.typical, cfg, rng)
    }

    pub fn state(&self) -> &ChainState<'a> {
        &self.state
    }

    pub fn graph(&self) -> &WeightedGraph {
        self.state.graph()
    }

    pub fn typical(&self) -> &TypicalEdgeSet {
        &self.typical
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn stats(&self) -> &MoveStats {
        &self.totals
    }

    pub fn log_posterior(&self) -> f64 {
        self.state.log_posterior()
    }

    /// Sets the block partition (labels need not be contiguous).
    pub fn set_partition(&mut self, b: &[usize]) -> Result<()> {
        let sbm = SbmState::new(b, self.state.graph())?;
        let d = sbm.log_prior() - self.state.sbm().log_prior();
        self.state.set_partition(sbm, d);
        Ok(())
    }

    /// Drift of the tracked log posterior against a recomputation, after
    /// checking all bookkeeping.
    pub fn check(&self) -> Result<f64> {
        self.state.check()
    }

    /// Recomputes the tracked log posterior from scratch.
    pub fn resync(&mut self) -> Result<()> {
        self.state.resync()
    }

    fn uniform_node(&mut self) -> usize {
        self.rng.random_range(0..self.state.graph().n_nodes())
    }

    // ---- entry moves ----

    /// Log ratio of reverse to forward pair-selection densities when entry
    /// `(i, j)` changes to `x`.
    fn pair_log_ratio(&mut self, i: usize, j: usize, x: f64) -> f64 {
        let w = self.state.graph.get(i, j);
        if (w != 0.0) == (x != 0.0) || !self.selector.uses_graph() {
            return 0.0;
        }
        let fwd = self.selector.density(&self.state.graph, &self.typical, i, j);
        self.state.graph.set_unchecked(i, j, x);
        let rev = self.selector.density(&self.state.graph, &self.typical, i, j);
        self.state.graph.set_unchecked(i, j, w);
        rev.ln() - fwd.ln()
    }

    fn entry_proposal(&mut self, i: usize, j: usize, mode: CategoryMove) -> Option<ValueProposal> {
        let st = &self.state;
        let cur = st.entry_slot(i, j);
        let others: Vec<i64> = st.weights.iter().filter(|&(g, c)| c > u64::from(Some(g) == cur)).map(|(g, _)| g).collect();
        let f0 = st.entry_delta(i, j, None);
        let restricted = st.allowed.clone();
        match (mode, restricted) {
            (CategoryMove::Old, _) | (_, Some(_)) => {
                let cands = match (mode, &st.allowed) {
                    (CategoryMove::Old, _) => others,
                    (_, Some(a)) => a.clone(),
                    _ => unreachable!(),
                };
                if cands.len() > EXACT_OLD_LIMIT {
                    if let Some(log_f) = self.interpolated_weights(i, j, &cands) {
                        return ValueProposal::finite(cands, log_f, Some(f0));
                    }
                }
                let st = &self.state;
                let log_f = cands.iter().map(|&g| st.entry_delta(i, j, Some(g))).collect();
                ValueProposal::finite(cands, log_f, Some(f0))
            }
            _ => {
                let delta = st.delta();
                let s = spread(others.iter().map(|&g| st.weights.value(g)));
                let mut f = |x: f64| match to_grid(x, delta) {
                    Some(0) | None => f64::NEG_INFINITY,
                    g => st.entry_delta(i, j, g),
                };
                let interp = bli::build(&mut f, -s, s, &st.bli, &mut self.rng).ok()?;
                ValueProposal::grid(interp, delta, true, Some(f0))
            }
        }
    }

    /// Log weights of many candidate categories from one BLI interpolant of
    /// the likelihood change plus a Laplace tail, extrapolated flat beyond
    /// the visited range. `None` if the bracket search fails.
    fn interpolated_weights(&mut self, i: usize, j: usize, cands: &[i64]) -> Option<Vec<f64>> {
        let st = &self.state;
        let (delta, lambda) = (st.delta(), st.weights.lambda());
        let toggle = if st.entry_slot(i, j).is_none() { st.sbm.delta_toggle(i, j, true) } else { 0.0 };
        let mut f = |x: f64| toggle - lambda * x.abs() + st.cache.delta_entry(st.data, &st.graph, i, j, x);
        let (lo, hi) = cands.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| {
            let z = g as f64 * delta;
            (a.min(z), b.max(z))
        });
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let interp = bli::build(&mut f, lo, hi, &st.bli, &mut self.rng).ok()?;
        let scale = interp.log_scale();
        Some(cands.iter().map(|&g| interp.relative_density_extrapolated(g as f64 * delta).ln() + scale).collect())
    }

    /// One proposal for entry `(i, j)` with the given value proposal; returns
    /// whether it was accepted. Proposals of the current value count as accepted.
    pub fn entry_step_at(&mut self, i: usize, j: usize, mode: CategoryMove) -> bool {
        let Some(prop) = self.entry_proposal(i, j, mode) else {
            return false;
        };
        let cur = self.state.entry_slot(i, j);
        let new = prop.sample(&mut self.rng);
        if new == cur {
            return true;
        }
        let dpost = self.state.entry_delta(i, j, new);
        if dpost == f64::NEG_INFINITY {
            return false;
        }
        let x = new.map_or(0.0, |g| self.state.weights.value(g));
        let log_a = dpost + prop.log_prob(cur) - prop.log_prob(new) + self.pair_log_ratio(i, j, x);
        if accept(&mut self.rng, log_a) {
            self.state.apply_entries(&[(i, j, new)], dpost).is_ok()
        } else {
            false
        }
    }

    /// Entry proposal: pair from the mixture, then new- or old-category value.
    pub fn entry_step(&mut self) -> bool {
        let (i, j) = self.selector.sample(&self.state.graph, &self.typical, &mut self.rng);
        let mode = if self.rng.random::<bool>() { CategoryMove::New } else { CategoryMove::Old };
        let a = self.entry_step_at(i, j, mode);
        self.current.entry.record(a)
    }

    // ---- node parameters ----

    pub fn node_step(&mut self) -> bool {
        if self.state.nodes.is_none() {
            return false;
        }
        let i = self.uniform_node();
        let old_mode = self.rng.random::<bool>();
        let a = self.node_step_at(i, old_mode);
        self.current.node.record(a)
    }

    fn node_step_at(&mut self, i: usize, old_mode: bool) -> bool {
        let st = &self.state;
        let nodes = st.nodes.as_ref().expect("checked by caller");
        let cur = st.theta_slot(i);
        let others: Vec<i64> = nodes.iter().filter(|&(g, c)| c > u64::from(g == cur)).map(|(g, _)| g).collect();
        let prop = if old_mode {
            let log_f = others.iter().map(|&g| st.node_delta(i, g)).collect();
            ValueProposal::finite(others, log_f, None)
        } else {
            let delta = st.delta();
            let (lo, hi) = match (others.first(), others.last()) {
                (Some(&a), Some(&b)) => {
                    let (a, b) = (nodes.value(a), nodes.value(b));
                    let s = (b - a).max(0.5 * a.abs().max(b.abs())).max(1e-3);
                    (a - s, b + s)
                }
                _ if st.kind.positive_theta() => (0.0, 2.0),
                _ => (-1.0, 1.0),
            };
            let mut f = |x: f64| to_grid(x, delta).map_or(f64::NEG_INFINITY, |g| st.node_delta(i, g));
            bli::build(&mut f, lo, hi, &st.bli, &mut self.rng)
                .ok()
                .and_then(|interp| ValueProposal::grid(interp, delta, false, None))
        };
        let Some(prop) = prop else {
            return false;
        };
        let Some(new) = prop.sample(&mut self.rng) else {
            return false;
        };
        if new == cur {
            return true;
        }
        let dpost = self.state.node_delta(i, new);
        let log_a = dpost + prop.log_prob(Some(cur)) - prop.log_prob(Some(new));
        accept(&mut self.rng, log_a) && self.state.apply_node(i, new, dpost).is_ok()
    }

    // ---- category moves ----

    /// One category move of the given type. `New` and `Old` act on an entry
    /// chosen by the pair mixture.
    pub fn category_step(&mut self, kind: CategoryMove) -> bool {
        match kind {
            CategoryMove::New | CategoryMove::Old => {
                let (i, j) = self.selector.sample(&self.state.graph, &self.typical, &mut self.rng);
                let a = self.entry_step_at(i, j, kind);
                self.current.entry.record(a)
            }
            CategoryMove::Collective => {
                let a = self.collective_step();
                self.current.collective.record(a)
            }
            CategoryMove::MergeSplit => {
                let a = self.merge_split_step();
                self.current.merge_split.record(a)
            }
        }
    }

    /// Value proposal for moving whole groups to one common value, as a
    /// function of everything but the groups' own categories.
    fn common_value_proposal(&mut self, olds: &[(i64, u64)], gs: &crate::models::GroupShift) -> Option<ValueProposal> {
        let st = &self.state;
        let others: Vec<i64> = st.weights.grid_values().filter(|g| olds.iter().all(|o| o.0 != *g)).collect();
        let f = |g: i64| -> f64 {
            if others.binary_search(&g).is_ok() {
                return f64::NEG_INFINITY;
            }
            let news = vec![g; olds.len()];
            st.groups_delta(gs, olds, &news)
        };
        if let Some(a) = &st.allowed {
            let cands: Vec<i64> = a.iter().copied().filter(|g| others.binary_search(g).is_err()).collect();
            let log_f = cands.iter().map(|&g| f(g)).collect();
            return ValueProposal::finite(cands, log_f, None);
        }
        let delta = st.delta();
        let s = spread(others.iter().map(|&g| st.weights.value(g)));
        let mut fx = |x: f64| match to_grid(x, delta) {
            Some(0) | None => f64::NEG_INFINITY,
            Some(g) => f(g),
        };
        let interp = bli::build(&mut fx, -s, s, &st.bli, &mut self.rng).ok()?;
        ValueProposal::grid(interp, delta, true, None)
    }

    fn collective_step(&mut self) -> bool {
        let k = self.state.weights.k();
        if k == 0 {
            return false;
        }
        let idx = self.rng.random_range(0..k);
        let (gk, m) = self.state.weights.iter().nth(idx).expect("index below k");
        let members = self.state.members(gk);
        let gs = self.state.cache.group_shift(self.state.data, &[&members]);
        let Some(prop) = self.common_value_proposal(&[(gk, m)], &gs) else {
            return false;
        };
        let Some(new) = prop.sample(&mut self.rng) else {
            return false;
        };
        if new == gk {
            return true;
        }
        if self.state.weights.count(new) > 0 {
            return false;
        }
        let dpost = self.state.groups_delta(&gs, &[(gk, m)], &[new]);
        let log_a = dpost + prop.log_prob(Some(gk)) - prop.log_prob(Some(new));
        accept(&mut self.rng, log_a) && self.state.apply_groups(&[(&members, gk, new)], dpost).is_ok()
    }

    fn merge_split_step(&mut self) -> bool {
        if self.rng.random::<bool>() {
            self.merge_step()
        } else {
            self.split_step()
        }
    }

    fn merge_step(&mut self) -> bool {
        let k = self.state.weights.k();
        if k < 2 {
            return false;
        }
        let a = self.rng.random_range(0..k);
        let mut b = self.rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let cats: Vec<(i64, u64)> = self.state.weights.iter().collect();
        let olds = [cats[a.min(b)], cats[a.max(b)]];
        let ma = self.state.members(olds[0].0);
        let mb = self.state.members(olds[1].0);
        let gs = self.state.cache.group_shift(self.state.data, &[&ma, &mb]);
        let Some(prop) = self.common_value_proposal(&olds, &gs) else {
            return false;
        };
        let Some(new) = prop.sample(&mut self.rng) else {
            return false;
        };
        let dpost = self.state.groups_delta(&gs, &olds, &[new, new]);
        if dpost == f64::NEG_INFINITY {
            return false;
        }
        let m = olds[0].1 + olds[1].1;
        let fwd = -ln_binomial(k as u64, 2) + prop.log_prob(Some(new));
        let rev = -((k - 1) as f64).ln() - ln_split_count(m) + prop.log_prob(Some(olds[0].0)) + prop.log_prob(Some(olds[1].0));
        accept(&mut self.rng, dpost + rev - fwd)
            && self.state.apply_groups(&[(&ma, olds[0].0, new), (&mb, olds[1].0, new)], dpost).is_ok()
    }

    fn split_step(&mut self) -> bool {
        let k = self.state.weights.k();
        if k == 0 {
            return false;
        }
        let idx = self.rng.random_range(0..k);
        let (gk, m) = self.state.weights.iter().nth(idx).expect("index below k");
        if m < 2 {
            return false;
        }
        let members = self.state.members(gk);
        let side: Vec<bool> = loop {
            let s: Vec<bool> = (0..members.len()).map(|_| self.rng.random::<bool>()).collect();
            if s.iter().any(|&x| x) && s.iter().any(|&x| !x) {
                break s;
            }
        };
        // the half holding the first member is drawn first
        let (ha, hb): (Vec<_>, Vec<_>) = members.iter().zip(&side).partition(|(_, &s)| s == side[0]);
        let ha: Vec<(usize, usize)> = ha.into_iter().map(|(e, _)| *e).collect();
        let hb: Vec<(usize, usize)> = hb.into_iter().map(|(e, _)| *e).collect();
        let whole = self.state.cache.group_shift(self.state.data, &[&members]);
        let Some(prop) = self.common_value_proposal(&[(gk, m)], &whole) else {
            return false;
        };
        let (Some(za), Some(zb)) = (prop.sample(&mut self.rng), prop.sample(&mut self.rng)) else {
            return false;
        };
        if za == zb {
            return false;
        }
        let others = |g: i64| g != gk && self.state.weights.count(g) > 0;
        if others(za) || others(zb) {
            return false;
        }
        let gs = self.state.cache.group_shift(self.state.data, &[&ha, &hb]);
        let olds = [(gk, ha.len() as u64), (gk, hb.len() as u64)];
        let dpost = self.state.groups_delta(&gs, &olds, &[za, zb]);
        if dpost == f64::NEG_INFINITY {
            return false;
        }
        let fwd = -(k as f64).ln() - ln_split_count(m) + prop.log_prob(Some(za)) + prop.log_prob(Some(zb));
        let rev = -ln_binomial(k as u64 + 1, 2) + prop.log_prob(Some(gk));
        accept(&mut self.rng, dpost + rev - fwd) && self.state.apply_groups(&[(&ha, gk, za), (&hb, gk, zb)], dpost).is_ok()
    }

    // ---- partition ----

    pub fn partition_step(&mut self) -> bool {
        let a = if self.rng.random::<bool>() { self.relabel_step() } else { self.group_merge_split_step() };
        self.current.partition.record(a)
    }

    fn try_partition(&mut self, labels: &[usize], log_q_ratio: f64) -> bool {
        let Ok(sbm) = SbmState::new(labels, self.state.graph()) else {
            return false;
        };
        let d = sbm.log_prior() - self.state.sbm().log_prior();
        if accept(&mut self.rng, d + log_q_ratio) {
            self.state.set_partition(sbm, d);
            true
        } else {
            false
        }
    }

    fn relabel_step(&mut self) -> bool {
        let n = self.state.graph().n_nodes();
        let i = self.uniform_node();
        let b = self.state.sbm().n_groups();
        let t = self.rng.random_range(0..=b);
        let mut labels = self.state.sbm().labels();
        let own = labels[i];
        if t == own || (t == b && self.state.sbm().group_sizes()[own] == 1) {
            return true;
        }
        labels[i] = t;
        let b_new = {
            let mut seen = labels.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        };
        let fwd = -((n * (b + 1)) as f64).ln();
        let rev = -((n * (b_new + 1)) as f64).ln();
        self.try_partition(&labels, rev - fwd)
    }

    fn group_merge_split_step(&mut self) -> bool {
        let b = self.state.sbm().n_groups();
        let mut labels = self.state.sbm().labels();
        if self.rng.random::<bool>() {
            if b < 2 {
                return false;
            }
            let r = self.rng.random_range(0..b);
            let mut s = self.rng.random_range(0..b - 1);
            if s >= r {
                s += 1;
            }
            let size = self.state.sbm().group_sizes()[r] + self.state.sbm().group_sizes()[s];
            labels.iter_mut().filter(|l| **l == s).for_each(|l| *l = r);
            let fwd = -ln_binomial(b as u64, 2);
            let rev = -((b - 1) as f64).ln() - ln_split_count(size);
            self.try_partition(&labels, rev - fwd)
        } else {
            let r = self.rng.random_range(0..b);
            let size = self.state.sbm().group_sizes()[r];
            if size < 2 {
                return false;
            }
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == r).collect();
            let side: Vec<bool> = loop {
                let s: Vec<bool> = (0..members.len()).map(|_| self.rng.random::<bool>()).collect();
                if s.iter().any(|&x| x) && s.iter().any(|&x| !x) {
                    break s;
                }
            };
            for (&i, &sd) in members.iter().zip(&side) {
                if sd {
                    labels[i] = b;
                }
            }
            let fwd = -(b as f64).ln() - ln_split_count(size);
            let rev = -ln_binomial(b as u64 + 1, 2);
            self.try_partition(&labels, rev - fwd)
        }
    }

    // ---- replacement and swap ----

    /// Degree-weighted neighbor, or any node for isolated `i`.
    fn p_e(&self, i: usize, j: usize) -> f64 {
        let g = self.state.graph();
        match g.degree(i) {
            0 => 1.0 / g.n_nodes() as f64,
            k if g.has_edge(i, j) => 1.0 / k as f64,
            _ => 0.0,
        }
    }

    fn sample_e(&mut self, i: usize) -> usize {
        let nb = self.state.graph().neighbors(i);
        if nb.is_empty() {
            self.uniform_node()
        } else {
            nb[self.rng.random_range(0..nb.len())].0 as usize
        }
    }

    fn p_f(&mut self, i: usize, v: usize) -> f64 {
        let n = self.state.graph().n_nodes() as f64;
        let (p, q, d) = (self.cfg.proposal.p, self.cfg.proposal.q, self.cfg.proposal.d);
        let lam = self.reach.reachable(&self.state.graph, i, d).len();
        let p_lam = if lam == 0 {
            1.0 / n
        } else {
            q * f64::from(u8::from(self.reach.was_reached(v, i))) / lam as f64 + (1.0 - q) / n
        };
        p * self.typical.conditional(i, v) + (1.0 - p) * p_lam
    }

    fn sample_f(&mut self, i: usize) -> usize {
        let (p, q, d) = (self.cfg.proposal.p, self.cfg.proposal.q, self.cfg.proposal.d);
        if self.rng.random::<f64>() < p {
            return self.typical.sample_conditional(i, &mut self.rng);
        }
        let lam = self.reach.reachable(&self.state.graph, i, d);
        if !lam.is_empty() && self.rng.random::<f64>() < q {
            let k = self.rng.random_range(0..lam.len());
            return lam[k] as usize;
        }
        self.uniform_node()
    }

    /// Sets entries on the graph only (no bookkeeping), returning the old values.
    fn poke(&mut self, entries: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
        entries.iter().map(|&(i, j, w)| (i, j, self.state.graph.set_unchecked(i, j, w))).collect()
    }

    fn replace_density(&mut self, i: usize, j: usize, v: usize) -> f64 {
        let n = self.state.graph().n_nodes() as f64;
        let a = self.p_e(i, j) * self.p_f(i, v);
        let b = self.p_e(i, v) * self.p_f(i, j);
        (a + b) / n
    }

    /// Exchanges the values of `W_ij` and `W_iv`.
    pub fn replacement_step(&mut self) -> bool {
        let i = self.uniform_node();
        let j = self.sample_e(i);
        let v = self.sample_f(i);
        if i == j || i == v || j == v {
            return false;
        }
        let a = self.replacement_at(i, j, v);
        self.current.replacement.record(a)
    }

    fn replacement_at(&mut self, i: usize, j: usize, v: usize) -> bool {
        let (wj, wv) = (self.state.graph.get(i, j), self.state.graph.get(i, v));
        if wj == wv {
            return true;
        }
        let changes = [(i, j, self.state.entry_slot(i, v)), (i, v, self.state.entry_slot(i, j))];
        let dpost = self.state.entries_delta(&changes);
        if dpost == f64::NEG_INFINITY {
            return false;
        }
        let fwd = self.replace_density(i, j, v);
        let old = self.poke(&[(i, j, wv), (i, v, wj)]);
        let rev = self.replace_density(i, j, v);
        self.poke(&old);
        accept(&mut self.rng, dpost + rev.ln() - fwd.ln()) && self.state.apply_entries(&changes, dpost).is_ok()
    }

    fn swap_path_density(&mut self, path: [usize; 4]) -> f64 {
        let [a, b, c, d] = path;
        let n = self.state.graph().n_nodes() as f64;
        let pe1 = self.p_e(a, b);
        if pe1 == 0.0 {
            return 0.0;
        }
        let pe2 = self.p_e(c, d);
        if pe2 == 0.0 {
            return 0.0;
        }
        pe1 * self.p_f(b, c) * pe2 / n
    }

    /// Values on the six pairs among `nodes` after swapping along `path`.
    fn swapped(vals: &[[f64; 4]; 4], path: [usize; 4]) -> [[f64; 4]; 4] {
        let [a, b, c, d] = path;
        let mut out = *vals;
        let mut set = |x: usize, y: usize, w: f64| {
            out[x][y] = w;
            out[y][x] = w;
        };
        set(a, b, vals[a][d]);
        set(a, d, vals[a][b]);
        set(c, d, vals[c][b]);
        set(c, b, vals[c][d]);
        out
    }

    /// Total probability of all node orderings that turn `from` into `to`.
    fn swap_density(&mut self, nodes: [usize; 4], from: &[[f64; 4]; 4], to: &[[f64; 4]; 4]) -> f64 {
        let mut total = 0.0;
        for perm in PERMUTATIONS {
            if &Self::swapped(from, perm) == to {
                total += self.swap_path_density(perm.map(|k| nodes[k]));
            }
        }
        total
    }

    /// Exchanges `W_ij <-> W_iv` and `W_uv <-> W_uj`.
    pub fn swap_step(&mut self) -> bool {
        let i = self.uniform_node();
        let j = self.sample_e(i);
        let u = self.sample_f(j);
        let v = self.sample_e(u);
        let nodes = [i, j, u, v];
        if (0..4).any(|a| (a + 1..4).any(|b| nodes[a] == nodes[b])) {
            return false;
        }
        let a = self.swap_at(nodes);
        self.current.swap.record(a)
    }

    fn swap_at(&mut self, nodes: [usize; 4]) -> bool {
        let mut vals = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    vals[a][b] = self.state.graph.get(nodes[a], nodes[b]);
                }
            }
        }
        let after = Self::swapped(&vals, [0, 1, 2, 3]);
        if after == vals {
            return true;
        }
        let mut changes = Vec::new();
        let mut pokes = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                if after[a][b] != vals[a][b] {
                    changes.push((nodes[a], nodes[b], self.state.weights.slot(after[a][b])));
                    pokes.push((nodes[a], nodes[b], after[a][b]));
                }
            }
        }
        let dpost = self.state.entries_delta(&changes);
        if dpost == f64::NEG_INFINITY {
            return false;
        }
        let fwd = self.swap_density(nodes, &vals, &after);
        let old = self.poke(&pokes);
        let rev = self.swap_density(nodes, &after, &vals);
        self.poke(&old);
        accept(&mut self.rng, dpost + rev.ln() - fwd.ln()) && self.state.apply_entries(&changes, dpost).is_ok()
    }

    // ---- sweeps ----

    /// One sweep: N entry proposals plus the scheduled extra moves. During
    /// the first `tau` sweeps the candidate search re-runs and grows the
    /// typical set; afterwards the set is frozen.
    pub fn sweep(&mut self) -> SweepStats {
        let n = self.state.graph().n_nodes();
        let sch: Schedule = self.cfg.schedule.clone();
        for _ in 0..Schedule::count(sch.entry_moves_per_node, n) {
            self.entry_step();
        }
        if self.cfg.sample_node_params {
            for _ in 0..Schedule::count(sch.node_moves_per_node, n) {
                self.node_step();
            }
        }
        for _ in 0..sch.category_moves {
            if self.state.weights.k() == 0 {
                break;
            }
            let kind = if self.rng.random::<bool>() { CategoryMove::Collective } else { CategoryMove::MergeSplit };
            self.category_step(kind);
        }
        if self.cfg.sample_partition {
            for _ in 0..sch.partition_moves {
                self.partition_step();
            }
        }
        for _ in 0..Schedule::count(sch.replacement_per_node, n) {
            self.replacement_step();
        }
        for _ in 0..Schedule::count(sch.swap_per_node, n) {
            self.swap_step();
        }
        self.sweeps += 1;
        if !self.typical.is_frozen() {
            let count = ((self.cfg.proposal.kappa * n as f64).ceil() as usize).max(1);
            let cands = greedy::candidate_pairs(&self.state, count, &self.cfg.greedy, &mut self.rng);
            self.typical.extend(cands);
            if self.sweeps >= self.cfg.proposal.tau {
                self.typical.freeze();
            }
        }
        let moves = std::mem::take(&mut self.current);
        self.totals.merge(&moves);
        SweepStats {
            sweep: self.sweeps,
            moves,
            log_posterior: self.state.log_posterior(),
            n_edges: self.state.graph().n_edges(),
            typical_size: self.typical.len(),
        }
    }

    /// Runs `n` sweeps, returning the last stats.
    pub fn run(&mut self, n: usize) -> Option<SweepStats> {
        (0..n).map(|_| self.sweep()).last()
    }
}

const PERMUTATIONS: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::models::simulate_kinetic_ising;
    use crate::sampler::config::PriorConfig;

    fn small_data(n: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = WeightedGraph::new(n);
        for i in 0..n - 1 {
            g.set_entry(i, i + 1, 0.5).unwrap();
        }
        let x0: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        simulate_kinetic_ising(&g, m, &x0, &mut rng).unwrap()
    }

    fn restricted(schedule: Schedule) -> SamplerConfig {
        SamplerConfig {
            prior: PriorConfig { lambda: 1.0, delta: 0.5, allowed_values: Some(vec![0.5, 1.0]), max_categories: Some(1) },
            schedule,
            sample_node_params: false,
            sample_partition: false,
            ..SamplerConfig::default()
        }
    }

    fn key(g: &WeightedGraph) -> Vec<(usize, usize, i64)> {
        g.edges().map(|(i, j, w)| (i, j, (w / 0.5).round() as i64)).collect()
    }

    /// Every graph on `n` nodes with one common value from `values`.
    fn enumerate(data: &Dataset, cfg: &SamplerConfig, n: usize) -> HashMap<Vec<(usize, usize, i64)>, f64> {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut out = HashMap::new();
        for mask in 0u32..(1 << pairs.len()) {
            for &v in cfg.prior.allowed_values.as_ref().unwrap() {
                let mut g = WeightedGraph::new(n);
                for (b, &(i, j)) in pairs.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        g.set_entry(i, j, v).unwrap();
                    }
                }
                let lp = ChainState::new(data, ModelKind::KineticIsing, &g, cfg, None).unwrap().log_posterior();
                out.insert(key(&g), lp);
                if mask == 0 {
                    break;
                }
            }
        }
        let z = crate::math::log_sum_exp(&out.values().copied().collect::<Vec<_>>());
        out.values_mut().for_each(|v| *v = (*v - z).exp());
        out
    }

    fn total_variation(data: &Dataset, cfg: SamplerConfig, n: usize, steps: usize, seed: u64) -> f64 {
        let exact = enumerate(data, &cfg, n);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut chain = Chain::new(data, ModelKind::KineticIsing, &WeightedGraph::new(n), TypicalEdgeSet::from_pairs(n, pairs), cfg, chain_rng(seed, 0)).unwrap();
        let mut freq: HashMap<Vec<(usize, usize, i64)>, f64> = HashMap::new();
        let sweeps = steps / n;
        for _ in 0..sweeps {
            chain.sweep();
            *freq.entry(key(chain.graph())).or_default() += 1.0;
        }
        assert!(chain.check().unwrap() < 1e-6);
        let mut tv = 0.0;
        for (k, p) in &exact {
            tv += (freq.get(k).copied().unwrap_or(0.0) / sweeps as f64 - p).abs();
        }
        for (k, f) in &freq {
            assert!(exact.contains_key(k), "visited a state outside the support: {k:?}");
            let _ = f;
        }
        0.5 * tv
    }

    #[test]
    fn entries_only_matches_enumeration() {
        let data = small_data(3, 20, 4);
        let tv = total_variation(&data, restricted(Schedule::entries_only()), 3, 300_000, 1);
        assert!(tv < 0.02, "tv {tv}");
    }

    #[test]
    fn all_moves_match_enumeration() {
        let data = small_data(4, 12, 5);
        let schedule = Schedule { category_moves: 2, replacement_per_node: 0.5, swap_per_node: 0.5, ..Schedule::entries_only() };
        let tv = total_variation(&data, restricted(schedule), 4, 400_000, 2);
        assert!(tv < 0.03, "tv {tv}");
    }

    #[test]
    fn bookkeeping_survives_every_move() {
        let data = small_data(8, 60, 6);
        let mut cfg = SamplerConfig::default();
        cfg.schedule = Schedule { node_moves_per_node: 1.0, replacement_per_node: 1.0, swap_per_node: 1.0, ..Schedule::default() };
        cfg.proposal.tau = 3;
        let mut chain = Chain::from_map(&data, ModelKind::KineticIsing, cfg, chain_rng(7, 0)).unwrap();
        for _ in 0..200 {
            chain.sweep();
        }
        let drift = chain.check().unwrap();
        assert!(drift < 1e-6, "drift {drift}");
        assert!(chain.typical().is_frozen());
        let s = chain.stats();
        assert!(s.entry.accepted > 0 && s.node.accepted > 0 && s.partition.proposed > 0);
    }

    #[test]
    fn tau_zero_freezes_the_typical_set() {
        let data = small_data(6, 40, 8);
        let mut cfg = SamplerConfig::default();
        cfg.proposal.tau = 0;
        let mut chain = Chain::from_map(&data, ModelKind::KineticIsing, cfg, chain_rng(1, 0)).unwrap();
        let before = chain.typical().len();
        let st = chain.sweep();
        assert_eq!(st.sweep, 1);
        assert_eq!(chain.typical().len(), before);
        assert_eq!(st.moves.entry.proposed, 6);
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let data = small_data(6, 40, 9);
        let run = || {
            let mut c = Chain::from_map(&data, ModelKind::KineticIsing, SamplerConfig::default(), chain_rng(3, 1)).unwrap();
            (0..20).map(|_| c.sweep().log_posterior).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn grid_moves_match_truncated_enumeration() {
        // unrestricted values on a coarse grid; mass beyond |z| = 5 is negligible
        let n = 3;
        let data = small_data(n, 10, 11);
        let cfg = SamplerConfig {
            prior: PriorConfig { lambda: 1.0, delta: 0.5, allowed_values: None, max_categories: None },
            schedule: Schedule { category_moves: 2, ..Schedule::entries_only() },
            sample_node_params: false,
            sample_partition: false,
            ..SamplerConfig::default()
        };
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut exact = HashMap::new();
        let range = -10i64..=10;
        for a in range.clone() {
            for b in range.clone() {
                for c in range.clone() {
                    let mut g = WeightedGraph::new(n);
                    for (&(i, j), v) in pairs.iter().zip([a, b, c]) {
                        g.set_entry(i, j, v as f64 * 0.5).unwrap();
                    }
                    let lp = ChainState::new(&data, ModelKind::KineticIsing, &g, &cfg, None).unwrap().log_posterior();
                    exact.insert(key(&g), lp);
                }
            }
        }
        let z = crate::math::log_sum_exp(&exact.values().copied().collect::<Vec<_>>());
        exact.values_mut().for_each(|v| *v = (*v - z).exp());
        let mut chain = Chain::new(&data, ModelKind::KineticIsing, &WeightedGraph::new(n), TypicalEdgeSet::from_pairs(n, pairs), cfg, chain_rng(5, 0)).unwrap();
        let mut freq: HashMap<Vec<(usize, usize, i64)>, f64> = HashMap::new();
        let sweeps = 200_000;
        for _ in 0..sweeps {
            chain.sweep();
            *freq.entry(key(chain.graph())).or_default() += 1.0 / sweeps as f64;
        }
        let mut tv = 0.0;
        for (k, p) in &exact {
            tv += (freq.get(k).copied().unwrap_or(0.0) - p).abs();
        }
        tv += freq.iter().filter(|(k, _)| !exact.contains_key(*k)).map(|(_, f)| f).sum::<f64>();
        assert!(0.5 * tv < 0.03, "tv {}", 0.5 * tv);
        assert!(chain.stats().collective.accepted > 0 && chain.stats().merge_split.accepted > 0);
    }

    #[test]
    fn node_moves_match_enumeration() {
        let n = 2;
        let data = small_data(n, 15, 12);
        let mut cfg = restricted(Schedule { node_moves_per_node: 1.0, ..Schedule::entries_only() });
        cfg.sample_node_params = true;
        let mut exact = HashMap::new();
        for w in [0.0, 0.5, 1.0] {
            for a in -12i64..=12 {
                for b in -12i64..=12 {
                    let mut g = WeightedGraph::new(n);
                    g.set_entry(0, 1, w).unwrap();
                    g.theta = vec![a as f64 * 0.5, b as f64 * 0.5];
                    let lp = ChainState::new(&data, ModelKind::KineticIsing, &g, &cfg, None).unwrap().log_posterior();
                    exact.insert((key(&g), a, b), lp);
                }
            }
        }
        let z = crate::math::log_sum_exp(&exact.values().copied().collect::<Vec<_>>());
        exact.values_mut().for_each(|v| *v = (*v - z).exp());
        let mut chain = Chain::new(&data, ModelKind::KineticIsing, &WeightedGraph::new(n), TypicalEdgeSet::from_pairs(n, [(0, 1)]), cfg, chain_rng(9, 0)).unwrap();
        let mut freq = HashMap::new();
        let sweeps = 200_000;
        for _ in 0..sweeps {
            chain.sweep();
            let g = chain.graph();
            let k = (key(g), (g.theta[0] / 0.5).round() as i64, (g.theta[1] / 0.5).round() as i64);
            *freq.entry(k).or_insert(0.0) += 1.0 / sweeps as f64;
        }
        let mut tv: f64 = exact.iter().map(|(k, p)| (freq.get(k).copied().unwrap_or(0.0) - p).abs()).sum();
        tv += freq.iter().filter(|(k, _)| !exact.contains_key(*k)).map(|(_, f)| f).sum::<f64>();
        assert!(0.5 * tv < 0.03, "tv {}", 0.5 * tv);
    }

    #[test]
    fn partition_moves_match_enumeration() {
        let n = 5;
        let data = small_data(n, 10, 13);
        let mut cfg = restricted(Schedule { entry_moves_per_node: 0.0, partition_moves: 1, ..Schedule::entries_only() });
        cfg.sample_partition = true;
        let mut g = WeightedGraph::new(n);
        for (i, j) in [(0, 1), (1, 2), (0, 2), (3, 4), (2, 3)] {
            g.set_entry(i, j, 0.5).unwrap();
        }
        // restricted growth strings enumerate unlabeled partitions
        fn partitions(n: usize) -> Vec<Vec<usize>> {
            let mut out = vec![vec![0]];
            for _ in 1..n {
                out = out
                    .into_iter()
                    .flat_map(|p| {
                        let b = p.iter().max().unwrap() + 1;
                        (0..=b).map(move |r| {
                            let mut q = p.clone();
                            q.push(r);
                            q
                        })
                    })
                    .collect();
            }
            out
        }
        let parts = partitions(n);
        assert_eq!(parts.len(), 52);
        let lps: Vec<f64> = parts.iter().map(|b| SbmState::new(b, &g).unwrap().log_prior()).collect();
        let z = crate::math::log_sum_exp(&lps);
        let mut chain = Chain::new(&data, ModelKind::KineticIsing, &g, TypicalEdgeSet::new(n), cfg, chain_rng(4, 0)).unwrap();
        let mut freq: HashMap<Vec<usize>, f64> = HashMap::new();
        let sweeps = 300_000;
        for _ in 0..sweeps {
            chain.sweep();
            *freq.entry(chain.state().sbm().labels()).or_default() += 1.0 / sweeps as f64;
        }
        let tv: f64 = parts.iter().zip(&lps).map(|(b, lp)| (freq.get(b).copied().unwrap_or(0.0) - (lp - z).exp()).abs()).sum();
        assert!(0.5 * tv < 0.02, "tv {}", 0.5 * tv);
        assert!(chain.check().unwrap() < 1e-6);
    }

    #[test]
    fn split_count() {
        assert!((ln_split_count(2) - 0.0).abs() < 1e-12);
        assert!((ln_split_count(4) - 7f64.ln()).abs() < 1e-12);
    }
}
