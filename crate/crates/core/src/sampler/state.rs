use crate::bli::BliConfig;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::models::{log_likelihood, Dataset, FieldCache, GroupShift, ModelKind};
use crate::prior::{grid_index, Categories, CategoryChange, SbmState};

use super::config::{PriorConfig, SamplerConfig};

/// Everything the target density depends on, kept in step incrementally.
///
/// Weights are stored as `g * delta` for integer grid indices `g`, so that the
/// category bookkeeping is exact.
#[derive(Clone, Debug)]
pub struct ChainState<'a> {
    pub(crate) data: &'a Dataset,
    pub(crate) kind: ModelKind,
    pub(crate) graph: WeightedGraph,
    pub(crate) cache: FieldCache,
    pub(crate) weights: Categories,
    pub(crate) nodes: Option<Categories>,
    pub(crate) sbm: SbmState,
    pub(crate) allowed: Option<Vec<i64>>,
    pub(crate) max_categories: Option<usize>,
    pub(crate) bli: BliConfig,
    weights_lp: f64,
    log_post: f64,
    updates: usize,
}

fn snap(x: f64, delta: f64) -> f64 {
    match grid_index(x, delta) {
        Some(g) => g as f64 * delta,
        None => (x / delta).round() * delta,
    }
}

impl<'a> ChainState<'a> {
    /// Starts from `graph`, snapping weights and node parameters to the grid.
    /// `partition` defaults to a single group.
    pub fn new(
        data: &'a Dataset,
        kind: ModelKind,
        graph: &WeightedGraph,
        cfg: &SamplerConfig,
        partition: Option<&[usize]>,
    ) -> Result<Self> {
        cfg.validate()?;
        data.validate_for(kind)?;
        let n = data.n_nodes();
        if graph.n_nodes() != n {
            return Err(Error::Argument(format!("graph has {} nodes, data has {n}", graph.n_nodes())));
        }
        let PriorConfig { lambda, delta, .. } = cfg.prior;
        let mut g = WeightedGraph::new(n);
        for (i, j, w) in graph.edges() {
            let w = snap(w, delta);
            if w != 0.0 {
                g.set_unchecked(i, j, w);
            }
        }
        g.theta = graph.theta.clone();
        if cfg.sample_node_params {
            g.theta.iter_mut().for_each(|t| *t = snap(*t, delta));
        }
        let allowed = cfg.prior.allowed_values.as_ref().map(|vals| {
            let mut a: Vec<i64> = vals.iter().filter_map(|&v| grid_index(v, delta)).collect();
            a.sort_unstable();
            a.dedup();
            a
        });
        let weights = Categories::from_values(false, lambda, delta, g.edges().map(|e| e.2))?;
        if let Some(a) = &allowed {
            if weights.grid_values().any(|x| a.binary_search(&x).is_err()) {
                return Err(Error::Config("initial weights are outside allowed_values".into()));
            }
        }
        if let Some(cap) = cfg.prior.max_categories {
            if weights.k() > cap {
                return Err(Error::Config(format!("initial weights use {} categories, more than {cap}", weights.k())));
            }
        }
        let nodes = if cfg.sample_node_params {
            Some(Categories::from_values(true, lambda, delta, g.theta.iter().copied())?)
        } else {
            None
        };
        let sbm = match partition {
            Some(b) => SbmState::new(b, &g)?,
            None => SbmState::single_group(&g),
        };
        let cache = FieldCache::new(data, &g, kind)?;
        let weights_lp = weights.log_prior();
        let mut st = ChainState {
            data,
            kind,
            graph: g,
            cache,
            weights,
            nodes,
            sbm,
            allowed,
            max_categories: cfg.prior.max_categories,
            bli: cfg.proposal.bli(),
            weights_lp,
            log_post: 0.0,
            updates: 0,
        };
        st.log_post = st.recompute_log_posterior()?;
        if !st.log_post.is_finite() {
            return Err(Error::Domain("initial state has zero posterior probability".into()));
        }
        Ok(st)
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn weight_categories(&self) -> &Categories {
        &self.weights
    }

    pub fn node_categories(&self) -> Option<&Categories> {
        self.nodes.as_ref()
    }

    pub fn sbm(&self) -> &SbmState {
        &self.sbm
    }

    pub fn delta(&self) -> f64 {
        self.weights.delta()
    }

    /// Incrementally tracked log posterior.
    pub fn log_posterior(&self) -> f64 {
        self.log_post
    }

    /// Log posterior from scratch: likelihood, weight and node priors, block model.
    pub fn recompute_log_posterior(&self) -> Result<f64> {
        let sbm = SbmState::new(&self.sbm.labels(), &self.graph)?;
        Ok(log_likelihood(self.data, &self.graph, self.kind)?
            + self.weights.log_prior()
            + self.nodes.as_ref().map_or(0.0, Categories::log_prior)
            + sbm.log_prior())
    }

    /// Verifies every piece of incremental bookkeeping; returns the absolute
    /// drift of the tracked log posterior.
    pub fn check(&self) -> Result<f64> {
        self.weights.check_against(self.graph.edges().map(|e| e.2))?;
        if let Some(nodes) = &self.nodes {
            nodes.check_against(self.graph.theta.iter().copied())?;
        }
        self.sbm.check_against(&self.graph)?;
        Ok((self.recompute_log_posterior()? - self.log_post).abs())
    }

    /// Grid index of the current entry, `None` when absent.
    pub(crate) fn entry_slot(&self, i: usize, j: usize) -> Option<i64> {
        self.weights.slot(self.graph.get(i, j))
    }

    pub(crate) fn theta_slot(&self, i: usize) -> i64 {
        grid_index(self.graph.theta[i], self.delta()).expect("node parameters are kept on the grid")
    }

    pub(crate) fn value(&self, g: Option<i64>) -> f64 {
        g.map_or(0.0, |g| self.weights.value(g))
    }

    fn value_ok(&self, g: Option<i64>) -> bool {
        match g {
            None => true,
            Some(0) => false,
            Some(g) => self.allowed.as_ref().is_none_or(|a| a.binary_search(&g).is_ok()),
        }
    }

    fn weight_prior_delta(&self, changes: &[CategoryChange]) -> f64 {
        if changes.iter().all(|c| c.0 == c.1) {
            return 0.0;
        }
        let Some(s) = self.weights.summary_after(changes) else {
            return f64::NEG_INFINITY;
        };
        if self.max_categories.is_some_and(|cap| s.k as usize > cap) {
            return f64::NEG_INFINITY;
        }
        self.weights.log_prior_of(&s) - self.weights_lp
    }

    /// Prior part of [`Self::entry_delta`].
    pub(crate) fn entry_prior_delta(&self, i: usize, j: usize, g: Option<i64>) -> f64 {
        let old = self.entry_slot(i, j);
        if old == g {
            return 0.0;
        }
        if !self.value_ok(g) {
            return f64::NEG_INFINITY;
        }
        let dprior = self.weight_prior_delta(&[(old, g, 1)]);
        if dprior == f64::NEG_INFINITY {
            return dprior;
        }
        dprior + if old.is_some() != g.is_some() { self.sbm.delta_toggle(i, j, g.is_some()) } else { 0.0 }
    }

    /// Log posterior change of setting entry `(i, j)` to grid value `g`.
    pub(crate) fn entry_delta(&self, i: usize, j: usize, g: Option<i64>) -> f64 {
        let old = self.entry_slot(i, j);
        if old == g {
            return 0.0;
        }
        if !self.value_ok(g) {
            return f64::NEG_INFINITY;
        }
        let dprior = self.weight_prior_delta(&[(old, g, 1)]);
        if dprior == f64::NEG_INFINITY {
            return dprior;
        }
        let dsbm = if old.is_some() != g.is_some() { self.sbm.delta_toggle(i, j, g.is_some()) } else { 0.0 };
        dprior + dsbm + self.cache.delta_entry(self.data, &self.graph, i, j, self.value(g))
    }

    /// Log posterior change of several entry updates at once. Pairs must be distinct.
    pub(crate) fn entries_delta(&mut self, changes: &[(usize, usize, Option<i64>)]) -> f64 {
        let mut cat = Vec::with_capacity(changes.len());
        for &(i, j, g) in changes {
            if !self.value_ok(g) {
                return f64::NEG_INFINITY;
            }
            cat.push((self.entry_slot(i, j), g, 1));
        }
        let dprior = self.weight_prior_delta(&cat);
        if dprior == f64::NEG_INFINITY {
            return dprior;
        }
        let mut dsbm = 0.0;
        let mut toggled = Vec::new();
        for (&(i, j, g), c) in changes.iter().zip(&cat) {
            if c.0.is_some() != g.is_some() {
                dsbm += self.sbm.delta_toggle(i, j, g.is_some());
                self.sbm.toggle(i, j, g.is_some());
                toggled.push((i, j, g.is_some()));
            }
        }
        for &(i, j, add) in toggled.iter().rev() {
            self.sbm.toggle(i, j, !add);
        }
        let real: Vec<(usize, usize, f64)> = changes.iter().map(|&(i, j, g)| (i, j, self.value(g))).collect();
        dprior + dsbm + self.cache.delta_entries(self.data, &self.graph, &real)
    }

    /// Log posterior change of moving whole groups of entries, all currently
    /// at `olds[k]`, to `news[k]`.
    pub(crate) fn groups_delta(&self, gs: &GroupShift, olds: &[(i64, u64)], news: &[i64]) -> f64 {
        if news.iter().any(|&g| !self.value_ok(Some(g))) {
            return f64::NEG_INFINITY;
        }
        let cat: Vec<CategoryChange> = olds.iter().zip(news).map(|(&(o, m), &n)| (Some(o), Some(n), m)).collect();
        let dprior = self.weight_prior_delta(&cat);
        if dprior == f64::NEG_INFINITY {
            return dprior;
        }
        let shifts: Vec<f64> = olds.iter().zip(news).map(|(&(o, _), &n)| self.weights.value(n) - self.weights.value(o)).collect();
        dprior + self.cache.delta_group_shift(self.data, &self.graph, gs, &shifts)
    }

    /// Log posterior change of setting node parameter `i` to grid value `g`.
    pub(crate) fn node_delta(&self, i: usize, g: i64) -> f64 {
        let Some(nodes) = &self.nodes else {
            return f64::NEG_INFINITY;
        };
        let old = self.theta_slot(i);
        if old == g {
            return 0.0;
        }
        let x = nodes.value(g);
        if self.kind.positive_theta() && x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        nodes.delta_log_prior(&[(Some(old), Some(g), 1)]) + self.cache.delta_node(self.data, &self.graph, i, x)
    }

    fn tick(&mut self, n: usize) {
        self.updates += n;
        if self.updates >= crate::models::RESYNC_INTERVAL {
            self.cache.resync(self.data, &self.graph);
            self.updates = 0;
        }
    }

    /// Commits a batch of entry updates whose posterior change is `dpost`.
    pub(crate) fn apply_entries(&mut self, changes: &[(usize, usize, Option<i64>)], dpost: f64) -> Result<()> {
        let cat: Vec<CategoryChange> = changes.iter().map(|&(i, j, g)| (self.entry_slot(i, j), g, 1)).collect();
        self.weights.apply(&cat)?;
        for (&(i, j, g), c) in changes.iter().zip(&cat) {
            if c.0.is_some() != g.is_some() {
                self.sbm.toggle(i, j, g.is_some());
            }
            let x = self.value(g);
            self.cache.apply_entry(self.data, &mut self.graph, i, j, x);
        }
        self.weights_lp = self.weights.log_prior();
        self.log_post += dpost;
        self.tick(changes.len());
        Ok(())
    }

    /// Moves every entry at grid value `old` to `new` (category relabeling).
    pub(crate) fn apply_groups(&mut self, groups: &[(&[(usize, usize)], i64, i64)], dpost: f64) -> Result<()> {
        let cat: Vec<CategoryChange> = groups.iter().map(|&(m, o, n)| (Some(o), Some(n), m.len() as u64)).collect();
        self.weights.apply(&cat)?;
        for &(members, _, new) in groups {
            let x = self.weights.value(new);
            for &(i, j) in members {
                self.cache.apply_entry(self.data, &mut self.graph, i, j, x);
            }
            self.tick(members.len());
        }
        self.weights_lp = self.weights.log_prior();
        self.log_post += dpost;
        Ok(())
    }

    pub(crate) fn apply_node(&mut self, i: usize, g: i64, dpost: f64) -> Result<()> {
        let old = self.theta_slot(i);
        let nodes = self.nodes.as_mut().ok_or_else(|| Error::Inconsistent("node parameters are fixed".into()))?;
        nodes.apply(&[(Some(old), Some(g), 1)])?;
        let x = nodes.value(g);
        self.cache.apply_node(self.data, &mut self.graph, i, x);
        self.log_post += dpost;
        self.tick(1);
        Ok(())
    }

    pub(crate) fn set_partition(&mut self, sbm: SbmState, dpost: f64) {
        self.sbm = sbm;
        self.log_post += dpost;
    }

    /// Entries currently at grid value `g`, in lexicographic order.
    pub(crate) fn members(&self, g: i64) -> Vec<(usize, usize)> {
        self.graph.edges().filter(|e| self.weights.slot(e.2) == Some(g)).map(|e| (e.0, e.1)).collect()
    }

    /// Resets the tracked value to a fresh recomputation.
    pub(crate) fn resync(&mut self) -> Result<()> {
        self.cache.resync(self.data, &self.graph);
        self.updates = 0;
        self.log_post = self.recompute_log_posterior()?;
        Ok(())
    }
}
