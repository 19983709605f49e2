use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Dichotomization;
pub use crate::synthetic::FactorizedTarget;

use super::chain::MoveCounts;
use super::typical::{EntrySelector, TypicalEdgeSet};

/// Toggle-only chain on a dichotomization, with the same entry mixture as
/// the full sampler; used to measure proposal efficiency in isolation.
pub struct FactorizedChain<'a> {
    target: &'a FactorizedTarget,
    graph: Dichotomization,
    typical: TypicalEdgeSet,
    selector: EntrySelector,
    rng: ChaCha8Rng,
    counts: MoveCounts,
}

impl<'a> FactorizedChain<'a> {
    /// `w_t`, `w_u`, `w_n`, `d` as for [`EntrySelector`]; starts at `init`.
    pub fn new(
        target: &'a FactorizedTarget,
        init: Dichotomization,
        typical: TypicalEdgeSet,
        mix: (f64, f64, f64, usize),
        rng: ChaCha8Rng,
    ) -> Self {
        let n = target.n_nodes();
        let (w_t, w_u, w_n, d) = mix;
        FactorizedChain { target, graph: init, typical, selector: EntrySelector::new(n, w_t, w_u, w_n, d), rng, counts: MoveCounts::default() }
    }

    pub fn graph(&self) -> &Dichotomization {
        &self.graph
    }

    pub fn counts(&self) -> MoveCounts {
        self.counts
    }

    /// One toggle proposal.
    pub fn step(&mut self) -> bool {
        let (i, j) = self.selector.sample(&self.graph, &self.typical, &mut self.rng);
        let add = !self.graph.contains(i, j);
        let d = self.target.delta_toggle(i, j, add);
        let mut log_a = d;
        if self.selector.uses_graph() {
            let fwd = self.selector.density(&self.graph, &self.typical, i, j);
            toggle(&mut self.graph, i, j, add);
            let rev = self.selector.density(&self.graph, &self.typical, i, j);
            toggle(&mut self.graph, i, j, !add);
            log_a += rev.ln() - fwd.ln();
        }
        let ok = log_a >= 0.0 || self.rng.random::<f64>().ln() < log_a;
        if ok {
            toggle(&mut self.graph, i, j, add);
        }
        self.counts.proposed += 1;
        self.counts.accepted += u64::from(ok);
        ok
    }

    /// N toggle proposals.
    pub fn sweep(&mut self) {
        for _ in 0..self.target.n_nodes() {
            self.step();
        }
    }
}

fn toggle(g: &mut Dichotomization, i: usize, j: usize, add: bool) {
    if add {
        g.insert(i, j);
    } else {
        g.remove(i, j);
    }
}
