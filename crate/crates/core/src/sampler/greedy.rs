use rand::Rng;
use rayon::prelude::*;

use crate::bli;
use crate::error::Result;
use crate::graph::{Reach, WeightedGraph};
use crate::models::{pair_derivatives, Dataset, ModelKind};
use crate::prior::grid_index;

use super::config::{GreedyConfig, SamplerConfig};
use super::state::ChainState;
use super::typical::TypicalEdgeSet;

/// How many existing categories nearest to a continuous optimum are tried.
const NEAREST_CATEGORIES: usize = 8;

/// Output of [`greedy_map`].
#[derive(Clone, Debug)]
pub struct MapEstimate {
    pub graph: WeightedGraph,
    /// Union of the candidate sets of every iteration.
    pub typical: TypicalEdgeSet,
    pub log_posterior: f64,
    pub iterations: usize,
    /// Log posterior after each iteration.
    pub trace: Vec<f64>,
    /// False when the iteration budget ran out before the tolerance was met.
    pub converged: bool,
}

/// Starting node parameters: the marginal standard deviation for the
/// Gaussian model, zero for the Ising models.
pub fn initial_graph(data: &Dataset, kind: ModelKind, delta: f64) -> WeightedGraph {
    let n = data.n_nodes();
    let mut g = WeightedGraph::new(n);
    if kind == ModelKind::Gaussian {
        for i in 0..n {
            let x = data.output_row(i);
            let m = x.len().max(1) as f64;
            let mean = x.iter().sum::<f64>() / m;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            g.theta[i] = ((sd / delta).round() * delta).max(delta);
        }
    }
    g
}

fn to_grid(x: f64, delta: f64) -> Option<i64> {
    let g = (x / delta).round();
    (g.is_finite() && g.abs() < 1e15).then_some(g as i64)
}

/// Existing categories closest to `x`, at most [`NEAREST_CATEGORIES`].
fn nearest(cats: &[i64], x: f64, delta: f64) -> impl Iterator<Item = i64> + '_ {
    let g = (x / delta).round().clamp(-1e15, 1e15) as i64;
    let at = cats.partition_point(|&c| c < g);
    let lo = at.saturating_sub(NEAREST_CATEGORIES / 2);
    let hi = (at + NEAREST_CATEGORIES / 2).min(cats.len());
    cats[lo..hi].iter().copied()
}

/// Best single-entry change for `(i, j)` from a Newton step, the nearby
/// existing categories and removal; `(score, value)` with the score being
/// the log posterior change.
fn score_entry(st: &ChainState, cats: &[i64], i: usize, j: usize) -> (f64, Option<i64>) {
    let (g1, g2) = st.cache.entry_derivatives(st.data, &st.graph, i, j);
    score_with(st, cats, i, j, g1, g2, &|g| st.entry_delta(i, j, g))
}

/// Like [`score_entry`], but the likelihood change is the second-order
/// expansion around the current value. Used to screen all pairs cheaply.
fn screen_entry(st: &ChainState, cats: &[i64], moments: &[(Vec<f64>, Vec<f64>)], i: usize, j: usize) -> f64 {
    let (g1, g2) = pair_derivatives(st.data, &moments[i], &moments[j], i, j);
    let w = st.graph.get(i, j);
    let quad = |g: Option<i64>| {
        let dx = st.value(g) - w;
        let p = st.entry_prior_delta(i, j, g);
        if p == f64::NEG_INFINITY { p } else { p + g1 * dx + 0.5 * g2 * dx * dx }
    };
    score_with(st, cats, i, j, g1, g2, &quad).0
}

fn score_with(st: &ChainState, cats: &[i64], i: usize, j: usize, g1: f64, g2: f64, eval: &dyn Fn(Option<i64>) -> f64) -> (f64, Option<i64>) {
    let cur = st.entry_slot(i, j);
    let delta = st.delta();
    let mut best = (f64::NEG_INFINITY, cur);
    let mut consider = |g: Option<i64>| {
        if g != cur && g != Some(0) {
            let d = eval(g);
            if d > best.0 {
                best = (d, g);
            }
        }
    };
    consider(None);
    if let Some(a) = &st.allowed {
        a.iter().for_each(|&g| consider(Some(g)));
        return best;
    }
    let w = st.graph.get(i, j);
    let target = if g2 < 0.0 { w - g1 / g2 } else { w + 0.1 * g1.signum() };
    consider(to_grid(target, delta));
    nearest(cats, target, delta).for_each(|g| consider(Some(g)));
    best
}

/// The `count` node pairs whose best single-entry change raises the log
/// posterior most (or lowers it least). Pairs are scored exhaustively up
/// to `exhaustive_limit` nodes; above that, among current neighborhoods and
/// random pairs.
pub fn candidate_pairs<R: Rng + ?Sized>(st: &ChainState, count: usize, cfg: &GreedyConfig, rng: &mut R) -> Vec<(usize, usize)> {
    let n = st.graph.n_nodes();
    let cats: Vec<i64> = st.weights.grid_values().collect();
    let moments: Vec<_> = (0..n).into_par_iter().map(|a| st.cache.field_derivatives(st.data, &st.graph, a)).collect();
    let mut scored: Vec<(f64, usize, usize)> = if n <= cfg.exhaustive_limit {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let cats = &cats;
                let moments = &moments;
                (i + 1..n).map(move |j| (screen_entry(st, cats, moments, i, j), i, j))
            })
            .collect()
    } else {
        let mut pairs = Vec::new();
        let mut reach = Reach::new(n);
        for i in 0..n {
            for &j in reach.reachable(&st.graph, i, 2) {
                if (j as usize) > i {
                    pairs.push((i, j as usize));
                }
            }
            for _ in 0..4 {
                let j = rng.random_range(0..n);
                if j != i {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs.into_par_iter().map(|(i, j)| (screen_entry(st, &cats, &moments, i, j), i, j)).collect()
    };
    scored.retain(|s| s.0 > f64::NEG_INFINITY);
    let take = count.min(scored.len());
    if take == 0 {
        return Vec::new();
    }
    let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)));
    if take < scored.len() {
        scored.select_nth_unstable_by(take - 1, cmp);
        scored.truncate(take);
    }
    scored.sort_unstable_by(cmp);
    scored.into_iter().map(|s| (s.1, s.2)).collect()
}

/// Sets `(i, j)` to the best value found by 1-D maximization, comparing
/// against removal and nearby existing categories. Returns the gain.
///
/// With `seed` set, an entry whose best value would open a new category at
/// a net loss is set anyway when it raises the likelihood; `seed` is then
/// cleared. Later entries can join that category, which alone they could not afford.
fn optimize_entry(st: &mut ChainState, i: usize, j: usize, seed: &mut bool) -> Result<f64> {
    let delta = st.delta();
    let cats: Vec<i64> = st.weights.grid_values().collect();
    let (mut best, mut best_g) = score_entry(st, &cats, i, j);
    if st.allowed.is_none() {
        let s = cats.iter().fold(0.0f64, |a, &g| a.max((g as f64 * delta).abs()));
        let s = if s > 0.0 { 2.0 * s } else { 1.0 };
        let w = st.graph.get(i, j);
        let stref = &*st;
        let mut f = |x: f64| match to_grid(x, delta) {
            Some(0) | None => f64::NEG_INFINITY,
            g => stref.entry_delta(i, j, g),
        };
        let tol = (1e-6 * s).max(delta);
        if let Ok((x, fx)) = bli::maximize(&mut f, w - s, w + s, tol, &st.bli) {
            let g = to_grid(x, delta);
            if *seed && fx <= 1e-12 && best <= 1e-12 && g.is_some() && st.entry_slot(i, j).is_none() {
                let dl = st.cache.delta_entry(st.data, &st.graph, i, j, st.value(g));
                if dl > 0.0 {
                    *seed = false;
                    st.apply_entries(&[(i, j, g)], fx)?;
                    return Ok(fx);
                }
            }
            if fx > best {
                best = fx;
                best_g = to_grid(x, delta);
            }
            let mut g = best_g;
            for c in nearest(&cats, x, delta) {
                let d = st.entry_delta(i, j, Some(c));
                if d > best {
                    best = d;
                    g = Some(c);
                }
            }
            best_g = g;
        }
    }
    if best > 1e-12 {
        st.apply_entries(&[(i, j, best_g)], best)?;
        Ok(best)
    } else {
        Ok(0.0)
    }
}

fn optimize_node(st: &mut ChainState, i: usize) -> Result<f64> {
    let Some(nodes) = &st.nodes else {
        return Ok(0.0);
    };
    let delta = st.delta();
    let cats: Vec<i64> = nodes.grid_values().collect();
    let theta = st.graph.theta[i];
    let (lo, hi) = if st.kind.positive_theta() { (0.5 * theta, 2.0 * theta) } else { (theta - 1.0, theta + 1.0) };
    let stref = &*st;
    let mut f = |x: f64| to_grid(x, delta).map_or(f64::NEG_INFINITY, |g| stref.node_delta(i, g));
    let (mut best, mut best_g) = (0.0, st.theta_slot(i));
    if let Ok((x, fx)) = bli::maximize(&mut f, lo, hi, (1e-6 * (hi - lo)).max(delta), &st.bli) {
        if let Some(g) = to_grid(x, delta) {
            if fx > best {
                (best, best_g) = (fx, g);
            }
        }
        for c in nearest(&cats, x, delta) {
            let d = st.node_delta(i, c);
            if d > best {
                (best, best_g) = (d, c);
            }
        }
    }
    if best > 1e-12 {
        st.apply_node(i, best_g, best)?;
        Ok(best)
    } else {
        Ok(0.0)
    }
}

fn optimize_category(st: &mut ChainState, gk: i64) -> Result<f64> {
    let m = st.weights.count(gk);
    if m == 0 {
        return Ok(0.0);
    }
    let delta = st.delta();
    let members = st.members(gk);
    let gs = st.cache.group_shift(st.data, &[&members]);
    let z = gk as f64 * delta;
    let s = (0.5 * z.abs()).max(1e-3);
    let stref = &*st;
    let best = if let Some(a) = &st.allowed {
        a.iter()
            .filter(|&&g| g == gk || stref.weights.count(g) == 0)
            .map(|&g| (stref.groups_delta(&gs, &[(gk, m)], &[g]), g))
            .fold((0.0, gk), |b, c| if c.0 > b.0 { c } else { b })
    } else {
        let mut f = |x: f64| match to_grid(x, delta) {
            Some(g) if g != 0 && (g == gk || stref.weights.count(g) == 0) => stref.groups_delta(&gs, &[(gk, m)], &[g]),
            _ => f64::NEG_INFINITY,
        };
        match bli::maximize(&mut f, z - s, z + s, (1e-6 * s).max(delta), &st.bli) {
            Ok((x, fx)) if fx > 0.0 => (fx, to_grid(x, delta).unwrap_or(gk)),
            _ => (0.0, gk),
        }
    };
    if best.0 > 1e-12 && best.1 != gk {
        st.apply_groups(&[(&members, gk, best.1)], best.0)?;
        Ok(best.0)
    } else {
        Ok(0.0)
    }
}

/// Coordinate-ascent MAP search: each iteration selects the `kappa * N`
/// best candidate pairs, maximizes them one by one, then the node
/// parameters and category values. Candidates accumulate into the typical set.
pub fn greedy_map(data: &Dataset, kind: ModelKind, cfg: &SamplerConfig) -> Result<MapEstimate> {
    let init = initial_graph(data, kind, cfg.prior.delta);
    greedy_map_from(data, kind, cfg, &init)
}

/// [`greedy_map`] from a given starting graph.
pub fn greedy_map_from(data: &Dataset, kind: ModelKind, cfg: &SamplerConfig, init: &WeightedGraph) -> Result<MapEstimate> {
    let mut st = ChainState::new(data, kind, init, cfg, None)?;
    let n = data.n_nodes();
    let mut typical = TypicalEdgeSet::new(n);
    typical.extend(st.graph.edges().map(|e| (e.0, e.1)));
    let count = ((cfg.proposal.kappa * n as f64).ceil() as usize).max(1);
    let tol = cfg.greedy.tol_per_node * n as f64;
    // only the heuristic candidate mode draws random pairs
    let mut rng = super::chain::chain_rng(0x5eed, 0);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    while iterations < cfg.greedy.max_iterations {
        iterations += 1;
        let before = st.log_posterior();
        let cands = candidate_pairs(&st, count, &cfg.greedy, &mut rng);
        typical.extend(cands.iter().copied());
        let mut seeded = st.clone();
        greedy_pass(&mut st, &cands, false)?;
        if st.log_posterior() - before < tol {
            greedy_pass(&mut seeded, &cands, true)?;
            if seeded.log_posterior() > st.log_posterior() {
                st = seeded;
            }
        }
        trace.push(st.log_posterior());
        if st.log_posterior() - before < tol {
            converged = true;
            break;
        }
    }
    st.resync()?;
    typical.extend(st.graph.edges().map(|e| (e.0, e.1)));
    Ok(MapEstimate { log_posterior: st.log_posterior(), graph: st.graph.clone(), typical, iterations, trace, converged })
}

/// One round of sequential entry, node and category maximization.
fn greedy_pass(st: &mut ChainState, cands: &[(usize, usize)], seed: bool) -> Result<()> {
    let mut seed = seed;
    for &(i, j) in cands {
        optimize_entry(st, i, j, &mut seed)?;
    }
    if st.nodes.is_some() {
        for i in 0..st.graph.n_nodes() {
            optimize_node(st, i)?;
        }
    }
    let cats: Vec<i64> = st.weights.grid_values().collect();
    for g in cats {
        optimize_category(st, g)?;
    }
    Ok(())
}

/// Snaps a value to the grid as the sampler does.
pub fn snap_to_grid(x: f64, delta: f64) -> f64 {
    grid_index(x, delta).map_or((x / delta).round() * delta, |g| g as f64 * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate_kinetic_ising;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kinetic(g: &WeightedGraph, m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = vec![1.0; g.n_nodes()];
        simulate_kinetic_ising(g, m, &x0, &mut rng).unwrap()
    }

    #[test]
    fn noise_gives_near_empty_map() {
        let data = kinetic(&WeightedGraph::new(20), 200, 1);
        let map = greedy_map(&data, ModelKind::KineticIsing, &SamplerConfig::default()).unwrap();
        assert!(map.graph.n_edges() <= 1, "{} edges", map.graph.n_edges());
        assert!(map.converged);
    }

    #[test]
    fn strong_pair_is_recovered() {
        let mut g = WeightedGraph::new(2);
        g.set_entry(0, 1, 2.0).unwrap();
        let data = kinetic(&g, 500, 2);
        let map = greedy_map(&data, ModelKind::KineticIsing, &SamplerConfig::default()).unwrap();
        // independent check: a dense scan of the one-dimensional likelihood
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 1..4000 {
            let w = k as f64 * 1e-3;
            let mut h = WeightedGraph::new(2);
            h.set_entry(0, 1, w).unwrap();
            let ll = crate::models::log_likelihood(&data, &h, ModelKind::KineticIsing).unwrap();
            if ll > best.0 {
                best = (ll, w);
            }
        }
        let w = map.graph.get(0, 1);
        assert!((w - 2.0).abs() < 0.3, "w = {w}");
        assert!((w - best.1).abs() < 0.05, "w = {w}, scan {}", best.1);
    }

    #[test]
    fn typical_set_covers_map_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = crate::synthetic::gen_er_weighted(30, 3.0, 0.6, 0.05, &mut rng).unwrap();
        let data = kinetic(&truth, 400, 4);
        let map = greedy_map(&data, ModelKind::KineticIsing, &SamplerConfig::default()).unwrap();
        assert!(map.graph.n_edges() > 0);
        for (i, j, _) in map.graph.edges() {
            assert!(map.typical.contains(i, j));
        }
        let s = crate::graph::jaccard_similarity(&map.graph, &truth).unwrap();
        assert!(s > 0.5, "similarity {s}");
    }
}
