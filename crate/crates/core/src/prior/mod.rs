//! Description-length prior for quantized weights, and the block-model
//! placement prior for the nonzero pattern.

mod categories;
mod sbm;

pub use categories::{Categories, CategoryChange, CategoryState, CategorySummary};
pub use sbm::{log_partition_prior, SbmState};

use crate::graph::WeightedGraph;

/// Default decay of the quantized Laplace prior.
pub const DEFAULT_LAMBDA: f64 = 1.0;
/// Default quantization step.
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Snaps `x` to the nearest grid index of step `delta`, or `None` if `x` is
/// further than a relative `1e-9` cell from a grid point.
pub fn grid_index(x: f64, delta: f64) -> Option<i64> {
    let g = (x / delta).round();
    if !g.is_finite() || g.abs() > 9.0e15 {
        return None;
    }
    let tol = 1e-9 * delta * g.abs().max(1.0);
    ((g * delta - x).abs() <= tol).then_some(g as i64)
}

/// `ln P(z | lambda, delta)` for the zero-excluded quantized Laplace law.
pub fn log_quantized_laplace(z: f64, lambda: f64, delta: f64) -> f64 {
    match grid_index(z, delta) {
        Some(g) if g != 0 => log_quantized_laplace_grid(g, lambda, delta),
        _ => f64::NEG_INFINITY,
    }
}

/// Same as [`log_quantized_laplace`] for the grid value `g * delta`.
pub fn log_quantized_laplace_grid(g: i64, lambda: f64, delta: f64) -> f64 {
    if g == 0 {
        return f64::NEG_INFINITY;
    }
    -lambda * (g.unsigned_abs() as f64) * delta + (lambda * delta).exp_m1().ln() - std::f64::consts::LN_2
}

/// Quantized Laplace law with zero allowed (node parameters).
pub fn log_quantized_laplace_zero_grid(g: i64, lambda: f64, delta: f64) -> f64 {
    -lambda * (g.unsigned_abs() as f64) * delta + (0.5 * lambda * delta).tanh().ln()
}

/// Full log prior: weight categories, node-parameter categories and the
/// placement prior. `None` parts are left out.
pub fn log_prior_total(weights: &Categories, nodes: Option<&Categories>, sbm: Option<&SbmState>) -> f64 {
    weights.log_prior() + nodes.map_or(0.0, Categories::log_prior) + sbm.map_or(0.0, SbmState::log_prior)
}

/// Categories built from the nonzero entries of `graph`.
pub fn weight_categories_of(graph: &WeightedGraph, lambda: f64, delta: f64) -> crate::Result<Categories> {
    Categories::from_values(false, lambda, delta, graph.edges().map(|e| e.2))
}

/// Categories built from the node parameters of `graph`.
pub fn node_categories_of(graph: &WeightedGraph, lambda: f64, delta: f64) -> crate::Result<Categories> {
    Categories::from_values(true, lambda, delta, graph.theta.iter().copied())
}
