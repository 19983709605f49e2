use serde::{Deserialize, Serialize};

use crate::bli::BliConfig;
use crate::error::{Error, Result};
use crate::prior::{DEFAULT_DELTA, DEFAULT_LAMBDA};

/// Entry-selection and value-proposal parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    /// Weight of proposals from the typical edge set.
    pub w_t: f64,
    /// Weight of uniform proposals; must be positive.
    pub w_u: f64,
    /// Weight of "nearby" proposals.
    pub w_n: f64,
    /// Hop bound for nearby proposals.
    pub d: usize,
    /// Candidates per node in each greedy iteration.
    pub kappa: f64,
    /// Sweeps during which the typical set keeps growing.
    pub tau: usize,
    /// Replacement moves: probability of drawing the new endpoint from the typical set.
    pub p: f64,
    /// Replacement moves: probability of a reachable rather than uniform endpoint.
    pub q: f64,
    pub bisection_min: usize,
    pub bisection_max: usize,
    pub epsilon_bracket: f64,
    pub epsilon_stop: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        let bli = BliConfig::default();
        ProposalConfig {
            w_t: 1.0,
            w_u: 0.1,
            w_n: 0.5,
            d: 2,
            kappa: 1.0,
            tau: 10,
            p: 0.5,
            q: 0.9,
            bisection_min: bli.bisection_min,
            bisection_max: bli.bisection_max,
            epsilon_bracket: bli.epsilon_bracket,
            epsilon_stop: bli.epsilon_stop,
        }
    }
}

impl ProposalConfig {
    pub fn bli(&self) -> BliConfig {
        BliConfig {
            bisection_min: self.bisection_min,
            bisection_max: self.bisection_max,
            epsilon_bracket: self.epsilon_bracket,
            epsilon_stop: self.epsilon_stop,
            ..BliConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_u > 0.0) {
            return Err(Error::Config("w_u must be positive for ergodicity".into()));
        }
        if !(self.w_t >= 0.0) || !(self.w_n >= 0.0) {
            return Err(Error::Config("proposal weights must be nonnegative".into()));
        }
        if self.w_n > 0.0 && self.d == 0 {
            return Err(Error::Config("nearby proposals need d >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Config("p and q must lie in [0, 1]".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        self.bli().validate()
    }
}

/// Hyperparameters of the weight prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub lambda: f64,
    pub delta: f64,
    /// Restricts nonzero weights to this finite set.
    pub allowed_values: Option<Vec<f64>>,
    /// Upper bound on the number of weight categories.
    pub max_categories: Option<usize>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { lambda: DEFAULT_LAMBDA, delta: DEFAULT_DELTA, allowed_values: None, max_categories: None }
    }
}

/// Moves per sweep besides the entry proposals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub entry_moves_per_node: f64,
    pub node_moves_per_node: f64,
    pub category_moves: usize,
    pub partition_moves: usize,
    pub replacement_per_node: f64,
    pub swap_per_node: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            entry_moves_per_node: 1.0,
            node_moves_per_node: 0.1,
            category_moves: 10,
            partition_moves: 5,
            replacement_per_node: 0.1,
            swap_per_node: 0.05,
        }
    }
}

impl Schedule {
    /// Only entry proposals.
    pub fn entries_only() -> Self {
        Schedule {
            entry_moves_per_node: 1.0,
            node_moves_per_node: 0.0,
            category_moves: 0,
            partition_moves: 0,
            replacement_per_node: 0.0,
            swap_per_node: 0.0,
        }
    }

    pub(crate) fn count(per_node: f64, n: usize) -> usize {
        (per_node * n as f64).round() as usize
    }
}

/// Greedy MAP search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyConfig {
    /// Stop once an iteration improves the log posterior by less than `tol_per_node * N`.
    pub tol_per_node: f64,
    pub max_iterations: usize,
    /// Above this many nodes candidates come from a heuristic search.
    pub exhaustive_limit: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { tol_per_node: 1e-4, max_iterations: 50, exhaustive_limit: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub proposal: ProposalConfig,
    pub prior: PriorConfig,
    pub schedule: Schedule,
    pub greedy: GreedyConfig,
    pub sample_node_params: bool,
    pub sample_partition: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            proposal: ProposalConfig::default(),
            prior: PriorConfig::default(),
            schedule: Schedule::default(),
            greedy: GreedyConfig::default(),
            sample_node_params: true,
            sample_partition: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        self.proposal.validate()?;
        if !(self.prior.lambda > 0.0) || !(self.prior.delta > 0.0) {
            return Err(Error::Config("lambda and delta must be positive".into()));
        }
        if let Some(vals) = &self.prior.allowed_values {
            if vals.iter().any(|v| *v == 0.0 || !v.is_finite()) {
                return Err(Error::Config("allowed_values must be finite and nonzero".into()));
            }
            if vals.iter().any(|&v| crate::prior::grid_index(v, self.prior.delta).is_none()) {
                return Err(Error::Config("allowed_values must lie on the delta grid".into()));
            }
        }
        if self.prior.max_categories == Some(0) {
            return Err(Error::Config("max_categories must be at least 1".into()));
        }
        let s = &self.schedule;
        if [s.entry_moves_per_node, s.node_moves_per_node, s.replacement_per_node, s.swap_per_node]
            .iter()
            .any(|x| !(*x >= 0.0))
        {
            return Err(Error::Config("schedule rates must be nonnegative".into()));
        }
        Ok(())
    }
}
