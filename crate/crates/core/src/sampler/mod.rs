//! Metropolis-Hastings sampling of weighted graphs, plus the greedy MAP
//! search that seeds it.

mod chain;
mod config;
mod factorized;
mod greedy;
mod proposal;
mod state;
mod typical;

pub use chain::{chain_rng, CategoryMove, Chain, MoveCounts, MoveStats, SweepStats};
pub use config::{GreedyConfig, PriorConfig, ProposalConfig, SamplerConfig, Schedule};
pub use factorized::{FactorizedChain, FactorizedTarget};
pub use greedy::{candidate_pairs, greedy_map, greedy_map_from, initial_graph, snap_to_grid, MapEstimate};
pub use state::ChainState;
pub use typical::{EntrySelector, TypicalEdgeSet};
