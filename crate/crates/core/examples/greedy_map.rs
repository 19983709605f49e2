//! Greedy MAP reconstruction of a planted network.

use netrecon::graph::jaccard_similarity;
use netrecon::models::ModelKind;
use netrecon::sampler::{chain_rng, greedy_map, SamplerConfig};
use netrecon::synthetic::{planted_er, PlantedMeta};

fn main() -> netrecon::Result<()> {
    let meta = PlantedMeta { model: ModelKind::KineticIsing, n: 60, m: 800, avg_degree: 4.0, w_mean: 0.4, w_sd: 0.1, seed: 2 };
    let inst = planted_er(meta, &mut chain_rng(2, 0))?;
    let map = greedy_map(&inst.data, ModelKind::KineticIsing, &SamplerConfig::default())?;
    println!(
        "iterations {} converged {}  edges {} (true {})  typical set {}",
        map.iterations,
        map.converged,
        map.graph.n_edges(),
        inst.truth.n_edges(),
        map.typical.len()
    );
    println!("similarity to truth {:.3}", jaccard_similarity(&map.graph, &inst.truth)?);
    Ok(())
}
