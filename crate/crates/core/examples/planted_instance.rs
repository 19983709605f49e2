//! Draw a planted weighted network and simulate kinetic Ising data from it.

use netrecon::models::{log_likelihood, ModelKind};
use netrecon::sampler::chain_rng;
use netrecon::synthetic::{planted_er, PlantedMeta};

fn main() -> netrecon::Result<()> {
    let meta = PlantedMeta { model: ModelKind::KineticIsing, n: 50, m: 400, avg_degree: 4.0, w_mean: 0.25, w_sd: 0.05, seed: 1 };
    let mut rng = chain_rng(meta.seed, 0);
    let inst = planted_er(meta, &mut rng)?;
    println!("nodes {}  edges {}  samples {}", inst.truth.n_nodes(), inst.truth.n_edges(), inst.data.n_samples());
    let ll_truth = log_likelihood(&inst.data, &inst.truth, ModelKind::KineticIsing)?;
    let empty = netrecon::WeightedGraph::new(inst.truth.n_nodes());
    let ll_empty = log_likelihood(&inst.data, &empty, ModelKind::KineticIsing)?;
    println!("log-likelihood  truth {ll_truth:.1}  empty {ll_empty:.1}");
    Ok(())
}
