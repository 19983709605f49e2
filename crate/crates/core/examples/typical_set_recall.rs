//! How much of the posterior mass the typical edge set covers as it grows.

use netrecon::estimators::{cumulative_recall, PosteriorAccumulator};
use netrecon::models::ModelKind;
use netrecon::sampler::{chain_rng, greedy_map, Chain, SamplerConfig};
use netrecon::synthetic::{planted_er, PlantedMeta};

fn main() -> netrecon::Result<()> {
    let meta = PlantedMeta { model: ModelKind::KineticIsing, n: 60, m: 300, avg_degree: 4.0, w_mean: 0.3, w_sd: 0.05, seed: 5 };
    let inst = planted_er(meta, &mut chain_rng(5, 0))?;
    let mut cfg = SamplerConfig::default();
    cfg.proposal.tau = 20;
    let map = greedy_map(&inst.data, ModelKind::KineticIsing, &cfg)?;
    let mut chain = Chain::new(&inst.data, ModelKind::KineticIsing, &map.graph, map.typical.clone(), cfg, chain_rng(5, 1))?;
    let mut acc = PosteriorAccumulator::new(60);
    let mut snapshots = vec![(0, map.typical.clone())];
    for s in 1..=1500 {
        chain.sweep();
        if [1, 5, 20].contains(&s) {
            snapshots.push((s, chain.typical().clone()));
        }
        if s > 100 {
            acc.accumulate(chain.graph())?;
        }
    }
    for (tau, typical) in &snapshots {
        let r = cumulative_recall(typical, &acc, &[0.5, 0.9]);
        println!("tau {tau:>2}: |E| = {:>4}  recall(pi>=0.5) {:.3}  recall(pi>=0.9) {:.3}", typical.len(), r[0].1, r[1].1);
    }
    Ok(())
}
