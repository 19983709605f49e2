//! Sample the posterior from the MAP estimate, then build marginals and the MP estimate.

use netrecon::estimators::{integrated_autocorrelation_time, MeanKind, PosteriorAccumulator, SimilarityTrace};
use netrecon::graph::jaccard_similarity;
use netrecon::models::ModelKind;
use netrecon::sampler::{chain_rng, Chain, SamplerConfig};
use netrecon::synthetic::{planted_er, PlantedMeta};

fn main() -> netrecon::Result<()> {
    let meta = PlantedMeta { model: ModelKind::KineticIsing, n: 40, m: 150, avg_degree: 3.0, w_mean: 0.5, w_sd: 0.1, seed: 3 };
    let inst = planted_er(meta, &mut chain_rng(3, 0))?;
    let mut chain = Chain::from_map(&inst.data, ModelKind::KineticIsing, SamplerConfig::default(), chain_rng(3, 1))?;
    let map = chain.graph().clone();
    let mut acc = PosteriorAccumulator::new(40);
    let mut trace = SimilarityTrace::default();
    for s in 0..2000 {
        chain.sweep();
        if s >= 200 {
            acc.accumulate(chain.graph())?;
            trace.push(chain.graph(), &inst.truth)?;
        }
    }
    let mp = acc.mp_estimate(MeanKind::Unconditional)?;
    let s = chain.stats();
    println!("entry acceptance {:.3}  replacement {:.3}  swap {:.3}", s.entry.rate(), s.replacement.rate(), s.swap.rate());
    println!("tau_int of similarity trace {:.1} sweeps", integrated_autocorrelation_time(&trace.values)?);
    println!("similarity to truth: MAP {:.3}  MP {:.3}", jaccard_similarity(&map, &inst.truth)?, jaccard_similarity(&mp, &inst.truth)?);
    Ok(())
}
