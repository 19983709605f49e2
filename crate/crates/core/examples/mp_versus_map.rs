//! Marginal-posterior estimate against the MAP estimate as the sample size grows.

use netrecon::graph::jaccard_similarity;
use netrecon::models::ModelKind;
use netrecon::pipeline::{sample_posterior, SampleConfig};
use netrecon::sampler::{chain_rng, greedy_map, SamplerConfig};
use netrecon::synthetic::{gen_planted_partition, simulate, weigh};
use rand_distr::{Distribution, Normal};

fn main() -> netrecon::Result<()> {
    let mut rng = chain_rng(8, 0);
    let (d, _) = gen_planted_partition(40, 2, 3.0, 0.9, &mut rng)?;
    let normal = Normal::new(0.3, 0.05).unwrap();
    let truth = weigh(&d, |r: &mut rand_chacha::ChaCha8Rng| normal.sample(r), &mut rng);
    for m in [50, 100, 200, 400] {
        let data = simulate(&truth, ModelKind::KineticIsing, m, &mut rng)?;
        let map = greedy_map(&data, ModelKind::KineticIsing, &SamplerConfig::default())?;
        let cfg: SampleConfig = serde_json::from_str(r#"{"dataset": "", "seed": 1, "burn_in": 100, "sweeps": 600, "snapshots": false}"#)?;
        let run = sample_posterior(&data, ModelKind::KineticIsing, &cfg, Some((map.graph.clone(), map.typical)), Some(&truth))?;
        println!(
            "M {m:>4}: similarity MAP {:.3}  MP {:.3}",
            jaccard_similarity(&map.graph, &truth)?,
            jaccard_similarity(&run.mp, &truth)?
        );
    }
    Ok(())
}
