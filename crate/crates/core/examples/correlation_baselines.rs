//! Covariance, Pearson and mutual-information baselines, with the triangle bounds.

use netrecon::estimators::{mi_violations, pairwise_baselines, pearson_lower_bound, pearson_violations};
use netrecon::models::ModelKind;
use netrecon::sampler::chain_rng;
use netrecon::synthetic::{planted_er, PlantedMeta};

fn main() -> netrecon::Result<()> {
    let meta = PlantedMeta { model: ModelKind::EquilibriumIsing, n: 30, m: 2000, avg_degree: 3.0, w_mean: 0.4, w_sd: 0.1, seed: 6 };
    let inst = planted_er(meta, &mut chain_rng(6, 0))?;
    let mut base = pairwise_baselines(&inst.data)?;
    base.sort_by(|a, b| b.mi.total_cmp(&a.mi));
    println!("top pairs by mutual information (edge in truth?):");
    for b in base.iter().take(8) {
        println!("  ({:>2},{:>2}) mi {:.3} pearson {:+.3}  {}", b.i, b.j, b.mi, b.pearson.unwrap_or(f64::NAN), inst.truth.has_edge(b.i, b.j));
    }
    println!("corr(x,y) = corr(y,z) = 0.99 forces corr(x,z) >= {:.4}", pearson_lower_bound(0.99, 0.99));
    println!("violations: pearson {}  mi {}", pearson_violations(&base, 30, 1e-9).len(), mi_violations(&inst.data, &base, 1e-9).len());
    Ok(())
}
