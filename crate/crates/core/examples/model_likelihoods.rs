//! Simulate each supported model on the same graph and evaluate its likelihood.

use netrecon::models::{log_likelihood, ModelKind};
use netrecon::sampler::chain_rng;
use netrecon::synthetic::simulate;
use netrecon::WeightedGraph;

fn main() -> netrecon::Result<()> {
    let n = 6;
    let mut g = WeightedGraph::new(n);
    for i in 0..n {
        g.set_entry(i, (i + 1) % n, 0.3)?;
    }
    let mut rng = chain_rng(4, 0);
    for kind in [ModelKind::KineticIsing, ModelKind::EquilibriumIsing, ModelKind::ZeroIsing, ModelKind::Gaussian] {
        let mut truth = g.clone();
        if kind == ModelKind::Gaussian {
            truth.theta.iter_mut().for_each(|t| *t = 1.0);
        }
        let data = simulate(&truth, kind, 200, &mut rng)?;
        let ll = log_likelihood(&data, &truth, kind)?;
        println!("{:<18} {:>6} samples  log-likelihood {ll:10.2}", kind.tag(), data.n_samples());
    }
    Ok(())
}
