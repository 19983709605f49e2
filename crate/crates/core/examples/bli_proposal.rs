//! Metropolis-Hastings on a two-mode density with bisection/interpolation proposals.

use netrecon::bli::{self, BliConfig};
use netrecon::math::log_sum_exp;
use netrecon::sampler::chain_rng;
use rand::Rng;

fn log_f(x: f64) -> f64 {
    log_sum_exp(&[0.4f64.ln() - 0.5 * ((x + 2.0) / 0.3).powi(2) - 0.3f64.ln(), 0.6f64.ln() - 0.5 * ((x - 1.5) / 0.5).powi(2) - 0.5f64.ln()])
}

fn main() -> netrecon::Result<()> {
    let mut rng = chain_rng(11, 0);
    for b in [0, 2, 4, 8] {
        let cfg = BliConfig { bisection_min: b, bisection_max: b, epsilon_stop: 0.0, ..BliConfig::default() };
        let (mut x, mut lx) = (0.0, log_f(0.0));
        let (mut acc, mut left) = (0, 0);
        let steps = 20_000;
        for _ in 0..steps {
            let mut f = log_f;
            let (y, lq_y, lq_x) = bli::propose(&mut f, x, -1.0, 1.0, &cfg, &mut rng)?;
            let ly = log_f(y);
            if rng.random::<f64>().ln() < ly - lx + lq_x - lq_y {
                (x, lx) = (y, ly);
                acc += 1;
            }
            left += usize::from(x < 0.0);
        }
        println!("bisections {b}: acceptance {:.2}  mass left of 0 {:.3} (exact 0.400)", acc as f64 / steps as f64, left as f64 / steps as f64);
    }
    Ok(())
}
