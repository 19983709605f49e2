//! Autocorrelation time against N on the factorized target, uniform vs nearby proposals.

use netrecon::pipeline::{bench_scaling, BenchConfig};

fn main() -> netrecon::Result<()> {
    let cfg: BenchConfig = serde_json::from_str(r#"{"seed": 1, "sizes": [50, 100, 200], "sweeps": 4000}"#)?;
    let (points, slopes) = bench_scaling(&cfg)?;
    for p in &points {
        println!("N {:>4}  {:<8} tau_int {:8.1}  acceptance {:.2}", p.n, p.mix, p.tau_int, p.acceptance);
    }
    for (mix, s) in slopes {
        println!("{mix}: log-log slope {s:.2}");
    }
    Ok(())
}
