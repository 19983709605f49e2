//! The generate -> reconstruct -> sample -> compare pipeline on files in a temp directory.

use netrecon::pipeline::{cmd_compare, cmd_generate, cmd_reconstruct, cmd_sample, CompareConfig, GenerateConfig, ReconstructConfig, SampleConfig};
use serde_json::json;

fn main() -> netrecon::Result<()> {
    let dir = std::env::temp_dir().join(format!("netrecon-pipeline-{}", std::process::id()));
    let gen: GenerateConfig = serde_json::from_value(json!({"N": 20, "M": 300, "model": "kinetic-ising", "seed": 1, "avg_degree": 3.0, "w_mean": 0.5}))?;
    cmd_generate(&gen, &dir.join("gen"))?;
    let rec: ReconstructConfig = serde_json::from_value(json!({"dataset": dir.join("gen/data.csv")}))?;
    let man = cmd_reconstruct(&rec, &dir.join("rec"))?;
    println!("reconstruct: {}", man.info);
    let smp: SampleConfig = serde_json::from_value(json!({
        "dataset": dir.join("gen/data.csv"), "seed": 2, "chains": 2, "burn_in": 50, "sweeps": 300, "thin": 10,
        "init": {"graph": dir.join("rec/map.tsv"), "theta": dir.join("rec/map_theta.tsv"), "typical": dir.join("rec/typical.tsv")},
        "truth": dir.join("gen/truth.tsv"),
    }))?;
    let man = cmd_sample(&smp, &dir.join("sample"))?;
    println!("sample: {} files, similarity {}", man.outputs.len(), man.info["similarity"]);
    let cmp: CompareConfig = serde_json::from_value(json!({"dataset": dir.join("gen/data.csv"), "marginals": dir.join("sample/marginals.tsv")}))?;
    let man = cmd_compare(&cmp, &dir.join("compare"))?;
    println!("compare: {}", man.info);
    println!("outputs under {}", dir.display());
    Ok(())
}
