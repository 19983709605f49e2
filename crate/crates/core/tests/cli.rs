//! End-to-end runs of the `netrecon` binary and file round trips.

use std::fs;
use std::path::Path;
use std::process::Command;

use netrecon::estimators::{MeanKind, PosteriorAccumulator};
use netrecon::io;
use netrecon::sampler::chain_rng;
use netrecon::synthetic::{planted_er, PlantedMeta};
use netrecon::{Dataset, ModelKind, WeightedGraph};

fn netrecon(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_netrecon")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn config(dir: &Path, name: &str, body: serde_json::Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

/// Runs the four pipeline commands in `dir`; returns the printed output hashes.
fn pipeline(dir: &Path) -> Vec<String> {
    let d = |s: &str| dir.join(s).to_str().unwrap().to_string();
    let gen = config(
        dir,
        "gen.json",
        serde_json::json!({"N": 15, "M": 200, "model": "kinetic-ising", "seed": 9, "avg_degree": 3.0, "w_mean": 0.5}),
    );
    let rec = config(dir, "rec.json", serde_json::json!({"dataset": "gen/data.csv"}));
    let smp = config(
        dir,
        "sample.json",
        serde_json::json!({
            "dataset": "gen/data.csv", "seed": 4, "chains": 2, "burn_in": 20, "sweeps": 120, "thin": 20,
            "init": {"graph": "rec/map.tsv", "theta": "rec/map_theta.tsv", "typical": "rec/typical.tsv"},
            "truth": "gen/truth.tsv"
        }),
    );
    let cmp = config(dir, "compare.json", serde_json::json!({"dataset": "gen/data.csv", "marginals": "sample/marginals.tsv"}));
    let mut hashes = Vec::new();
    for (cmd, cfg, out) in [("generate", gen, "gen"), ("reconstruct", rec, "rec"), ("sample", smp, "sample"), ("compare", cmp, "compare")] {
        let (code, stdout) = netrecon(&["--threads", "1", cmd, "--config", &cfg, "--out", &d(out)]);
        assert_eq!(code, 0, "{cmd} failed");
        hashes.extend(stdout.lines().map(String::from));
    }
    hashes
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ha = pipeline(a.path());
    let hb = pipeline(b.path());
    assert!(ha.len() > 10);
    assert_eq!(ha, hb);
    assert!(a.path().join("sample/manifest.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad = config(dir.path(), "bad.json", serde_json::json!({"N": 10, "M": 10, "model": "kinetic-ising", "seed": 1, "avg_degree": -1.0}));
    assert_eq!(netrecon(&["generate", "--config", &bad, "--out", out]).0, 2);
    fs::write(dir.path().join("broken.json"), "{ nope").unwrap();
    let broken = dir.path().join("broken.json");
    assert_eq!(netrecon(&["generate", "--config", broken.to_str().unwrap(), "--out", out]).0, 2);
    let missing = config(dir.path(), "missing.json", serde_json::json!({"dataset": "nowhere.csv", "model": "kinetic-ising"}));
    assert_eq!(netrecon(&["reconstruct", "--config", &missing, "--out", out]).0, 3);
}

#[test]
fn formats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let meta = PlantedMeta { model: ModelKind::Gaussian, n: 12, m: 30, avg_degree: 3.0, w_mean: 0.1, w_sd: 0.02, seed: 2 };
    let inst = planted_er(meta, &mut chain_rng(2, 0)).unwrap();

    let p = dir.path().join("g.tsv");
    io::write_edge_list(&p, &inst.truth).unwrap();
    let mut g = io::read_edge_list(&p, None).unwrap();
    let t = dir.path().join("theta.tsv");
    io::write_theta(&t, &inst.truth.theta).unwrap();
    io::read_theta(&t, &mut g).unwrap();
    assert_eq!(g, inst.truth);

    let p = dir.path().join("x.csv");
    io::write_dataset(&p, &inst.data, Some(ModelKind::Gaussian)).unwrap();
    let back = io::read_dataset(&p).unwrap();
    assert_eq!(back.model, Some(ModelKind::Gaussian));
    assert_eq!(back.data, inst.data);

    // markov and pairs layouts too
    let series: Vec<Vec<f64>> = (0..5).map(|s| (0..3).map(|i| if (s + i) % 2 == 0 { 1.0 } else { -1.0 }).collect()).collect();
    for data in [
        Dataset::from_series(3, &series).unwrap(),
        Dataset::from_pairs(3, &series[..4], &series[1..]).unwrap(),
    ] {
        io::write_dataset(&p, &data, None).unwrap();
        assert_eq!(io::read_dataset(&p).unwrap().data, data);
    }

    let mut acc = PosteriorAccumulator::new(12);
    acc.accumulate(&inst.truth).unwrap();
    acc.accumulate(&WeightedGraph::new(12)).unwrap();
    let m = dir.path().join("marginals.tsv");
    io::write_marginals(&m, &acc, MeanKind::Unconditional).unwrap();
    let rows = io::read_marginals(&m).unwrap();
    assert_eq!(rows.len(), inst.truth.n_edges());
    for r in rows {
        assert_eq!(r.pi, 0.5);
        assert_eq!(r.w_mean, 0.5 * inst.truth.get(r.i, r.j));
    }
}
