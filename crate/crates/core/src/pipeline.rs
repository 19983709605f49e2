//! File-based commands behind the `netrecon` binary.
//!
//! Every command reads a JSON config, validates it before doing any work,
//! writes its outputs into a directory and finishes with a `manifest.json`
//! listing inputs, outputs (with SHA-256 hashes) and timings. Relative paths
//! inside a config are resolved against the config file's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    autocorrelation, integrated_autocorrelation_time, mi_violations, pairwise_baselines, pearson_violations,
    threshold_reconstruction_compare, HistogramRange, MeanKind, PosteriorAccumulator, SimilarityTrace, ThresholdPoint,
};
use crate::graph::{jaccard_similarity, Dichotomization, WeightedGraph};
use crate::io::{self, Diagnostics, FileRecord, RunManifest, SnapshotRecord};
use crate::models::{simulate_kinetic_ising_parallel, Dataset, ModelKind};
use crate::prior::CategoryState;
use crate::sampler::{
    chain_rng, greedy_map, greedy_map_from, Chain, FactorizedChain, MoveStats, SamplerConfig, TypicalEdgeSet,
};
use crate::synthetic::{self, FactorizedTarget};

/// Loads a config and resolves its relative paths against the file's directory.
pub fn load_config<T: for<'de> Deserialize<'de> + ResolvePaths>(path: &Path) -> Result<T> {
    let mut cfg: T = io::read_json(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.resolve(&base);
    Ok(cfg)
}

pub trait ResolvePaths {
    fn resolve(&mut self, base: &Path);
}

fn resolve(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Records `path` under its name relative to `dir`.
fn record(dir: &Path, path: &Path) -> Result<FileRecord> {
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileRecord { path: rel.display().to_string(), sha256: io::sha256_file(path)? })
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

// ---------------------------------------------------------------- generate

/// Graph family of a synthetic instance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    #[default]
    Er,
    PlantedPartition { groups: usize, within: f64 },
    TriangleEnriched { rounds: usize },
}

/// How kinetic Ising data are simulated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transitions {
    /// One chain of `M` steps.
    #[default]
    Series,
    /// `M` independent steps, each from a random state.
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub model: ModelKind,
    pub seed: u64,
    #[serde(default)]
    pub generator: Generator,
    #[serde(default = "default_avg_degree")]
    pub avg_degree: f64,
    /// Defaults to `1 / avg_degree` (half that for the Gaussian model).
    #[serde(default)]
    pub w_mean: Option<f64>,
    #[serde(default = "default_w_sd")]
    pub w_sd: f64,
    #[serde(default)]
    pub transitions: Transitions,
}

fn default_avg_degree() -> f64 {
    5.0
}

fn default_w_sd() -> f64 {
    0.01
}

impl ResolvePaths for GenerateConfig {
    fn resolve(&mut self, _: &Path) {}
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m == 0 {
            return Err(Error::Config("need N >= 2 and M >= 1".into()));
        }
        if !(self.avg_degree >= 0.0) || self.avg_degree >= (self.n - 1) as f64 {
            return Err(Error::Config(format!("avg_degree must lie in [0, N-1), got {}", self.avg_degree)));
        }
        if !(self.w_sd >= 0.0) || self.w_mean.is_some_and(|w| !w.is_finite()) {
            return Err(Error::Config("w_mean must be finite and w_sd nonnegative".into()));
        }
        match self.generator {
            Generator::PlantedPartition { groups, within } if groups == 0 || groups > self.n || !(0.0..=1.0).contains(&within) => {
                Err(Error::Config("planted partition needs 1 <= groups <= N and within in [0, 1]".into()))
            }
            Generator::TriangleEnriched { rounds: 0 } => Err(Error::Config("rounds must be positive".into())),
            _ => Ok(()),
        }
    }

    fn w_mean(&self) -> f64 {
        self.w_mean.unwrap_or_else(|| {
            let base = if self.avg_degree > 0.0 { 1.0 / self.avg_degree } else { 0.2 };
            if self.model == ModelKind::Gaussian {
                0.5 * base
            } else {
                base
            }
        })
    }
}

/// A generated truth and its data, before anything is written.
#[derive(Clone, Debug)]
pub struct Instance {
    pub truth: WeightedGraph,
    pub data: Dataset,
    /// Planted block labels, if the generator has them.
    pub labels: Option<Vec<usize>>,
}

pub fn generate_instance(cfg: &GenerateConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = chain_rng(cfg.seed, 0);
    let e = (cfg.n as f64 * cfg.avg_degree / 2.0).round() as usize;
    let (d, labels) = match cfg.generator {
        Generator::Er => (synthetic::gen_er(cfg.n, e, &mut rng)?, None),
        Generator::PlantedPartition { groups, within } => {
            let (d, l) = synthetic::gen_planted_partition(cfg.n, groups, cfg.avg_degree, within, &mut rng)?;
            (d, Some(l))
        }
        Generator::TriangleEnriched { rounds } => (synthetic::gen_triangle_enriched(cfg.n, e, rounds, &mut rng)?.graph, None),
    };
    let normal = Normal::new(cfg.w_mean(), cfg.w_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut truth = synthetic::weigh(&d, |r: &mut rand_chacha::ChaCha8Rng| normal.sample(r), &mut rng);
    if cfg.model == ModelKind::Gaussian {
        truth.theta.iter_mut().for_each(|t| *t = 1.0);
    }
    let data = match (cfg.model, cfg.transitions) {
        (ModelKind::KineticIsing, Transitions::Parallel) => simulate_kinetic_ising_parallel(&truth, cfg.m, &mut rng)?,
        (model, _) => synthetic::simulate(&truth, model, cfg.m, &mut rng)?,
    };
    Ok(Instance { truth, data, labels })
}

/// Writes `truth.tsv`, `data.csv` (plus `truth_theta.tsv` for the Gaussian
/// model and `labels.tsv` for planted partitions) and `manifest.json`.
pub fn cmd_generate(cfg: &GenerateConfig, out: &Path) -> Result<RunManifest> {
    let t0 = Instant::now();
    let inst = generate_instance(cfg)?;
    let mut man = RunManifest::new("generate", Some(cfg.seed), serde_json::to_value(cfg)?);
    man.timings.insert("generate".into(), secs(t0));
    let t1 = Instant::now();
    let mut files = vec![out.join("truth.tsv"), out.join("data.csv")];
    io::write_edge_list(&files[0], &inst.truth)?;
    io::write_dataset(&files[1], &inst.data, Some(cfg.model))?;
    if cfg.model == ModelKind::Gaussian {
        files.push(out.join("truth_theta.tsv"));
        io::write_theta(&files[2], &inst.truth.theta)?;
    }
    if let Some(l) = &inst.labels {
        let p = out.join("labels.tsv");
        let text: String = l.iter().enumerate().map(|(i, b)| format!("{i}\t{b}\n")).collect();
        io::write_file(&p, &text)?;
        files.push(p);
    }
    for f in &files {
        man.outputs.push(record(out, f)?);
    }
    man.timings.insert("write".into(), secs(t1));
    man.info = serde_json::json!({ "n_edges": inst.truth.n_edges() });
    man.write(&out.join("manifest.json"))?;
    Ok(man)
}

// ------------------------------------------------------------- reconstruct

/// Starting point for greedy search or sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFiles {
    pub graph: PathBuf,
    #[serde(default)]
    pub theta: Option<PathBuf>,
    /// Typical edge set as `i\tj` lines.
    #[serde(default)]
    pub typical: Option<PathBuf>,
}

impl InitFiles {
    fn resolve(&mut self, base: &Path) {
        resolve(&mut self.graph, base);
        if let Some(p) = &mut self.theta {
            resolve(p, base);
        }
        if let Some(p) = &mut self.typical {
            resolve(p, base);
        }
    }

    fn load(&self, n: usize, man: &mut RunManifest) -> Result<(WeightedGraph, TypicalEdgeSet)> {
        let mut g = io::read_edge_list(&self.graph, Some(n))?;
        man.add_input(&self.graph)?;
        if let Some(p) = &self.theta {
            io::read_theta(p, &mut g)?;
            man.add_input(p)?;
        }
        let mut typical = TypicalEdgeSet::new(n);
        if let Some(p) = &self.typical {
            let pairs = io::read_pairs(p)?;
            if pairs.iter().any(|&(i, j)| i >= n || j >= n || i == j) {
                return Err(Error::Data(format!("{}: pair out of range", p.display())));
            }
            typical.extend(pairs);
            man.add_input(p)?;
        }
        Ok((g, typical))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub dataset: PathBuf,
    /// Overrides nothing: must agree with the dataset header when both are given.
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub init: Option<InitFiles>,
}

impl ResolvePaths for ReconstructConfig {
    fn resolve(&mut self, base: &Path) {
        resolve(&mut self.dataset, base);
        if let Some(i) = &mut self.init {
            i.resolve(base);
        }
    }
}

/// Reads a dataset and settles the model from the config and the header.
pub fn load_dataset(path: &Path, model: Option<ModelKind>) -> Result<(Dataset, ModelKind)> {
    let f = io::read_dataset(path)?;
    let kind = match (model, f.model) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Data(format!("config model {a} does not match dataset model {b}")))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(Error::Config("no model given in the config or the dataset header".into())),
    };
    f.data.validate_for(kind)?;
    Ok((f.data, kind))
}

/// Writes `map.tsv`, `map_theta.tsv`, `typical.tsv`, `trace.tsv` and `manifest.json`.
pub fn cmd_reconstruct(cfg: &ReconstructConfig, out: &Path) -> Result<RunManifest> {
    cfg.sampler.validate()?;
    let mut man = RunManifest::new("reconstruct", None, serde_json::to_value(cfg)?);
    let t0 = Instant::now();
    let (data, kind) = load_dataset(&cfg.dataset, cfg.model)?;
    man.add_input(&cfg.dataset)?;
    let init = match &cfg.init {
        Some(f) => Some(f.load(data.n_nodes(), &mut man)?),
        None => None,
    };
    man.timings.insert("load".into(), secs(t0));
    let t1 = Instant::now();
    let map = match &init {
        Some((g, _)) => greedy_map_from(&data, kind, &cfg.sampler, g)?,
        None => greedy_map(&data, kind, &cfg.sampler)?,
    };
    man.timings.insert("greedy".into(), secs(t1));
    let t2 = Instant::now();
    let mut typical = map.typical.clone();
    if let Some((_, t)) = init {
        typical.extend(t.pairs());
    }
    let files = [out.join("map.tsv"), out.join("map_theta.tsv"), out.join("typical.tsv"), out.join("trace.tsv")];
    io::write_edge_list(&files[0], &map.graph)?;
    io::write_theta(&files[1], &map.graph.theta)?;
    io::write_pairs(&files[2], &typical.sorted_pairs())?;
    let trace: String = map.trace.iter().enumerate().map(|(k, lp)| format!("{}\t{}\n", k + 1, io::fmt_f64(*lp))).collect();
    io::write_file(&files[3], &format!("# iteration\tlog_posterior\n{trace}"))?;
    for f in &files {
        man.outputs.push(record(out, f)?);
    }
    man.timings.insert("write".into(), secs(t2));
    man.info = serde_json::json!({
        "iterations": map.iterations,
        "converged": map.converged,
        "log_posterior": map.log_posterior,
        "n_edges": map.graph.n_edges(),
        "typical_size": typical.len(),
    });
    man.write(&out.join("manifest.json"))?;
    Ok(man)
}

// ------------------------------------------------------------------ sample

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub model: Option<ModelKind>,
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
    /// Sweeps discarded at the start of each chain.
    pub burn_in: usize,
    /// Total sweeps per chain, burn-in included.
    pub sweeps: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Starting graph; the greedy MAP estimate when absent.
    #[serde(default)]
    pub init: Option<InitFiles>,
    /// Similarity traces are taken against this graph when given, else
    /// against the starting graph.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Write one edge list per retained sample.
    #[serde(default = "yes")]
    pub snapshots: bool,
    #[serde(default)]
    pub mean: MeanKind,
    #[serde(default)]
    pub histogram: Option<HistogramRange>,
    #[serde(default = "default_lags")]
    pub acf_lags: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_lags() -> usize {
    100
}

impl ResolvePaths for SampleConfig {
    fn resolve(&mut self, base: &Path) {
        resolve(&mut self.dataset, base);
        if let Some(i) = &mut self.init {
            i.resolve(base);
        }
        if let Some(p) = &mut self.truth {
            resolve(p, base);
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.burn_in >= self.sweeps {
            return Err(Error::Config(format!("burn_in ({}) must be below sweeps ({})", self.burn_in, self.sweeps)));
        }
        if self.chains == 0 || self.thin == 0 {
            return Err(Error::Config("chains and thin must be positive".into()));
        }
        if let Some(h) = &self.histogram {
            if !(h.hi > h.lo) {
                return Err(Error::Config("histogram needs hi > lo".into()));
            }
        }
        Ok(())
    }
}

/// One retained sample.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub sweep: usize,
    pub graph: WeightedGraph,
    pub log_posterior: f64,
    pub categories: CategoryState,
    pub partition: Vec<usize>,
}

/// Everything one chain produced.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub accumulator: PosteriorAccumulator,
    pub trace: SimilarityTrace,
    pub snapshots: Vec<Snapshot>,
    pub stats: MoveStats,
    pub final_log_posterior: f64,
}

/// Runs one chain from `init` with the burn-in and thinning of `cfg`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    data: &Dataset,
    kind: ModelKind,
    init: &WeightedGraph,
    typical: TypicalEdgeSet,
    reference: &WeightedGraph,
    cfg: &SampleConfig,
    chain: usize,
) -> Result<ChainRun> {
    let mut c = Chain::new(data, kind, init, typical, cfg.sampler.clone(), chain_rng(cfg.seed, chain as u64))?;
    let n = data.n_nodes();
    let mut acc = match cfg.histogram {
        Some(r) => PosteriorAccumulator::with_histograms(n, r)?,
        None => PosteriorAccumulator::new(n),
    };
    let mut trace = SimilarityTrace::default();
    let mut snaps = Vec::new();
    for s in 1..=cfg.sweeps {
        c.sweep();
        if s <= cfg.burn_in {
            continue;
        }
        trace.push(c.graph(), reference)?;
        if (s - cfg.burn_in) % cfg.thin == 0 {
            acc.accumulate(c.graph())?;
            if cfg.snapshots {
                snaps.push(Snapshot {
                    sweep: s,
                    graph: c.graph().clone(),
                    log_posterior: c.log_posterior(),
                    categories: c.state().weight_categories().state(),
                    partition: c.state().sbm().labels(),
                });
            }
        }
    }
    c.check()?;
    Ok(ChainRun { accumulator: acc, trace, snapshots: snaps, stats: *c.stats(), final_log_posterior: c.log_posterior() })
}

/// Diagnostics of a similarity trace.
pub fn diagnostics(trace: &[f64], lags: usize) -> Result<Diagnostics> {
    let (tau_int, acf) = if trace.len() >= 4 {
        let a = autocorrelation(trace, lags.min(trace.len() - 1))?;
        (Some(integrated_autocorrelation_time(trace)?), a.rho)
    } else {
        (None, Vec::new())
    };
    Ok(Diagnostics { tau_int, acf, similarity_trace: trace.to_vec() })
}

/// Result of [`sample_posterior`].
#[derive(Clone, Debug)]
pub struct SampleRun {
    pub start: WeightedGraph,
    pub chains: Vec<ChainRun>,
    pub merged: PosteriorAccumulator,
    pub mp: WeightedGraph,
}

/// Runs all chains in parallel and merges their accumulators in chain order.
pub fn sample_posterior(
    data: &Dataset,
    kind: ModelKind,
    cfg: &SampleConfig,
    start: Option<(WeightedGraph, TypicalEdgeSet)>,
    truth: Option<&WeightedGraph>,
) -> Result<SampleRun> {
    cfg.validate()?;
    let (start, typical) = match start {
        Some(s) => s,
        None => {
            let map = greedy_map(data, kind, &cfg.sampler)?;
            (map.graph, map.typical)
        }
    };
    let reference = truth.unwrap_or(&start);
    let chains = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(data, kind, &start, typical.clone(), reference, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    let mut merged = chains[0].accumulator.clone();
    for c in &chains[1..] {
        merged.merge(&c.accumulator)?;
    }
    let mp = merged.mp_estimate(cfg.mean)?;
    Ok(SampleRun { start, chains, merged, mp })
}

fn similarity_or_one(a: &WeightedGraph, b: &WeightedGraph) -> Result<f64> {
    match jaccard_similarity(a, b) {
        Err(Error::EmptySimilarity) => Ok(1.0),
        r => r,
    }
}

/// Writes `marginals.tsv`, `mp.tsv`, `mp_theta.tsv`, `start.tsv`,
/// `diagnostics.json` (chain 0; other chains as `diagnostics_chain<c>.json`),
/// `snapshots.json` plus `samples/` and `manifest.json`.
pub fn cmd_sample(cfg: &SampleConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut man = RunManifest::new("sample", Some(cfg.seed), serde_json::to_value(cfg)?);
    let t0 = Instant::now();
    let (data, kind) = load_dataset(&cfg.dataset, cfg.model)?;
    man.add_input(&cfg.dataset)?;
    let start = match &cfg.init {
        Some(f) => Some(f.load(data.n_nodes(), &mut man)?),
        None => None,
    };
    let truth = match &cfg.truth {
        Some(p) => {
            man.add_input(p)?;
            Some(io::read_edge_list(p, Some(data.n_nodes()))?)
        }
        None => None,
    };
    man.timings.insert("load".into(), secs(t0));
    let t1 = Instant::now();
    let run = sample_posterior(&data, kind, cfg, start, truth.as_ref())?;
    man.timings.insert("sample".into(), secs(t1));

    let t2 = Instant::now();
    let mut files = vec![out.join("marginals.tsv"), out.join("mp.tsv"), out.join("mp_theta.tsv"), out.join("start.tsv")];
    io::write_marginals(&files[0], &run.merged, cfg.mean)?;
    io::write_edge_list(&files[1], &run.mp)?;
    io::write_theta(&files[2], &run.mp.theta)?;
    io::write_edge_list(&files[3], &run.start)?;
    let mut records = Vec::new();
    let mut stats = Vec::new();
    for (c, ch) in run.chains.iter().enumerate() {
        let name = if c == 0 { "diagnostics.json".to_string() } else { format!("diagnostics_chain{c}.json") };
        let p = out.join(name);
        io::write_json(&p, &diagnostics(&ch.trace.values, cfg.acf_lags)?)?;
        files.push(p);
        for s in &ch.snapshots {
            let name = format!("samples/chain{c}_sweep{:06}.tsv", s.sweep);
            io::write_edge_list(&out.join(&name), &s.graph)?;
            files.push(out.join(&name));
            records.push(SnapshotRecord {
                chain: c,
                sweep: s.sweep,
                file: name,
                log_posterior: s.log_posterior,
                categories: s.categories.clone(),
                partition: s.partition.clone(),
            });
        }
        stats.push(serde_json::json!({
            "acceptance": {
                "entry": ch.stats.entry.rate(),
                "node": ch.stats.node.rate(),
                "collective": ch.stats.collective.rate(),
                "merge_split": ch.stats.merge_split.rate(),
                "partition": ch.stats.partition.rate(),
                "replacement": ch.stats.replacement.rate(),
                "swap": ch.stats.swap.rate(),
            },
            "final_log_posterior": ch.final_log_posterior,
        }));
    }
    if cfg.snapshots {
        let p = out.join("snapshots.json");
        io::write_json(&p, &records)?;
        files.push(p);
    }
    for f in &files {
        man.outputs.push(record(out, f)?);
    }
    man.timings.insert("write".into(), secs(t2));
    let mut info = serde_json::json!({ "samples": run.merged.n_samples(), "chains": stats, "mp_edges": run.mp.n_edges() });
    if let Some(t) = &truth {
        info["similarity"] = serde_json::json!({
            "start": similarity_or_one(&run.start, t)?,
            "mp": similarity_or_one(&run.mp, t)?,
        });
    }
    man.info = info;
    man.write(&out.join("manifest.json"))?;
    Ok(man)
}

// ----------------------------------------------------------------- compare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub dataset: PathBuf,
    pub marginals: PathBuf,
    #[serde(default)]
    pub model: Option<ModelKind>,
    /// Fractions of all pairs kept when thresholding a score.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Check the triangle bounds on Pearson correlation and mutual information.
    #[serde(default = "yes")]
    pub check_inequalities: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_fractions() -> Vec<f64> {
    vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]
}

fn default_tolerance() -> f64 {
    1e-9
}

impl ResolvePaths for CompareConfig {
    fn resolve(&mut self, base: &Path) {
        resolve(&mut self.dataset, base);
        resolve(&mut self.marginals, base);
    }
}

/// Violating triples `(x, y, z)` of each bound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub checked: bool,
    pub pearson: Vec<(usize, usize, usize)>,
    pub mi: Vec<(usize, usize, usize)>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), io::fmt_f64)
}

/// Writes `baselines.tsv`, `curves.tsv`, `scatter_pi.tsv`, `scatter_wp.tsv`,
/// `inequalities.json` and `manifest.json`. Scores are ranked by absolute
/// value for covariance and Pearson correlation.
pub fn cmd_compare(cfg: &CompareConfig, out: &Path) -> Result<RunManifest> {
    if cfg.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Config("fractions must lie in [0, 1]".into()));
    }
    let mut man = RunManifest::new("compare", None, serde_json::to_value(cfg)?);
    let t0 = Instant::now();
    let f = io::read_dataset(&cfg.dataset)?;
    if let (Some(a), Some(b)) = (cfg.model, f.model) {
        if a != b {
            return Err(Error::Data(format!("config model {a} does not match dataset model {b}")));
        }
    }
    let data = f.data;
    let n = data.n_nodes();
    man.add_input(&cfg.dataset)?;
    let rows = io::read_marginals(&cfg.marginals)?;
    man.add_input(&cfg.marginals)?;
    if rows.iter().any(|r| r.i >= n || r.j >= n) {
        return Err(Error::Data("marginals refer to nodes outside the dataset".into()));
    }
    let pi: HashMap<(usize, usize), f64> = rows.iter().map(|r| ((r.i.min(r.j), r.i.max(r.j)), r.pi)).collect();
    man.timings.insert("load".into(), secs(t0));

    let t1 = Instant::now();
    let base = pairwise_baselines(&data)?;
    let report = if cfg.check_inequalities {
        InequalityReport {
            checked: true,
            pearson: pearson_violations(&base, n, cfg.tolerance),
            mi: mi_violations(&data, &base, cfg.tolerance),
        }
    } else {
        InequalityReport::default()
    };
    let score_sets: [(&str, Vec<((usize, usize), f64)>); 3] = [
        ("cov", base.iter().map(|b| ((b.i, b.j), b.cov.abs())).collect()),
        ("pearson", base.iter().map(|b| ((b.i, b.j), b.pearson.map_or(f64::NEG_INFINITY, f64::abs))).collect()),
        ("mi", base.iter().map(|b| ((b.i, b.j), b.mi)).collect()),
    ];
    let curves: Vec<(&str, Vec<ThresholdPoint>)> =
        score_sets.iter().map(|(name, s)| (*name, threshold_reconstruction_compare(s, &pi, &cfg.fractions))).collect();
    man.timings.insert("compare".into(), secs(t1));

    let t2 = Instant::now();
    let mut text = String::from("# i\tj\tcov\tpearson\tmi\n");
    let mut scatter = String::from("# i\tj\tpi\tcov\tpearson\tmi\n");
    for b in &base {
        let p = pi.get(&(b.i, b.j)).copied().unwrap_or(0.0);
        text.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", b.i, b.j, io::fmt_f64(b.cov), fmt_opt(b.pearson), io::fmt_f64(b.mi)));
        scatter.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            b.i,
            b.j,
            io::fmt_f64(p),
            io::fmt_f64(b.cov),
            fmt_opt(b.pearson),
            io::fmt_f64(b.mi)
        ));
    }
    let mut curve_text = String::from("# score\tfraction\tincluded\tjaccard\ttpr\n");
    for (name, pts) in &curves {
        for p in pts {
            curve_text.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\n",
                io::fmt_f64(p.fraction),
                p.included,
                io::fmt_f64(p.jaccard),
                io::fmt_f64(p.tpr)
            ));
        }
    }
    let mut wp = String::from("# i\tj\tpi\tw_mean\n");
    for r in &rows {
        wp.push_str(&format!("{}\t{}\t{}\t{}\n", r.i, r.j, io::fmt_f64(r.pi), io::fmt_f64(r.w_mean)));
    }
    let files = [
        out.join("baselines.tsv"),
        out.join("curves.tsv"),
        out.join("scatter_pi.tsv"),
        out.join("scatter_wp.tsv"),
        out.join("inequalities.json"),
    ];
    io::write_file(&files[0], &text)?;
    io::write_file(&files[1], &curve_text)?;
    io::write_file(&files[2], &scatter)?;
    io::write_file(&files[3], &wp)?;
    io::write_json(&files[4], &report)?;
    for f in &files {
        man.outputs.push(record(out, f)?);
    }
    man.timings.insert("write".into(), secs(t2));
    man.info = serde_json::json!({
        "pairs": base.len(),
        "pearson_violations": report.pearson.len(),
        "mi_violations": report.mi.len(),
    });
    man.write(&out.join("manifest.json"))?;
    Ok(man)
}

// ----------------------------------------------------------- bench-scaling

/// One entry-proposal mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mix {
    pub name: String,
    pub w_t: f64,
    pub w_u: f64,
    pub w_n: f64,
    #[serde(default = "two")]
    pub d: usize,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    /// Edges of the reference graph per node.
    #[serde(default = "default_edges_per_node")]
    pub edges_per_node: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Sweeps per run; each sweep makes N toggle proposals.
    #[serde(default = "default_bench_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_mixes")]
    pub mixes: Vec<Mix>,
    /// Independent reference graphs per size, one chain each per mix;
    /// tau_int is the mean over them.
    #[serde(default = "one")]
    pub replicates: usize,
}

fn default_sizes() -> Vec<usize> {
    vec![100, 200, 400, 800]
}

fn default_edges_per_node() -> f64 {
    2.5
}

fn default_rounds() -> usize {
    4
}

fn default_p() -> f64 {
    0.9
}

fn default_eps() -> f64 {
    1e-8
}

fn default_bench_sweeps() -> usize {
    20_000
}

fn default_mixes() -> Vec<Mix> {
    vec![
        Mix { name: "uniform".into(), w_t: 0.0, w_u: 1.0, w_n: 0.0, d: 2 },
        Mix { name: "nearby".into(), w_t: 0.0, w_u: 0.1, w_n: 1.0, d: 2 },
    ]
}

impl ResolvePaths for BenchConfig {
    fn resolve(&mut self, _: &Path) {}
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.iter().any(|&n| n < 4) || self.sizes.is_empty() {
            return Err(Error::Config("sizes must be nonempty and at least 4".into()));
        }
        if self.sweeps < 4 || self.rounds == 0 || self.mixes.is_empty() || self.replicates == 0 {
            return Err(Error::Config("need sweeps >= 4, rounds >= 1, replicates >= 1 and at least one mix".into()));
        }
        for m in &self.mixes {
            let p = crate::sampler::ProposalConfig { w_t: m.w_t, w_u: m.w_u, w_n: m.w_n, d: m.d, ..Default::default() };
            p.validate().map_err(|e| Error::Config(format!("mix {}: {e}", m.name)))?;
        }
        if !(0.0 < self.p && self.p < 1.0 && 0.0 < self.eps && self.eps < 1.0) {
            return Err(Error::Config("p and eps must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One benchmark measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n: usize,
    pub mix: String,
    pub tau_int: f64,
    pub acceptance: f64,
    pub seconds: f64,
}

/// Draws a dichotomization from the factorized target exactly.
pub fn exact_draw<R: Rng + ?Sized>(t: &FactorizedTarget, rng: &mut R) -> Dichotomization {
    let n = t.n_nodes();
    let mut a = Dichotomization::new(n);
    for (i, j) in t.reference().edges() {
        if rng.random::<f64>() < t.marginal(i, j) {
            a.insert(i, j);
        }
    }
    // off-reference pairs, each with probability eps, via geometric skips
    let pairs = n * (n - 1) / 2;
    let eps = t.marginal_off();
    if eps > 0.0 {
        let ln_q = (-eps).ln_1p();
        let mut k: f64 = -1.0;
        loop {
            let u: f64 = rng.random::<f64>();
            k += 1.0 + ((1.0 - u).ln() / ln_q).floor();
            if k >= pairs as f64 {
                break;
            }
            let (i, j) = unrank_pair(k as usize, n);
            if !t.reference().contains(i, j) {
                a.insert(i, j);
            }
        }
    }
    a
}

/// Maps `0..N(N-1)/2` onto pairs `i < j` in row order.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

/// Jaccard similarity of two dichotomizations (1 when both are empty).
pub fn dichotomy_similarity(a: &Dichotomization, b: &Dichotomization) -> f64 {
    let both = a.edges().filter(|&(i, j)| b.contains(i, j)).count();
    let union = a.n_edges() + b.n_edges() - both;
    if union == 0 {
        1.0
    } else {
        both as f64 / union as f64
    }
}

/// Integrated autocorrelation time of the similarity-to-reference trace of
/// one factorized-target chain started from an exact draw.
pub fn bench_run(target: &FactorizedTarget, mix: &Mix, sweeps: usize, seed: u64, stream: u64) -> Result<(f64, f64)> {
    let mut rng = chain_rng(seed, stream);
    let init = exact_draw(target, &mut rng);
    let typical = TypicalEdgeSet::new(target.n_nodes());
    let mut c = FactorizedChain::new(target, init, typical, (mix.w_t, mix.w_u, mix.w_n, mix.d), rng);
    let mut trace = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        c.sweep();
        trace.push(dichotomy_similarity(c.graph(), target.reference()));
    }
    Ok((integrated_autocorrelation_time(&trace)?, c.counts().rate()))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// All (size, mix) runs, in parallel. Reference graphs depend only on the
/// seed and the size index.
pub fn bench_scaling(cfg: &BenchConfig) -> Result<(Vec<BenchPoint>, Vec<(String, f64)>)> {
    cfg.validate()?;
    let (nm, reps) = (cfg.mixes.len(), cfg.replicates);
    // one reference graph per (size, replicate)
    let targets = (0..cfg.sizes.len())
        .flat_map(|k| (0..reps).map(move |r| (k, r)))
        .map(|(k, r)| {
            let n = cfg.sizes[k];
            let mut rng = chain_rng(cfg.seed, 1_000_000 + k as u64 + 1000 * r as u64);
            let e = (cfg.edges_per_node * n as f64).round() as usize;
            let g = synthetic::gen_triangle_enriched(n, e, cfg.rounds, &mut rng)?.graph;
            FactorizedTarget::new(g, cfg.p, cfg.eps)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize, usize)> =
        (0..cfg.sizes.len()).flat_map(|s| (0..nm).flat_map(move |m| (0..reps).map(move |r| (s, m, r)))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, m, r)| {
            let t = Instant::now();
            let stream = (s * nm + m) as u64 + 1000 * r as u64;
            let (tau, acc) = bench_run(&targets[s * reps + r], &cfg.mixes[m], cfg.sweeps, cfg.seed, stream)?;
            Ok((tau, acc, secs(t)))
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<BenchPoint> = runs
        .chunks(reps)
        .zip(jobs.iter().step_by(reps))
        .map(|(c, &(s, m, _))| {
            let mean = |f: fn(&(f64, f64, f64)) -> f64| c.iter().map(f).sum::<f64>() / c.len() as f64;
            BenchPoint {
                n: cfg.sizes[s],
                mix: cfg.mixes[m].name.clone(),
                tau_int: mean(|x| x.0),
                acceptance: mean(|x| x.1),
                seconds: c.iter().map(|x| x.2).sum(),
            }
        })
        .collect();
    let slopes = cfg
        .mixes
        .iter()
        .map(|m| {
            let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.mix == m.name).map(|p| (p.n as f64, p.tau_int)).collect();
            (m.name.clone(), if pts.len() >= 2 { log_log_slope(&pts) } else { f64::NAN })
        })
        .collect();
    Ok((points, slopes))
}

/// Writes `bench.tsv`, `slopes.tsv` and `manifest.json`.
pub fn cmd_bench_scaling(cfg: &BenchConfig, out: &Path) -> Result<RunManifest> {
    let mut man = RunManifest::new("bench-scaling", Some(cfg.seed), serde_json::to_value(cfg)?);
    let t0 = Instant::now();
    let (points, slopes) = bench_scaling(cfg)?;
    man.timings.insert("bench".into(), secs(t0));
    let mut text = String::from("# n\tmix\ttau_int\tacceptance\n");
    for p in &points {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", p.n, p.mix, io::fmt_f64(p.tau_int), io::fmt_f64(p.acceptance)));
    }
    let mut st = String::from("# mix\tslope\n");
    for (m, s) in &slopes {
        st.push_str(&format!("{m}\t{}\n", io::fmt_f64(*s)));
    }
    let files = [out.join("bench.tsv"), out.join("slopes.tsv")];
    io::write_file(&files[0], &text)?;
    io::write_file(&files[1], &st)?;
    for f in &files {
        man.outputs.push(record(out, f)?);
    }
    let timing: Vec<serde_json::Value> =
        points.iter().map(|p| serde_json::json!({"n": p.n, "mix": p.mix, "seconds": p.seconds})).collect();
    man.info = serde_json::json!({ "runs": timing });
    man.write(&out.join("manifest.json"))?;
    Ok(man)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_cfg(n: usize, seed: u64) -> GenerateConfig {
        serde_json::from_value(serde_json::json!({"N": n, "model": "kinetic-ising", "M": 50, "seed": seed})).unwrap()
    }

    fn hashes(m: &RunManifest) -> Vec<(String, String)> {
        m.outputs.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }

    #[test]
    fn generate_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let m1 = cmd_generate(&gen_cfg(10, 1), &dir.path().join("a")).unwrap();
        let m2 = cmd_generate(&gen_cfg(10, 1), &dir.path().join("b")).unwrap();
        assert_eq!(m1.outputs.len(), 2);
        assert!(dir.path().join("a/manifest.json").exists());
        assert_eq!(hashes(&m1), hashes(&m2));
        let mut bad = gen_cfg(10, 1);
        bad.avg_degree = 10.0;
        assert!(matches!(cmd_generate(&bad, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn reconstruct_and_sample_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        cmd_generate(&gen_cfg(12, 3), &d.join("gen")).unwrap();
        let rc = ReconstructConfig { dataset: d.join("gen/data.csv"), model: None, sampler: SamplerConfig::default(), init: None };
        let man = cmd_reconstruct(&rc, &d.join("rec")).unwrap();
        assert!(man.info["iterations"].as_u64().unwrap() >= 1);
        let missing = ReconstructConfig { dataset: d.join("nope.csv"), ..rc.clone() };
        assert!(matches!(cmd_reconstruct(&missing, &d.join("x")), Err(Error::Data(_))));
        let wrong = ReconstructConfig { model: Some(ModelKind::Gaussian), ..rc };
        assert!(matches!(cmd_reconstruct(&wrong, &d.join("x")), Err(Error::Data(_))));

        let sc: SampleConfig = serde_json::from_value(serde_json::json!({
            "dataset": d.join("gen/data.csv"),
            "seed": 9, "chains": 2, "burn_in": 2, "sweeps": 8,
            "init": {"graph": d.join("rec/map.tsv"), "theta": d.join("rec/map_theta.tsv"), "typical": d.join("rec/typical.tsv")},
            "truth": d.join("gen/truth.tsv"),
        }))
        .unwrap();
        let a = cmd_sample(&sc, &d.join("s1")).unwrap();
        let b = cmd_sample(&sc, &d.join("s2")).unwrap();
        assert_eq!(hashes(&a), hashes(&b));
        assert_eq!(a.info["samples"].as_u64(), Some(12));
        let diag: Diagnostics = io::read_json(&d.join("s1/diagnostics.json")).unwrap();
        assert_eq!(diag.similarity_trace.len(), 6);
        let bad = SampleConfig { burn_in: 8, ..sc.clone() };
        assert!(matches!(cmd_sample(&bad, &d.join("x")), Err(Error::Config(_))));

        let cc = CompareConfig {
            dataset: d.join("gen/data.csv"),
            marginals: d.join("s1/marginals.tsv"),
            model: None,
            fractions: default_fractions(),
            check_inequalities: true,
            tolerance: 1e-9,
        };
        let man = cmd_compare(&cc, &d.join("cmp")).unwrap();
        assert_eq!(man.info["pearson_violations"].as_u64(), Some(0));
        assert_eq!(man.info["mi_violations"].as_u64(), Some(0));
    }

    #[test]
    fn single_sample_scatter_is_binary() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        cmd_generate(&gen_cfg(10, 4), &d.join("gen")).unwrap();
        let sc: SampleConfig = serde_json::from_value(serde_json::json!({
            "dataset": d.join("gen/data.csv"), "seed": 1, "burn_in": 0, "sweeps": 1, "snapshots": false,
        }))
        .unwrap();
        cmd_sample(&sc, &d.join("s")).unwrap();
        let cc = CompareConfig {
            dataset: d.join("gen/data.csv"),
            marginals: d.join("s/marginals.tsv"),
            model: None,
            fractions: vec![0.1],
            check_inequalities: false,
            tolerance: 0.0,
        };
        cmd_compare(&cc, &d.join("c")).unwrap();
        let text = std::fs::read_to_string(d.join("c/scatter_pi.tsv")).unwrap();
        for line in text.lines().skip(1) {
            let pi: f64 = line.split('\t').nth(2).unwrap().parse().unwrap();
            assert!(pi == 0.0 || pi == 1.0);
        }
    }

    #[test]
    fn exact_draw_matches_marginals() {
        let mut rng = chain_rng(5, 0);
        let g = synthetic::gen_er(30, 40, &mut rng).unwrap();
        let t = FactorizedTarget::new(g, 0.7, 0.01).unwrap();
        let reps = 2000;
        let (mut on, mut off) = (0usize, 0usize);
        for _ in 0..reps {
            let a = exact_draw(&t, &mut rng);
            let both = a.edges().filter(|&(i, j)| t.reference().contains(i, j)).count();
            on += both;
            off += a.n_edges() - both;
        }
        let on_rate = on as f64 / (reps * 40) as f64;
        let off_rate = off as f64 / (reps * (435 - 40)) as f64;
        assert!((on_rate - 0.7).abs() < 0.01, "{on_rate}");
        assert!((off_rate - 0.01).abs() < 0.001, "{off_rate}");
        assert_eq!(unrank_pair(0, 5), (0, 1));
        assert_eq!(unrank_pair(9, 5), (3, 4));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.5))).collect();
        assert!((log_log_slope(&pts) - 1.5).abs() < 1e-12);
    }
}
