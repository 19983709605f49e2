//! Plain-text file formats and run manifests.
//!
//! Edge lists are `i\tj\tw` lines with 0-based ids; node parameters are
//! `i\ttheta` lines. Floats are written with 17 significant digits so files
//! round-trip bit-exactly. Lines starting with `#` are comments; an edge list
//! may carry a `# N=<n>` line giving the node count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{MeanKind, PosteriorAccumulator};
use crate::graph::WeightedGraph;
use crate::models::{Dataset, DatasetKind, ModelKind};
use crate::prior::CategoryState;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // keeps the sign of -0.0 irrelevant and the output short
        return "0".into();
    }
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: usize, path: &Path) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("{}:{line}: bad number `{s}`", path.display())))
}

fn parse_usize(s: &str, line: usize, path: &Path) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Data(format!("{}:{line}: bad node id `{s}`", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn format_edge_list(g: &WeightedGraph) -> String {
    let mut s = format!("# N={}\n", g.n_nodes());
    for (i, j, w) in g.edges() {
        let _ = writeln!(s, "{i}\t{j}\t{}", fmt_f64(w));
    }
    s
}

pub fn write_edge_list(path: &Path, g: &WeightedGraph) -> Result<()> {
    write_text(path, &format_edge_list(g))
}

/// Reads an edge list. The node count comes from `n` if given, else from the
/// `# N=` line, else from the largest id.
pub fn read_edge_list(path: &Path, n: Option<usize>) -> Result<WeightedGraph> {
    let text = read_text(path)?;
    let mut header_n = None;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("N=") {
                header_n = Some(parse_usize(v, k + 1, path)?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Data(format!("{}:{}: expected `i<TAB>j<TAB>w`", path.display(), k + 1)));
        }
        edges.push((parse_usize(f[0], k + 1, path)?, parse_usize(f[1], k + 1, path)?, parse_f64(f[2], k + 1, path)?));
    }
    let n = n
        .or(header_n)
        .unwrap_or_else(|| edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0));
    let mut g = WeightedGraph::new(n);
    for (i, j, w) in edges {
        if i >= n || j >= n {
            return Err(Error::Data(format!("{}: node id out of range for N={n}", path.display())));
        }
        g.set_entry(i, j, w).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(g)
}

pub fn write_theta(path: &Path, theta: &[f64]) -> Result<()> {
    let mut s = String::new();
    for (i, t) in theta.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{}", fmt_f64(*t));
    }
    write_text(path, &s)
}

/// Reads node parameters into `g`; nodes not listed keep their value.
pub fn read_theta(path: &Path, g: &mut WeightedGraph) -> Result<()> {
    let text = read_text(path)?;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| Error::Data(format!("{}:{}: expected `i<TAB>theta`", path.display(), k + 1)))?;
        let i = parse_usize(a, k + 1, path)?;
        if i >= g.n_nodes() {
            return Err(Error::Data(format!("{}:{}: node {i} out of range", path.display(), k + 1)));
        }
        g.theta[i] = parse_f64(b, k + 1, path)?;
    }
    Ok(())
}

/// A dataset together with the model tag of its header.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub data: Dataset,
    /// `None` when the header says `model=any`.
    pub model: Option<ModelKind>,
}

fn push_row(s: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_f64(*v));
    }
    s.push('\n');
}

/// CSV text of a dataset: a `# N= M= kind= model=` header, then one line per
/// sample. Markov data starts with `x_0`; pairs data alternates input and
/// output lines.
pub fn format_dataset(data: &Dataset, model: Option<ModelKind>) -> String {
    let (n, m) = (data.n_nodes(), data.n_samples());
    let tag = model.map_or("any", |k| k.tag());
    let mut s = format!("# N={n} M={m} kind={} model={tag}\n", data.kind().tag());
    match data.kind() {
        DatasetKind::Iid => (0..m).for_each(|t| push_row(&mut s, &data.column(t))),
        DatasetKind::Markov => {
            if m > 0 {
                push_row(&mut s, &data.input_column(0));
            }
            (0..m).for_each(|t| push_row(&mut s, &data.column(t)));
        }
        DatasetKind::Pairs => (0..m).for_each(|t| {
            push_row(&mut s, &data.input_column(t));
            push_row(&mut s, &data.column(t));
        }),
    }
    s
}

pub fn write_dataset(path: &Path, data: &Dataset, model: Option<ModelKind>) -> Result<()> {
    write_text(path, &format_dataset(data, model))
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let header = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Data(format!("{}:1: missing `# N= M= kind= model=` header", path.display())))?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for tok in header.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("{}:1: bad header token `{tok}`", path.display())))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Data(format!("{}:1: header lacks `{k}=`", path.display())));
    let n = parse_usize(get("N")?, 1, path)?;
    let m = parse_usize(get("M")?, 1, path)?;
    let kind: DatasetKind = get("kind")?.parse()?;
    let model = match get("model")? {
        "any" => None,
        t => Some(t.parse::<ModelKind>().map_err(|e| Error::Data(format!("{}:1: {e}", path.display())))?),
    };
    let mut rows = Vec::new();
    for (k, line) in lines {
        let row = line.split(',').map(|v| parse_f64(v, k + 1, path)).collect::<Result<Vec<f64>>>()?;
        if row.len() != n {
            return Err(Error::Data(format!("{}:{}: {} values, expected N={n}", path.display(), k + 1, row.len())));
        }
        rows.push(row);
    }
    let expect = match kind {
        DatasetKind::Iid => m,
        DatasetKind::Markov => m + 1,
        DatasetKind::Pairs => 2 * m,
    };
    if rows.len() != expect {
        return Err(Error::Data(format!("{}: {} data lines, expected {expect}", path.display(), rows.len())));
    }
    let data = match kind {
        DatasetKind::Iid => Dataset::from_columns(n, &rows)?,
        DatasetKind::Markov => Dataset::from_series(n, &rows)?,
        DatasetKind::Pairs => {
            let (ins, outs): (Vec<_>, Vec<_>) = rows.chunks(2).map(|c| (c[0].clone(), c[1].clone())).unzip();
            Dataset::from_pairs(n, &ins, &outs)?
        }
    };
    if let Some(mk) = model {
        data.validate_for(mk)?;
    }
    Ok(DatasetFile { data, model })
}

/// One line of a marginals file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalRow {
    pub i: usize,
    pub j: usize,
    pub pi: f64,
    pub w_mean: f64,
    pub w_var: f64,
}

/// `i j pi w_mean w_var` for every pair seen at least once.
pub fn write_marginals(path: &Path, acc: &PosteriorAccumulator, kind: MeanKind) -> Result<()> {
    let mut s = String::from("# i\tj\tpi\tw_mean\tw_var\n");
    for (i, j) in acc.pairs() {
        let _ = writeln!(
            s,
            "{i}\t{j}\t{}\t{}\t{}",
            fmt_f64(acc.marginal(i, j)),
            fmt_f64(acc.mean_weight(i, j, kind)),
            fmt_f64(acc.weight_variance(i, j))
        );
    }
    write_text(path, &s)
}

pub fn read_marginals(path: &Path) -> Result<Vec<MarginalRow>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::Data(format!("{}:{}: expected 5 columns", path.display(), k + 1)));
        }
        out.push(MarginalRow {
            i: parse_usize(f[0], k + 1, path)?,
            j: parse_usize(f[1], k + 1, path)?,
            pi: parse_f64(f[2], k + 1, path)?,
            w_mean: parse_f64(f[3], k + 1, path)?,
            w_var: parse_f64(f[4], k + 1, path)?,
        });
    }
    Ok(out)
}

/// Chain diagnostics written next to the marginals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Missing when the trace is too short to estimate.
    pub tau_int: Option<f64>,
    pub acf: Vec<f64>,
    pub similarity_trace: Vec<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

/// Reads JSON, reporting the line and column of any error.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

/// Metadata of one retained sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub chain: usize,
    pub sweep: usize,
    pub file: String,
    pub log_posterior: f64,
    pub categories: CategoryState,
    pub partition: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileRecord { path: path.display().to_string(), sha256: sha256_file(path)? })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Record of one command invocation: what went in, what came out, how long it took.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Command-specific facts such as iteration counts.
    pub info: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            info: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    /// Writes the manifest to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Pairs as `i\tj` lines.
pub fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    let mut s = String::new();
    for (i, j) in pairs {
        let _ = writeln!(s, "{i}\t{j}");
    }
    write_text(path, &s)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| Error::Data(format!("{}:{}: expected `i<TAB>j`", path.display(), k + 1)))?;
        out.push((parse_usize(a, k + 1, path)?, parse_usize(b, k + 1, path)?));
    }
    Ok(out)
}

/// Writes plain text, creating parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edge_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        let mut g = WeightedGraph::new(5);
        g.set_entry(0, 3, 0.1).unwrap();
        g.set_entry(4, 1, -1.0 / 3.0).unwrap();
        g.set_entry(2, 3, 1e-300).unwrap();
        g.theta = vec![0.5, -0.25, std::f64::consts::PI, 0.0, 7.0];
        write_edge_list(&p, &g).unwrap();
        write_theta(&dir.path().join("t.tsv"), &g.theta).unwrap();
        let mut back = read_edge_list(&p, None).unwrap();
        read_theta(&dir.path().join("t.tsv"), &mut back).unwrap();
        assert_eq!(back, g);
        assert_eq!(read_edge_list(&p, Some(8)).unwrap().n_nodes(), 8);
        fs::write(&p, "0\t1\n").unwrap();
        assert!(matches!(read_edge_list(&p, None), Err(Error::Data(_))));
    }

    #[test]
    fn dataset_round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let rows = vec![vec![1.0, -1.0, 1.0], vec![-1.0, -1.0, 1.0], vec![1.0, 1.0, -1.0]];
        let sets = [
            (Dataset::from_columns(3, &rows).unwrap(), Some(ModelKind::EquilibriumIsing)),
            (Dataset::from_series(3, &rows).unwrap(), Some(ModelKind::KineticIsing)),
            (Dataset::from_pairs(3, &rows[..2], &rows[1..]).unwrap(), None),
            (Dataset::from_columns(3, &[vec![0.1, -2.5, 1.0 / 7.0]]).unwrap(), Some(ModelKind::Gaussian)),
        ];
        for (d, model) in sets {
            write_dataset(&p, &d, model).unwrap();
            let back = read_dataset(&p).unwrap();
            assert_eq!(back.data, d);
            assert_eq!(back.model, model);
        }
        let text = format_dataset(&Dataset::from_series(3, &rows).unwrap(), Some(ModelKind::KineticIsing));
        assert!(text.starts_with("# N=3 M=2 kind=markov model=kinetic-ising\n"));
        fs::write(&p, "# N=3 M=2 kind=iid model=any\n1,1,1\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Data(_))));
        assert!(matches!(read_dataset(&dir.path().join("missing.csv")), Err(Error::Data(_))));
    }

    #[test]
    fn marginals_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        let mut acc = PosteriorAccumulator::new(3);
        let mut g = WeightedGraph::new(3);
        g.set_entry(0, 2, 0.7).unwrap();
        acc.accumulate(&g).unwrap();
        acc.accumulate(&WeightedGraph::new(3)).unwrap();
        write_marginals(&p, &acc, MeanKind::Unconditional).unwrap();
        let rows = read_marginals(&p).unwrap();
        assert_eq!(rows, vec![MarginalRow { i: 0, j: 2, pi: 0.5, w_mean: 0.35, w_var: 0.35 * 0.35 }]);
    }

    #[test]
    fn manifest_hashes_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let mut m = RunManifest::new("generate", Some(1), serde_json::json!({"N": 10}));
        m.add_output(&p).unwrap();
        let mp = dir.path().join("manifest.json");
        m.write(&mp).unwrap();
        let back: RunManifest = read_json(&mp).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn floats_round_trip_bit_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let y: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
