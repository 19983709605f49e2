//! Posterior summaries, chain diagnostics and correlation baselines.

use std::collections::HashMap;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{jaccard_similarity, WeightedGraph};
use crate::models::Dataset;
use crate::sampler::TypicalEdgeSet;

/// Number of bins of the per-pair weight histograms.
pub const HISTOGRAM_BINS: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSums {
    pub count: u64,
    pub sum: f64,
    pub sq: f64,
}

/// Fixed-range histogram settings; values outside land in the end bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRange {
    pub lo: f64,
    pub hi: f64,
}

impl HistogramRange {
    fn bin(&self, w: f64) -> usize {
        let t = (w - self.lo) / (self.hi - self.lo);
        ((t * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
    }

    /// Left edge of bin `k`.
    pub fn edge(&self, k: usize) -> f64 {
        self.lo + (self.hi - self.lo) * k as f64 / HISTOGRAM_BINS as f64
    }
}

/// Which mean weight the MP estimate reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanKind {
    /// Sum over all samples divided by the number of samples.
    #[default]
    Unconditional,
    /// Mean over the samples in which the entry is present.
    Conditional,
}

/// Streaming sums over posterior samples; mergeable across chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorAccumulator {
    n: usize,
    samples: u64,
    pairs: HashMap<(u32, u32), PairSums>,
    theta_sum: Vec<f64>,
    theta_sq: Vec<f64>,
    range: Option<HistogramRange>,
    hist: HashMap<(u32, u32), Vec<u64>>,
}

impl PosteriorAccumulator {
    pub fn new(n: usize) -> Self {
        PosteriorAccumulator {
            n,
            samples: 0,
            pairs: HashMap::new(),
            theta_sum: vec![0.0; n],
            theta_sq: vec![0.0; n],
            range: None,
            hist: HashMap::new(),
        }
    }

    /// Also keeps a weight histogram for every pair ever present.
    pub fn with_histograms(n: usize, range: HistogramRange) -> Result<Self> {
        if !(range.hi > range.lo) {
            return Err(Error::Argument("histogram range must have hi > lo".into()));
        }
        let mut acc = Self::new(n);
        acc.range = Some(range);
        Ok(acc)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_samples(&self) -> u64 {
        self.samples
    }

    pub fn accumulate(&mut self, g: &WeightedGraph) -> Result<()> {
        if g.n_nodes() != self.n {
            return Err(Error::Argument(format!("sample has {} nodes, accumulator {}", g.n_nodes(), self.n)));
        }
        self.samples += 1;
        for (i, j, w) in g.edges() {
            let key = (i as u32, j as u32);
            let s = self.pairs.entry(key).or_default();
            s.count += 1;
            s.sum += w;
            s.sq += w * w;
            if let Some(r) = &self.range {
                self.hist.entry(key).or_insert_with(|| vec![0; HISTOGRAM_BINS])[r.bin(w)] += 1;
            }
        }
        for (i, t) in g.theta.iter().enumerate() {
            self.theta_sum[i] += t;
            self.theta_sq[i] += t * t;
        }
        Ok(())
    }

    /// Adds the samples of `other`, as if its stream had been accumulated here.
    pub fn merge(&mut self, other: &PosteriorAccumulator) -> Result<()> {
        if other.n != self.n || other.range != self.range {
            return Err(Error::Argument("accumulators differ in size or histogram range".into()));
        }
        self.samples += other.samples;
        for (k, s) in &other.pairs {
            let d = self.pairs.entry(*k).or_default();
            d.count += s.count;
            d.sum += s.sum;
            d.sq += s.sq;
        }
        for (k, h) in &other.hist {
            let d = self.hist.entry(*k).or_insert_with(|| vec![0; HISTOGRAM_BINS]);
            d.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        }
        for i in 0..self.n {
            self.theta_sum[i] += other.theta_sum[i];
            self.theta_sq[i] += other.theta_sq[i];
        }
        Ok(())
    }

    fn get(&self, i: usize, j: usize) -> Option<&PairSums> {
        let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.pairs.get(&key)
    }

    /// Fraction of samples with a nonzero entry.
    pub fn marginal(&self, i: usize, j: usize) -> f64 {
        match (self.get(i, j), self.samples) {
            (Some(s), n) if n > 0 => s.count as f64 / n as f64,
            _ => 0.0,
        }
    }

    pub fn mean_weight(&self, i: usize, j: usize, kind: MeanKind) -> f64 {
        let Some(s) = self.get(i, j) else {
            return 0.0;
        };
        match kind {
            MeanKind::Unconditional => s.sum / self.samples as f64,
            MeanKind::Conditional => s.sum / s.count as f64,
        }
    }

    /// Posterior variance of the entry, zeros included.
    pub fn weight_variance(&self, i: usize, j: usize) -> f64 {
        let Some(s) = self.get(i, j) else {
            return 0.0;
        };
        let n = self.samples as f64;
        let m = s.sum / n;
        (s.sq / n - m * m).max(0.0)
    }

    pub fn theta_mean(&self, i: usize) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.theta_sum[i] / self.samples as f64
        }
    }

    pub fn theta_variance(&self, i: usize) -> f64 {
        let n = self.samples as f64;
        let m = self.theta_mean(i);
        (self.theta_sq[i] / n - m * m).max(0.0)
    }

    /// Pairs seen at least once, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.pairs.keys().map(|&(i, j)| (i as usize, j as usize)).collect();
        v.sort_unstable();
        v
    }

    pub fn histogram(&self, i: usize, j: usize) -> Option<(&HistogramRange, &[u64])> {
        let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        Some((self.range.as_ref()?, self.hist.get(&key)?.as_slice()))
    }

    /// Marginal-posterior estimate: mean weight where the marginal exceeds
    /// one half, zero elsewhere; node parameters are their posterior means.
    pub fn mp_estimate(&self, kind: MeanKind) -> Result<WeightedGraph> {
        if self.samples == 0 {
            return Err(Error::Argument("no samples accumulated".into()));
        }
        let mut g = WeightedGraph::new(self.n);
        for (i, j) in self.pairs() {
            if self.marginal(i, j) > 0.5 {
                g.set_entry(i, j, self.mean_weight(i, j, kind))?;
            }
        }
        g.theta = (0..self.n).map(|i| self.theta_mean(i)).collect();
        Ok(g)
    }
}

/// Normalized autocorrelation function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub rho: Vec<f64>,
    /// True for a constant series, where `rho` is set to 1 by convention.
    pub degenerate: bool,
}

/// Autocorrelation at lags `0..=max_lag`, computed with a zero-padded FFT.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Autocorrelation> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::Argument(format!("series of length {n} is too short for lag {max_lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    if var <= 1e-300 * n as f64 {
        return Ok(Autocorrelation { rho: vec![1.0; max_lag + 1], degenerate: true });
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    Ok(Autocorrelation { rho: buf[..=max_lag].iter().map(|c| c.re / c0).collect(), degenerate: false })
}

/// Integrated autocorrelation time `1 + 2 sum rho(t)`, truncated with
/// Geyer's initial monotone positive sequence. Constant series give 1.
pub fn integrated_autocorrelation_time(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Argument("need at least 4 values".into()));
    }
    let acf = autocorrelation(series, n - 1)?;
    if acf.degenerate {
        return Ok(1.0);
    }
    let rho = &acf.rho;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut gamma = rho[2 * k] + rho[2 * k + 1];
        if gamma <= 0.0 {
            break;
        }
        gamma = gamma.min(prev);
        prev = gamma;
        sum += gamma;
        k += 1;
    }
    // sum over pairs counts rho(0) = 1 once: tau = 2 * sum - 1
    Ok((2.0 * sum - 1.0).max(1.0))
}

/// Similarity of successive samples to a reference graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTrace {
    pub values: Vec<f64>,
}

impl SimilarityTrace {
    /// Appends `s(sample, reference)`; two empty graphs count as identical.
    pub fn push(&mut self, sample: &WeightedGraph, reference: &WeightedGraph) -> Result<f64> {
        let s = match jaccard_similarity(sample, reference) {
            Ok(s) => s,
            Err(Error::EmptySimilarity) => 1.0,
            Err(e) => return Err(e),
        };
        self.values.push(s);
        Ok(s)
    }
}

/// For each threshold, the fraction of pairs with marginal at least the
/// threshold that belong to the typical set (1 when there are none).
pub fn cumulative_recall(typical: &TypicalEdgeSet, acc: &PosteriorAccumulator, thresholds: &[f64]) -> Vec<(f64, f64)> {
    let pairs: Vec<(f64, bool)> = acc.pairs().into_iter().map(|(i, j)| (acc.marginal(i, j), typical.contains(i, j))).collect();
    thresholds
        .iter()
        .map(|&t| {
            let (hit, all) = pairs.iter().filter(|p| p.0 >= t).fold((0usize, 0usize), |(h, a), p| (h + usize::from(p.1), a + 1));
            (t, if all == 0 { 1.0 } else { hit as f64 / all as f64 })
        })
        .collect()
}

/// Correlation measures of one node pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBaseline {
    pub i: usize,
    pub j: usize,
    pub cov: f64,
    /// Missing when either node has zero variance.
    pub pearson: Option<f64>,
    pub mi: f64,
}

/// Number of equal-frequency bins for mutual information of continuous data.
pub const MI_BINS: usize = 16;

fn is_discrete(x: &[f64]) -> bool {
    x.iter().all(|&v| v == -1.0 || v == 0.0 || v == 1.0)
}

/// Small integer codes per value: the state itself for discrete data,
/// equal-frequency bins otherwise.
fn codes(x: &[f64], discrete: bool) -> Vec<u8> {
    if discrete {
        return x.iter().map(|&v| (v + 1.0) as u8).collect();
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0u8; x.len()];
    let mut k = 0;
    while k < order.len() {
        // ties share a bin
        let mut end = k + 1;
        while end < order.len() && x[order[end]] == x[order[k]] {
            end += 1;
        }
        let bin = (k * MI_BINS / x.len()).min(MI_BINS - 1) as u8;
        for &o in &order[k..end] {
            out[o] = bin;
        }
        k = end;
    }
    out
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

/// Plug-in mutual information of two coded variables.
fn mutual_information(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let mut joint = [[0u64; MI_BINS]; MI_BINS];
    let mut ma = [0u64; MI_BINS];
    let mut mb = [0u64; MI_BINS];
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize][y as usize] += 1;
        ma[x as usize] += 1;
        mb[y as usize] += 1;
    }
    let hj = entropy(joint.iter().flatten().copied(), n);
    (entropy(ma.iter().copied(), n) + entropy(mb.iter().copied(), n) - hj).max(0.0)
}

/// Plug-in entropy of a node's coded values (nats).
pub fn coded_entropy(x: &[f64]) -> f64 {
    let c = codes(x, is_discrete(x));
    let mut m = [0u64; MI_BINS];
    c.iter().for_each(|&v| m[v as usize] += 1);
    entropy(m.iter().copied(), x.len() as f64)
}

/// Covariance, Pearson correlation and mutual information for every pair
/// of nodes, using the columns of `data` as samples.
pub fn pairwise_baselines(data: &Dataset) -> Result<Vec<PairBaseline>> {
    let n = data.n_nodes();
    let m = data.n_samples();
    if m < 2 {
        return Err(Error::Data("need at least two samples".into()));
    }
    let rows: Vec<&[f64]> = (0..n).map(|i| data.output_row(i)).collect();
    let discrete = rows.iter().all(|r| is_discrete(r));
    let means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / m as f64).collect();
    let sds: Vec<f64> = rows
        .iter()
        .zip(&means)
        .map(|(r, mu)| (r.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1) as f64).sqrt())
        .collect();
    let coded: Vec<Vec<u8>> = rows.iter().map(|r| codes(r, discrete)).collect();
    Ok((0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (rows, means, sds, coded) = (&rows, &means, &sds, &coded);
            (i + 1..n).map(move |j| {
                let cov = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>() / (m - 1) as f64;
                let pearson = (sds[i] > 0.0 && sds[j] > 0.0).then(|| (cov / (sds[i] * sds[j])).clamp(-1.0, 1.0));
                PairBaseline { i, j, cov, pearson, mi: mutual_information(&coded[i], &coded[j]) }
            })
        })
        .collect())
}

/// Lower bound on `corr(x, z)` implied by `corr(x, y)` and `corr(y, z)`.
pub fn pearson_lower_bound(rxy: f64, ryz: f64) -> f64 {
    rxy * ryz - ((1.0 - rxy * rxy).max(0.0) * (1.0 - ryz * ryz).max(0.0)).sqrt()
}

/// Lower bound on `MI(x, z)` implied by `MI(x, y)`, `MI(y, z)` and `H(y)`.
pub fn mi_lower_bound(mxy: f64, myz: f64, hy: f64) -> f64 {
    mxy + myz - hy
}

/// Node triples `(x, y, z)` whose correlations break the Pearson bound by
/// more than `tol`.
pub fn pearson_violations(baselines: &[PairBaseline], n: usize, tol: f64) -> Vec<(usize, usize, usize)> {
    let mut r = vec![vec![None; n]; n];
    for b in baselines {
        r[b.i][b.j] = b.pearson;
        r[b.j][b.i] = b.pearson;
    }
    let mut out = Vec::new();
    for y in 0..n {
        for x in 0..n {
            for z in x + 1..n {
                if x == y || z == y {
                    continue;
                }
                if let (Some(a), Some(b), Some(c)) = (r[x][y], r[y][z], r[x][z]) {
                    if c < pearson_lower_bound(a, b) - tol {
                        out.push((x, y, z));
                    }
                }
            }
        }
    }
    out
}

/// Node triples whose mutual informations break the chain bound by more than `tol`.
pub fn mi_violations(data: &Dataset, baselines: &[PairBaseline], tol: f64) -> Vec<(usize, usize, usize)> {
    let n = data.n_nodes();
    let mut mi = vec![vec![0.0; n]; n];
    for b in baselines {
        mi[b.i][b.j] = b.mi;
        mi[b.j][b.i] = b.mi;
    }
    let discrete = (0..n).all(|i| is_discrete(data.output_row(i)));
    let h: Vec<f64> = (0..n)
        .map(|i| {
            let c = codes(data.output_row(i), discrete);
            let mut m = [0u64; MI_BINS];
            c.iter().for_each(|&v| m[v as usize] += 1);
            entropy(m.iter().copied(), c.len() as f64)
        })
        .collect();
    let mut out = Vec::new();
    for y in 0..n {
        for x in 0..n {
            for z in x + 1..n {
                if x != y && z != y && mi[x][z] < mi_lower_bound(mi[x][y], mi[y][z], h[y]) - tol {
                    out.push((x, y, z));
                }
            }
        }
    }
    out
}

/// Accuracy of a thresholded score at one included fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub fraction: f64,
    pub included: usize,
    pub jaccard: f64,
    pub tpr: f64,
}

/// Ranks pairs by `scores` and compares the top fraction against the pairs
/// with `reference_pi > 1/2`. Both maps use the same pair universe; pairs
/// missing from `reference_pi` count as absent.
pub fn threshold_reconstruction_compare(
    scores: &[((usize, usize), f64)],
    reference_pi: &HashMap<(usize, usize), f64>,
    fractions: &[f64],
) -> Vec<ThresholdPoint> {
    let truth: std::collections::HashSet<(usize, usize)> =
        reference_pi.iter().filter(|(_, &p)| p > 0.5).map(|(&k, _)| k).collect();
    let ranked = top_pairs(scores, scores.len());
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let k = ((f * scores.len() as f64).round() as usize).min(scores.len());
        let hits = ranked[..k].iter().filter(|p| truth.contains(p)).count();
        let union = k + truth.len() - hits;
        out.push(ThresholdPoint {
            fraction: f,
            included: k,
            jaccard: if union == 0 { 1.0 } else { hits as f64 / union as f64 },
            tpr: if truth.is_empty() { 1.0 } else { hits as f64 / truth.len() as f64 },
        });
    }
    out
}

/// The `k` pairs with the largest scores (ties broken by pair order).
pub fn top_pairs(scores: &[((usize, usize), f64)], k: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<&((usize, usize), f64)> = scores.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|p| p.0).collect()
}
