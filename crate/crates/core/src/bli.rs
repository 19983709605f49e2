//! Bisection and linear interpolation (BLI) proposals for one real value.
//!
//! A triplet `a < b < c` bracketing a maximum of a log-density `f` is found
//! by expanding an initial guess, then refined by random bisection. The
//! proposal is the piecewise-linear interpolation of `exp(f)` over every
//! point visited. All randomness goes into the choice of points `gamma`, so
//! the proposal density `T(x | gamma)` can be evaluated at any `x`, which is
//! what Metropolis-Hastings needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BliConfig {
    pub bisection_min: usize,
    pub bisection_max: usize,
    /// Log-density margin between the midpoint and both ends required
    /// before the bracket is accepted.
    pub epsilon_bracket: f64,
    /// Bisection stops once the margin falls below this value.
    pub epsilon_stop: f64,
    pub max_expansions: usize,
}

impl Default for BliConfig {
    fn default() -> Self {
        BliConfig { bisection_min: 4, bisection_max: 16, epsilon_bracket: 200.0, epsilon_stop: 0.5, max_expansions: 64 }
    }
}

impl BliConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bisection_min > self.bisection_max {
            return Err(Error::Config("bisection_min exceeds bisection_max".into()));
        }
        if !(self.epsilon_bracket > 0.0) || !(self.epsilon_stop >= 0.0) {
            return Err(Error::Config("bracket epsilons must be positive".into()));
        }
        Ok(())
    }
}

struct Triplet {
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
}

impl Triplet {
    fn margin(&self) -> f64 {
        let side = self.a.1.max(self.c.1);
        if self.b.1 == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.b.1 - side
    }

    fn bracketed(&self) -> bool {
        self.b.1 > self.a.1 && self.b.1 > self.c.1
    }
}

fn eval(f: &mut impl FnMut(f64) -> f64, x: f64, points: &mut Vec<(f64, f64)>) -> Result<(f64, f64)> {
    let y = f(x);
    if y.is_nan() || y == f64::INFINITY {
        return Err(Error::Bracket(format!("target returned {y} at {x}")));
    }
    points.push((x, y));
    Ok((x, y))
}

/// Expands `(lo, mid, hi)` outward until it brackets a maximum with margin
/// `epsilon_bracket`. Boundaries move away from `center` by a factor 2.
fn expand(
    f: &mut impl FnMut(f64) -> f64,
    mut t: Triplet,
    center: f64,
    cfg: &BliConfig,
    points: &mut Vec<(f64, f64)>,
) -> Result<Triplet> {
    let mut flip = false;
    for _ in 0..=cfg.max_expansions {
        if t.bracketed() && t.margin() > cfg.epsilon_bracket {
            return Ok(t);
        }
        let lower = if t.a.1 == t.c.1 {
            flip = !flip;
            flip
        } else {
            t.a.1 > t.c.1
        };
        if lower {
            if t.a.1 > t.b.1 {
                t.b = t.a;
            }
            let x = center - 2.0 * (center - t.a.0);
            t.a = eval(f, x, points)?;
        } else {
            if t.c.1 > t.b.1 {
                t.b = t.c;
            }
            let x = center + 2.0 * (t.c.0 - center);
            t.c = eval(f, x, points)?;
        }
        if !t.a.0.is_finite() || !t.c.0.is_finite() {
            break;
        }
    }
    Err(Error::Bracket(format!(
        "no bracket after {} expansions (range [{}, {}])",
        cfg.max_expansions, t.a.0, t.c.0
    )))
}

/// Piecewise-linear density through the points visited by a BLI search.
#[derive(Clone, Debug)]
pub struct Interpolant {
    xs: Vec<f64>,
    log_f: Vec<f64>,
    dens: Vec<f64>,
    log_scale: f64,
    segments: AliasTable,
    total: f64,
    bisections: usize,
}

impl Interpolant {
    fn from_points(mut points: Vec<(f64, f64)>, bisections: usize) -> Result<Self> {
        points.sort_by(|p, q| p.0.total_cmp(&q.0));
        points.dedup_by(|p, q| p.0 == q.0);
        let log_scale = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if points.len() < 2 || log_scale == f64::NEG_INFINITY {
            return Err(Error::Bracket("interpolation needs two points with finite density".into()));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let log_f: Vec<f64> = points.iter().map(|p| p.1).collect();
        let dens: Vec<f64> = log_f.iter().map(|y| (y - log_scale).exp()).collect();
        let masses: Vec<f64> = (0..xs.len() - 1).map(|k| 0.5 * (xs[k + 1] - xs[k]) * (dens[k] + dens[k + 1])).collect();
        let segments = AliasTable::new(&masses)?;
        let total = segments.total_weight();
        Ok(Interpolant { xs, log_f, dens, log_scale, segments, total, bisections })
    }

    /// Visited points `(x, log f(x))`, sorted by `x`.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.log_f.iter().copied())
    }

    pub fn n_points(&self) -> usize {
        self.xs.len()
    }

    pub fn bisections(&self) -> usize {
        self.bisections
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Unnormalized density relative to the largest visited value of `f`.
    pub fn relative_density(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let t = (x - x0) / (x1 - x0);
        self.dens[k] + (self.dens[k + 1] - self.dens[k]) * t
    }

    /// Like [`Self::relative_density`], but constant beyond the support.
    pub fn relative_density_extrapolated(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        self.relative_density(x.clamp(lo, hi))
    }

    /// Normalized log density.
    pub fn log_density(&self, x: f64) -> f64 {
        self.relative_density(x).ln() - self.total.ln()
    }

    /// Total relative mass, so that `ln(total) + log_scale` approximates
    /// `ln of the integral of exp(f)`.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Relative mass on `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let n = self.xs.len();
        let lo = lo.max(self.xs[0]);
        let hi = hi.min(self.xs[n - 1]);
        if !(hi > lo) {
            return 0.0;
        }
        let mut k = self.xs.partition_point(|&v| v <= lo).clamp(1, n - 1) - 1;
        let mut mass = 0.0;
        while k < n - 1 && self.xs[k] < hi {
            let a = lo.max(self.xs[k]);
            let b = hi.min(self.xs[k + 1]);
            if b > a {
                mass += 0.5 * (b - a) * (self.relative_density(a) + self.relative_density(b));
            }
            k += 1;
        }
        mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.segments.sample(rng);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (f0, f1) = (self.dens[k], self.dens[k + 1]);
        let u: f64 = rng.random();
        // inverse CDF of a trapezoid, written to avoid cancellation
        let t = u * (f0 + f1) / (f0 + (f0 * f0 + u * (f1 * f1 - f0 * f0)).max(0.0).sqrt());
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { u };
        x0 + t * (x1 - x0)
    }
}

/// Runs the bracket search and random bisection on `f`, starting from the
/// interval `[lo, hi]`.
pub fn build<R: Rng + ?Sized>(
    f: &mut impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    cfg: &BliConfig,
    rng: &mut R,
) -> Result<Interpolant> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Argument(format!("invalid initial interval [{lo}, {hi}]")));
    }
    let mut points = Vec::with_capacity(8 + cfg.bisection_max);
    let a = eval(f, lo, &mut points)?;
    let c = eval(f, hi, &mut points)?;
    let b = eval(f, rng.random_range(lo..hi), &mut points)?;
    let mut t = expand(f, Triplet { a, b, c }, 0.5 * (lo + hi), cfg, &mut points)?;
    let mut done = 0;
    while done < cfg.bisection_max {
        if done >= cfg.bisection_min && t.margin() < cfg.epsilon_stop {
            break;
        }
        let left = t.b.0 - t.a.0 >= t.c.0 - t.b.0;
        let (x0, x1) = if left { (t.a.0, t.b.0) } else { (t.b.0, t.c.0) };
        if !(x1 > x0) {
            break;
        }
        let y = eval(f, rng.random_range(x0..x1), &mut points)?;
        if y.1 > t.b.1 {
            if left {
                t.c = t.b;
            } else {
                t.a = t.b;
            }
            t.b = y;
        } else if left {
            t.a = y;
        } else {
            t.c = y;
        }
        done += 1;
    }
    Interpolant::from_points(points, done)
}

/// Continuous BLI proposal: returns the new value and the log proposal
/// densities of the new and the current value under the same points.
pub fn propose<R: Rng + ?Sized>(
    f: &mut impl FnMut(f64) -> f64,
    current: f64,
    lo: f64,
    hi: f64,
    cfg: &BliConfig,
    rng: &mut R,
) -> Result<(f64, f64, f64)> {
    let interp = build(f, lo, hi, cfg, rng)?;
    let x = interp.sample(rng);
    Ok((x, interp.log_density(x), interp.log_density(current)))
}

/// Proposal over the grid `g * delta`: a continuous draw is rounded to the
/// nearest grid point, optionally excluding zero.
#[derive(Clone, Debug)]
pub struct GridProposal {
    interp: Interpolant,
    delta: f64,
    exclude_zero: bool,
    norm: f64,
}

impl GridProposal {
    /// `None` if the excluded zero cell carries all the mass.
    pub fn new(interp: Interpolant, delta: f64, exclude_zero: bool) -> Option<Self> {
        let zero = if exclude_zero { interp.mass_between(-0.5 * delta, 0.5 * delta) } else { 0.0 };
        let norm = interp.total_mass() - zero;
        (norm > 1e-12 * interp.total_mass()).then_some(GridProposal { interp, delta, exclude_zero, norm })
    }

    pub fn interpolant(&self) -> &Interpolant {
        &self.interp
    }

    /// Relative mass of the whole nonzero grid, i.e. the integral of the
    /// interpolant outside the zero cell (in units of `exp(log_scale)`).
    pub fn mass(&self) -> f64 {
        self.norm
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        loop {
            let g = (self.interp.sample(rng) / self.delta).round() as i64;
            if !(self.exclude_zero && g == 0) {
                return g;
            }
        }
    }

    pub fn log_prob(&self, g: i64) -> f64 {
        if self.exclude_zero && g == 0 {
            return f64::NEG_INFINITY;
        }
        let x = g as f64 * self.delta;
        let m = self.interp.mass_between(x - 0.5 * self.delta, x + 0.5 * self.delta);
        m.ln() - self.norm.ln()
    }
}

/// Proposal restricted to a finite candidate set, weighted by the
/// interpolant (extrapolated as a constant beyond the visited range).
#[derive(Clone, Debug)]
pub struct FiniteProposal {
    values: Vec<f64>,
    weights: Vec<f64>,
    table: AliasTable,
}

impl FiniteProposal {
    /// `None` for an empty candidate set. Falls back to uniform when every
    /// candidate has zero interpolated density.
    pub fn new(interp: &Interpolant, candidates: &[f64]) -> Option<Self> {
        if candidates.is_empty() {
            return None;
        }
        let mut weights: Vec<f64> = candidates.iter().map(|&v| interp.relative_density_extrapolated(v)).collect();
        if weights.iter().all(|&w| w <= 0.0) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let table = AliasTable::new(&weights).ok()?;
        Some(FiniteProposal { values: candidates.to_vec(), weights, table })
    }

    /// Sum of the relative weights before normalization.
    pub fn mass(&self) -> f64 {
        self.table.total_weight()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.values[self.table.sample(rng)]
    }

    pub fn log_prob(&self, v: f64) -> f64 {
        match self.values.iter().position(|&x| x == v) {
            Some(k) => (self.weights[k] / self.table.total_weight()).ln(),
            None => f64::NEG_INFINITY,
        }
    }
}

/// Deterministic maximization: the same bracket expansion with a fixed
/// midpoint, then golden-section refinement to width `tol`.
/// Returns `(argmax, max)` over all evaluated points.
pub fn maximize(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64, cfg: &BliConfig) -> Result<(f64, f64)> {
    if !(lo < hi) {
        return Err(Error::Argument(format!("invalid initial interval [{lo}, {hi}]")));
    }
    let mut points = Vec::new();
    let a = eval(f, lo, &mut points)?;
    let c = eval(f, hi, &mut points)?;
    let b = eval(f, 0.5 * (lo + hi), &mut points)?;
    // a shallow bracket suffices for optimization
    let shallow = BliConfig { epsilon_bracket: 1e-9, ..cfg.clone() };
    let t = expand(f, Triplet { a, b, c }, 0.5 * (lo + hi), &shallow, &mut points)?;
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut x0, mut x3) = (t.a.0, t.c.0);
    let mut x1 = x3 - INV_PHI * (x3 - x0);
    let mut x2 = x0 + INV_PHI * (x3 - x0);
    let mut f1 = eval(f, x1, &mut points)?.1;
    let mut f2 = eval(f, x2, &mut points)?.1;
    let mut iter = 0;
    while x3 - x0 > tol && iter < 200 {
        if f1 >= f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - INV_PHI * (x3 - x0);
            f1 = eval(f, x1, &mut points)?.1;
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + INV_PHI * (x3 - x0);
            f2 = eval(f, x2, &mut points)?.1;
        }
        iter += 1;
    }
    Ok(points.into_iter().fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best }))
}
