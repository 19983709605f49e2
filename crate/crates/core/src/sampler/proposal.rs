use rand::Rng;

use crate::alias::AliasTable;
use crate::bli::{GridProposal, Interpolant};
use crate::math::log_sum_exp;

const RHO_MIN: f64 = 0.01;
const RHO_MAX: f64 = 0.99;

#[derive(Clone, Debug)]
enum Body {
    Grid(GridProposal),
    Finite { values: Vec<i64>, log_p: Vec<f64>, table: AliasTable },
    Empty,
}

/// Proposal over grid values of one entry: zero (absent) with probability
/// `rho0`, otherwise a grid value from the body.
#[derive(Clone, Debug)]
pub(crate) struct ValueProposal {
    rho0: f64,
    body: Body,
}

fn rho(log_zero: f64, log_rest: f64) -> f64 {
    if log_zero == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_rest == f64::NEG_INFINITY {
        return 1.0;
    }
    (1.0 / (1.0 + (log_rest - log_zero).exp())).clamp(RHO_MIN, RHO_MAX)
}

impl ValueProposal {
    /// Weights each candidate by `exp(log_f)`; `f0` is the log weight of zero
    /// (`None` when zero is not an option). `None` if nothing can be proposed.
    pub(crate) fn finite(values: Vec<i64>, log_f: Vec<f64>, f0: Option<f64>) -> Option<Self> {
        let total = log_sum_exp(&log_f);
        let rho0 = rho(f0.unwrap_or(f64::NEG_INFINITY), total);
        let body = if total.is_finite() {
            let log_p: Vec<f64> = log_f.iter().map(|l| l - total).collect();
            let w: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
            Body::Finite { values, log_p, table: AliasTable::new(&w).ok()? }
        } else {
            Body::Empty
        };
        (rho0 > 0.0 || !matches!(body, Body::Empty)).then_some(ValueProposal { rho0, body })
    }

    /// Grid values drawn from a BLI interpolant of the log density; zero gets
    /// the weight `exp(f0)` compared against the interpolated grid mass.
    pub(crate) fn grid(interp: Interpolant, delta: f64, exclude_zero: bool, f0: Option<f64>) -> Option<Self> {
        let scale = interp.log_scale();
        match GridProposal::new(interp, delta, exclude_zero) {
            Some(gp) => {
                let rest = gp.mass().ln() - delta.ln() + scale;
                let rho0 = rho(f0.unwrap_or(f64::NEG_INFINITY), rest);
                Some(ValueProposal { rho0, body: Body::Grid(gp) })
            }
            None => f0.filter(|f| f.is_finite()).map(|_| ValueProposal { rho0: 1.0, body: Body::Empty }),
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<i64> {
        if self.rho0 > 0.0 && (self.rho0 >= 1.0 || rng.random::<f64>() < self.rho0) {
            return None;
        }
        match &self.body {
            Body::Grid(gp) => Some(gp.sample(rng)),
            Body::Finite { values, table, .. } => Some(values[table.sample(rng)]),
            Body::Empty => None,
        }
    }

    pub(crate) fn log_prob(&self, g: Option<i64>) -> f64 {
        let Some(g) = g else {
            return self.rho0.ln();
        };
        let rest = (1.0 - self.rho0).ln();
        match &self.body {
            Body::Grid(gp) => rest + gp.log_prob(g),
            Body::Finite { values, log_p, .. } => match values.iter().position(|&v| v == g) {
                Some(k) => rest + log_p[k],
                None => f64::NEG_INFINITY,
            },
            Body::Empty => f64::NEG_INFINITY,
        }
    }
}
