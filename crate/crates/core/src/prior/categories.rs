use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{grid_index, log_quantized_laplace_grid, log_quantized_laplace_zero_grid};
use crate::error::{Error, Result};
use crate::math::{ln_binomial, ln_binomial_signed, ln_factorial};

/// Moves `count` members from one value to another. `None` stands for an
/// absent (zero) weight and is only meaningful for edge weights.
pub type CategoryChange = (Option<i64>, Option<i64>, u64);

/// Aggregate quantities the prior depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategorySummary {
    pub total: u64,
    pub k: u64,
    pub first: i64,
    pub last: i64,
    pub sum_ln_fact: f64,
}

/// Serialized form: grid indices and their counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryState {
    pub delta: f64,
    pub lambda: f64,
    pub z: Vec<i64>,
    pub m: Vec<u64>,
}

/// Distinct quantized values and their multiplicities.
///
/// Values are kept as integer multiples of `delta` so that category identity
/// is exact. Edge weights exclude zero; node parameters (`zero_allowed`) do not.
#[derive(Clone, Debug)]
pub struct Categories {
    lambda: f64,
    delta: f64,
    zero_allowed: bool,
    counts: BTreeMap<i64, u64>,
    total: u64,
    sum_ln_fact: f64,
}

impl Categories {
    pub fn new(zero_allowed: bool, lambda: f64, delta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Argument(format!("need lambda > 0 and delta > 0, got {lambda}, {delta}")));
        }
        Ok(Categories { lambda, delta, zero_allowed, counts: BTreeMap::new(), total: 0, sum_ln_fact: 0.0 })
    }

    /// Categories for a collection of real values, which must lie on the grid.
    /// For edge weights zeros are skipped.
    pub fn from_values(zero_allowed: bool, lambda: f64, delta: f64, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut c = Categories::new(zero_allowed, lambda, delta)?;
        for v in values {
            if v == 0.0 && !zero_allowed {
                continue;
            }
            let g = c.index(v).ok_or_else(|| Error::Inconsistent(format!("value {v} is not on the grid of step {delta}")))?;
            c.apply(&[(None, Some(g), 1)])?;
        }
        Ok(c)
    }

    pub fn from_state(zero_allowed: bool, state: &CategoryState) -> Result<Self> {
        if state.z.len() != state.m.len() {
            return Err(Error::Data("category z and m differ in length".into()));
        }
        let mut c = Categories::new(zero_allowed, state.lambda, state.delta)?;
        for (&g, &m) in state.z.iter().zip(&state.m) {
            if m == 0 || c.counts.contains_key(&g) || (g == 0 && !zero_allowed) {
                return Err(Error::Data(format!("invalid category {g} with count {m}")));
            }
            c.apply(&[(None, Some(g), m)])?;
        }
        Ok(c)
    }

    pub fn state(&self) -> CategoryState {
        CategoryState {
            delta: self.delta,
            lambda: self.lambda,
            z: self.counts.keys().copied().collect(),
            m: self.counts.values().copied().collect(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn zero_allowed(&self) -> bool {
        self.zero_allowed
    }

    /// Number of values booked (E for weights, N for node parameters).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, g: i64) -> u64 {
        self.counts.get(&g).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (i64, u64)> + '_ {
        self.counts.iter().map(|(&g, &m)| (g, m))
    }

    pub fn grid_values(&self) -> impl Iterator<Item = i64> + '_ {
        self.counts.keys().copied()
    }

    pub fn first(&self) -> Option<i64> {
        self.counts.keys().next().copied()
    }

    pub fn last(&self) -> Option<i64> {
        self.counts.keys().next_back().copied()
    }

    pub fn value(&self, g: i64) -> f64 {
        g as f64 * self.delta
    }

    pub fn index(&self, x: f64) -> Option<i64> {
        grid_index(x, self.delta)
    }

    /// Grid index of a value, with `None` for zero when zero is excluded.
    pub fn slot(&self, x: f64) -> Option<i64> {
        if x == 0.0 && !self.zero_allowed {
            None
        } else {
            self.index(x)
        }
    }

    pub fn summary(&self) -> CategorySummary {
        CategorySummary {
            total: self.total,
            k: self.counts.len() as u64,
            first: self.first().unwrap_or(0),
            last: self.last().unwrap_or(0),
            sum_ln_fact: self.sum_ln_fact,
        }
    }

    fn ln_point(&self, g: i64) -> f64 {
        if self.zero_allowed {
            log_quantized_laplace_zero_grid(g, self.lambda, self.delta)
        } else {
            log_quantized_laplace_grid(g, self.lambda, self.delta)
        }
    }

    /// Log prior of a configuration described by its summary.
    pub fn log_prior_of(&self, s: &CategorySummary) -> f64 {
        if s.total == 0 {
            return 0.0;
        }
        let crosses = i64::from(!self.zero_allowed && s.first < 0 && s.last > 0);
        let span = s.last - s.first;
        let k = s.k as i64;
        let range = span + 1 - crosses;
        if k > range {
            return f64::NEG_INFINITY;
        }
        let ends = self.ln_point(s.first) + self.ln_point(s.last) + if s.first == s.last { 0.0 } else { LN_2 };
        s.sum_ln_fact - ln_factorial(s.total) - ln_binomial(s.total - 1, s.k - 1) - ln_binomial_signed(span - 1 - crosses, k - 2)
            - (range as f64).ln()
            + ends
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior_of(&self.summary())
    }

    fn touched(&self, changes: &[CategoryChange]) -> Option<(Vec<(i64, u64, u64)>, i64)> {
        let mut touched: Vec<(i64, i64)> = Vec::with_capacity(2 * changes.len());
        let mut dtotal = 0i64;
        let mut bump = |g: i64, d: i64| match touched.iter_mut().find(|t| t.0 == g) {
            Some(t) => t.1 += d,
            None => touched.push((g, d)),
        };
        for &(old, new, c) in changes {
            if old == new || c == 0 {
                continue;
            }
            match old {
                Some(g) => bump(g, -(c as i64)),
                None => dtotal += c as i64,
            }
            match new {
                Some(g) => bump(g, c as i64),
                None => dtotal -= c as i64,
            }
        }
        let mut out = Vec::with_capacity(touched.len());
        for (g, d) in touched {
            if g == 0 && !self.zero_allowed && d != 0 {
                return None;
            }
            let cur = self.count(g);
            let new = cur as i64 + d;
            if new < 0 {
                return None;
            }
            out.push((g, cur, new as u64));
        }
        Some((out, dtotal))
    }

    /// Summary after applying `changes`, without mutating; `None` if the
    /// changes remove members that do not exist.
    pub fn summary_after(&self, changes: &[CategoryChange]) -> Option<CategorySummary> {
        let (touched, dtotal) = self.touched(changes)?;
        let total = self.total as i64 + dtotal;
        if total < 0 {
            return None;
        }
        let mut k = self.counts.len() as i64;
        let mut sum_ln_fact = self.sum_ln_fact;
        let mut first = i64::MAX;
        let mut last = i64::MIN;
        for &(g, cur, new) in &touched {
            sum_ln_fact += ln_factorial(new) - ln_factorial(cur);
            if cur == 0 && new > 0 {
                k += 1;
            }
            if cur > 0 && new == 0 {
                k -= 1;
            }
            if new > 0 {
                first = first.min(g);
                last = last.max(g);
            }
        }
        let dead = |g: i64| touched.iter().any(|t| t.0 == g && t.2 == 0);
        if let Some(g) = self.counts.keys().copied().find(|&g| !dead(g)) {
            first = first.min(g);
        }
        if let Some(g) = self.counts.keys().rev().copied().find(|&g| !dead(g)) {
            last = last.max(g);
        }
        if k == 0 {
            first = 0;
            last = 0;
        }
        Some(CategorySummary { total: total as u64, k: k as u64, first, last, sum_ln_fact })
    }

    /// Log prior after `changes`; `-inf` for impossible changes.
    pub fn log_prior_after(&self, changes: &[CategoryChange]) -> f64 {
        match self.summary_after(changes) {
            Some(s) => self.log_prior_of(&s),
            None => f64::NEG_INFINITY,
        }
    }

    /// Change of the log prior under `changes`.
    pub fn delta_log_prior(&self, changes: &[CategoryChange]) -> f64 {
        if changes.iter().all(|c| c.0 == c.1 || c.2 == 0) {
            return 0.0;
        }
        self.log_prior_after(changes) - self.log_prior()
    }

    pub fn apply(&mut self, changes: &[CategoryChange]) -> Result<()> {
        let (touched, dtotal) = self
            .touched(changes)
            .ok_or_else(|| Error::Inconsistent("category change removes members that do not exist".into()))?;
        for (g, cur, new) in touched {
            self.sum_ln_fact += ln_factorial(new) - ln_factorial(cur);
            if new == 0 {
                self.counts.remove(&g);
            } else {
                self.counts.insert(g, new);
            }
        }
        self.total = (self.total as i64 + dtotal) as u64;
        if self.counts.is_empty() {
            self.sum_ln_fact = 0.0;
        }
        Ok(())
    }

    /// Moves `count` members of value `old` to value `new`. With
    /// `allow_merge = false`, landing on another existing category is an error.
    pub fn rebook(&mut self, old: f64, new: f64, count: u64, allow_merge: bool) -> Result<()> {
        let go = self.index(old).filter(|&g| self.count(g) >= count && count > 0).ok_or_else(|| {
            Error::Inconsistent(format!("value {old} does not hold {count} members"))
        })?;
        let gn = self
            .index(new)
            .filter(|&g| g != 0 || self.zero_allowed)
            .ok_or_else(|| Error::Argument(format!("value {new} is not an allowed grid value")))?;
        if gn != go && !allow_merge && self.count(gn) > 0 {
            return Err(Error::Argument(format!("value {new} collides with an existing category")));
        }
        self.apply(&[(Some(go), Some(gn), count)])
    }

    /// Checks that the booked counts match `values` exactly.
    pub fn check_against(&self, values: impl IntoIterator<Item = f64>) -> Result<()> {
        let fresh = Categories::from_values(self.zero_allowed, self.lambda, self.delta, values)?;
        if fresh.counts != self.counts || fresh.total != self.total {
            return Err(Error::Inconsistent("category counts do not match the current values".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_sum_exp;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn weights() -> Categories {
        Categories::new(false, 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(weights().log_prior(), 0.0);
    }

    #[test]
    fn single_category_by_hand() {
        let c = Categories::from_values(false, 1.0, 1.0, [1.0, 1.0, 1.0]).unwrap();
        let expected = -2.0 + 2.0 * (E - 1.0).ln() - 4f64.ln();
        assert!((c.log_prior() - expected).abs() < 1e-12);
    }

    // Component factors written out independently of the summary code.
    fn composed(zero_allowed: bool, lambda: f64, delta: f64, z: &[i64], m: &[u64]) -> f64 {
        let e: u64 = m.iter().sum();
        if e == 0 {
            return 0.0;
        }
        let k = z.len() as u64;
        let fact = |n: u64| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
        let choose = |n: i64, r: i64| -> f64 {
            if r == -1 && n == -1 {
                return 0.0;
            }
            if r < 0 || n < r {
                return f64::NEG_INFINITY;
            }
            fact(n as u64) - fact(r as u64) - fact((n - r) as u64)
        };
        let p_w = m.iter().map(|&x| fact(x)).sum::<f64>() - fact(e);
        let p_m = -choose(e as i64 - 1, k as i64 - 1);
        let (z1, zk) = (z[0], z[z.len() - 1]);
        let cross = i64::from(!zero_allowed && z1 < 0 && zk > 0);
        let range = zk - z1 + 1 - cross;
        let p_k = -(range as f64).ln();
        let p_mid = -choose(zk - z1 - 1 - cross, k as i64 - 2);
        let point = |g: i64| {
            let w = (-lambda * (g.abs() as f64) * delta).exp();
            if zero_allowed {
                (w * (lambda * delta / 2.0).tanh()).ln()
            } else {
                (w * ((lambda * delta).exp() - 1.0) / 2.0).ln()
            }
        };
        let p_ends = point(z1) + point(zk) + if z1 == zk { 0.0 } else { 2f64.ln() };
        p_w + p_m + p_k + p_mid + p_ends
    }

    proptest! {
        #[test]
        fn matches_composed_factors(
            zero_allowed in any::<bool>(),
            raw in proptest::collection::btree_map(-6i64..=6, 1u64..4, 1..5),
            lambda in 0.3f64..2.0,
            delta in 0.05f64..1.0,
        ) {
            let raw: BTreeMap<i64, u64> = raw.into_iter().filter(|(g, _)| zero_allowed || *g != 0).collect();
            prop_assume!(!raw.is_empty());
            let z: Vec<i64> = raw.keys().copied().collect();
            let m: Vec<u64> = raw.values().copied().collect();
            let state = CategoryState { delta, lambda, z: z.clone(), m: m.clone() };
            let c = Categories::from_state(zero_allowed, &state).unwrap();
            prop_assert!((c.log_prior() - composed(zero_allowed, lambda, delta, &z, &m)).abs() < 1e-9);
            prop_assert_eq!(c.state(), state);
        }

        #[test]
        fn deltas_are_path_independent(seed in 0u64..5000, zero_allowed in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut c = Categories::new(zero_allowed, 0.7, 0.5).unwrap();
            let mut values: Vec<Option<i64>> = vec![None; 12];
            if zero_allowed {
                values.iter_mut().for_each(|v| *v = Some(0));
                c.apply(&[(None, Some(0), 12)]).unwrap();
            }
            let mut tracked = c.log_prior();
            for _ in 0..60 {
                let mut changes = Vec::new();
                let mut moved = Vec::new();
                for _ in 0..rng.random_range(1..4) {
                    let slot = rng.random_range(0..values.len());
                    if moved.contains(&slot) {
                        continue;
                    }
                    moved.push(slot);
                    let g = rng.random_range(-5i64..=5);
                    let new = if g == 0 && !zero_allowed { None } else { Some(g) };
                    changes.push((values[slot], new, 1));
                    values[slot] = new;
                }
                let predicted = c.log_prior_after(&changes);
                tracked += c.delta_log_prior(&changes);
                c.apply(&changes).unwrap();
                let fresh = Categories::from_values(zero_allowed, 0.7, 0.5, values.iter().map(|v| v.map_or(0.0, |g| g as f64 * 0.5))).unwrap();
                prop_assert!((predicted - fresh.log_prior()).abs() < 1e-9 || predicted == fresh.log_prior());
                if tracked.is_finite() {
                    prop_assert!((tracked - fresh.log_prior()).abs() < 1e-8);
                } else {
                    tracked = fresh.log_prior();
                }
                prop_assert_eq!(&c.counts, &fresh.counts);
                prop_assert_eq!(c.total, fresh.total);
            }
        }
    }

    /// Number of compositions of e into k positive parts is C(e-1, k-1).
    #[test]
    fn count_prior_normalizes() {
        fn compositions(e: u64, k: u64, out: &mut Vec<Vec<u64>>, cur: &mut Vec<u64>) {
            if k == 0 {
                if e == 0 {
                    out.push(cur.clone());
                }
                return;
            }
            for first in 1..=e {
                cur.push(first);
                compositions(e - first, k - 1, out, cur);
                cur.pop();
            }
        }
        for e in 1..=5u64 {
            for k in 1..=e {
                let mut all = Vec::new();
                compositions(e, k, &mut all, &mut Vec::new());
                let p: f64 = all.iter().map(|_| (-ln_binomial(e - 1, k - 1)).exp()).sum();
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
    }

    /// P(W | z, m) over all assignments of E labelled entries with counts m.
    #[test]
    fn assignment_prior_normalizes() {
        for m in [vec![1u64, 2], vec![2, 2, 1], vec![5]] {
            let e: u64 = m.iter().sum();
            let lnp = m.iter().map(|&x| ln_factorial(x)).sum::<f64>() - ln_factorial(e);
            // multinomial count of assignments
            let n_assign = (ln_factorial(e) - m.iter().map(|&x| ln_factorial(x)).sum::<f64>()).exp();
            assert!((n_assign * lnp.exp() - 1.0).abs() < 1e-12);
        }
    }

    /// Middle values and K given extremes, enumerated over a span up to 6.
    #[test]
    fn value_priors_normalize() {
        for zero_allowed in [false, true] {
            for z1 in -3i64..=3 {
                for zk in z1..=z1 + 6 {
                    if !zero_allowed && (z1 == 0 || zk == 0) {
                        continue;
                    }
                    let inner: Vec<i64> = (z1 + 1..zk).filter(|&g| zero_allowed || g != 0).collect();
                    let cross = i64::from(!zero_allowed && z1 < 0 && zk > 0);
                    let range = zk - z1 + 1 - cross;
                    // K uniform on 1..=range
                    assert_eq!(range as usize, if z1 == zk { 1 } else { inner.len() + 2 });
                    if z1 < zk {
                        for k in 2..=(inner.len() as i64 + 2) {
                            let subsets = (0u32..1 << inner.len()).filter(|s| s.count_ones() as i64 == k - 2).count();
                            let p = subsets as f64 * (-ln_binomial_signed(zk - z1 - 1 - cross, k - 2)).exp();
                            assert!((p - 1.0).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extreme_pair_prior_normalizes() {
        for zero_allowed in [false, true] {
            let c = Categories::new(zero_allowed, 1.0, 0.5).unwrap();
            let mut terms = Vec::new();
            for z1 in -120i64..=120 {
                for zk in z1..=120 {
                    if !zero_allowed && (z1 == 0 || zk == 0) {
                        continue;
                    }
                    terms.push(c.ln_point(z1) + c.ln_point(zk) + if z1 == zk { 0.0 } else { LN_2 });
                }
            }
            assert!(log_sum_exp(&terms).abs() < 1e-12);
        }
    }

    #[test]
    fn count_factor_alone() {
        assert!((-ln_binomial(2, 1) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rebook_cases() {
        let mut c = Categories::from_values(false, 1.0, 1.0, [2.0, 2.0, 2.0, 5.0]).unwrap();
        c.rebook(2.0, 3.0, 1, false).unwrap();
        assert_eq!((c.count(2), c.count(3), c.k()), (2, 1, 3));
        c.rebook(2.0, 5.0, 1, true).unwrap();
        assert_eq!((c.count(2), c.count(5)), (1, 2));
        c.rebook(2.0, 5.0, 1, true).unwrap();
        assert_eq!(c.k(), 2);
        c.rebook(3.0, -4.0, 1, false).unwrap();
        assert_eq!(c.grid_values().collect::<Vec<_>>(), vec![-4, 5]);
        assert!(c.rebook(5.0, -4.0, 2, false).is_err());
        assert!(c.rebook(5.0, 0.0, 1, true).is_err());
        assert!(c.rebook(5.0, 0.5, 1, true).is_err());
        assert!(c.rebook(7.0, 1.0, 1, true).is_err());
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn tiny_delta_is_stable() {
        let c = Categories::from_values(false, 1.0, 1e-8, [0.5, -0.25, 0.5, 1.0]).unwrap();
        let lp = c.log_prior();
        assert!(lp.is_finite());
        let after = c.log_prior_after(&[(Some(50_000_000), Some(60_000_000), 1)]);
        let moved = Categories::from_values(false, 1.0, 1e-8, [0.5, -0.25, 0.6, 1.0]).unwrap();
        assert!((after - moved.log_prior()).abs() < 1e-9);
    }
}
