//! Upper and lower capacities generated by the measure family, Choquet
//! integrals by level-set integration, and the comonotonicity/submodularity
//! tooling around them.
//!
//! A capacity evaluates an event `A` (one boolean per path) as the extreme,
//! over the family, of the self-normalised reweighted frequency
//! `sum_{i in A} w_i / sum_i w_i`. Each member is then an exact probability
//! on the sample, which makes `c(empty) = 0`, `c(Omega) = 1` and
//! `lower(A) = 1 - upper(A^c)` hold without Monte Carlo slack.
//!
//! The Choquet integral uses the translation form
//! `int X dc = x_min + int_{x_min}^{x_max} c(X > x) dx`, which is the
//! two-sided level integral with the `-1` correction on negative levels
//! already folded in.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::measures::{girsanov_weights, DensityWeights, ThetaControl};
use crate::paths::PathBundle;
use crate::stats::{mean_and_se, ordered_map_sum, ordered_sum};

/// Payoffs with at most this many distinct values always take the exact path.
pub const SIMPLE_FUNCTION_LIMIT: usize = 64;

/// Default number of empirical-quantile levels.
pub const DEFAULT_QUANTILE_LEVELS: usize = 513;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Upper,
    Lower,
}

impl Orientation {
    fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Orientation::Upper => a.max(b),
            Orientation::Lower => a.min(b),
        }
    }

    fn identity(self) -> f64 {
        match self {
            Orientation::Upper => f64::NEG_INFINITY,
            Orientation::Lower => f64::INFINITY,
        }
    }
}

/// Event on the sample space of a bundle: one flag per path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event(Vec<bool>);

impl Event {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Self {
        Self((0..n).map(f).collect())
    }

    /// `{X > x}` on a vector of sample values.
    pub fn exceeds(values: &[f64], x: f64) -> Self {
        Self(values.iter().map(|&v| v > x).collect())
    }

    pub fn full(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn empty(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    pub fn union(&self, other: &Event) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect())
    }

    pub fn intersection(&self, other: &Event) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn is_subset_of(&self, other: &Event) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }

    /// Indicator payoff `I_A`.
    pub fn indicator(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Capacity value with the standard error of the attaining member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityValue {
    pub value: f64,
    pub std_error: f64,
    /// Index into the family of the extremal member (`None` for the trivial events).
    pub attained_by: Option<usize>,
}

struct Member {
    weights: DensityWeights,
    total: f64,
}

/// `c(A) = sup_Q Q(A)` (upper) or `inf_Q Q(A)` (lower) over a finite family.
#[derive(Clone)]
pub struct Capacity {
    orientation: Orientation,
    family: Arc<[ThetaControl]>,
    members: Arc<[Member]>,
    n_paths: usize,
}

impl std::fmt::Debug for Capacity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Capacity")
            .field("orientation", &self.orientation)
            .field("family_size", &self.family.len())
            .field("n_paths", &self.n_paths)
            .finish()
    }
}

/// Builds the capacity and caches one weight vector per family member.
pub fn build_capacity(
    orientation: Orientation,
    family: &[ThetaControl],
    bundle: &PathBundle,
) -> Result<Capacity> {
    if family.is_empty() {
        return Err(invalid("capacity needs a nonempty family"));
    }
    let members = family
        .iter()
        .map(|c| {
            let weights = girsanov_weights(c, bundle)?;
            let total = ordered_sum(weights.weights());
            Ok(Member { weights, total })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Capacity {
        orientation,
        family: family.into(),
        members: members.into(),
        n_paths: bundle.n_paths(),
    })
}

/// Clipping beyond this many standard errors is logged.
const CLIP_WARN_SE: f64 = 10.0;

impl Capacity {
    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn family(&self) -> &[ThetaControl] {
        &self.family
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Same family and weights, other orientation.
    pub fn with_orientation(&self, orientation: Orientation) -> Self {
        Self {
            orientation,
            ..self.clone()
        }
    }

    pub fn member_weights(&self, i: usize) -> &DensityWeights {
        &self.members[i].weights
    }

    pub fn evaluate(&self, event: &Event) -> Result<f64> {
        Ok(self.evaluate_detailed(event)?.value)
    }

    pub fn evaluate_detailed(&self, event: &Event) -> Result<CapacityValue> {
        if event.len() != self.n_paths {
            return Err(invalid(format!(
                "event has {} flags but capacity covers {} paths",
                event.len(),
                self.n_paths
            )));
        }
        let flags = event.flags();
        let count = event.count();
        if count == 0 || count == self.n_paths {
            return Ok(CapacityValue {
                value: if count == 0 { 0.0 } else { 1.0 },
                std_error: 0.0,
                attained_by: None,
            });
        }
        let mut best = self.orientation.identity();
        let mut best_idx = 0;
        for (j, m) in self.members.iter().enumerate() {
            let w = m.weights.weights();
            let inside = ordered_map_sum(w.len(), |i| if flags[i] { w[i] } else { 0.0 });
            let q = inside / m.total;
            let improves = match self.orientation {
                Orientation::Upper => q > best,
                Orientation::Lower => q < best,
            };
            if improves {
                best = q;
                best_idx = j;
            }
        }
        let w = self.members[best_idx].weights.weights();
        let se = mean_and_se(w.len(), |i| if flags[i] { w[i] } else { 0.0 }).std_error;
        let clipped = best.clamp(0.0, 1.0);
        if (clipped - best).abs() > CLIP_WARN_SE * se.max(f64::EPSILON) {
            log::warn!("capacity estimate {best} clipped to {clipped}");
        }
        Ok(CapacityValue {
            value: clipped,
            std_error: se,
            attained_by: Some(best_idx),
        })
    }
}

/// How the levels of the Choquet quadrature are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelScheme {
    /// Empirical quantiles at `count` equally spaced probabilities.
    EmpiricalQuantiles(usize),
    /// `count` equally spaced levels between sample min and max.
    Uniform(usize),
    /// Every distinct sample value; integrates the empirical capacity exactly.
    EverySample,
}

impl Default for LevelScheme {
    fn default() -> Self {
        LevelScheme::EmpiricalQuantiles(DEFAULT_QUANTILE_LEVELS)
    }
}

/// Strictly increasing levels spanning `[min X, max X]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelQuadrature {
    levels: Vec<f64>,
    scheme: LevelScheme,
}

impl LevelQuadrature {
    pub fn build(values: &[f64], scheme: LevelScheme) -> Result<Self> {
        check_finite(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self::from_sorted(&sorted, scheme)
    }

    fn from_sorted(sorted: &[f64], scheme: LevelScheme) -> Result<Self> {
        let n = sorted.len();
        let (lo, hi) = (sorted[0], sorted[n - 1]);
        let mut levels: Vec<f64> = match scheme {
            LevelScheme::EmpiricalQuantiles(count) => {
                if count < 2 {
                    return Err(invalid("quadrature needs at least two levels"));
                }
                (0..count)
                    .map(|j| {
                        let pos = (n - 1) as f64 * j as f64 / (count - 1) as f64;
                        let a = pos.floor() as usize;
                        let b = (a + 1).min(n - 1);
                        let frac = pos - a as f64;
                        if frac == 0.0 {
                            sorted[a]
                        } else {
                            sorted[a] + frac * (sorted[b] - sorted[a])
                        }
                    })
                    .collect()
            }
            LevelScheme::Uniform(count) => {
                if count < 2 {
                    return Err(invalid("quadrature needs at least two levels"));
                }
                (0..count)
                    .map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64)
                    .collect()
            }
            LevelScheme::EverySample => sorted.to_vec(),
        };
        levels[0] = lo;
        *levels.last_mut().expect("at least one level") = hi;
        levels.dedup();
        Ok(Self { levels, scheme })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn scheme(&self) -> LevelScheme {
        self.scheme
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid("empty sample"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite payoff value at path {i}")));
    }
    Ok(())
}

/// Choquet integral with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoquetValue {
    pub value: f64,
    /// Largest standard error of `E_Q[X]` over the family (plug-in).
    pub std_error: f64,
    /// Worst-case trapezoid error; zero on the exact path.
    pub quadrature_bound: f64,
    /// True when every jump of `x -> c(X > x)` was a level.
    pub exact: bool,
}

/// `int X dc` with the given quadrature.
pub fn choquet_integral(payoff_values: &[f64], capacity: &Capacity, quad: &LevelQuadrature) -> Result<f64> {
    Ok(choquet_integral_detailed(payoff_values, capacity, quad)?.value)
}

/// Convenience wrapper that builds the levels from the sample.
pub fn choquet(payoff_values: &[f64], capacity: &Capacity, scheme: LevelScheme) -> Result<ChoquetValue> {
    let quad = LevelQuadrature::build(payoff_values, scheme)?;
    choquet_integral_detailed(payoff_values, capacity, &quad)
}

pub fn choquet_integral_detailed(
    payoff_values: &[f64],
    capacity: &Capacity,
    quad: &LevelQuadrature,
) -> Result<ChoquetValue> {
    check_finite(payoff_values)?;
    let n = payoff_values.len();
    if n != capacity.n_paths {
        return Err(invalid(format!(
            "payoff has {n} values but capacity covers {} paths",
            capacity.n_paths
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| payoff_values[a].total_cmp(&payoff_values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| payoff_values[i]).collect();
    let (lo, hi) = (sorted[0], sorted[n - 1]);

    let levels = quad.levels();
    if levels.first() != Some(&lo) || levels.last() != Some(&hi) {
        return Err(invalid("quadrature levels must span [min X, max X]"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("quadrature levels must be strictly increasing"));
    }

    // distinct values of the sample with the sorted position where each starts
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for (pos, &v) in sorted.iter().enumerate() {
        if distinct.last().is_none_or(|&(u, _)| u != v) {
            distinct.push((v, pos));
        }
    }

    let std_error = capacity
        .members
        .iter()
        .map(|m| {
            let w = m.weights.weights();
            mean_and_se(n, |i| w[i] * payoff_values[i]).std_error
        })
        .fold(0.0, f64::max);

    let exact_path =
        distinct.len() <= SIMPLE_FUNCTION_LIMIT || quad.scheme() == LevelScheme::EverySample;

    if exact_path {
        // c(X > u_{j-1}) = c(X >= u_j) at each group start
        let starts: Vec<usize> = distinct.iter().skip(1).map(|&(_, p)| p).collect();
        let caps = extreme_tail_probs(capacity, &order, &starts);
        let mut value = lo;
        for (j, c) in caps.iter().enumerate() {
            value += (distinct[j + 1].0 - distinct[j].0) * c;
        }
        return Ok(ChoquetValue {
            value,
            std_error,
            quadrature_bound: 0.0,
            exact: true,
        });
    }

    // c(X > L) starts at the first sorted index whose value exceeds L
    let above: Vec<usize> = levels
        .iter()
        .map(|&l| sorted.partition_point(|&v| v <= l))
        .collect();
    let caps = extreme_tail_probs(capacity, &order, &above);
    let mut value = lo;
    let mut bound = 0.0;
    let mut exact = true;
    for j in 0..levels.len() - 1 {
        let width = levels[j + 1] - levels[j];
        let first_at_or_above_next = sorted.partition_point(|&v| v < levels[j + 1]);
        if first_at_or_above_next == above[j] {
            // no sample strictly between the levels: integrand is constant
            value += caps[j] * width;
        } else {
            value += 0.5 * (caps[j] + caps[j + 1]) * width;
            bound += 0.5 * (caps[j] - caps[j + 1]).abs() * width;
            exact = false;
        }
    }
    Ok(ChoquetValue {
        value,
        std_error,
        quadrature_bound: bound,
        exact,
    })
}

/// Extreme over the family of `Q(sorted position >= p)` for each `p`.
fn extreme_tail_probs(capacity: &Capacity, order: &[usize], positions: &[usize]) -> Vec<f64> {
    let orientation = capacity.orientation;
    let n = order.len();
    capacity
        .members
        .par_iter()
        .map(|m| {
            let w = m.weights.weights();
            // suffix sums in sorted order, sampled at the requested positions
            let mut tail = vec![0.0; n + 1];
            for pos in (0..n).rev() {
                tail[pos] = tail[pos + 1] + w[order[pos]];
            }
            let total = tail[0];
            positions
                .iter()
                .map(|&p| tail[p] / total)
                .collect::<Vec<f64>>()
        })
        .reduce(
            || vec![orientation.identity(); positions.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| orientation.pick(*x, *y)).collect(),
        )
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0))
        .collect()
}

/// Outcome of [`is_comonotone`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComonotoneCheck {
    pub comonotone: bool,
    /// Indices `(i, j)` with `(x_i - x_j)(y_i - y_j) < 0`.
    pub violation: Option<(usize, usize)>,
}

/// Sort-based pairwise comonotonicity test, `O(n log n)`.
///
/// Ties in `x` are compatible with anything (the product is zero).
pub fn is_comonotone(x_values: &[f64], y_values: &[f64]) -> Result<ComonotoneCheck> {
    if x_values.len() != y_values.len() {
        return Err(invalid("comonotonicity check needs equal lengths"));
    }
    let mut order: Vec<usize> = (0..x_values.len()).collect();
    order.sort_by(|&a, &b| x_values[a].total_cmp(&x_values[b]));
    // (max y, index) over all strictly smaller x seen so far
    let mut prev_max: Option<(f64, usize)> = None;
    let mut g = 0;
    while g < order.len() {
        let x = x_values[order[g]];
        let mut end = g;
        while end < order.len() && x_values[order[end]] == x {
            end += 1;
        }
        let group = &order[g..end];
        if let Some((ymax, imax)) = prev_max {
            if let Some(&bad) = group.iter().find(|&&i| y_values[i] < ymax) {
                return Ok(ComonotoneCheck {
                    comonotone: false,
                    violation: Some((imax, bad)),
                });
            }
        }
        for &i in group {
            if prev_max.is_none_or(|(m, _)| y_values[i] > m) {
                prev_max = Some((y_values[i], i));
            }
        }
        g = end;
    }
    Ok(ComonotoneCheck {
        comonotone: true,
        violation: None,
    })
}

/// Result of [`submodularity_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularityReport {
    /// `c(A u B) + c(A n B) - c(A) - c(B)` per pair.
    pub excess: Vec<f64>,
    /// Three pooled standard errors per pair.
    pub tolerance: Vec<f64>,
    pub max_excess: f64,
    pub min_excess: f64,
    /// Pairs whose excess has the wrong sign beyond tolerance.
    pub violations: usize,
}

impl SubmodularityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks 2-alternation (upper) or 2-monotonicity (lower) on event pairs.
pub fn submodularity_check(capacity: &Capacity, event_pairs: &[(Event, Event)]) -> Result<SubmodularityReport> {
    let mut excess = Vec::with_capacity(event_pairs.len());
    let mut tolerance = Vec::with_capacity(event_pairs.len());
    let mut violations = 0;
    for (a, b) in event_pairs {
        let ca = capacity.evaluate_detailed(a)?;
        let cb = capacity.evaluate_detailed(b)?;
        let cu = capacity.evaluate_detailed(&a.union(b))?;
        let ci = capacity.evaluate_detailed(&a.intersection(b))?;
        let e = cu.value + ci.value - ca.value - cb.value;
        let pooled = [ca, cb, cu, ci]
            .iter()
            .map(|c| c.std_error * c.std_error)
            .sum::<f64>()
            .sqrt();
        let tol = 3.0 * pooled + 4.0 * f64::EPSILON;
        let bad = match capacity.orientation {
            Orientation::Upper => e > tol,
            Orientation::Lower => e < -tol,
        };
        if bad {
            violations += 1;
        }
        excess.push(e);
        tolerance.push(tol);
    }
    let max_excess = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_excess = excess.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SubmodularityReport {
        excess,
        tolerance,
        max_excess,
        min_excess,
        violations,
    })
}

/// Result of [`choquet_holder_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport {
    /// `int |XY| dc`
    pub lhs: f64,
    /// `(int |X|^p dc)^(1/p) (int |Y|^q dc)^(1/q)`
    pub rhs: f64,
    pub tolerance: f64,
    pub violated: bool,
}

/// Hölder inequality for the Choquet integral of a submodular capacity.
pub fn choquet_holder_check(
    x_values: &[f64],
    y_values: &[f64],
    capacity: &Capacity,
    p: f64,
    q: f64,
) -> Result<HolderReport> {
    if !(p > 1.0 && q > 1.0 && p.is_finite() && q.is_finite()) || (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("need 1 < p, q < inf with 1/p + 1/q = 1, got p={p}, q={q}")));
    }
    if capacity.orientation != Orientation::Upper {
        return Err(invalid("Hölder check applies to the upper (submodular) capacity"));
    }
    if x_values.len() != y_values.len() {
        return Err(invalid("x and y must have equal lengths"));
    }
    let xy: Vec<f64> = x_values.iter().zip(y_values).map(|(x, y)| (x * y).abs()).collect();
    let xp: Vec<f64> = x_values.iter().map(|x| x.abs().powf(p)).collect();
    let yq: Vec<f64> = y_values.iter().map(|y| y.abs().powf(q)).collect();
    let lhs = choquet(&xy, capacity, LevelScheme::EverySample)?;
    let a = choquet(&xp, capacity, LevelScheme::EverySample)?;
    let b = choquet(&yq, capacity, LevelScheme::EverySample)?;
    let rhs = a.value.powf(1.0 / p) * b.value.powf(1.0 / q);
    // delta method on the product of powers
    let rel = |c: &ChoquetValue, e: f64| if c.value > 0.0 { c.std_error / (e * c.value) } else { 0.0 };
    let rhs_se = rhs * (rel(&a, p).powi(2) + rel(&b, q).powi(2)).sqrt();
    let tolerance = 3.0 * (lhs.std_error.powi(2) + rhs_se.powi(2)).sqrt() + 1e-12 * rhs.abs();
    Ok(HolderReport {
        lhs: lhs.value,
        rhs,
        tolerance,
        violated: lhs.value > rhs + tolerance,
    })
}
