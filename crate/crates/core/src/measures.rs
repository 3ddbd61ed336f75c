//! The ambiguity family as Girsanov reweightings of one P-sample.
//!
//! A control `theta` with `|theta(t)| <= k` defines `Q^theta` through the
//! stochastic exponential `exp(-1/2 int theta^2 dt + int theta dB)`. Under
//! `Q^theta` the Brownian motion picks up drift `theta`, so the drift of the
//! underlying shifts by `+theta * sigma`. All controls reuse the same paths
//! (common random numbers); only the weights change.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::paths::PathBundle;
use crate::stats::{mean_and_se, Estimate};

#[derive(Debug, Clone, PartialEq)]
pub enum ControlKind {
    Constant(f64),
    /// Piecewise constant at `+-level`; `signs[j]` applies after
    /// `switch_times[j - 1]`, so `signs.len() == switch_times.len() + 1`.
    BangBang {
        switch_times: Vec<f64>,
        signs: Vec<i8>,
        level: f64,
    },
}

/// Deterministic admissible control with `|theta(t)| <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaControl {
    kind: ControlKind,
    bound: f64,
}

impl ThetaControl {
    pub fn constant(theta: f64, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        if !theta.is_finite() || theta.abs() > bound {
            return Err(Error::InvalidControl(format!(
                "constant control {theta} exceeds bound {bound}"
            )));
        }
        Ok(Self {
            kind: ControlKind::Constant(theta),
            bound,
        })
    }

    pub fn bang_bang(switch_times: Vec<f64>, signs: Vec<i8>, level: f64, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        if !(level.is_finite() && level >= 0.0 && level <= bound) {
            return Err(Error::InvalidControl(format!(
                "bang-bang level {level} must lie in [0, {bound}]"
            )));
        }
        if signs.len() != switch_times.len() + 1 {
            return Err(Error::InvalidControl(format!(
                "{} switch times need {} signs, got {}",
                switch_times.len(),
                switch_times.len() + 1,
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidControl("signs must be +1 or -1".into()));
        }
        if switch_times.iter().any(|t| !t.is_finite() || *t < 0.0)
            || switch_times.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidControl(
                "switch times must be finite, nonnegative and sorted".into(),
            ));
        }
        Ok(Self {
            kind: ControlKind::BangBang {
                switch_times,
                signs,
                level,
            },
            bound,
        })
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `theta(t)`, right-continuous at switch times.
    pub fn value_at(&self, t: f64) -> f64 {
        match &self.kind {
            ControlKind::Constant(v) => *v,
            ControlKind::BangBang {
                switch_times,
                signs,
                level,
            } => {
                let j = switch_times.partition_point(|&s| s <= t);
                level * f64::from(signs[j])
            }
        }
    }

    /// `-theta`, which lies in the family whenever `theta` does.
    pub fn negated(&self) -> Self {
        let kind = match &self.kind {
            ControlKind::Constant(v) => ControlKind::Constant(-v),
            ControlKind::BangBang {
                switch_times,
                signs,
                level,
            } => ControlKind::BangBang {
                switch_times: switch_times.clone(),
                signs: signs.iter().map(|s| -s).collect(),
                level: *level,
            },
        };
        Self {
            kind,
            bound: self.bound,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, ControlKind::Constant(_))
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            ControlKind::Constant(v) => format!("const({v:+.6})"),
            ControlKind::BangBang {
                switch_times,
                signs,
                level,
            } => {
                let pattern: String = signs.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
                format!("bang({level:.6};{pattern};{} switches)", switch_times.len())
            }
        }
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if bound.is_finite() && bound >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidControl(format!("bound must be >= 0, got {bound}")))
    }
}

/// `count` constants spaced uniformly on `[-k, k]`, exactly symmetric.
pub fn constant_grid(k: f64, count: usize) -> Result<Vec<ThetaControl>> {
    if count == 0 {
        return Err(invalid("constant grid needs at least one point"));
    }
    if k == 0.0 || count == 1 {
        return Ok(vec![ThetaControl::constant(0.0, k)?]);
    }
    let m = (count - 1) as f64;
    (0..count)
        .map(|j| {
            let num = 2.0 * j as f64 - m;
            let theta = (k * num / m).clamp(-k, k);
            ThetaControl::constant(theta, k)
        })
        .collect()
}

/// Default family: `constants` uniform constants on `[-k, k]` plus eight
/// bang-bang controls at level `k` with 1 to 4 evenly spaced switches.
///
/// With `k = 0` the family collapses to `{theta = 0}`.
pub fn standard_family(k: f64, constants: usize, horizon: f64) -> Result<Vec<ThetaControl>> {
    let mut family = constant_grid(k, constants)?;
    if k == 0.0 {
        return Ok(family);
    }
    for switches in 1..=4usize {
        let times: Vec<f64> = (1..=switches)
            .map(|j| horizon * j as f64 / (switches + 1) as f64)
            .collect();
        for first in [1i8, -1] {
            let signs = (0..=switches)
                .map(|j| if j % 2 == 0 { first } else { -first })
                .collect();
            family.push(ThetaControl::bang_bang(times.clone(), signs, k, k)?);
        }
    }
    Ok(family)
}

/// True when every member's negation is also a member.
pub fn closed_under_negation(family: &[ThetaControl]) -> bool {
    family
        .iter()
        .all(|c| family.iter().any(|d| *d == c.negated()))
}

/// Per-path Radon–Nikodym weights `dQ^theta / dP`.
#[derive(Debug, Clone)]
pub struct DensityWeights {
    weights: Vec<f64>,
    control: ThetaControl,
}

impl DensityWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn control(&self) -> &ThetaControl {
        &self.control
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sample mean of the weights; 1 in expectation.
    pub fn mean(&self) -> Estimate {
        mean_and_se(self.weights.len(), |i| self.weights[i])
    }

    /// Sample mean of the squared weights; `exp(int theta^2 dt)` in expectation.
    pub fn second_moment(&self) -> Estimate {
        mean_and_se(self.weights.len(), |i| self.weights[i] * self.weights[i])
    }

    /// Positivity plus the mean-one check at `z` standard errors.
    pub fn martingale_check(&self, z: f64) -> bool {
        let m = self.mean();
        self.weights.iter().all(|&w| w > 0.0) && (m.value - 1.0).abs() <= z * m.std_error.max(1e-15)
    }
}

/// Discrete stochastic exponential of `theta` along every path.
///
/// `theta` is evaluated at the left end of each step. Runs of equal
/// `theta` are summed first, so a constant control gives exactly
/// `exp(-theta^2 T / 2 + theta B_T)`.
pub fn girsanov_weights(control: &ThetaControl, bundle: &PathBundle) -> Result<DensityWeights> {
    let grid = bundle.grid();
    let steps = grid.steps();
    if let ControlKind::BangBang { switch_times, .. } = control.kind() {
        if switch_times.iter().any(|&t| t > grid.horizon()) {
            return Err(Error::InvalidControl(format!(
                "switch time beyond horizon {}",
                grid.horizon()
            )));
        }
    }
    let thetas: Vec<f64> = (0..steps).map(|i| control.value_at(grid.time(i))).collect();
    if let Some(bad) = thetas.iter().find(|t| t.abs() > control.bound()) {
        return Err(Error::InvalidControl(format!(
            "theta {bad} exceeds bound {}",
            control.bound()
        )));
    }
    // (start, end, theta) runs of equal theta
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &t) in thetas.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.2 == t => run.1 = i + 1,
            _ => runs.push((i, i + 1, t)),
        }
    }
    let compensator: f64 = runs
        .iter()
        .map(|&(a, b, t)| -0.5 * t * t * (grid.time(b) - grid.time(a)))
        .sum();

    let incs = bundle.increments();
    let weights = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let row = incs.row(p);
            let drive: f64 = runs
                .iter()
                .map(|&(a, b, t)| {
                    let db: f64 = (a..b).map(|i| row[i]).sum();
                    t * db
                })
                .sum();
            (compensator + drive).exp()
        })
        .collect();
    Ok(DensityWeights {
        weights,
        control: control.clone(),
    })
}

/// `E_Q[payoff]` as the P-sample mean of `weight * payoff`.
pub fn expectation_under(payoff_values: &[f64], weights: &DensityWeights) -> Result<Estimate> {
    if payoff_values.len() != weights.len() {
        return Err(invalid(format!(
            "payoff has {} values but weights have {}",
            payoff_values.len(),
            weights.len()
        )));
    }
    if payoff_values.is_empty() {
        return Err(invalid("empty sample"));
    }
    if let Some(i) = payoff_values.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("non-finite payoff value at path {i}")));
    }
    let w = weights.weights();
    Ok(mean_and_se(w.len(), |i| w[i] * payoff_values[i]))
}
