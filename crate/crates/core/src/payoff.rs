//! Terminal payoffs `Phi(S_T)` with declared monotonicity.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    None,
}

impl Monotonicity {
    pub fn flipped(self) -> Self {
        match self {
            Monotonicity::Increasing => Monotonicity::Decreasing,
            Monotonicity::Decreasing => Monotonicity::Increasing,
            Monotonicity::None => Monotonicity::None,
        }
    }
}

/// Closed-form-priceable shapes. `Custom` covers everything else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffShape {
    Call { strike: f64 },
    Put { strike: f64 },
    Digital { strike: f64 },
    Custom,
}

#[derive(Clone)]
pub struct Payoff {
    name: String,
    map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    monotonicity: Monotonicity,
    shape: PayoffShape,
    lipschitz: bool,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("name", &self.name)
            .field("monotonicity", &self.monotonicity)
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

/// Spot-check points for declared monotonicity: log-spaced on [1e-2, 1e4].
fn probe_points() -> impl Iterator<Item = f64> {
    (0..=600).map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 600.0))
}

impl Payoff {
    /// Builds a payoff and spot-checks the declared monotonicity.
    pub fn new<F>(name: impl Into<String>, map: F, monotonicity: Monotonicity) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let p = Self {
            name: name.into(),
            map: Arc::new(map),
            monotonicity,
            shape: PayoffShape::Custom,
            lipschitz: true,
        };
        p.spot_check()?;
        Ok(p)
    }

    pub fn call(strike: f64) -> Self {
        Self::builtin(
            format!("call({strike})"),
            move |s| (s - strike).max(0.0),
            Monotonicity::Increasing,
            PayoffShape::Call { strike },
        )
    }

    pub fn put(strike: f64) -> Self {
        Self::builtin(
            format!("put({strike})"),
            move |s| (strike - s).max(0.0),
            Monotonicity::Decreasing,
            PayoffShape::Put { strike },
        )
    }

    /// `1{S_T > K}`; discontinuous, so flagged non-Lipschitz.
    pub fn digital(strike: f64) -> Self {
        let mut p = Self::builtin(
            format!("digital({strike})"),
            move |s| if s > strike { 1.0 } else { 0.0 },
            Monotonicity::Increasing,
            PayoffShape::Digital { strike },
        );
        p.lipschitz = false;
        p
    }

    /// `|S_T - K|`, not monotone.
    pub fn straddle(strike: f64) -> Self {
        Self::builtin(
            format!("straddle({strike})"),
            move |s| (s - strike).abs(),
            Monotonicity::None,
            PayoffShape::Custom,
        )
    }

    /// `a + b S_T`.
    pub fn affine(a: f64, b: f64) -> Self {
        let mono = if b >= 0.0 {
            Monotonicity::Increasing
        } else {
            Monotonicity::Decreasing
        };
        Self::builtin(format!("affine({a},{b})"), move |s| a + b * s, mono, PayoffShape::Custom)
    }

    /// Constant payoff; nondecreasing, so declared increasing.
    pub fn constant(c: f64) -> Self {
        Self::builtin(format!("const({c})"), move |_| c, Monotonicity::Increasing, PayoffShape::Custom)
    }

    fn builtin<F>(name: String, map: F, monotonicity: Monotonicity, shape: PayoffShape) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name,
            map: Arc::new(map),
            monotonicity,
            shape,
            lipschitz: true,
        }
    }

    fn spot_check(&self) -> Result<()> {
        let pts: Vec<f64> = probe_points().collect();
        let vals: Vec<f64> = pts.iter().map(|&s| self.eval(s)).collect();
        for w in vals.windows(2).zip(pts.windows(2)) {
            let (v, s) = w;
            let bad = match self.monotonicity {
                Monotonicity::Increasing => v[1] < v[0],
                Monotonicity::Decreasing => v[1] > v[0],
                Monotonicity::None => false,
            };
            if bad {
                return Err(Error::InvalidPayoff(format!(
                    "{} declared {:?} but Phi({}) = {} and Phi({}) = {}",
                    self.name, self.monotonicity, s[0], v[0], s[1], v[1]
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    pub fn shape(&self) -> PayoffShape {
        self.shape
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lipschitz
    }

    /// Marks a custom payoff as discontinuous (affects BSDE tolerances).
    pub fn with_lipschitz(mut self, lipschitz: bool) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.map)(s)
    }

    pub fn eval_all(&self, states: &[f64]) -> Vec<f64> {
        states.iter().map(|&s| self.eval(s)).collect()
    }

    /// `-Phi` with flipped monotonicity.
    pub fn negated(&self) -> Self {
        let map = Arc::clone(&self.map);
        Self {
            name: format!("-{}", self.name),
            map: Arc::new(move |s| -map(s)),
            monotonicity: self.monotonicity.flipped(),
            shape: PayoffShape::Custom,
            lipschitz: self.lipschitz,
        }
    }

    /// `Phi_1 + Phi_2`; monotone only when both share a direction.
    pub fn plus(&self, other: &Payoff) -> Self {
        let (a, b) = (Arc::clone(&self.map), Arc::clone(&other.map));
        let monotonicity = if self.monotonicity == other.monotonicity {
            self.monotonicity
        } else {
            Monotonicity::None
        };
        Self {
            name: format!("{}+{}", self.name, other.name),
            map: Arc::new(move |s| a(s) + b(s)),
            monotonicity,
            shape: PayoffShape::Custom,
            lipschitz: self.lipschitz && other.lipschitz,
        }
    }
}
