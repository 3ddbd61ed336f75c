//! Scenario files (TOML). Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ambiguity::{LevelScheme, MarketModel, Monotonicity, Payoff};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::expr;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub market: MarketParams,
    pub payoff: PayoffParams,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub checks: Vec<CheckName>,
}

fn default_name() -> String {
    "scenario".into()
}

/// GBM `dS = mu S dt + sigma S dB` with drift ambiguity `|theta| <= k`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub s0: f64,
    #[serde(default)]
    pub mu: f64,
    pub sigma: f64,
    /// Years.
    pub horizon: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PayoffParams {
    Call {
        strike: f64,
    },
    Put {
        strike: f64,
    },
    Digital {
        strike: f64,
    },
    Custom {
        expression: String,
        #[serde(default)]
        monotonicity: DeclaredMonotonicity,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclaredMonotonicity {
    Increasing,
    Decreasing,
    #[default]
    None,
}

impl From<DeclaredMonotonicity> for Monotonicity {
    fn from(m: DeclaredMonotonicity) -> Self {
        match m {
            DeclaredMonotonicity::Increasing => Monotonicity::Increasing,
            DeclaredMonotonicity::Decreasing => Monotonicity::Decreasing,
            DeclaredMonotonicity::None => Monotonicity::None,
        }
    }
}

/// Choquet quadrature levels: a count of empirical quantiles, or
/// `"every"` (also `0`) for every distinct sample value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Levels {
    Quantiles(usize),
    Every,
}

impl Levels {
    pub fn scheme(self) -> LevelScheme {
        match self {
            Levels::Quantiles(n) => LevelScheme::EmpiricalQuantiles(n),
            Levels::Every => LevelScheme::EverySample,
        }
    }
}

impl Serialize for Levels {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Levels::Quantiles(n) => s.serialize_u64(*n as u64),
            Levels::Every => s.serialize_str("every"),
        }
    }
}

impl<'de> Deserialize<'de> for Levels {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Ok(Levels::Every),
            Raw::Count(n) if n >= 2 => Ok(Levels::Quantiles(n as usize)),
            Raw::Word(w) if w == "every" => Ok(Levels::Every),
            _ => Err(serde::de::Error::custom("expected a level count >= 2, 0, or \"every\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_paths: usize,
    /// Uniform time steps of the simulated paths.
    pub steps: usize,
    /// Space nodes of the finite-difference grid.
    pub nodes: usize,
    /// Finite-difference time steps; the smallest stable count when absent.
    pub time_steps: Option<usize>,
    /// Constant controls on `[-k, k]` (eight bang-bang controls are added).
    pub theta_grid_count: usize,
    pub seed: u64,
    pub quantile_levels: Levels,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps: 16,
            nodes: 801,
            time_steps: None,
            theta_grid_count: 21,
            seed: 1,
            quantile_levels: Levels::Quantiles(ambiguity::choquet::DEFAULT_QUANTILE_LEVELS),
        }
    }
}

/// Named property checks a scenario can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    /// Upper (and lower) estimators agree pairwise for monotone payoffs.
    MainChain,
    /// With `k = 0` every estimator matches the plain price.
    Degeneracy,
    /// `choquet_lower <= minimax_lower <= minimax_upper <= choquet_upper`.
    Sandwich,
    /// BSDE comparison between the lower and upper generators.
    Comparison,
    /// Sign of the BSDE `z` field for monotone payoffs.
    ZSign,
    /// Duality identities under shared randomness.
    Duality,
    /// Constant-control profile peaks at an endpoint of `[-k, k]`.
    Attainment,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::MainChain,
        CheckName::Degeneracy,
        CheckName::Sandwich,
        CheckName::Comparison,
        CheckName::ZSign,
        CheckName::Duality,
        CheckName::Attainment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::MainChain => "main_chain",
            CheckName::Degeneracy => "degeneracy",
            CheckName::Sandwich => "sandwich",
            CheckName::Comparison => "comparison",
            CheckName::ZSign => "z_sign",
            CheckName::Duality => "duality",
            CheckName::Attainment => "attainment",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = CheckName::ALL.iter().map(|c| c.as_str()).collect();
                format!("unknown check '{s}' (expected one of {})", names.join(", "))
            })
    }
}

/// A `section.key=value` override applied before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
}

impl FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| format!("override '{s}' is not key=value"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("override '{s}' has an empty key"));
        }
        let raw = raw.trim();
        // bare words become strings
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(Override {
            key: key.to_string(),
            value,
        })
    }
}

impl Override {
    pub fn new(key: &str, value: impl Into<toml::Value>) -> Self {
        Override {
            key: key.to_string(),
            value: value.into(),
        }
    }

    fn apply(&self, table: &mut toml::Table) -> Result<(), CliError> {
        let mut parts: Vec<&str> = self.key.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut node = table;
        for p in parts {
            node = node
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| CliError::Parse(format!("override {}: '{p}' is not a table", self.key)))?;
        }
        node.insert(leaf.to_string(), self.value.clone());
        Ok(())
    }
}

impl Scenario {
    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &[Override]) -> Result<Self, CliError> {
        // first pass keeps line and column information in errors
        let mut scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if !overrides.is_empty() {
            let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
            for o in overrides {
                o.apply(&mut table)?;
            }
            scenario = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Parse(format!("after overrides: {}", e.message())))?;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, msg: &str| Err(CliError::Parse(format!("{name}: {msg}")));
        let m = &self.market;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(m.s0) {
            return field("market.s0", "must be a positive number");
        }
        if !m.mu.is_finite() {
            return field("market.mu", "must be finite");
        }
        if !positive(m.sigma) {
            return field("market.sigma", "must be a positive number");
        }
        if !positive(m.horizon) {
            return field("market.horizon", "must be a positive number");
        }
        if !(m.k.is_finite() && m.k >= 0.0) {
            return field("market.k", "must be a nonnegative number");
        }
        match &self.payoff {
            PayoffParams::Call { strike } | PayoffParams::Put { strike } | PayoffParams::Digital { strike } => {
                if !positive(*strike) {
                    return field("payoff.strike", "must be a positive number");
                }
            }
            PayoffParams::Custom { expression, .. } => {
                if let Err(e) = expr::parse(expression) {
                    return field("payoff.expression", &e.to_string());
                }
            }
        }
        let n = &self.numerics;
        for (name, v) in [
            ("numerics.n_paths", n.n_paths),
            ("numerics.steps", n.steps),
            ("numerics.time_steps", n.time_steps.unwrap_or(1)),
        ] {
            if v == 0 {
                return field(name, "must be positive");
            }
        }
        if n.nodes < 5 {
            return field("numerics.nodes", "must be at least 5");
        }
        if n.theta_grid_count < 2 {
            return field("numerics.theta_grid_count", "must be at least 2 so that +-k are members");
        }
        self.payoff()?;
        Ok(())
    }

    pub fn model(&self) -> Result<MarketModel, CliError> {
        let m = &self.market;
        Ok(MarketModel::gbm(m.s0, m.mu, m.sigma, m.k, m.horizon)?)
    }

    pub fn payoff(&self) -> Result<Payoff, CliError> {
        Ok(match &self.payoff {
            PayoffParams::Call { strike } => Payoff::call(*strike),
            PayoffParams::Put { strike } => Payoff::put(*strike),
            PayoffParams::Digital { strike } => Payoff::digital(*strike),
            PayoffParams::Custom {
                expression,
                monotonicity,
            } => {
                let f = expr::parse(expression)
                    .map_err(|e| CliError::Parse(format!("payoff.expression: {e}")))?
                    .into_fn();
                Payoff::new(expression.clone(), move |s| f(s), (*monotonicity).into())
                    .map_err(|e| CliError::Parse(format!("payoff.monotonicity: {e}")))?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[market]
s0 = 100.0
sigma = 0.2
horizon = 1.0
k = 0.1

[payoff]
kind = "call"
strike = 100.0
"#;

    #[test]
    fn defaults_fill_numerics() {
        let s = Scenario::parse(BASE, &[]).unwrap();
        assert_eq!(s.numerics, Numerics::default());
        assert!(s.checks.is_empty());
        assert_eq!(s.market.mu, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = BASE.replace("k = 0.1", "k = 0.1\nkappa = 2");
        let err = Scenario::parse(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("kappa") && err.contains("line"), "{err}");
        let text = BASE.replace("strike = 100.0", "strike = 100.0\nexpression = \"S\"");
        assert!(Scenario::parse(&text, &[]).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let text = BASE.replace("sigma = 0.2", "sigma = -0.2");
        let err = Scenario::parse(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("market.sigma"), "{err}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let o: Override = "numerics.seed=42".parse().unwrap();
        let s = Scenario::parse(BASE, &[o, Override::new("market.k", 0.0)]).unwrap();
        assert_eq!(s.numerics.seed, 42);
        assert_eq!(s.market.k, 0.0);
        let bad: Override = "numerics.nodes=3".parse().unwrap();
        assert!(Scenario::parse(BASE, &[bad]).is_err());
        let word: Override = "numerics.quantile_levels=every".parse().unwrap();
        assert_eq!(Scenario::parse(BASE, &[word]).unwrap().numerics.quantile_levels, Levels::Every);
    }

    #[test]
    fn custom_payoff_monotonicity_is_checked() {
        let text = BASE.replace(
            "kind = \"call\"\nstrike = 100.0",
            "kind = \"custom\"\nexpression = \"max(100 - S, 0)\"\nmonotonicity = \"increasing\"",
        );
        let err = Scenario::parse(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("payoff.monotonicity"), "{err}");
        let text = text.replace("increasing", "decreasing");
        let s = Scenario::parse(&text, &[]).unwrap();
        assert_eq!(s.payoff().unwrap().eval(90.0), 10.0);
    }

    #[test]
    fn check_names_round_trip() {
        for c in CheckName::ALL {
            assert_eq!(c.as_str().parse::<CheckName>().unwrap(), c);
        }
        assert!("nope".parse::<CheckName>().is_err());
    }
}
