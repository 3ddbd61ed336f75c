//! Scenario-driven front end: load a market and payoff, run every
//! estimator on one shared sample, and report how they compare.

pub mod error;
pub mod expr;
pub mod report;
pub mod run;
pub mod scenario;

pub use error::CliError;
pub use report::{emit, CheckStatus, Format, Report};
pub use run::{run, run_scenario};
pub use scenario::{CheckName, Override, Scenario};
