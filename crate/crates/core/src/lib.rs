//! Pricing European claims under bounded drift ambiguity.
//!
//! The ambiguity set is the family of measures `Q^theta` obtained from the
//! world measure `P` by a Girsanov kernel `|theta| <= k`. Four nonlinear
//! expectations are computed on top of it:
//!
//! * minimax: `sup_Q E_Q[X]` / `inf_Q E_Q[X]` over the family ([`minimax`]);
//! * upper/lower Choquet integrals against `c(A) = sup_Q Q(A)` /
//!   `inf_Q Q(A)` ([`choquet`]);
//! * the g-expectation `y_0` of the BSDE with driver `+-k|z|` ([`bsde`]);
//! * closed-form prices at the extremal measures `Q_{+-k}`
//!   ([`minimax::extremal_price`]).
//!
//! For payoffs monotone in `S_T` all four agree; in general they satisfy
//! `lower Choquet <= lower minimax <= upper minimax <= upper Choquet`.

pub mod bsde;
pub mod choquet;
pub mod error;
pub mod measures;
pub mod minimax;
pub mod paths;
pub mod payoff;
pub mod stats;

pub use bsde::{comparison_check, solve_fd, solve_tree, z_sign_check, Generator, GridSolution};
pub use choquet::{
    build_capacity, choquet, choquet_holder_check, choquet_integral, is_comonotone, submodularity_check, Capacity,
    Event, LevelQuadrature, LevelScheme, Orientation,
};
pub use error::{Error, Result};
pub use measures::{expectation_under, girsanov_weights, standard_family, DensityWeights, ThetaControl};
pub use minimax::{
    attainment_check, extremal_price, minimax_expectation, minimax_of_values, ExtremalSource, MinimaxResult,
};
pub use paths::{generate_brownian, simulate, simulate_sde, MarketModel, PathBundle, TimeGrid};
pub use payoff::{Monotonicity, Payoff};
pub use stats::Estimate;
