//! Brownian path generation and forward SDE simulation on a uniform grid.
//!
//! Every path owns an independent ChaCha8 stream selected by its index, so a
//! bundle is a pure function of `(grid, n_paths, seed)` and does not depend on
//! how the work is split across threads.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self {
            horizon,
            steps,
            dt: horizon / steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of grid node `i`; the last node is exactly `T`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt
        }
    }
}

/// Coefficient function `(t, s) -> value`.
pub type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Constant-proportional coefficients `dS = mu S dt + sigma S dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmConstants {
    pub mu: f64,
    pub sigma: f64,
}

/// World (P) dynamics of the underlying on `[0, T]` plus the ambiguity bound `k`.
#[derive(Clone)]
pub struct MarketModel {
    s0: f64,
    horizon: f64,
    drift: Coefficient,
    vol: Coefficient,
    ambiguity: f64,
    gbm: Option<GbmConstants>,
}

impl fmt::Debug for MarketModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarketModel")
            .field("s0", &self.s0)
            .field("horizon", &self.horizon)
            .field("ambiguity", &self.ambiguity)
            .field("gbm", &self.gbm)
            .finish_non_exhaustive()
    }
}

impl MarketModel {
    /// Geometric Brownian motion. `sigma = 0` is allowed (deterministic path).
    pub fn gbm(s0: f64, mu: f64, sigma: f64, ambiguity: f64, horizon: f64) -> Result<Self> {
        check_common(s0, ambiguity, horizon)?;
        if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(format!("gbm needs finite mu and sigma >= 0, got mu={mu}, sigma={sigma}")));
        }
        Ok(Self {
            s0,
            horizon,
            drift: Arc::new(move |_, s| mu * s),
            vol: Arc::new(move |_, s| sigma * s),
            ambiguity,
            gbm: Some(GbmConstants { mu, sigma }),
        })
    }

    /// General Lipschitz coefficients `dS = eta(t,S) dt + sigma(t,S) dB`.
    pub fn general<D, V>(s0: f64, drift: D, vol: V, ambiguity: f64, horizon: f64) -> Result<Self>
    where
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        V: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        check_common(s0, ambiguity, horizon)?;
        Ok(Self {
            s0,
            horizon,
            drift: Arc::new(drift),
            vol: Arc::new(vol),
            ambiguity,
            gbm: None,
        })
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Uniform grid on `[0, T]` with `steps` steps.
    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, steps)
    }

    pub fn ambiguity(&self) -> f64 {
        self.ambiguity
    }

    pub fn gbm_constants(&self) -> Option<GbmConstants> {
        self.gbm
    }

    pub fn drift(&self, t: f64, s: f64) -> f64 {
        (self.drift)(t, s)
    }

    pub fn vol(&self, t: f64, s: f64) -> f64 {
        (self.vol)(t, s)
    }

    /// Same dynamics with a different ambiguity bound.
    pub fn with_ambiguity(&self, ambiguity: f64) -> Result<Self> {
        check_common(self.s0, ambiguity, self.horizon)?;
        Ok(Self {
            ambiguity,
            ..self.clone()
        })
    }
}

fn check_common(s0: f64, k: f64, horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(invalid(format!("s0 must be positive, got {s0}")));
    }
    if !(k.is_finite() && k >= 0.0) {
        return Err(invalid(format!("ambiguity bound k must be >= 0, got {k}")));
    }
    Ok(())
}

/// Simulated Brownian increments and (optionally) state paths.
#[derive(Debug, Clone)]
pub struct PathBundle {
    grid: TimeGrid,
    seed: u64,
    increments: Array2<f64>,
    states: Option<Array2<f64>>,
    invalid_paths: Vec<usize>,
}

impl PathBundle {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.increments.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `n_paths x N` matrix of Brownian increments.
    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    /// `n_paths x (N + 1)` matrix of states, if [`simulate_sde`] has run.
    pub fn states(&self) -> Option<&Array2<f64>> {
        self.states.as_ref()
    }

    /// Paths flagged by the Euler scheme for leaving `(0, inf)`.
    pub fn invalid_paths(&self) -> &[usize] {
        &self.invalid_paths
    }

    /// `B_T` for every path.
    pub fn brownian_terminal(&self) -> Vec<f64> {
        self.increments
            .rows()
            .into_iter()
            .map(|r| r.iter().sum())
            .collect()
    }

    /// `S_T` for every path.
    pub fn terminal_states(&self) -> Result<Vec<f64>> {
        let states = self
            .states
            .as_ref()
            .ok_or_else(|| invalid("bundle has no simulated states"))?;
        Ok(states.column(self.grid.steps).to_vec())
    }
}

/// Draws `n_paths x N` i.i.d. `N(0, dt)` increments.
pub fn generate_brownian(grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    if n_paths == 0 {
        return Err(invalid("n_paths must be at least 1"));
    }
    let steps = grid.steps();
    let sqrt_dt = grid.dt().sqrt();
    let mut data = vec![0.0; n_paths * steps];
    data.par_chunks_mut(steps)
        .enumerate()
        .for_each(|(path, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            for x in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x = z * sqrt_dt;
            }
        });
    let increments =
        Array2::from_shape_vec((n_paths, steps), data).expect("shape matches buffer length");
    Ok(PathBundle {
        grid,
        seed,
        increments,
        states: None,
        invalid_paths: Vec::new(),
    })
}

/// Largest tolerated share of Euler paths that leave the positive half-line.
pub const MAX_INVALID_FRACTION: f64 = 1e-3;

/// Fills the state matrix from the bundle's increments.
///
/// GBM models step exactly in log space; general coefficients use
/// Euler–Maruyama with left-endpoint evaluation.
pub fn simulate_sde(model: &MarketModel, mut bundle: PathBundle) -> Result<PathBundle> {
    let grid = bundle.grid;
    if grid.horizon() != model.horizon() {
        return Err(invalid(format!(
            "bundle horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    let steps = grid.steps();
    let n = bundle.n_paths();
    let dt = grid.dt();
    let s0 = model.s0();
    let mut data = vec![0.0; n * (steps + 1)];
    let incs = bundle
        .increments
        .as_slice()
        .expect("increments are stored in standard layout");

    let flags: Vec<bool> = match model.gbm_constants() {
        Some(GbmConstants { mu, sigma }) => {
            let drift = (mu - 0.5 * sigma * sigma) * dt;
            data.par_chunks_mut(steps + 1)
                .zip(incs.par_chunks(steps))
                .map(|(row, db)| {
                    row[0] = s0;
                    for i in 0..steps {
                        row[i + 1] = row[i] * (drift + sigma * db[i]).exp();
                    }
                    false
                })
                .collect()
        }
        None => data
            .par_chunks_mut(steps + 1)
            .zip(incs.par_chunks(steps))
            .map(|(row, db)| {
                row[0] = s0;
                let mut failed = false;
                for i in 0..steps {
                    if failed {
                        row[i + 1] = f64::NAN;
                        continue;
                    }
                    let t = grid.time(i);
                    let s = row[i];
                    let next = s + model.drift(t, s) * dt + model.vol(t, s) * db[i];
                    if next > 0.0 && next.is_finite() {
                        row[i + 1] = next;
                    } else {
                        failed = true;
                        row[i + 1] = f64::NAN;
                    }
                }
                failed
            })
            .collect(),
    };

    let invalid_paths: Vec<usize> = flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i))
        .collect();
    if invalid_paths.len() as f64 > MAX_INVALID_FRACTION * n as f64 {
        return Err(Error::SimulationFailure {
            invalid: invalid_paths.len(),
            total: n,
        });
    }
    if !invalid_paths.is_empty() {
        log::warn!(
            "{} of {} Euler paths flagged invalid (non-positive state)",
            invalid_paths.len(),
            n
        );
    }
    bundle.states = Some(
        Array2::from_shape_vec((n, steps + 1), data).expect("shape matches buffer length"),
    );
    bundle.invalid_paths = invalid_paths;
    Ok(bundle)
}

/// Convenience: generate increments and simulate states in one call.
pub fn simulate(model: &MarketModel, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    simulate_sde(model, generate_brownian(grid, n_paths, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert!((g.dt() * 3.0 - 1.0).abs() <= f64::EPSILON);
        assert_eq!(g.time(3), 1.0);
    }

    #[test]
    fn zero_paths_is_invalid() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            generate_brownian(g, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn increments_are_deterministic() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        let a = generate_brownian(g, 1000, 42).unwrap();
        let b = generate_brownian(g, 1000, 42).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = generate_brownian(g, 1000, 43).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn prefix_of_bundle_is_stable_in_n_paths() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let small = generate_brownian(g, 10, 9).unwrap();
        let large = generate_brownian(g, 100, 9).unwrap();
        for p in 0..10 {
            assert_eq!(small.increments().row(p), large.increments().row(p));
        }
    }

    #[test]
    fn degenerate_gbm_is_constant() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let m = MarketModel::gbm(100.0, 0.0, 0.0, 0.1, 1.0).unwrap();
        let b = simulate(&m, g, 50, 3).unwrap();
        assert!(b.states().unwrap().iter().all(|&s| s == 100.0));
    }

    #[test]
    fn euler_flags_paths_that_hit_zero() {
        // Huge volatility relative to the level: most paths go negative.
        let g = TimeGrid::new(1.0, 4).unwrap();
        let m = MarketModel::general(1.0, |_, _| 0.0, |_, _| 5.0, 0.0, 1.0).unwrap();
        let err = simulate(&m, g, 1000, 1).unwrap_err();
        assert!(matches!(err, Error::SimulationFailure { .. }));
    }

    #[test]
    fn terminal_states_need_simulation() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let b = generate_brownian(g, 3, 0).unwrap();
        assert!(b.terminal_states().is_err());
    }
}
