//! Markovian BSDE solvers for `y_t = Phi(S_T) + int_t^T g(s, y, z) ds - int_t^T z dB`.
//!
//! With `y_t = u(t, S_t)` the pair solves the semilinear equation
//! `u_t + 1/2 sigma~^2 u_xx + mu~ u_x + g(t, u, sigma~ u_x) = 0` in
//! `x = log s`, where `sigma~ = sigma(t, s) / s` and
//! `mu~ = eta(t, s) / s - sigma~^2 / 2`, and `z = sigma~ u_x = sigma(t, s) u_s`.
//!
//! [`solve_fd`] integrates that equation with an explicit scheme;
//! [`solve_tree`] is an independent recombining-lattice scheme used as a
//! cross-check.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::paths::MarketModel;
use crate::payoff::{Monotonicity, Payoff};

/// Explicit-scheme safety factor on `dt <= dx^2 / sigma~^2`.
pub const STABILITY_SAFETY: f64 = 0.9;

/// Half-width of the log-price grid in terminal standard deviations.
pub const GRID_HALF_WIDTH_SD: f64 = 6.0;

pub const DEFAULT_NODES: usize = 801;

/// Relative tolerance for comparing two discretisations of the same equation.
pub const DEFAULT_SCHEME_TOLERANCE: f64 = 0.005;

type GeneratorFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// BSDE driver `g(t, y, z)`.
#[derive(Clone)]
pub enum Generator {
    /// `nu * z`
    Linear(f64),
    /// `k |z|`
    AbsUpper(f64),
    /// `-k |z|`
    AbsLower(f64),
    Custom { f: GeneratorFn, lipschitz: f64 },
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Linear(v) => write!(f, "Linear({v})"),
            Generator::AbsUpper(k) => write!(f, "AbsUpper({k})"),
            Generator::AbsLower(k) => write!(f, "AbsLower({k})"),
            Generator::Custom { lipschitz, .. } => write!(f, "Custom(K={lipschitz})"),
        }
    }
}

const VALIDATION_SAMPLES: usize = 4096;
const VALIDATION_RANGE: f64 = 1e3;

impl Generator {
    pub fn linear(nu: f64) -> Result<Self> {
        if !nu.is_finite() {
            return Err(Error::InvalidGenerator(format!("linear coefficient {nu}")));
        }
        Ok(Generator::Linear(nu))
    }

    pub fn abs_upper(k: f64) -> Result<Self> {
        check_k(k)?;
        Ok(Generator::AbsUpper(k))
    }

    pub fn abs_lower(k: f64) -> Result<Self> {
        check_k(k)?;
        Ok(Generator::AbsLower(k))
    }

    /// Custom driver with declared Lipschitz constant `lipschitz`.
    ///
    /// `g(t, y, 0) = 0` and the Lipschitz bound are checked on a fixed
    /// pseudo-random sample of `[0, 10] x [-1e3, 1e3]^2`.
    pub fn custom<F>(f: F, lipschitz: f64) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::InvalidGenerator(format!(
                "declared Lipschitz constant {lipschitz} must be finite and >= 0"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
        let draw = |rng: &mut ChaCha8Rng| {
            (
                rng.random_range(0.0..10.0),
                rng.random_range(-VALIDATION_RANGE..VALIDATION_RANGE),
                rng.random_range(-VALIDATION_RANGE..VALIDATION_RANGE),
            )
        };
        for _ in 0..VALIDATION_SAMPLES {
            let (t, y, z) = draw(&mut rng);
            let g0 = f(t, y, 0.0);
            if g0.abs() > 1e-12 {
                return Err(Error::InvalidGenerator(format!(
                    "g(t, y, 0) must vanish, got g({t}, {y}, 0) = {g0}"
                )));
            }
            // perturb around the sample, including small steps where kinks show up
            let scale = if rng.random_bool(0.5) { 1.0 } else { 1e-3 };
            let (y2, z2) = (
                y + scale * rng.random_range(-1.0..1.0),
                z + scale * rng.random_range(-1.0..1.0),
            );
            let lhs = (f(t, y, z) - f(t, y2, z2)).abs();
            let rhs = lipschitz * ((y - y2).abs() + (z - z2).abs());
            if !lhs.is_finite() || lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::InvalidGenerator(format!(
                    "Lipschitz bound {lipschitz} violated between (y, z) = ({y}, {z}) and ({y2}, {z2}) at t = {t}"
                )));
            }
        }
        Ok(Generator::Custom {
            f: Arc::new(f),
            lipschitz,
        })
    }

    pub fn eval(&self, t: f64, y: f64, z: f64) -> f64 {
        match self {
            Generator::Linear(nu) => nu * z,
            Generator::AbsUpper(k) => k * z.abs(),
            Generator::AbsLower(k) => -k * z.abs(),
            Generator::Custom { f, .. } => f(t, y, z),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Generator::Linear(nu) => nu.abs(),
            Generator::AbsUpper(k) | Generator::AbsLower(k) => *k,
            Generator::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

fn check_k(k: f64) -> Result<()> {
    if k.is_finite() && k >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGenerator(format!("k must be >= 0, got {k}")))
    }
}

/// Value and `z` surfaces of an FD solve; row `n` is time `n * dt`.
#[derive(Debug, Clone)]
pub struct GridSolution {
    log_nodes: Vec<f64>,
    dt: f64,
    value: Array2<f64>,
    z: Array2<f64>,
    y0: f64,
}

impl GridSolution {
    /// Log-price nodes `x_i`.
    pub fn space_grid(&self) -> &[f64] {
        &self.log_nodes
    }

    pub fn time_steps(&self) -> usize {
        self.value.nrows() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `u(t_n, exp(x_i))`, shape `(time_steps + 1, nodes)`.
    pub fn value_surface(&self) -> &Array2<f64> {
        &self.value
    }

    /// `z(t_n, exp(x_i)) = sigma(t, s) du/ds`.
    pub fn z_surface(&self) -> &Array2<f64> {
        &self.z
    }

    /// `u(0, s0)`, the g-expectation of the payoff.
    pub fn y0(&self) -> f64 {
        self.y0
    }
}

struct LogCoefficients<'a> {
    model: &'a MarketModel,
}

impl LogCoefficients<'_> {
    /// `(sigma~, mu~)` at `(t, x)`.
    fn at(&self, t: f64, x: f64) -> (f64, f64) {
        if let Some(c) = self.model.gbm_constants() {
            return (c.sigma, c.mu - 0.5 * c.sigma * c.sigma);
        }
        let s = x.exp();
        let sig = self.model.vol(t, s) / s;
        (sig, self.model.drift(t, s) / s - 0.5 * sig * sig)
    }
}

/// Minimal number of time steps for which the explicit scheme is stable.
pub fn min_stable_time_steps(horizon: f64, dx: f64, sigma_max: f64) -> usize {
    (horizon * sigma_max * sigma_max / (STABILITY_SAFETY * dx * dx)).ceil().max(1.0) as usize
}

/// Explicit backward sweep on a log-price grid.
///
/// Central differences for `u_x` and `u_xx`; `|z|` is taken after
/// differencing. Boundary nodes are extrapolated linearly (zero second
/// derivative). Fails with [`Error::GridTooCoarse`] when
/// `dt > 0.9 dx^2 / max sigma~^2`.
pub fn solve_fd(
    model: &MarketModel,
    payoff: &Payoff,
    gen: &Generator,
    nodes: usize,
    time_steps: usize,
) -> Result<GridSolution> {
    if nodes < 5 {
        return Err(invalid(format!("need at least 5 space nodes, got {nodes}")));
    }
    if time_steps == 0 {
        return Err(invalid("need at least one time step"));
    }
    let horizon = model.horizon();
    let coeffs = LogCoefficients { model };
    let x0 = model.s0().ln();
    let (sig0, _) = coeffs.at(0.0, x0);
    if sig0.is_nan() || sig0 <= 0.0 {
        return Err(invalid("volatility must be positive at (0, s0)"));
    }
    let half = GRID_HALF_WIDTH_SD * sig0 * horizon.sqrt();
    let m = nodes - 1;
    let dx = 2.0 * half / m as f64;
    let log_nodes: Vec<f64> = (0..nodes).map(|i| x0 - half + i as f64 * dx).collect();
    let dt = horizon / time_steps as f64;
    let time = |n: usize| if n == time_steps { horizon } else { n as f64 * dt };

    // coefficient tables (GBM: one row reused)
    let constant = model.gbm_constants().is_some();
    let rows = if constant { 1 } else { time_steps + 1 };
    let mut sig_tab = Array2::<f64>::zeros((rows, nodes));
    let mut mu_tab = Array2::<f64>::zeros((rows, nodes));
    for r in 0..rows {
        for (i, &x) in log_nodes.iter().enumerate() {
            let (s, mu) = coeffs.at(time(r), x);
            sig_tab[[r, i]] = s;
            mu_tab[[r, i]] = mu;
        }
    }
    let interior = |i: usize| i >= 1 && i < m;
    let mut sig_max: f64 = 0.0;
    for ((r, i), &s) in sig_tab.indexed_iter() {
        if interior(i) && !(s > 0.0 && s.is_finite()) {
            return Err(invalid(format!(
                "volatility must be positive on the interior grid, got {s} at t={}, x={}",
                time(r),
                log_nodes[i]
            )));
        }
        sig_max = sig_max.max(s);
    }
    let min_steps = min_stable_time_steps(horizon, dx, sig_max);
    if time_steps < min_steps {
        return Err(Error::GridTooCoarse {
            time_steps,
            min_time_steps: min_steps,
        });
    }
    let peclet = mu_tab
        .iter()
        .zip(sig_tab.iter())
        .map(|(mu, s)| (mu.abs() + gen.lipschitz() * s) * dx - s * s)
        .fold(f64::NEG_INFINITY, f64::max);
    if peclet > 0.0 {
        log::warn!("cell Peclet condition fails: explicit scheme is stable but not monotone");
    }

    let mut value = Array2::<f64>::zeros((time_steps + 1, nodes));
    let mut z = Array2::<f64>::zeros((time_steps + 1, nodes));
    for (i, &x) in log_nodes.iter().enumerate() {
        value[[time_steps, i]] = payoff.eval(x.exp());
    }
    if let Some(i) = (0..nodes).find(|&i| !value[[time_steps, i]].is_finite()) {
        return Err(Error::InvalidPayoff(format!(
            "payoff is not finite at s = {}",
            log_nodes[i].exp()
        )));
    }

    let inv_2dx = 0.5 / dx;
    let inv_dx2 = 1.0 / (dx * dx);
    let mut next = vec![0.0; nodes];
    for n in (0..time_steps).rev() {
        let t = time(n + 1);
        let r = if constant { 0 } else { n + 1 };
        let u = value.row(n + 1);
        for i in 1..m {
            let ux = (u[i + 1] - u[i - 1]) * inv_2dx;
            let uxx = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_dx2;
            let s = sig_tab[[r, i]];
            let zi = s * ux;
            z[[n + 1, i]] = zi;
            next[i] = u[i] + dt * (0.5 * s * s * uxx + mu_tab[[r, i]] * ux + gen.eval(t, u[i], zi));
        }
        z[[n + 1, 0]] = sig_tab[[r, 0]] * (u[1] - u[0]) / dx;
        z[[n + 1, m]] = sig_tab[[r, m]] * (u[m] - u[m - 1]) / dx;
        next[0] = 2.0 * next[1] - next[2];
        next[m] = 2.0 * next[m - 1] - next[m - 2];
        value.row_mut(n).assign(&ndarray::ArrayView1::from(&next));
    }
    {
        let u = value.row(0);
        for i in 1..m {
            z[[0, i]] = sig_tab[[0, i]] * (u[i + 1] - u[i - 1]) * inv_2dx;
        }
        z[[0, 0]] = sig_tab[[0, 0]] * (u[1] - u[0]) / dx;
        z[[0, m]] = sig_tab[[0, m]] * (u[m] - u[m - 1]) / dx;
    }

    // linear interpolation at log(s0)
    let pos = (x0 - log_nodes[0]) / dx;
    let j = (pos.floor() as usize).min(m - 1);
    let frac = pos - j as f64;
    let y0 = if frac == 0.0 {
        value[[0, j]]
    } else {
        (1.0 - frac) * value[[0, j]] + frac * value[[0, j + 1]]
    };

    Ok(GridSolution {
        log_nodes,
        dt,
        value,
        z,
        y0,
    })
}

/// Recombining binomial scheme on the driving Brownian motion.
///
/// `B` moves `+-sqrt(dt)` with probability 1/2 and
/// `S = s0 exp((mu - sigma^2/2) t + sigma B)`. Backward step:
/// `y = E[y'] + dt g(t, E[y'], z)` with `z = (y'_up - y'_down) / (2 sqrt(dt))`.
pub fn solve_tree(model: &MarketModel, payoff: &Payoff, gen: &Generator, steps: usize) -> Result<f64> {
    let c = model
        .gbm_constants()
        .ok_or_else(|| invalid("lattice scheme needs constant GBM coefficients"))?;
    if steps < 8 {
        return Err(invalid(format!("lattice needs at least 8 steps, got {steps}")));
    }
    let horizon = model.horizon();
    let dt = horizon / steps as f64;
    let sqrt_dt = dt.sqrt();
    let drift = c.mu - 0.5 * c.sigma * c.sigma;
    let s0 = model.s0();
    let mut y: Vec<f64> = (0..=steps)
        .map(|j| {
            let b = (2.0 * j as f64 - steps as f64) * sqrt_dt;
            payoff.eval(s0 * (drift * horizon + c.sigma * b).exp())
        })
        .collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPayoff("payoff is not finite on the lattice".into()));
    }
    for n in (0..steps).rev() {
        let t = n as f64 * dt;
        for j in 0..=n {
            let (down, up) = (y[j], y[j + 1]);
            let mean = 0.5 * (up + down);
            let zj = (up - down) / (2.0 * sqrt_dt);
            y[j] = mean + dt * gen.eval(t, mean, zj);
        }
    }
    Ok(y[0])
}

/// Outcome of [`comparison_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub y0_low: f64,
    pub y0_high: f64,
    /// `y0_high - y0_low`
    pub gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Solves with both drivers and checks `y0(low) <= y0(high)`.
///
/// The pointwise ordering `low(t,y,z) <= high(t,y,z)` is verified on the
/// `(t, y, z)` values the solver actually visited; a witness is returned
/// as [`Error::PreconditionViolation`] if it fails.
#[allow(clippy::too_many_arguments)]
pub fn comparison_check(
    model: &MarketModel,
    payoff: &Payoff,
    gen_low: &Generator,
    gen_high: &Generator,
    nodes: usize,
    time_steps: usize,
    scheme_tolerance: f64,
) -> Result<ComparisonReport> {
    let low = solve_fd(model, payoff, gen_low, nodes, time_steps)?;
    let high = solve_fd(model, payoff, gen_high, nodes, time_steps)?;
    for sol in [&low, &high] {
        let (rows, cols) = sol.value.dim();
        let rstep = (rows / 64).max(1);
        let cstep = (cols / 64).max(1);
        for r in (0..rows).step_by(rstep) {
            let t = r as f64 * sol.dt;
            for c in (0..cols).step_by(cstep) {
                let (y, z) = (sol.value[[r, c]], sol.z[[r, c]]);
                let (gl, gh) = (gen_low.eval(t, y, z), gen_high.eval(t, y, z));
                if gl > gh + 1e-12 * gl.abs().max(gh.abs()).max(1.0) {
                    return Err(Error::PreconditionViolation {
                        t,
                        y,
                        z,
                        low: gl,
                        high: gh,
                    });
                }
            }
        }
    }
    let gap = high.y0 - low.y0;
    let tolerance = scheme_tolerance * low.y0.abs().max(high.y0.abs()) + 1e-12;
    Ok(ComparisonReport {
        y0_low: low.y0,
        y0_high: high.y0,
        gap,
        tolerance,
        passed: gap >= -tolerance,
    })
}

/// Outcome of [`z_sign_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZSignReport {
    pub min_z: f64,
    pub max_z: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Sign of the `z` field on `t < T` and the central 90% of the space grid:
/// nonnegative for increasing payoffs, nonpositive for decreasing ones.
pub fn z_sign_check(solution: &GridSolution, payoff: &Payoff, tolerance: f64) -> Result<ZSignReport> {
    let monotonicity = payoff.monotonicity();
    if monotonicity == Monotonicity::None {
        return Err(Error::NotApplicable(format!(
            "{} has no declared monotonicity",
            payoff.name()
        )));
    }
    let (rows, cols) = solution.z.dim();
    let lo = (0.05 * (cols - 1) as f64).ceil() as usize;
    let hi = (0.95 * (cols - 1) as f64).floor() as usize;
    let mut min_z = f64::INFINITY;
    let mut max_z = f64::NEG_INFINITY;
    for r in 0..rows - 1 {
        for c in lo..=hi {
            let v = solution.z[[r, c]];
            min_z = min_z.min(v);
            max_z = max_z.max(v);
        }
    }
    let passed = match monotonicity {
        Monotonicity::Increasing => min_z >= -tolerance,
        Monotonicity::Decreasing => max_z <= tolerance,
        Monotonicity::None => unreachable!(),
    };
    Ok(ZSignReport {
        min_z,
        max_z,
        tolerance,
        passed,
    })
}
