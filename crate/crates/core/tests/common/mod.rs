#![allow(dead_code)]

use ambiguity::{simulate, MarketModel, PathBundle};

/// Closed-form-free oracle: `E[f(S_T)]` for `S_T = s0 exp((m - v^2/2) T + v sqrt(T) Z)`
/// by composite Simpson on `Z in [-12, 12]`, split at `split_s` (a kink).
pub fn lognormal_expectation(f: impl Fn(f64) -> f64, s0: f64, m: f64, v: f64, t: f64, split_s: f64) -> f64 {
    let sd = v * t.sqrt();
    let s_of = |z: f64| s0 * ((m - 0.5 * v * v) * t + sd * z).exp();
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let zk = ((split_s / s0).ln() - (m - 0.5 * v * v) * t) / sd;
    let zk = zk.clamp(-12.0, 12.0);
    simpson(|z| f(s_of(z)) * phi(z), -12.0, zk, 40_000) + simpson(|z| f(s_of(z)) * phi(z), zk, 12.0, 40_000)
}

fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(a + i as f64 * h);
    }
    s * h / 3.0
}

/// GBM s0=100, mu=0, sigma=0.2, T=1 with ambiguity `k`.
pub fn desk_market(k: f64) -> MarketModel {
    MarketModel::gbm(100.0, 0.0, 0.2, k, 1.0).unwrap()
}

pub fn desk_bundle(k: f64, n: usize, steps: usize, seed: u64) -> PathBundle {
    let m = desk_market(k);
    simulate(&m, m.grid(steps).unwrap(), n, seed).unwrap()
}

// Frozen oracle values (undiscounted lognormal, s0=K=100, sigma=0.2, T=1),
// computed with 30-digit adaptive quadrature and cross-checked by
// `lognormal_expectation` in the tests below.
pub const CALL_DRIFT_ZERO: f64 = 7.965_567_455_405_797;
pub const CALL_DRIFT_UP: f64 = 9.096_153_179_328_212;
pub const CALL_DRIFT_DOWN: f64 = 6.935_904_609_248_068;
pub const PUT_DRIFT_DOWN: f64 = 8.916_037_278_572_538;
pub const PUT_DRIFT_UP: f64 = 7.076_019_176_652_631;
