mod common;

use ambiguity::stats::mean_and_se;
use ambiguity::{generate_brownian, simulate, simulate_sde, MarketModel, TimeGrid};

#[test]
fn single_step_increments_have_zero_mean() {
    let b = generate_brownian(TimeGrid::new(1.0, 1).unwrap(), 1_000_000, 7).unwrap();
    let inc = b.increments().column(0).to_vec();
    let mean = inc.iter().sum::<f64>() / inc.len() as f64;
    assert!(mean.abs() < 4e-3, "{mean}");
}

#[test]
fn column_variance_is_dt() {
    let b = generate_brownian(TimeGrid::new(1.0, 4).unwrap(), 200_000, 3).unwrap();
    for col in b.increments().columns() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.25 - 1.0).abs() < 0.01, "{var}");
    }
}

#[test]
fn bundles_are_thread_count_independent() {
    let m = MarketModel::gbm(100.0, 0.03, 0.25, 0.1, 1.0).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&m, m.grid(6).unwrap(), 20_000, 99).unwrap())
    };
    let (a, b) = (run(1), run(5));
    assert_eq!(a.increments(), b.increments());
    assert_eq!(a.states(), b.states());
}

#[test]
fn driftless_gbm_is_a_martingale() {
    let m = MarketModel::gbm(100.0, 0.0, 0.2, 0.0, 1.0).unwrap();
    let b = simulate(&m, m.grid(4).unwrap(), 400_000, 1).unwrap();
    let st = b.terminal_states().unwrap();
    let e = mean_and_se(st.len(), |i| st[i]);
    assert!((e.value - 100.0).abs() < 3.0 * e.std_error, "{e:?}");
    let states = b.states().unwrap();
    assert!(states.column(0).iter().all(|&s| s == 100.0));
}

#[test]
fn gbm_with_drift_matches_lognormal_mean() {
    let m = MarketModel::gbm(100.0, 0.05, 0.2, 0.0, 1.0).unwrap();
    let b = simulate(&m, m.grid(4).unwrap(), 400_000, 2).unwrap();
    let st = b.terminal_states().unwrap();
    let e = mean_and_se(st.len(), |i| st[i]);
    let expected = 100.0 * 0.05f64.exp();
    assert!((e.value - expected).abs() < 3.0 * e.std_error, "{e:?} vs {expected}");
}

#[test]
fn exact_scheme_log_moments() {
    let (mu, sigma, t) = (0.08, 0.3, 2.0);
    let m = MarketModel::gbm(50.0, mu, sigma, 0.0, t).unwrap();
    let n = 200_000;
    let b = simulate(&m, m.grid(5).unwrap(), n, 4).unwrap();
    let logs: Vec<f64> = b.terminal_states().unwrap().iter().map(|s| (s / 50.0).ln()).collect();
    let e = mean_and_se(n, |i| logs[i]);
    assert!((e.value - (mu - 0.5 * sigma * sigma) * t).abs() < 4.0 * e.std_error);
    let var_true = sigma * sigma * t;
    let v = mean_and_se(n, |i| (logs[i] - e.value).powi(2));
    // SE of the sample variance of a normal: var * sqrt(2 / n)
    assert!((v.value - var_true).abs() < 4.0 * var_true * (2.0 / n as f64).sqrt());
}

#[test]
fn euler_mean_converges_to_exact_scheme() {
    // general-coefficient GBM so simulate_sde takes the Euler branch
    let (mu, sigma) = (0.5, 0.2);
    let euler_model = MarketModel::general(100.0, move |_, s| mu * s, move |_, s| sigma * s, 0.0, 1.0).unwrap();
    let exact_model = MarketModel::gbm(100.0, mu, sigma, 0.0, 1.0).unwrap();
    let mut errors = Vec::new();
    for steps in [2, 4, 8, 16] {
        let g = TimeGrid::new(1.0, steps).unwrap();
        let inc = generate_brownian(g, 100_000, 5).unwrap();
        let e = simulate_sde(&euler_model, inc.clone()).unwrap();
        let x = simulate_sde(&exact_model, inc).unwrap();
        let me: f64 = e.terminal_states().unwrap().iter().sum::<f64>();
        let mx: f64 = x.terminal_states().unwrap().iter().sum::<f64>();
        errors.push(((me - mx) / 100_000.0).abs());
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "{errors:?}");
    }
    // first-order in dt: halving dt roughly halves the bias
    let order = (errors[0] / errors[3]).log2() / 3.0;
    assert!((order - 1.0).abs() < 0.25, "order {order}, {errors:?}");
}

#[test]
fn euler_with_few_failures_flags_them() {
    // a handful of paths cross zero; below the 0.1% threshold
    let m = MarketModel::general(1.0, |_, _| 0.0, |_, _| 0.28, 0.0, 1.0).unwrap();
    let b = simulate(&m, m.grid(1).unwrap(), 100_000, 8).unwrap();
    assert!(!b.invalid_paths().is_empty());
    for &p in b.invalid_paths() {
        assert!(b.states().unwrap()[[p, 1]].is_nan());
    }
}
