//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ambiguity::bsde::DEFAULT_SCHEME_TOLERANCE;
use ambiguity::minimax::minimax_with_capacity;
use ambiguity::stats::{mean_and_se, pooled_tolerance};
use ambiguity::{
    build_capacity, choquet, choquet_holder_check, comparison_check, extremal_price, simulate, solve_fd,
    standard_family, submodularity_check, z_sign_check, Capacity, Event, ExtremalSource, Generator, LevelScheme,
    MarketModel, Orientation, PathBundle, Payoff,
};
use ambiguity_cli::report::ESTIMATORS;
use ambiguity_cli::{emit, run, Format, Override, Report, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// undiscounted lognormal call, s0 = K = 100, sigma = 0.2, T = 1, drift +-0.02
const CALL_DRIFT_UP: f64 = 9.096_153_179_328_212;
const CALL_DRIFT_DOWN: f64 = 6.935_904_609_248_068;

const K: f64 = 0.1;
const RUNTIME_TARGET_SECS: f64 = 120.0;

type Outcome = Result<String, String>;

fn scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/acceptance.toml")
}

fn load(overrides: &[Override]) -> Scenario {
    Scenario::load(&scenario_path(), overrides).expect("acceptance scenario parses")
}

fn market() -> MarketModel {
    MarketModel::gbm(100.0, 0.0, 0.2, K, 1.0).unwrap()
}

fn bundle(n: usize, seed: u64) -> PathBundle {
    let m = market();
    simulate(&m, m.grid(16).unwrap(), n, seed).unwrap()
}

fn upper_capacity(b: &PathBundle) -> Capacity {
    build_capacity(Orientation::Upper, &standard_family(K, 21, 1.0).unwrap(), b).unwrap()
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Pairwise `|a - b| <= max(1% relative, 3 pooled SE)`; returns the worst ratio.
fn chain(report: &Report, names: [&str; 4]) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let ea = report.row(a).unwrap().estimate().unwrap();
            let eb = report.row(b).unwrap().estimate().unwrap();
            let allowed = (0.01 * ea.value.abs().max(eb.value.abs())).max(pooled_tolerance(ea.std_error, eb.std_error));
            let ratio = (ea.value - eb.value).abs() / allowed;
            if ratio >= worst.0 {
                worst = (ratio, format!("{a}/{b} {:.4}/{:.4}", ea.value, eb.value));
            }
        }
    }
    worst
}

fn criterion_1(report: &Report, secs: f64) -> Outcome {
    let up = chain(report, ["choquet_upper", "minimax_upper", "bsde_upper", "extremal_upper"]);
    let low = chain(report, ["choquet_lower", "minimax_lower", "bsde_lower", "extremal_lower"]);
    let oracle_ok = (report.value("extremal_upper").unwrap() - CALL_DRIFT_UP).abs() < 1e-9
        && (report.value("extremal_lower").unwrap() - CALL_DRIFT_DOWN).abs() < 1e-9;
    verdict(
        up.0 <= 1.0 && low.0 <= 1.0 && oracle_ok && secs < RUNTIME_TARGET_SECS,
        format!(
            "upper {:.4} vs oracle {CALL_DRIFT_UP:.4} (worst {}, {:.2} of allowed); lower {:.4} vs {CALL_DRIFT_DOWN:.4} (worst {}, {:.2}); {secs:.1}s",
            report.value("minimax_upper").unwrap(),
            up.1,
            up.0,
            report.value("minimax_lower").unwrap(),
            low.1,
            low.0
        ),
    )
}

fn criterion_2() -> Outcome {
    let report = run(&load(&[Override::new("market.k", 0.0)])).map_err(|e| e.to_string())?;
    let plain = report.row("plain").unwrap().estimate().unwrap();
    let mut worst = (0.0, String::new());
    for name in ESTIMATORS.iter().filter(|n| **n != "plain") {
        let e = report.row(name).unwrap().estimate().ok_or(format!("{name} missing"))?;
        let ratio = (e.value - plain.value).abs() / pooled_tolerance(e.std_error, plain.std_error);
        if ratio >= worst.0 {
            worst = (ratio, name.to_string());
        }
    }
    let scale = plain.value.abs();
    let exact = ["choquet_upper", "choquet_lower", "minimax_upper", "minimax_lower"]
        .iter()
        .map(|n| (report.value(n).unwrap() - plain.value).abs())
        .fold(0.0, f64::max);
    verdict(
        worst.0 <= 1.0 && exact <= 1e-12 * scale,
        format!(
            "plain {:.4}; worst {} at {:.2} of 3 SE; choquet/minimax spread {exact:.1e}",
            plain.value, worst.1, worst.0
        ),
    )
}

fn random_event(rng: &mut ChaCha8Rng, st: &[f64]) -> Event {
    let a: f64 = rng.random_range(60.0..150.0);
    let b = a + rng.random_range(2.0..60.0);
    match rng.random_range(0..3) {
        0 => Event::exceeds(st, a),
        1 => Event::from_fn(st.len(), |i| st[i] <= a),
        _ => Event::from_fn(st.len(), |i| st[i] > a && st[i] <= b),
    }
}

fn criterion_3(b: &PathBundle, cap: &Capacity) -> Outcome {
    let st = b.terminal_states().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<(Event, Event)> = (0..1000).map(|_| (random_event(&mut rng, &st), random_event(&mut rng, &st))).collect();
    let r = submodularity_check(cap, &pairs).map_err(|e| e.to_string())?;
    let nested: Vec<(Event, Event)> = (0..200)
        .map(|_| {
            let a: f64 = rng.random_range(60.0..150.0);
            (Event::exceeds(&st, a + rng.random_range(0.0..20.0)), Event::exceeds(&st, a))
        })
        .collect();
    let n = submodularity_check(cap, &nested).map_err(|e| e.to_string())?;
    let nested_max = n.max_excess.abs().max(n.min_excess.abs());
    verdict(
        r.passed() && nested_max <= 4.0 * f64::EPSILON,
        format!(
            "1000 pairs: max excess {:.2e}, {} beyond 3 pooled SE; nested max |excess| {nested_max:.1e}",
            r.max_excess, r.violations
        ),
    )
}

fn random_payoff(rng: &mut ChaCha8Rng) -> Payoff {
    let strike = rng.random_range(60.0..140.0);
    match rng.random_range(0..4) {
        0 => Payoff::call(strike),
        1 => Payoff::put(strike),
        2 => Payoff::digital(strike),
        _ => Payoff::affine(rng.random_range(-150.0..150.0), rng.random_range(-2.0..2.0)),
    }
}

fn criterion_4(b: &PathBundle, cap: &Capacity) -> Outcome {
    let st = b.terminal_states().unwrap();
    let growth = (0.5 * K * K * 1.0f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut violations, mut best_share) = (0, 0.0f64);
    for _ in 0..100 {
        let v = random_payoff(&mut rng).eval_all(&st);
        let l2 = mean_and_se(v.len(), |i| v[i] * v[i]).value.sqrt();
        let bound = l2 * growth;
        let r = minimax_with_capacity(&v, cap).map_err(|e| e.to_string())?;
        let worst = r.upper.value.abs().max(r.lower.value.abs());
        if worst > bound + 3.0 * r.upper.std_error.max(r.lower.std_error) {
            violations += 1;
        }
        best_share = best_share.max(worst / bound);
    }
    verdict(
        violations == 0 && best_share >= 0.5,
        format!("{violations} of 100 above the bound; largest share of bound {best_share:.3}"),
    )
}

fn criterion_5() -> Outcome {
    let m = market();
    let call = Payoff::call(100.0);
    let (nodes, steps) = (801, 5000);
    let mut prev = f64::NEG_INFINITY;
    let (mut monotone, mut inside) = (true, true);
    let mut band = (0.0, 0.0);
    for i in 0..11 {
        let theta = -K + 0.2 * K * i as f64;
        let lin = Generator::linear(theta).unwrap();
        let hi = comparison_check(&m, &call, &lin, &Generator::abs_upper(K).unwrap(), nodes, steps, DEFAULT_SCHEME_TOLERANCE)
            .map_err(|e| e.to_string())?;
        let lo = comparison_check(&m, &call, &Generator::abs_lower(K).unwrap(), &lin, nodes, steps, DEFAULT_SCHEME_TOLERANCE)
            .map_err(|e| e.to_string())?;
        inside &= hi.passed && lo.passed;
        monotone &= hi.y0_low >= prev;
        prev = hi.y0_low;
        band = (lo.y0_low, hi.y0_high);
    }
    verdict(
        inside && monotone,
        format!("11 linear drivers inside [{:.4}, {:.4}], monotone in theta: {monotone}", band.0, band.1),
    )
}

fn criterion_6() -> Outcome {
    let m = market();
    let tol = 1e-6 * 100.0;
    let gen = Generator::abs_upper(K).unwrap();
    let mut detail = Vec::new();
    let mut ok = true;
    for payoff in [Payoff::call(100.0), Payoff::put(100.0)] {
        let sol = solve_fd(&m, &payoff, &gen, 801, 5000).map_err(|e| e.to_string())?;
        let r = z_sign_check(&sol, &payoff, tol).map_err(|e| e.to_string())?;
        ok &= r.passed;
        detail.push(format!("{} z in [{:.2e}, {:.2e}]", payoff.name(), r.min_z, r.max_z));
    }
    verdict(ok, detail.join("; "))
}

fn criterion_7(b: &PathBundle, cap: &Capacity) -> Outcome {
    let st = b.terminal_states().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for i in 0..101 {
        let x = random_payoff(&mut rng).eval_all(&st);
        let y = random_payoff(&mut rng).eval_all(&st);
        let (p, q) = if i == 100 { (3.0, 1.5) } else { (2.0, 2.0) };
        let r = choquet_holder_check(&x, &y, cap, p, q).map_err(|e| e.to_string())?;
        if r.violated {
            violations += 1;
        }
        if r.rhs > 0.0 {
            tightest = tightest.min((r.rhs - r.lhs) / r.rhs);
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations over 100 pairs (p=q=2) and one pair (p=3, q=3/2); tightest slack {tightest:.2e}"),
    )
}

fn criterion_8(b: &PathBundle, cap: &Capacity) -> Outcome {
    let st = b.terminal_states().unwrap();
    let lower = cap.with_orientation(Orientation::Lower);
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let v = random_payoff(&mut rng).eval_all(&st);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let a = minimax_with_capacity(&v, cap).map_err(|e| e.to_string())?;
        let n = minimax_with_capacity(&neg, cap).map_err(|e| e.to_string())?;
        worst = worst.max((a.lower.value + n.upper.value).abs() / a.lower.value.abs().max(1.0));
        let e = random_event(&mut rng, &st);
        worst = worst.max((lower.evaluate(&e).unwrap() - (1.0 - cap.evaluate(&e.complement()).unwrap())).abs());
        let cl = choquet(&v, &lower, LevelScheme::EverySample).map_err(|e| e.to_string())?;
        let cu = choquet(&neg, cap, LevelScheme::EverySample).map_err(|e| e.to_string())?;
        worst = worst.max((cl.value + cu.value).abs() / cl.value.abs().max(1.0));
    }
    // decreasing payoff against the increasing computation on -Phi
    let m = market();
    let put = Payoff::put(100.0);
    let direct = extremal_price(&put, &m, ExtremalSource::Bundle(b)).map_err(|e| e.to_string())?;
    let mirrored = extremal_price(&put.negated(), &m, ExtremalSource::Bundle(b)).map_err(|e| e.to_string())?;
    let swap = (direct.upper.value + mirrored.lower.value).abs() + (direct.lower.value + mirrored.upper.value).abs();
    worst = worst.max(swap / direct.upper.value);
    verdict(
        worst <= 1e-12,
        format!("largest relative defect {worst:.1e} over minimax, capacity, Choquet and put role swap"),
    )
}

fn criterion_9(b: &PathBundle, cap: &Capacity) -> Outcome {
    let st = b.terminal_states().unwrap();
    let lower = cap.with_orientation(Orientation::Lower);
    let mut corpus = vec![
        Payoff::call(100.0),
        Payoff::put(100.0),
        Payoff::digital(100.0),
        Payoff::straddle(100.0),
        Payoff::affine(5.0, 0.3),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    corpus.extend((0..20).map(|_| random_payoff(&mut rng)));
    let mut failures = Vec::new();
    let mut straddle_gap = f64::NAN;
    for p in &corpus {
        let v = p.eval_all(&st);
        let r = minimax_with_capacity(&v, cap).map_err(|e| e.to_string())?;
        let cu = choquet(&v, cap, LevelScheme::EverySample).map_err(|e| e.to_string())?;
        let cl = choquet(&v, &lower, LevelScheme::EverySample).map_err(|e| e.to_string())?;
        let ok = cl.value <= r.lower.value + pooled_tolerance(cl.std_error, r.lower.std_error)
            && r.lower.value <= r.upper.value
            && r.upper.value <= cu.value + pooled_tolerance(cu.std_error, r.upper.std_error);
        if !ok {
            failures.push(p.name().to_string());
        }
        if p.name().starts_with("straddle") {
            straddle_gap = cu.value - r.upper.value;
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} payoffs, failures {:?}; straddle upper Choquet - upper minimax = {straddle_gap:.4e}",
            corpus.len(),
            failures
        ),
    )
}

fn criterion_10(reference_csv: &[u8]) -> Outcome {
    let scenario = load(&[]);
    let mut csvs = Vec::new();
    for threads in [1, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| run(&scenario)).map_err(|e| e.to_string())?;
        csvs.push(emit(&report, Format::Csv));
    }
    let same = csvs.iter().all(|c| c == reference_csv);
    verdict(
        same,
        format!("3 runs (default pool, 1 and 8 threads): CSV byte-identical = {same}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    let started = Instant::now();
    let report = run(&load(&[])).expect("acceptance scenario runs");
    let secs = started.elapsed().as_secs_f64();
    let reference_csv = emit(&report, Format::Csv);
    results.push((1, "main chain, call under k = 0.1", criterion_1(&report, secs)));
    drop(report);
    results.push((2, "degeneracy at k = 0", criterion_2()));

    let b = bundle(100_000, 2024);
    let cap = upper_capacity(&b);
    results.push((3, "submodularity of the upper capacity", criterion_3(&b, &cap)));
    results.push((4, "L2 bound", criterion_4(&b, &cap)));
    results.push((5, "comparison ordering", criterion_5()));
    results.push((6, "z-sign", criterion_6()));
    results.push((7, "Choquet-Hoelder", criterion_7(&b, &cap)));
    results.push((8, "duality identities", criterion_8(&b, &cap)));
    results.push((9, "sandwich", criterion_9(&b, &cap)));
    drop(cap);
    results.push((10, "determinism", criterion_10(&reference_csv)));

    let mut failed = 0;
    for (i, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {i:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {i:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
