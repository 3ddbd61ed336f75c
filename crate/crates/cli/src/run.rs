//! Scenario execution: one shared bundle feeds every estimator.

use std::path::Path;
use std::time::Instant;

use ambiguity::bsde::{min_stable_time_steps, GRID_HALF_WIDTH_SD};
use ambiguity::minimax::{closed_form_price, minimax_with_capacity};
use ambiguity::stats::{mean_and_se, pooled_tolerance};
use ambiguity::{
    attainment_check, build_capacity, choquet, comparison_check, extremal_price, simulate, solve_fd,
    standard_family, z_sign_check, Capacity, Estimate, Event, ExtremalSource, Generator, GridSolution,
    Monotonicity, Orientation, Payoff,
};

use crate::error::CliError;
use crate::report::{discrepancy_matrix, CheckOutcome, CheckStatus, EstimatorRow, Report, Runtime, ESTIMATORS};
use crate::scenario::{CheckName, Levels, Override, Scenario};

/// Relative agreement required between estimators of the same quantity.
pub const AGREEMENT_TOLERANCE: f64 = 0.01;

/// Relative tolerance on equalities that hold exactly under shared randomness.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Absolute slack on the `z` sign, as a multiple of `s0`.
pub const Z_SIGN_SLACK: f64 = 1e-6;

pub fn run_scenario(path: &Path, overrides: &[Override], extra_checks: &[CheckName]) -> Result<Report, CliError> {
    let mut scenario = Scenario::load(path, overrides)?;
    scenario.checks.extend_from_slice(extra_checks);
    run(&scenario)
}

struct Phases {
    start: Instant,
    last: Instant,
    done: Vec<(String, u64)>,
}

impl Phases {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            done: Vec::new(),
        }
    }

    fn mark(&mut self, name: &str) {
        let now = Instant::now();
        self.done.push((name.to_string(), (now - self.last).as_millis() as u64));
        self.last = now;
    }
}

/// Everything the checks need after the estimators are computed.
struct Context<'a> {
    scenario: &'a Scenario,
    payoff: Payoff,
    values: Vec<f64>,
    capacity: Capacity,
    rows: Vec<EstimatorRow>,
    upper_solution: GridSolution,
    /// Quadrature error bounds of the (upper, lower) Choquet integrals.
    quadrature_bounds: (f64, f64),
    nodes: usize,
    time_steps: usize,
}

pub fn fd_time_steps(scenario: &Scenario, nodes: usize) -> usize {
    let m = &scenario.market;
    let dx = 2.0 * GRID_HALF_WIDTH_SD * m.sigma * m.horizon.sqrt() / (nodes - 1) as f64;
    min_stable_time_steps(m.horizon, dx, m.sigma)
}

pub fn run(scenario: &Scenario) -> Result<Report, CliError> {
    scenario.validate()?;
    let mut phases = Phases::new();
    let model = scenario.model()?;
    let payoff = scenario.payoff()?;
    let n = &scenario.numerics;
    let k = scenario.market.k;

    let bundle = simulate(&model, model.grid(n.steps)?, n.n_paths, n.seed)?;
    let values = payoff.eval_all(&bundle.terminal_states()?);
    phases.mark("paths");

    let family = standard_family(k, n.theta_grid_count, scenario.market.horizon)?;
    let capacity = build_capacity(Orientation::Upper, &family, &bundle)?;
    let minimax = minimax_with_capacity(&values, &capacity)?;
    phases.mark("measures");

    let scheme = n.quantile_levels.scheme();
    let cu = choquet(&values, &capacity, scheme)?;
    let cl = choquet(&values, &capacity.with_orientation(Orientation::Lower), scheme)?;
    phases.mark("choquet");

    let time_steps = n.time_steps.unwrap_or_else(|| fd_time_steps(scenario, n.nodes));
    let upper_solution = solve_fd(&model, &payoff, &Generator::abs_upper(k)?, n.nodes, time_steps)?;
    let lower_solution = solve_fd(&model, &payoff, &Generator::abs_lower(k)?, n.nodes, time_steps)?;
    let (bsde_tol, bsde_note) = bsde_tolerance(scenario, &payoff, &upper_solution, time_steps)?;
    phases.mark("bsde");

    let extremal = match payoff.monotonicity() {
        Monotonicity::None => None,
        _ => {
            let source = if closed_form_price(&payoff, &model, 0.0).is_ok() {
                ExtremalSource::ClosedForm
            } else {
                ExtremalSource::Bundle(&bundle)
            };
            Some(extremal_price(&payoff, &model, source)?)
        }
    };
    let plain = mean_and_se(values.len(), |i| values[i]);

    let quad_note = |c: &ambiguity::choquet::ChoquetValue| {
        (!c.exact).then(|| format!("quadrature bound {:.3e}", c.quadrature_bound))
    };
    let choquet_row = |name: &str, c: ambiguity::choquet::ChoquetValue| {
        let row = EstimatorRow::new(name, Some(Estimate::new(c.value, c.std_error)), AGREEMENT_TOLERANCE);
        match quad_note(&c) {
            Some(note) => row.with_note(note),
            None => row,
        }
    };
    let bsde_row = |name: &str, y0: f64| {
        let row = EstimatorRow::new(name, Some(Estimate::exact(y0)), bsde_tol);
        match &bsde_note {
            Some(note) => row.with_note(note.clone()),
            None => row,
        }
    };
    let extremal_row = |name: &str, e: Option<Estimate>| {
        let row = EstimatorRow::new(name, e, AGREEMENT_TOLERANCE);
        if extremal.is_none() {
            row.with_note("not applicable: payoff has no declared monotonicity")
        } else {
            row
        }
    };
    let rows = vec![
        choquet_row(ESTIMATORS[0], cu),
        choquet_row(ESTIMATORS[1], cl),
        EstimatorRow::new(ESTIMATORS[2], Some(minimax.upper), AGREEMENT_TOLERANCE)
            .with_note(format!("argmax {}", minimax.argmax_control.label())),
        EstimatorRow::new(ESTIMATORS[3], Some(minimax.lower), AGREEMENT_TOLERANCE)
            .with_note(format!("argmin {}", minimax.argmin_control.label())),
        bsde_row(ESTIMATORS[4], upper_solution.y0()),
        bsde_row(ESTIMATORS[5], lower_solution.y0()),
        extremal_row(ESTIMATORS[6], extremal.map(|e| e.upper)),
        extremal_row(ESTIMATORS[7], extremal.map(|e| e.lower)),
        EstimatorRow::new(ESTIMATORS[8], Some(plain), AGREEMENT_TOLERANCE),
    ];
    drop(lower_solution);

    let ctx = Context {
        scenario,
        payoff,
        values,
        capacity,
        rows,
        upper_solution,
        quadrature_bounds: (cu.quadrature_bound, cl.quadrature_bound),
        nodes: n.nodes,
        time_steps,
    };
    let mut requested: Vec<CheckName> = Vec::new();
    for c in &scenario.checks {
        if !requested.contains(c) {
            requested.push(*c);
        }
    }
    let mut checks = Vec::with_capacity(requested.len());
    for name in requested {
        let (status, detail) = run_check(name, &ctx, &bundle)?;
        checks.push(CheckOutcome {
            name: name.to_string(),
            status,
            detail,
        });
    }
    phases.mark("checks");

    let rows = ctx.rows;
    Ok(Report {
        scenario: scenario.name.clone(),
        payoff: ctx.payoff.name().to_string(),
        seed: n.seed,
        discrepancy: discrepancy_matrix(&rows),
        estimators: rows,
        checks,
        runtime: Runtime {
            threads: rayon::current_num_threads(),
            n_paths: n.n_paths,
            path_steps: n.steps,
            fd_nodes: n.nodes,
            fd_time_steps: time_steps,
            family_size: family.len(),
            choquet_levels: match n.quantile_levels {
                Levels::Every => "every".into(),
                Levels::Quantiles(q) => q.to_string(),
            },
            total_ms: phases.start.elapsed().as_millis() as u64,
            phases_ms: phases.done,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Lipschitz payoffs use the plain agreement tolerance. Otherwise the
/// tolerance is widened to twice the relative change against a grid with
/// half the nodes (first-order convergence makes that change the error
/// estimate).
fn bsde_tolerance(
    scenario: &Scenario,
    payoff: &Payoff,
    fine: &GridSolution,
    time_steps: usize,
) -> Result<(f64, Option<String>), CliError> {
    if payoff.is_lipschitz() {
        return Ok((AGREEMENT_TOLERANCE, None));
    }
    let nodes = scenario.numerics.nodes;
    let coarse_nodes = (nodes - 1) / 2 + 1;
    if coarse_nodes < 5 {
        return Ok((AGREEMENT_TOLERANCE, None));
    }
    let coarse_steps = fd_time_steps(scenario, coarse_nodes).max(time_steps / 4);
    let model = scenario.model()?;
    let coarse = solve_fd(&model, payoff, &Generator::abs_upper(scenario.market.k)?, coarse_nodes, coarse_steps)?;
    let change = (fine.y0() - coarse.y0()).abs() / fine.y0().abs().max(f64::MIN_POSITIVE);
    let tol = AGREEMENT_TOLERANCE.max(2.0 * change);
    Ok((
        tol,
        Some(format!(
            "non-Lipschitz payoff: tolerance widened by refinement ({nodes} vs {coarse_nodes} nodes)"
        )),
    ))
}

fn estimate(ctx: &Context<'_>, name: &str) -> Option<Estimate> {
    ctx.rows.iter().find(|r| r.estimator == name)?.estimate()
}

fn row_tolerance(ctx: &Context<'_>, name: &str) -> f64 {
    ctx.rows
        .iter()
        .find(|r| r.estimator == name)
        .map_or(AGREEMENT_TOLERANCE, |r| r.tolerance)
}

/// Largest `|a - b| / allowed` over the pairs; below 1 means agreement.
fn pairwise_agreement(ctx: &Context<'_>, names: &[&str]) -> (f64, String) {
    let mut worst = (0.0, String::from("no pairs"));
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (Some(ea), Some(eb)) = (estimate(ctx, a), estimate(ctx, b)) else {
                continue;
            };
            let rel = row_tolerance(ctx, a).max(row_tolerance(ctx, b));
            let allowed = (rel * ea.value.abs().max(eb.value.abs())).max(pooled_tolerance(ea.std_error, eb.std_error));
            let ratio = (ea.value - eb.value).abs() / allowed.max(f64::MIN_POSITIVE);
            if ratio >= worst.0 {
                worst = (
                    ratio,
                    format!("{a} vs {b}: |diff| {:.3e}, allowed {:.3e}", (ea.value - eb.value).abs(), allowed),
                );
            }
        }
    }
    worst
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

fn run_check(
    name: CheckName,
    ctx: &Context<'_>,
    bundle: &ambiguity::PathBundle,
) -> Result<(CheckStatus, String), CliError> {
    let monotone = ctx.payoff.monotonicity() != Monotonicity::None;
    let k = ctx.scenario.market.k;
    Ok(match name {
        CheckName::MainChain => {
            if !monotone {
                (CheckStatus::NotApplicable, "payoff has no declared monotonicity".into())
            } else {
                let up = pairwise_agreement(ctx, &["choquet_upper", "minimax_upper", "bsde_upper", "extremal_upper"]);
                let low = pairwise_agreement(ctx, &["choquet_lower", "minimax_lower", "bsde_lower", "extremal_lower"]);
                let worst = if up.0 >= low.0 { &up } else { &low };
                (status(up.0 <= 1.0 && low.0 <= 1.0), format!("worst {}", worst.1))
            }
        }
        CheckName::Degeneracy => {
            if k != 0.0 {
                (CheckStatus::NotApplicable, format!("k = {k}"))
            } else {
                let plain = estimate(ctx, "plain").expect("plain row");
                let mut ok = true;
                let mut worst = (0.0, String::new());
                for r in ctx.rows.iter().filter(|r| r.estimator != "plain") {
                    let Some(e) = r.estimate() else { continue };
                    let allowed = pooled_tolerance(e.std_error, plain.std_error);
                    let ratio = (e.value - plain.value).abs() / allowed.max(f64::MIN_POSITIVE);
                    ok &= ratio <= 1.0;
                    if ratio >= worst.0 {
                        worst = (ratio, format!("{} off plain by {:.3e} (3 SE {:.3e})", r.estimator, (e.value - plain.value).abs(), allowed));
                    }
                }
                // Choquet and minimax share the sample: equal up to quadrature
                let cu = choquet(&ctx.values, &ctx.capacity, ctx.scenario.numerics.quantile_levels.scheme())?;
                let mu = estimate(ctx, "minimax_upper").expect("minimax row").value;
                let gap = (cu.value - mu).abs();
                let same = gap <= cu.quadrature_bound + EXACT_TOLERANCE * mu.abs().max(1.0);
                (
                    status(ok && same),
                    format!("worst {}; |choquet - minimax| {gap:.3e}", worst.1),
                )
            }
        }
        CheckName::Sandwich => {
            let get = |n: &str| estimate(ctx, n).expect("row present");
            let (cl, ml, mu, cu) = (get("choquet_lower"), get("minimax_lower"), get("minimax_upper"), get("choquet_upper"));
            let ok1 = cl.value <= ml.value + pooled_tolerance(cl.std_error, ml.std_error) + ctx.quadrature_bounds.1;
            let ok2 = ml.value <= mu.value;
            let ok3 = mu.value <= cu.value + pooled_tolerance(cu.std_error, mu.std_error) + ctx.quadrature_bounds.0;
            (
                status(ok1 && ok2 && ok3),
                format!(
                    "{:.6} <= {:.6} <= {:.6} <= {:.6}; upper gap {:.3e}",
                    cl.value,
                    ml.value,
                    mu.value,
                    cu.value,
                    cu.value - mu.value
                ),
            )
        }
        CheckName::Comparison => {
            let model = ctx.scenario.model()?;
            let r = comparison_check(
                &model,
                &ctx.payoff,
                &Generator::abs_lower(k)?,
                &Generator::abs_upper(k)?,
                ctx.nodes,
                ctx.time_steps,
                ambiguity::bsde::DEFAULT_SCHEME_TOLERANCE,
            );
            match r {
                Ok(r) => (
                    status(r.passed),
                    format!("y0 {:.6} <= {:.6}, gap {:.3e}", r.y0_low, r.y0_high, r.gap),
                ),
                Err(e @ ambiguity::Error::PreconditionViolation { .. }) => (CheckStatus::Fail, e.to_string()),
                Err(e) => return Err(e.into()),
            }
        }
        CheckName::ZSign => {
            let tol = Z_SIGN_SLACK * ctx.scenario.market.s0;
            match z_sign_check(&ctx.upper_solution, &ctx.payoff, tol) {
                Ok(r) => (
                    status(r.passed),
                    format!("z in [{:.3e}, {:.3e}], slack {tol:.1e}", r.min_z, r.max_z),
                ),
                Err(ambiguity::Error::NotApplicable(msg)) => (CheckStatus::NotApplicable, msg),
                Err(e) => return Err(e.into()),
            }
        }
        CheckName::Duality => duality(ctx)?,
        CheckName::Attainment => {
            let count = ctx.scenario.numerics.theta_grid_count.max(11);
            let r = attainment_check(&ctx.payoff, count, bundle, k)?;
            if !r.applicable {
                (CheckStatus::NotApplicable, "payoff has no declared monotonicity".into())
            } else {
                (
                    status(r.passed()),
                    format!(
                        "argmax theta {}, argmin theta {}, monotone {}",
                        r.argmax_theta, r.argmin_theta, r.monotone
                    ),
                )
            }
        }
    })
}

fn duality(ctx: &Context<'_>) -> Result<(CheckStatus, String), CliError> {
    let negated: Vec<f64> = ctx.values.iter().map(|v| -v).collect();
    let pos = minimax_with_capacity(&ctx.values, &ctx.capacity)?;
    let neg = minimax_with_capacity(&negated, &ctx.capacity)?;
    let scale = pos.lower.value.abs().max(1.0);
    let minimax_gap = (pos.lower.value + neg.upper.value).abs();
    let ok_minimax = minimax_gap <= EXACT_TOLERANCE * scale;

    let mut sorted = ctx.values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let event = Event::exceeds(&ctx.values, median);
    let lower = ctx.capacity.with_orientation(Orientation::Lower);
    let cap_gap = (lower.evaluate(&event)? - (1.0 - ctx.capacity.evaluate(&event.complement())?)).abs();
    let ok_cap = cap_gap <= EXACT_TOLERANCE;

    let scheme = ctx.scenario.numerics.quantile_levels.scheme();
    let cl = choquet(&ctx.values, &lower, scheme)?;
    let cu_neg = choquet(&negated, &ctx.capacity, scheme)?;
    let choquet_gap = (cl.value + cu_neg.value).abs();
    let ok_choquet = choquet_gap <= cl.quadrature_bound + cu_neg.quadrature_bound + EXACT_TOLERANCE * scale;

    Ok((
        status(ok_minimax && ok_cap && ok_choquet),
        format!("minimax {minimax_gap:.1e}, capacity {cap_gap:.1e}, choquet {choquet_gap:.1e}"),
    ))
}
