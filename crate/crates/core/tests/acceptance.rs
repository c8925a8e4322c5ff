//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed;
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use heatinv::grid::{Grid, SpaceTimeField, SpatialField};
use heatinv::inference::{effective_sample_size, run_chain, ChainConfig, StartPolicy};
use heatinv::measurement::{Dataset, ForwardModel};
use heatinv::prior::{
    link_phi_field, rescale_factor, rescale_prior, rkhs_norm, sample_truncated_series, CutoffSpec, LinkSpec, Prior,
    PriorSpec,
};
use heatinv::rng;
use heatinv::solver::{recover_absorption, smooth_bump, solve_forward, AbsorptionField, BoundaryData, BoundaryProfile, SchemeConfig};
use heatinv::study::{lower_bound_report, oracle_check, run_checks, run_rate_study, Config};
use rand::Rng as _;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn closed_form_error(n: usize) -> f64 {
    let grid = Grid::new(1, n, n, 1.0).unwrap();
    let f = AbsorptionField::constant(grid, 1.0).unwrap();
    let bd = BoundaryProfile::Sine.build(grid).unwrap();
    let u = solve_forward(&f, &bd, &grid, &SchemeConfig::default()).unwrap();
    let a = PI * PI / 2.0 + 1.0;
    let exact = SpaceTimeField::from_fn(grid, |x, t| (-a * t).exp() * (PI * x[0]).sin());
    u.sub(&exact).max_abs()
}

fn solver_closed_form() -> Outcome {
    let (e65, e129) = (closed_form_error(65), closed_form_error(129));
    let order = (e65 / e129).log2();
    outcome(
        e129 <= 1e-3 && order >= 1.8,
        format!("sup error {e129:.3e} at 129, observed order {order:.3}"),
    )
}

fn oracle_agreement() -> Outcome {
    let check = oracle_check(&Config::default()).unwrap();
    let max_z = check.report.records.iter().map(|r| r.zscore.abs()).fold(0.0, f64::max);
    outcome(
        check.pass(),
        format!(
            "fraction |z| <= 4: {:.2} (max |z| {max_z:.2}); corrupted control fraction {:.2}, pass = {}",
            check.report.fraction_within, check.control.fraction_within, check.control.pass
        ),
    )
}

fn maximum_principle() -> Outcome {
    let mut r = rng::stream(303, 0);
    let link = LinkSpec::default();
    let mut violations = 0;
    let mut min_u = f64::INFINITY;
    for case in 0..50 {
        let grid = if case % 2 == 0 { Grid::new(1, 33, 33, 1.0) } else { Grid::new(2, 17, 17, 1.0) }.unwrap();
        let alpha = if grid.dim() == 1 { 3 } else { 4 };
        let prior = Prior::new(&PriorSpec::series(alpha, grid.dim(), 2), &CutoffSpec::default(), grid).unwrap();
        let amp: f64 = r.random_range(0.0..5.0);
        let big_f = prior.synthesize(&prior.sample_white(&mut r)).scaled(amp);
        let f = if case % 5 == 0 {
            AbsorptionField::nonnegative(SpatialField::from_fn(grid, |x| x[0] * amp)).unwrap()
        } else {
            link_phi_field(&big_f, &link).unwrap()
        };
        let c: f64 = r.random_range(0.5..2.0);
        let lambda: f64 = r.random_range(0.0..2.0);
        let b: f64 = r.random_range(0.0..1.0);
        let bd = BoundaryData::from_fns(
            grid,
            move |_, t| c * (-lambda * t).exp(),
            move |x| c * (1.0 + b * x.iter().map(|&xi| smooth_bump(4.0 * (xi - 0.5))).product::<f64>()),
        )
        .unwrap();
        let u = solve_forward(&f, &bd, &grid, &SchemeConfig::backward_euler()).unwrap();
        let upper = bd.u0().max_abs() + bd.g().max_abs();
        violations += u.values().iter().filter(|&&v| !(v > 0.0 && v <= upper)).count();
        min_u = min_u.min(u.min());
    }
    outcome(violations == 0, format!("50 cases, {violations} violations, smallest value {min_u:.3e}"))
}

fn ratio_round_trip() -> Outcome {
    let grid = Grid::new(1, 129, 129, 1.0).unwrap();
    let bd = BoundaryProfile::Decaying.build(grid).unwrap();
    let link = LinkSpec::default();
    let prior = Prior::new(&PriorSpec::series(3, 1, 2), &CutoffSpec::default(), grid).unwrap();
    let mut r = rng::stream(404, 0);
    let mut family = vec![AbsorptionField::constant(grid, 1.0).unwrap()];
    family.push(
        AbsorptionField::nonnegative(SpatialField::from_fn(grid, |x| 1.0 + 0.5 * smooth_bump(4.0 * (x[0] - 0.5)))).unwrap(),
    );
    for _ in 0..8 {
        family.push(link_phi_field(&prior.synthesize(&prior.sample_white(&mut r)), &link).unwrap());
    }
    let mut worst = 0.0f64;
    for f in &family {
        let u = solve_forward(f, &bd, &grid, &SchemeConfig::default()).unwrap();
        for k in [32, 64, 96] {
            let rec = recover_absorption(&u, k).unwrap();
            let interior = 1..grid.n_x() - 1;
            let num: f64 = interior.clone().map(|i| (rec.values()[i] - f.values()[i]).powi(2)).sum();
            let den: f64 = interior.map(|i| f.values()[i].powi(2)).sum();
            worst = worst.max((num / den).sqrt());
        }
    }
    outcome(worst <= 5e-2, format!("{} fields x 3 time levels, worst relative L2 error {worst:.3e}", family.len()))
}

fn prior_invariance() -> Outcome {
    let grid = Grid::new(1, 33, 33, 1.0).unwrap();
    let prior = Prior::new(&PriorSpec::series(3, 1, 3), &CutoffSpec::default(), grid).unwrap();
    let bd = BoundaryProfile::default().build(grid).unwrap();
    let model = ForwardModel::new(&Dataset::empty(grid, 0.1), LinkSpec::default(), bd, SchemeConfig::default()).unwrap();
    let cfg = ChainConfig {
        n_steps: 20_000,
        burn_in: 0,
        step_size: 0.5,
        adapt: false,
        seed: 505,
        start: StartPolicy::PriorDraw,
        ..ChainConfig::default()
    };
    let chain = run_chain(&cfg, &model, &prior, None).unwrap();
    // point values at four nodes and the integral of F
    type Functional = Box<dyn Fn(&SpatialField) -> f64>;
    let functionals: Vec<Functional> = vec![
        Box::new(|f| f.values()[8]),
        Box::new(|f| f.values()[12]),
        Box::new(|f| f.values()[16]),
        Box::new(|f| f.values()[22]),
        Box::new(|f| f.values().iter().sum::<f64>() / 32.0),
    ];
    let basis: Vec<SpatialField> = (0..prior.dim())
        .map(|k| {
            let mut e = vec![0.0; prior.dim()];
            e[k] = 1.0;
            prior.synthesize(&e)
        })
        .collect();
    let mut worst = 0.0f64;
    let mut ok = true;
    for ell in &functionals {
        let exact: f64 = basis.iter().map(|b| ell(b).powi(2)).sum();
        let sq: Vec<f64> = chain.fields(&prior).map(|f| ell(&f).powi(2)).collect();
        let est = sq.iter().sum::<f64>() / sq.len() as f64;
        let sd = (sq.iter().map(|v| (v - est).powi(2)).sum::<f64>() / sq.len() as f64).sqrt();
        let se = sd / effective_sample_size(&sq).sqrt();
        let z = (est - exact) / se;
        worst = worst.max(z.abs());
        ok &= z.abs() <= 3.0;
    }
    outcome(ok, format!("5 functionals, 2e4 steps, largest deviation {worst:.2} standard errors"))
}

fn rescaling_exactness() -> Outcome {
    let mut max_rel = 0.0f64;
    for n in [1usize, 2, 100, 128, 1000, 4096, 1 << 20] {
        let want = (n as f64).powf(-1.0 / 22.0);
        max_rel = max_rel.max(((rescale_factor(n, 3.0, 1) - want) / want).abs());
    }
    let grid = Grid::new(1, 65, 65, 1.0).unwrap();
    let (c, _) = sample_truncated_series(&PriorSpec::series(3, 1, 3), &CutoffSpec::default(), grid, 606).unwrap();
    let mut max_norm_rel = 0.0f64;
    for n in [1usize, 100, 4096] {
        let want = rescale_factor(n, 3.0, 1) * rkhs_norm(&c);
        max_norm_rel = max_norm_rel.max(((rkhs_norm(&rescale_prior(&c, n, 3.0, 1).unwrap()) - want) / want).abs());
    }
    outcome(
        max_rel <= 4.0 * f64::EPSILON && max_norm_rel <= 4.0 * f64::EPSILON,
        format!("factor vs N^(-1/22): {max_rel:.1e} relative; RKHS multiplicativity: {max_norm_rel:.1e} relative"),
    )
}

fn rate_criteria() -> (Outcome, Outcome, Duration) {
    let start = Instant::now();
    let study = run_rate_study(&Config::default()).unwrap();
    let elapsed = start.elapsed();
    let failed = study.records.iter().filter(|r| !r.is_ok()).count();
    let fwd = study.slope("forward").unwrap();
    let f = study.slope("f").unwrap();
    let first_last = |s: &heatinv::study::SlopeSummary| (s.medians.first().unwrap().1, s.medians.last().unwrap().1);

    let slope = fwd.fit.map(|s| s.slope).unwrap_or(f64::NAN);
    let (m128, m4096) = first_last(fwd);
    let inversions = fwd.medians.windows(2).filter(|w| w[1].1 > w[0].1).count();
    let forward = outcome(
        failed == 0 && slope < 0.0 && (-0.75..=-0.15).contains(&slope) && m4096 < m128,
        format!(
            "slope {slope:.3} (theory {:.3}), bootstrap P(slope < 0) {:.3}, median 128 -> 4096: {m128:.3e} -> {m4096:.3e}, {inversions} inversion(s)",
            fwd.theory.unwrap(),
            fwd.bootstrap_negative.unwrap_or(f64::NAN)
        ),
    );
    let slope = f.fit.map(|s| s.slope).unwrap_or(f64::NAN);
    let (m128, m4096) = first_last(f);
    let recovery = outcome(
        failed == 0 && slope < 0.0 && m4096 < m128,
        format!(
            "slope {slope:.3} (theory {:.3}), median 128 -> 4096: {m128:.3e} -> {m4096:.3e}",
            f.theory.unwrap()
        ),
    );
    (forward, recovery, elapsed)
}

fn lower_bound() -> Outcome {
    let r = lower_bound_report(&Config::default()).unwrap();
    outcome(
        r.pass,
        format!(
            "j = {}, n_j = {}, M = {}, min separation {:.3e} >= bound {:.3e}, {} violations, KL max {:.3e}, eps {:.3}",
            r.level, r.n_bumps, r.m, r.min_separation, r.separation_bound, r.violations, r.max_kl, r.epsilon
        ),
    )
}

fn inequality_suites() -> Outcome {
    let reports = run_checks(&Config::default()).unwrap();
    let pass = reports.iter().all(|r| r.pass);
    let detail = reports
        .iter()
        .map(|r| format!("{} change {:.1}%{}", r.name, 100.0 * r.relative_change, if r.identity_exact { "" } else { " (identity case inexact)" }))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_heatinv"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("small.toml");
    std::fs::write(
        &config,
        "[grid]\nn_x = 33\nn_t = 33\n\n[chain]\nn_steps = 300\nburn_in = 100\n\n\
         [study]\nn_grid = [64, 128, 256]\nreplicates = 3\nbootstrap = 50\n\n\
         [oracle]\nn_points = 4\nn_paths = 400\ndt_path = 1e-3\n\n[checks]\nn_draws = 4\ngrids = [33, 65]\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("forward", vec!["forward".into(), "--format".into(), "binary".into()]),
        ("oracle", vec!["oracle-check".into()]),
        ("simulate", vec!["simulate".into(), "--n".into(), "50".into()]),
        ("sample", vec!["sample".into(), "--data".into(), p("simulate/data.csv")]),
        ("rates", vec!["rates".into()]),
        ("lowerbound", vec!["lowerbound".into()]),
        ("checks", vec!["checks".into()]),
    ];
    let mut failures = Vec::new();
    for (name, mut args) in runs {
        args.extend(["--config".into(), cfg.into(), "--out".into(), p(name)]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        if !run_cli(&argv) {
            failures.push(format!("{name} run"));
            continue;
        }
        let manifest = p(&format!("{name}/manifest.json"));
        if !run_cli(&["replay", "--manifest", &manifest, "--out", &p(&format!("{name}-replay"))]) {
            failures.push(format!("{name} replay"));
        }
        if !Path::new(&p(&format!("{name}-replay/manifest.json"))).exists() {
            failures.push(format!("{name} replay manifest"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "7 commands replayed from their manifests with byte-identical outputs".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn report(id: usize, name: &str, o: &Outcome, elapsed: Duration, budget: Option<Duration>) -> bool {
    let in_budget = budget.is_none_or(|b| elapsed <= b);
    let pass = o.pass && in_budget;
    let budget_note = match budget {
        Some(b) if !in_budget => format!(", over the {:.0} s budget", b.as_secs_f64()),
        _ => String::new(),
    };
    println!(
        "criterion {id:>2} {name}: {} -- {} [{:.1} s{budget_note}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn main() {
    // ignore libtest arguments such as --nocapture or a test filter
    let mut all = true;
    let secs = Duration::from_secs;

    let (o, t) = timed(solver_closed_form);
    all &= report(1, "solver closed form", &o, t, Some(secs(10)));
    let (o, t) = timed(oracle_agreement);
    all &= report(2, "Feynman-Kac agreement", &o, t, Some(secs(120)));
    let (o, t) = timed(maximum_principle);
    all &= report(3, "maximum principle and positivity", &o, t, None);
    let (o, t) = timed(ratio_round_trip);
    all &= report(4, "ratio-identity round trip", &o, t, None);
    let (o, t) = timed(prior_invariance);
    all &= report(5, "prior invariance of the sampler", &o, t, None);
    let (o, t) = timed(rescaling_exactness);
    all &= report(6, "rescaling exactness", &o, t, None);
    let (forward, recovery, t) = rate_criteria();
    all &= report(7, "forward-loss rate trend", &forward, t, Some(secs(7200)));
    all &= report(8, "recovery rate trend", &recovery, t, Some(secs(7200)));
    let (o, t) = timed(lower_bound);
    all &= report(9, "lower-bound construction", &o, t, Some(secs(600)));
    let (o, t) = timed(inequality_suites);
    all &= report(10, "inequality suites", &o, t, None);
    let (o, t) = timed(reproducibility);
    all &= report(11, "CLI reproducibility", &o, t, None);

    if !all {
        std::process::exit(1);
    }
}
