//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Runs without the libtest harness so
//! that every criterion is reported even when an earlier one fails.

use std::process::ExitCode;
use std::time::Instant;

use merton_ce::analytic::{solve_markowitz, AnalyticSolution, Markowitz};
use merton_ce::builder::{build, power_utility_hypograph, quad_over_lin_cone, BuildOptions};
use merton_ce::conic::{self, cone_violation, verify, AffineExpr, ClarabelBackend, ProgramBuilder, SolverSettings};
use merton_ce::linalg::Matrix;
use merton_ce::mpc::{self, MpcConfig};
use merton_ce::problem::{
    expand_covariance, synthetic::factor_market, ConstraintSet, Covariance, Curve, IncomeModel, InsuranceModel,
    MarketModel, MinCash, MortalityModel, ProblemSpec, SpendingLimit, TimeVarying, UtilityParams,
};
use merton_ce::sim::{AnalyticPolicy, SimConfig, Simulator};
use merton_ce::{Analytic, Plan, Spec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn solve_plan(spec: &Spec, k: usize, settings: &SolverSettings<f64>) -> Plan {
    build(spec, &BuildOptions::new(k)).unwrap().solve(settings, &ClarabelBackend).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Reference market plus a riskless asset, for income instances.
fn with_cash(gamma: f64) -> Spec {
    let mut market = MarketModel::new(vec![0.10, 0.02, 0.02], Covariance::Dense(Matrix::diagonal(&[0.04, 0.04, 0.0])));
    market.risk_free_index = Some(2);
    ProblemSpec::new(market, UtilityParams::new(gamma, 1.0), 10.0, 1.0)
}

fn policy_agreement() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::reference();
    let sol = Analytic::solve(&spec).unwrap();
    let c_ref = sol.consumption_rate(0.0).unwrap();
    let settings = SolverSettings::default();
    let mut errors = Vec::new();
    for k in [50, 100, 200, 400] {
        let (c, theta) = solve_plan(&spec, k, &settings).first_policy();
        let e_theta = theta.iter().zip(&sol.theta_ce).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        errors.push((k, e_theta, (c - c_ref).abs()));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let at200 = errors[2];
    let combined: Vec<f64> = errors.iter().map(|e| e.1.max(e.2)).collect();
    let ratios: Vec<f64> = combined.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = at200.1 <= 5e-3
        && at200.2 <= 5e-3
        && ratios.iter().all(|r| (0.35..=0.65).contains(r))
        && elapsed <= 10.0;
    outcome(
        pass,
        format!(
            "K=200 |theta err| {:.2e}, |c/w err| {:.2e}; ratios {:?}; {elapsed:.1}s",
            at200.1,
            at200.2,
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn value_agreement() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::reference();
    let sol = Analytic::solve(&spec).unwrap();
    let v0 = sol.value(0.0, spec.w_init).unwrap();
    let sim = Simulator::new(&spec, SimConfig::with_step(1.0 / 250.0)).unwrap();
    let s = sim.monte_carlo(&AnalyticPolicy::new(sol), 100_000, 0).unwrap().summary;
    let se = s.std_error.unwrap();
    let z = (s.mean_utility - v0) / se;
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        z.abs() <= 3.0 && elapsed <= 60.0,
        format!("mean {:.6} vs V0 {v0:.6}, se {se:.2e}, z {z:.2}; {elapsed:.1}s", s.mean_utility),
    )
}

/// `ȧ` from the closed form, for the diagnostic split of the residual.
fn exact_residual(sol: &Analytic) -> f64 {
    let (g, r, t_end) = (sol.gamma, sol.r_ce, sol.horizon);
    let x = g * r / (1.0 - g);
    let step = 1e-4;
    let count = (t_end / step).floor() as usize;
    let mut worst: f64 = 0.0;
    for i in 1..count {
        let t = i as f64 * step;
        if t + step > t_end {
            break;
        }
        let q = 1.0 / sol.consumption_rate(t).unwrap();
        let a = sol.a(t).unwrap();
        let dq = if (g * r * t_end).abs() < 1e-10 { 1.0 } else { 1.0 + x * q };
        let dot_a = -(1.0 - g) * q.powf(-g) * dq;
        let res = dot_a + (1.0 - g) * a.powf(g / (g - 1.0)) + g * a * r;
        worst = worst.max(res.abs());
    }
    worst
}

fn hjb_residual() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failing = 0;
    let mut worst_exact: f64 = 0.0;
    let mut largest_a: f64 = 0.0;
    for i in 0..50 {
        let gamma = loop {
            let g = rng.gen_range(-3.0..0.9);
            if f64::abs(g) > 0.01 {
                break g;
            }
        };
        let beta = rng.gen_range(0.1..10.0);
        let horizon = rng.gen_range(1.0..50.0);
        let r_ce = match i % 10 {
            0 => 0.0,
            5 => 1e-13,
            _ => rng.gen_range(-0.2..0.3),
        };
        let sol = AnalyticSolution::from_markowitz(Markowitz { theta: vec![1.0], r_ce }, gamma, beta, horizon);
        let res = sol.hjb_ode_residual(1e-4).unwrap();
        if res > 1e-5 {
            failing += 1;
        }
        worst_exact = worst_exact.max(exact_residual(&sol));
        largest_a = largest_a.max(sol.a(0.0).unwrap());
        if res > worst.0 {
            worst = (res, format!("gamma {gamma:.3}, beta {beta:.3}, r {r_ce:.3}, T {horizon:.1}"));
        }
    }
    outcome(
        failing == 0,
        format!(
            "{failing}/50 draws above 1e-5; worst {:.2e} at ({}); with closed-form derivative the worst is {worst_exact:.2e}; largest a0 {largest_a:.2e}",
            worst.0, worst.1
        ),
    )
}

fn kkt_budget(mu: &[f64], sigma: &DMatrix<f64>, gamma: f64) -> Vec<f64> {
    let n = mu.len();
    let k = 1.0 - gamma;
    let inv = sigma.clone().try_inverse().unwrap();
    let mu = DVector::from_column_slice(mu);
    let ones = DVector::from_element(n, 1.0);
    let a = inv.clone() * &mu;
    let b = inv * &ones;
    let nu = (ones.dot(&a) - k) / ones.dot(&b);
    ((a - b * nu) / k).iter().copied().collect()
}

fn markowitz_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=10);
        let gamma = loop {
            let g = rng.gen_range(-3.0..0.9);
            if f64::abs(g) > 0.01 {
                break g;
            }
        };
        let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.15)).collect();
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.2..0.2));
        let sigma = &a * a.transpose() + DMatrix::identity(n, n) * 0.01;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = sigma[(i, j)];
            }
        }
        let market = MarketModel::new(mu.clone(), Covariance::Dense(m));
        let got = solve_markowitz(&market, &ConstraintSet::budget(n), gamma, &SolverSettings::default(), &ClarabelBackend)
            .unwrap();
        let want = kkt_budget(&mu, &sigma, gamma);
        let err = got.theta.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    outcome(worst <= 1e-6, format!("worst |theta - kkt| {worst:.2e} over 100 instances"))
}

/// Ten instances per exact extension, from the neutral setting to an active one.
fn exact_sweeps() -> Vec<(&'static str, Vec<Spec>)> {
    let base = ProblemSpec::reference();
    let steps = |f: &dyn Fn(f64) -> Spec| (0..10).map(|i| f(i as f64 / 9.0)).collect::<Vec<_>>();
    vec![
        (
            "base",
            steps(&|s| {
                let mut spec = base.clone();
                spec.utility.gamma = -2.0 + 2.8 * s;
                spec
            }),
        ),
        (
            "time-varying",
            steps(&|s| {
                let mut spec = base.clone();
                let late = vec![0.10 * (1.0 - s), 0.02];
                spec.extensions.time_varying = Some(TimeVarying {
                    times: vec![0.0, 5.0, 10.0],
                    mu: vec![vec![0.10, 0.02], vec![0.10, 0.02], late],
                    cov_scale: Some(Curve::new(vec![0.0, 10.0], vec![1.0, 1.0 + s])),
                });
                spec
            }),
        ),
        (
            "mortality",
            steps(&|s| {
                let mut spec = base.clone();
                spec.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.09 * s));
                spec
            }),
        ),
        (
            "insurance",
            steps(&|s| {
                let mut spec = base.clone();
                // Premiums are kept nonnegative: a short position is an annuity
                // paying up to w/λ a year, which makes the plan explode.
                spec.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.05));
                spec.extensions.insurance =
                    Some(InsuranceModel::new(Curve::constant(1000.0 * s)).with_premium_bounds(Some(0.0), None));
                spec
            }),
        ),
        (
            "income",
            steps(&|s| {
                let mut spec = with_cash(0.5);
                spec.extensions.income = Some(IncomeModel::constant(0.5 * s));
                spec
            }),
        ),
        (
            "epstein-zin",
            steps(&|s| {
                let mut spec = base.clone();
                spec.utility.rho = Some(0.5 - 2.5 * s);
                spec
            }),
        ),
    ]
}

fn dynamics_tightness() -> Outcome {
    let settings = SolverSettings::default();
    let mut worst: Vec<String> = Vec::new();
    let mut pass = true;
    for (name, specs) in exact_sweeps() {
        let mut w: f64 = 0.0;
        for spec in &specs {
            let plan = solve_plan(spec, 50, &settings);
            w = w.max(plan.max_slack() / spec.w_init);
        }
        pass &= w <= 1e-6;
        worst.push(format!("{name} {w:.1e}"));
    }
    outcome(pass, format!("max slack/w_init: {}", worst.join(", ")))
}

fn homogeneity() -> Outcome {
    let settings = SolverSettings::default();
    let spec = ProblemSpec::reference();
    let one = solve_plan(&spec, 50, &settings);
    let mut worst_obj: f64 = 0.0;
    let mut worst_traj: f64 = 0.0;
    for lambda in [0.1, 10.0] {
        let mut s = spec.clone();
        s.w_init = lambda;
        let p = solve_plan(&s, 50, &settings);
        worst_obj = worst_obj.max(rel(p.objective, lambda.powf(spec.utility.gamma) * one.objective));
        let pairs = [(&p.wealth, &one.wealth), (&p.consumption, &one.consumption)];
        for (a, b) in pairs {
            let scale = b.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * lambda;
            let d = a.iter().zip(b.iter()).fold(0.0, |m: f64, (x, y)| m.max((x - lambda * y).abs()));
            worst_traj = worst_traj.max(d / scale);
        }
        for (a, b) in p.allocations.iter().zip(&one.allocations) {
            let scale = b.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * lambda;
            let d = a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - lambda * y).abs()));
            worst_traj = worst_traj.max(d / scale);
        }
    }
    outcome(
        worst_obj <= 1e-5 && worst_traj <= 1e-6,
        format!("objective {worst_obj:.1e}, trajectory {worst_traj:.1e}"),
    )
}

fn no_op_reductions() -> Outcome {
    let settings = SolverSettings::with_tolerance(1e-10);
    let k = 50;
    let base = ProblemSpec::reference();
    let base_obj = solve_plan(&base, k, &settings).objective;
    let cash = with_cash(0.5);
    let cash_obj = solve_plan(&cash, k, &settings).objective;

    let mut cases: Vec<(&str, Spec, f64)> = Vec::new();
    let mut s = base.clone();
    s.extensions.mortality = Some(MortalityModel::immortal(10.0));
    cases.push(("mortality", s.clone(), base_obj));
    s.extensions.insurance = Some(InsuranceModel::new(Curve::constant(0.5)).with_premium_bounds(Some(0.0), Some(0.0)));
    cases.push(("insurance", s, base_obj));
    let mut s = cash.clone();
    s.extensions.income = Some(IncomeModel::constant(0.0));
    cases.push(("income", s, cash_obj));
    let mut s = base.clone();
    s.utility.rho = Some(base.utility.gamma);
    cases.push(("epstein-zin", s, base_obj));
    let mut s = base.clone();
    s.extensions.time_varying = Some(TimeVarying {
        times: vec![0.0, 10.0],
        mu: vec![vec![0.10, 0.02]; 2],
        cov_scale: Some(Curve::constant(1.0)),
    });
    cases.push(("time-varying", s, base_obj));
    let mut s = base.clone();
    s.extensions.consumption_floor = Some(Curve::constant(1e-4));
    cases.push(("consumption floor", s, base_obj));
    let mut s = base.clone();
    s.extensions.spending_limit = Some(SpendingLimit { eta: 0.0, dividend: vec![10.0, 10.0] });
    cases.push(("spending limit", s, base_obj));
    let mut s = base.clone();
    s.extensions.min_cash = Some(MinCash {
        asset: 0,
        floor: Some(Curve::constant(-1e3)),
        consumption_multiple: Some(0.5),
    });
    cases.push(("min cash", s, base_obj));

    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec, reference) in cases {
        let e = rel(solve_plan(&spec, k, &settings).objective, reference);
        pass &= e <= 1e-8;
        parts.push(format!("{name} {e:.1e}"));
    }
    outcome(pass, format!("relative objective gap: {}", parts.join(", ")))
}

fn mpc_optimality() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let mut mortal = ProblemSpec::reference();
    mortal.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.05));
    for (name, spec) in [("base", ProblemSpec::reference()), ("mortality", mortal)] {
        let start = Instant::now();
        let bt = mpc::backtest::<f64>(&spec, &MpcConfig::default(), SimConfig::with_step(0.02), 10_000, 8).unwrap();
        let d = bt.report.difference.unwrap();
        let ok = d.mean.abs() <= 2.0 * d.joint_se;
        pass &= ok;
        parts.push(format!(
            "{name} diff {:.2e} joint se {:.2e} ({:.1}s)",
            d.mean,
            d.joint_se,
            start.elapsed().as_secs_f64()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn performance() -> Outcome {
    let k = 50;
    let spec = |market: MarketModel<f64>| ProblemSpec::new(market, UtilityParams::new(-1.0, 1.0), 10.0, 1.0);
    let factor = factor_market::<f64>(500, 25, 9);
    let mut dense = factor.clone();
    dense.cov = Covariance::Dense(factor.cov.to_dense());

    let big = spec(factor);
    let start = Instant::now();
    let program = build(&big, &BuildOptions::new(k)).unwrap();
    let factor_build = start.elapsed().as_secs_f64();
    let plan = program.solve(&SolverSettings::for_assets(500), &ClarabelBackend);
    let total = start.elapsed().as_secs_f64();
    let solved = plan.is_ok();

    let start = Instant::now();
    build(&spec(dense), &BuildOptions::new(k)).unwrap();
    let dense_build = start.elapsed().as_secs_f64();

    let small = spec(factor_market::<f64>(100, 10, 9));
    let start = Instant::now();
    let small_ok = build(&small, &BuildOptions::new(k))
        .unwrap()
        .solve(&SolverSettings::default(), &ClarabelBackend)
        .is_ok();
    let small_time = start.elapsed().as_secs_f64();

    let speedup = dense_build / factor_build;
    outcome(
        solved && total <= 30.0 && speedup >= 5.0 && small_ok && small_time <= 2.0,
        format!(
            "n=500 build+solve {total:.2}s (build {factor_build:.2}s, dense build {dense_build:.2}s, {speedup:.1}x); n=100 {small_time:.2}s"
        ),
    )
}

/// Every instance used above, solved once more and checked with `verify`.
fn regression_corpus() -> Vec<(String, Spec)> {
    let mut corpus: Vec<(String, Spec)> = Vec::new();
    for (name, specs) in exact_sweeps() {
        for (i, s) in specs.into_iter().enumerate().step_by(3) {
            corpus.push((format!("{name}#{i}"), s));
        }
    }
    let base = ProblemSpec::reference();
    let mut s = base.clone();
    s.extensions.consumption_floor = Some(Curve::constant(0.05));
    corpus.push(("consumption floor".into(), s));
    let mut s = with_cash(0.5);
    s.extensions.income = Some(IncomeModel::constant(0.2));
    s.extensions.spending_limit = Some(SpendingLimit { eta: 0.8, dividend: vec![0.02, 0.0, 0.0] });
    corpus.push(("spending limit".into(), s));
    let mut s = with_cash(-1.0);
    s.extensions.min_cash = Some(MinCash {
        asset: 2,
        floor: Some(Curve::constant(0.1)),
        consumption_multiple: Some(0.5),
    });
    corpus.push(("min cash".into(), s));
    let mut s = base.clone();
    s.extensions.max_min_consumption = true;
    corpus.push(("max-min consumption".into(), s));
    corpus.push((
        "factor n=100".into(),
        ProblemSpec::new(factor_market(100, 10, 9), UtilityParams::new(-1.0, 1.0), 10.0, 1.0),
    ));
    corpus
}

fn membership_equivalence() -> (usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    let mut skipped = 0;
    let samples = 100_000;
    let violation = |b: ProgramBuilder<f64>, x: &[f64]| {
        let p = b.finish();
        let s = p.slack_at(x);
        p.cones.iter().zip(p.cone_ranges()).map(|(c, r)| cone_violation(c, &s[r])).fold(0.0, f64::max)
    };
    for _ in 0..samples {
        let a: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let mut sigma = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                sigma[(i, j)] = (0..3).map(|k| a[3 * i + k] * a[3 * j + k]).sum::<f64>() + if i == j { 0.01 } else { 0.0 };
            }
        }
        let q = expand_covariance(&Covariance::Dense(sigma)).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w = rng.gen_range(0.01..5.0);
        let s = rng.gen_range(0.0..5.0);
        let value = q.quad(&x) / w;
        if (value - s).abs() <= 1e-9 * (1.0 + s) {
            skipped += 1;
        } else {
            let mut b = ProgramBuilder::new();
            let cols = b.add_vars(5);
            quad_over_lin_cone(&mut b, &q.transpose_rows(), cols.start..cols.start + 3, &AffineExpr::var(3), &AffineExpr::var(4));
            let mut point = x;
            point.extend([w, s]);
            if (violation(b, &point) <= 1e-12) != (value <= s) {
                mismatches += 1;
            }
        }

        let gamma = if rng.gen::<bool>() { rng.gen_range(-3.0..-0.05) } else { rng.gen_range(0.05..0.95) };
        let c: f64 = rng.gen_range(0.01..10.0);
        let tau: f64 = rng.gen_range(-5.0..5.0);
        let target = c.powf(gamma);
        if (tau.abs() - target).abs() <= 1e-9 * (1.0 + target) {
            skipped += 1;
            continue;
        }
        let member = if gamma > 0.0 { tau.abs() <= target } else { tau >= target };
        let mut b = ProgramBuilder::new();
        let cols = b.add_vars(2);
        power_utility_hypograph(&mut b, gamma, AffineExpr::var(cols.start), cols.start + 1);
        if (violation(b, &[c, tau]) <= 1e-12) != member {
            mismatches += 1;
        }
    }
    (samples, mismatches, skipped)
}

fn conic_correctness() -> Outcome {
    let settings = SolverSettings::default();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failed = Vec::new();
    for (name, spec) in regression_corpus() {
        let program = build(&spec, &BuildOptions::new(50)).unwrap();
        let res = conic::solve(&program.program, &settings, &ClarabelBackend).unwrap();
        match verify(&program.program, &res) {
            Some(r) if r.max() > worst.0 => worst = (r.max(), name),
            Some(_) => {}
            None => failed.push(name),
        }
    }
    let (samples, mismatches, skipped) = membership_equivalence();
    outcome(
        failed.is_empty() && worst.0 <= 1e-6 && mismatches == 0,
        format!(
            "worst residual {:.1e} ({}); unsolved {failed:?}; membership {mismatches} mismatches in 2x{samples} samples ({skipped} within 1e-9 of the boundary skipped)",
            worst.0, worst.1
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("policy agreement", policy_agreement),
        ("value agreement", value_agreement),
        ("hjb residual", hjb_residual),
        ("markowitz oracle", markowitz_oracle),
        ("dynamics tightness", dynamics_tightness),
        ("homogeneity", homogeneity),
        ("no-op reductions", no_op_reductions),
        ("mpc optimality", mpc_optimality),
        ("performance", performance),
        ("conic correctness", conic_correctness),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failures += usize::from(!o.pass);
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
