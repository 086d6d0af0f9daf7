use std::path::Path;
use std::time::Instant;

use merton_ce::builder::{build, BuildOptions};
use merton_ce::conic::{self, verify, SolverSettings};
use merton_ce::mpc::{self, mpc_act, MpcConfig, MpcPolicy, PlanGrid};
use merton_ce::problem::{ProblemSpec, Trajectory};
use merton_ce::sim::{self, PlanPolicy, Policy, ReferencePolicy, SimConfig, Simulator, Summary};
use merton_ce::Spec;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{num, Outputs};
use crate::{
    AnalyticArgs, BacktestArgs, CliError, CompareArgs, MpcArgs, PlanArgs, PolicyKind, SimArgs, SimulateArgs, SolverArgs,
    SpecArgs, ValidateArgs,
};

/// Extension names that live on the utility block rather than under `extensions`.
const UTILITY_KEYS: &[&str] = &["rho", "discount"];

/// Reads the spec, applies `--extension` overrides and parses it, without validating.
fn read_spec(args: &SpecArgs) -> Result<Spec, CliError> {
    let path = &args.spec;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    for ext in &args.extensions {
        let (name, body) = ext
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--extension `{ext}` is not NAME=FILE|JSON")))?;
        let name = name.trim().replace('-', "_");
        let body = if Path::new(body).is_file() {
            std::fs::read_to_string(body).map_err(|e| CliError::Io(format!("cannot read {body}: {e}")))?
        } else {
            body.to_string()
        };
        let value: Value =
            serde_json::from_str(&body).map_err(|e| CliError::Invalid(format!("extension `{name}`: {e}")))?;
        let section = if UTILITY_KEYS.contains(&name.as_str()) { "utility" } else { "extensions" };
        let root = doc
            .as_object_mut()
            .ok_or_else(|| CliError::Invalid("spec must be a JSON object".into()))?;
        let block = root.entry(section).or_insert_with(|| json!({}));
        block
            .as_object_mut()
            .ok_or_else(|| CliError::Invalid(format!("`{section}` must be an object")))?
            .insert(name, value);
    }
    serde_json::from_value(doc).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn load_spec(args: &SpecArgs) -> Result<Spec, CliError> {
    let spec = read_spec(args)?;
    let violations = merton_ce::validate(&spec);
    if violations.is_empty() {
        return Ok(spec);
    }
    let list: Vec<String> = violations.iter().map(|v| format!("{:?}: {}", v.code, v.message)).collect();
    Err(CliError::Invalid(format!("invalid spec:\n  {}", list.join("\n  "))))
}

fn settings(a: &SolverArgs) -> SolverSettings<f64> {
    let mut s = SolverSettings::with_tolerance(a.tol);
    s.max_iter = a.max_iter;
    s
}

fn sim_config(a: &SimArgs) -> SimConfig<f64> {
    SimConfig {
        h_sim: a.h_sim,
        scheme: a.scheme,
        antithetic: a.antithetic,
        ruin_utility: None,
    }
}

fn mpc_config(m: &MpcArgs, s: &SolverArgs) -> MpcConfig<f64> {
    MpcConfig {
        replan_interval: m.delta,
        grid: match m.plan_periods {
            Some(k) => PlanGrid::Periods(k),
            None => PlanGrid::Step(m.plan_step),
        },
        warm_start: false,
        settings: settings(s),
        backend: s.backend,
    }
}

/// Converts a library error, dumping the failing program for solver failures.
fn lift(out: &mut Outputs, e: merton_ce::Error) -> CliError {
    if let merton_ce::Error::Solver { program: Some(text), .. } = &e {
        let message = e.to_string();
        let dump = out
            .write("failed_program.txt", text.as_bytes())
            .ok()
            .map(|_| out.path("failed_program.txt").display().to_string());
        return CliError::Solver { message, dump };
    }
    e.into()
}

fn reference(spec: &Spec) -> Result<Option<ReferencePolicy<f64>>, CliError> {
    Ok(ReferencePolicy::for_spec(spec)?)
}

pub fn analytic(a: &AnalyticArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec)?;
    let r = reference(&spec)?.ok_or_else(|| {
        CliError::Invalid("no closed-form solution: only the base problem and the mortality block have one".into())
    })?;
    let mut out = Outputs::create(&a.out.out)?;
    let n = a.samples as usize;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let t = spec.horizon * (i as f64 / (n - 1) as f64);
        rows.push(vec![num(t), num(r.value_coefficient(t)?), num(r.consumption_rate(t)?)]);
    }
    out.write_csv("analytic.csv", &["t".into(), "a_t".into(), "c_over_w".into()], &rows)?;
    let summary = json!({
        "solution": r.kind(),
        "theta_ce": r.theta(),
        "r_ce": r.r_ce(),
        "a0": r.value_coefficient(0.0)?,
        "v0": r.value(0.0, spec.w_init)?,
        "c0_over_w0": r.consumption_rate(0.0)?,
    });
    println!("θ_ce = {:?}\nr_ce = {}\nc0/w0 = {}", r.theta(), r.r_ce(), r.consumption_rate(0.0)?);
    out.write_json("summary.json", &summary)?;
    out.finish("analytic", &a.spec.spec, a, None, Value::Null)
}

#[derive(Serialize)]
struct PlanSummary<'a> {
    objective: f64,
    status: conic::SolveStatus,
    iterations: u32,
    backend: &'a str,
    periods: usize,
    assets: usize,
    variables: usize,
    constraints: usize,
    nonzeros: usize,
    max_slack: f64,
    max_slack_over_w_init: f64,
    residuals: Option<conic::ResidualReport<f64>>,
    c0_over_w0: f64,
    theta0: Vec<f64>,
}

fn trajectory_rows(traj: &Trajectory<f64>) -> (Vec<String>, Vec<Vec<String>>) {
    let n = traj.weights.first().map_or(0, Vec::len);
    let mut header: Vec<String> = ["k", "t", "w", "c"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    header.push("slack".into());
    let k_max = traj.periods();
    let rows = (0..=k_max)
        .map(|k| {
            let mut row = vec![k.to_string(), num(traj.times[k]), num(traj.wealth[k])];
            row.push(traj.consumption.get(k).map_or(String::new(), |&c| num(c)));
            row.extend(traj.weights[k].iter().map(|&x| num(x)));
            row.push(traj.slack.get(k).map_or(String::new(), |&u| num(u)));
            row
        })
        .collect();
    (header, rows)
}

pub fn plan(a: &PlanArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec)?;
    let mut out = Outputs::create(&a.out.out)?;
    let t0 = Instant::now();
    let program = build(&spec, &BuildOptions::new(a.periods as usize)).map_err(|e| lift(&mut out, e))?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let backend = a.solver.backend.backend::<f64>();
    let result = conic::solve(&program.program, &settings(&a.solver), backend.as_ref()).map_err(|e| lift(&mut out, e))?;
    let traj = program.decode(&result).map_err(|e| lift(&mut out, e))?;
    let (header, rows) = trajectory_rows(&traj);
    out.write_csv("trajectory.csv", &header, &rows)?;
    let (c0, theta0) = traj.first_policy();
    let summary = PlanSummary {
        objective: traj.objective,
        status: traj.status,
        iterations: traj.stats.iterations,
        backend: &result.backend,
        periods: traj.periods(),
        assets: spec.num_assets(),
        variables: program.program.num_vars,
        constraints: program.program.num_rows(),
        nonzeros: program.program.nnz(),
        max_slack: traj.max_slack(),
        max_slack_over_w_init: traj.max_slack() / spec.w_init,
        residuals: verify(&program.program, &result),
        c0_over_w0: c0,
        theta0,
    };
    out.write_json("summary.json", &summary)?;
    println!(
        "objective {}  status {:?}  max slack {:e}  build {:.3}s  solve {:.3}s",
        traj.objective, traj.status, summary.max_slack, build_seconds, result.stats.wall_time
    );
    let timing = json!({ "build_seconds": build_seconds, "solve_seconds": result.stats.wall_time });
    out.finish("plan", &a.spec.spec, a, None, timing)
}

fn solve_plan(spec: &Spec, periods: usize, s: &SolverArgs) -> merton_ce::Result<Trajectory<f64>> {
    build(spec, &BuildOptions::new(periods))?.solve(&settings(s), s.backend.backend::<f64>().as_ref())
}

fn run_simulation<P: Policy<f64>>(
    sim: &Simulator<f64>,
    policy: &P,
    a: &SimulateArgs,
    out: &mut Outputs,
) -> Result<Summary<f64>, CliError> {
    let mc = sim.monte_carlo(policy, a.sim.paths as usize, a.sim.seed)?;
    let record = a.record.min(a.sim.paths);
    let paths = (0..record)
        .map(|i| sim.simulate_path(policy, a.sim.seed, i))
        .collect::<merton_ce::Result<Vec<_>>>()?;
    let mut buf = Vec::new();
    sim::write_paths_csv(&mut buf, &paths)?;
    out.write("paths.csv", &buf)?;
    Ok(mc.summary)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec)?;
    let mut out = Outputs::create(&a.out.out)?;
    let sim = Simulator::new(&spec, sim_config(&a.sim))?;
    let reference = reference(&spec)?;
    let summary = match a.policy {
        PolicyKind::Analytic => {
            let r = reference.as_ref().ok_or_else(|| {
                CliError::Invalid("no closed-form policy for this spec; use --policy plan or mpc".into())
            })?;
            run_simulation(&sim, r, a, &mut out)?
        }
        PolicyKind::Plan => {
            let traj = solve_plan(&spec, a.periods as usize, &a.solver).map_err(|e| lift(&mut out, e))?;
            run_simulation(&sim, &PlanPolicy::new(traj), a, &mut out)?
        }
        PolicyKind::Mpc => {
            let policy = MpcPolicy::new(&spec, mpc_config(&a.mpc, &a.solver)).map_err(|e| lift(&mut out, e))?;
            run_simulation(&sim, &policy, a, &mut out)?
        }
    };
    let v0 = match &reference {
        Some(r) => Some(r.value(0.0, spec.w_init)?),
        None => None,
    };
    println!(
        "mean utility {}  std error {}  ruin rate {}",
        summary.mean_utility,
        se(summary.std_error),
        summary.ruin_rate
    );
    out.write_json("summary.json", &json!({ "policy": a.policy, "v0": v0, "monte_carlo": summary }))?;
    out.finish("simulate", &a.spec.spec, a, Some(a.sim.seed), Value::Null)
}

/// Standard error for terminal output; a single path has none.
fn se(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| x.to_string())
}

pub fn backtest(a: &BacktestArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec)?;
    let mut out = Outputs::create(&a.out.out)?;
    let cfg = mpc_config(&a.mpc, &a.solver);
    let b = mpc::backtest(&spec, &cfg, sim_config(&a.sim), a.sim.paths as usize, a.sim.seed)
        .map_err(|e| lift(&mut out, e))?;
    let r = &b.report;
    println!("mpc        mean {}  se {}", r.mpc.summary.mean_utility, se(r.mpc.summary.std_error));
    if let (Some(rf), Some(d)) = (&r.reference, &r.difference) {
        println!("{:<10} mean {}  se {}", rf.policy, rf.summary.mean_utility, se(rf.summary.std_error));
        println!("difference {}  joint se {}  z {}", d.mean, d.joint_se, d.z_joint);
    }
    out.write_json("summary.json", r)?;
    let timing = serde_json::to_value(&b.timing).map_err(|e| CliError::Io(e.to_string()))?;
    out.finish("backtest", &a.spec.spec, a, Some(a.sim.seed), timing)
}

#[derive(Serialize)]
struct CompareRow {
    policy: String,
    c0_over_w0: f64,
    theta0: Vec<f64>,
    monte_carlo: Summary<f64>,
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec)?;
    let mut out = Outputs::create(&a.out.out)?;
    let sim = Simulator::new(&spec, sim_config(&a.sim))?;
    let (n, seed) = (a.sim.paths as usize, a.sim.seed);
    let mut rows = Vec::new();

    let reference = reference(&spec)?;
    if let Some(r) = &reference {
        rows.push(CompareRow {
            policy: r.kind().into(),
            c0_over_w0: r.consumption_rate(0.0)?,
            theta0: r.theta().to_vec(),
            monte_carlo: sim.monte_carlo(r, n, seed)?.summary,
        });
    }
    let traj = solve_plan(&spec, a.periods as usize, &a.solver).map_err(|e| lift(&mut out, e))?;
    let (c0, theta0) = traj.first_policy();
    rows.push(CompareRow {
        policy: "plan".into(),
        c0_over_w0: c0,
        theta0,
        monte_carlo: sim.monte_carlo(&PlanPolicy::new(traj), n, seed)?.summary,
    });
    let cfg = mpc_config(&a.mpc, &a.solver);
    let first = mpc_act(0.0, spec.w_init, &spec, &cfg).map_err(|e| lift(&mut out, e))?;
    let policy = MpcPolicy::new(&spec, cfg).map_err(|e| lift(&mut out, e))?;
    rows.push(CompareRow {
        policy: "mpc".into(),
        c0_over_w0: first.consumption / spec.w_init,
        theta0: first.theta,
        monte_carlo: sim.monte_carlo(&policy, n, seed)?.summary,
    });

    let assets = spec.num_assets();
    let mut header: Vec<String> = vec!["policy".into(), "c0_over_w0".into()];
    header.extend((1..=assets).map(|i| format!("theta_{i}")));
    header.extend(["mean_utility", "std_error", "ruin_rate"].iter().map(|s| s.to_string()));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.policy.clone(), num(r.c0_over_w0)];
            row.extend(r.theta0.iter().map(|&x| num(x)));
            row.push(num(r.monte_carlo.mean_utility));
            row.push(r.monte_carlo.std_error.map_or(String::new(), num));
            row.push(num(r.monte_carlo.ruin_rate));
            row
        })
        .collect();
    for r in &rows {
        println!(
            "{:<10} c0/w0 {:<22} mean utility {:<22} se {}",
            r.policy,
            r.c0_over_w0,
            r.monte_carlo.mean_utility,
            se(r.monte_carlo.std_error)
        );
    }
    out.write_csv("compare.csv", &header, &table)?;
    let gap = reference.as_ref().map(|r| {
        let plan = &rows[1];
        let theta_gap = plan
            .theta0
            .iter()
            .zip(r.theta())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        json!({ "c0_over_w0": (plan.c0_over_w0 - rows[0].c0_over_w0).abs(), "theta0": theta_gap })
    });
    let summary = json!({ "periods": a.periods, "plan_vs_reference_gap": gap, "rows": rows });
    out.write_json("summary.json", &summary)?;
    out.finish("compare", &a.spec.spec, a, Some(seed), Value::Null)
}

pub fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let spec: ProblemSpec<f64> = read_spec(&a.spec)?;
    let violations = merton_ce::validate(&spec);
    println!("{}", serde_json::to_string_pretty(&violations).map_err(|e| CliError::Io(e.to_string()))?);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{} violation(s)", violations.len())))
    }
}
