//! Shrinking-horizon model predictive control: replan the certainty-equivalent
//! problem on `[t, T]` from current wealth and apply the first control.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{build, BuildOptions};
use crate::conic::{BackendKind, SolverSettings};
use crate::error::{Error, Result};
use crate::problem::{human_capital, Curve, ProblemSpec, Trajectory};
use crate::scalar::{dot, Scalar};
use crate::sim::{mean_and_se, Action, Policy, ReferencePolicy, SimConfig, Simulator, Summary};

/// Plans shorter than this (years) are not solved; the last decision is held.
pub const MIN_PLAN_HORIZON: f64 = 1e-6;

/// How many periods each replanned program gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "kebab-case")]
pub enum PlanGrid<S: Scalar> {
    /// Period length `h`; the plan on `[t, T]` has `max(1, ⌈(T−t)/h⌉)` periods.
    Step(S),
    /// Fixed number of periods regardless of the remaining horizon.
    Periods(usize),
}

impl<S: Scalar> PlanGrid<S> {
    pub fn periods(&self, remaining: S) -> usize {
        match *self {
            PlanGrid::Step(h) => ((remaining / h).to_f64() - 1e-9).ceil().max(1.0) as usize,
            PlanGrid::Periods(k) => k.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MpcConfig<S: Scalar> {
    /// Replan interval Δ in years.
    pub replan_interval: S,
    pub grid: PlanGrid<S>,
    /// Accepted for interface completeness; neither backend supports warm starts,
    /// so it has no effect.
    pub warm_start: bool,
    pub settings: SolverSettings<S>,
    pub backend: BackendKind,
}

impl<S: Scalar> Default for MpcConfig<S> {
    fn default() -> Self {
        Self {
            replan_interval: S::lit(0.25),
            grid: PlanGrid::Step(S::lit(0.05)),
            warm_start: false,
            settings: SolverSettings::default(),
            backend: BackendKind::Clarabel,
        }
    }
}

impl<S: Scalar> MpcConfig<S> {
    pub fn check(&self, horizon: S) -> Result<()> {
        if !(self.replan_interval > S::zero() && self.replan_interval <= horizon) {
            return Err(Error::Domain(format!(
                "replan interval {} must lie in (0, T = {horizon}]",
                self.replan_interval
            )));
        }
        match self.grid {
            PlanGrid::Step(h) if !(h > S::zero()) => Err(Error::Domain(format!("plan step {h} must be positive"))),
            PlanGrid::Periods(0) => Err(Error::Domain("plans need at least one period".into())),
            _ => Ok(()),
        }
    }
}

/// First control of a freshly solved plan, with the plan itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcDecision<S: Scalar> {
    pub consumption: S,
    pub theta: Vec<S>,
    /// Dollar holdings `x_0`.
    pub allocation: Vec<S>,
    pub premium: S,
    pub plan: Trajectory<S>,
    /// Build plus solve wall time in seconds.
    pub elapsed: f64,
}

/// Solves the plan on `[t, T]` starting from wealth `w` and returns its first control.
pub fn mpc_act<S: Scalar>(t: S, w: S, spec: &ProblemSpec<S>, config: &MpcConfig<S>) -> Result<MpcDecision<S>> {
    if !(t >= S::zero() && t < spec.horizon) {
        return Err(Error::Domain(format!("decision time {t} outside [0, {})", spec.horizon)));
    }
    if spec.extensions.income.is_none() && !(w > S::zero()) {
        return Err(Error::Domain(format!("wealth must be positive, got {w}")));
    }
    let start = Instant::now();
    let k = config.grid.periods(spec.horizon - t);
    let local = spec.clone().with_w_init(w);
    let program = build(&local, &BuildOptions::new(k).starting_at(t))?;
    let plan = program.solve(&config.settings, config.backend.backend::<S>().as_ref())?;
    Ok(MpcDecision {
        consumption: plan.consumption[0],
        theta: plan.weights[0].clone(),
        allocation: plan.allocations[0].clone(),
        premium: plan.premiums.as_ref().map_or(S::zero(), |l| l[0]),
        elapsed: start.elapsed().as_secs_f64(),
        plan,
    })
}

/// Schedule of the last plan as fractions of total wealth `W_k = w_k + v_k`.
#[derive(Debug, Clone, PartialEq)]
struct Held<S: Scalar> {
    times: Vec<S>,
    consumption: Vec<S>,
    allocation: Vec<Vec<S>>,
    premium: Vec<S>,
}

impl<S: Scalar> Held<S> {
    fn period(&self, t: S) -> usize {
        crate::sim::period_index(&self.times, t)
    }
}

#[derive(Debug, Default)]
pub struct MpcState<S: Scalar> {
    held: Option<Held<S>>,
    next_replan: usize,
    /// Wall times (seconds) of the solves this path triggered.
    pub solve_times: Vec<f64>,
    /// Replans whose program had no solution; the previous plan was kept.
    pub failed_replans: usize,
}

/// MPC as a simulation policy.
///
/// Replans happen at the first simulation step on or after each `jΔ`. In
/// between, the last plan's period ratios of consumption, holdings and premium
/// to total wealth `w + v_t` (`v` is human capital, zero without income) are
/// applied to current wealth, with any residual placed in the risk-free asset
/// under income, and consumption is clipped to the instantaneous floor and
/// spending limit.
///
/// Wealth-homogeneous specs solve each replan time once, at construction, and
/// scale the result; otherwise every path solves its own plans.
pub struct MpcPolicy<S: Scalar> {
    spec: ProblemSpec<S>,
    config: MpcConfig<S>,
    table: Option<Vec<Held<S>>>,
    table_solve_times: Vec<f64>,
    human_capital: Option<Curve<S>>,
    risk_free: Option<usize>,
}

impl<S: Scalar> MpcPolicy<S> {
    pub fn new(spec: &ProblemSpec<S>, config: MpcConfig<S>) -> Result<Self> {
        config.check(spec.horizon)?;
        let (human_capital, risk_free) = match &spec.extensions.income {
            Some(y) => {
                let rf = spec.market.risk_free_index.ok_or_else(|| Error::Domain("income requires a risk-free asset".into()))?;
                let r = spec.market.mu[rf];
                let grid: Vec<S> = (0..=2000).map(|i| spec.horizon * S::lit(i as f64 / 2000.0)).collect();
                let v = human_capital(y, r, &grid, 4);
                (Some(Curve::new(grid, v)), Some(rf))
            }
            None => (None, None),
        };
        let mut policy = Self {
            spec: spec.clone(),
            config,
            table: None,
            table_solve_times: Vec::new(),
            human_capital,
            risk_free,
        };
        if spec.extensions.is_wealth_homogeneous() {
            let w = spec.w_init;
            let decisions: Vec<MpcDecision<S>> = policy
                .replan_times()
                .into_par_iter()
                .map(|t| mpc_act(t, w, &policy.spec, &policy.config))
                .collect::<Result<_>>()?;
            policy.table_solve_times = decisions.iter().map(|d| d.elapsed).collect();
            policy.table = Some(decisions.iter().map(|d| policy.held_from(&d.plan)).collect());
        }
        Ok(policy)
    }

    /// Replan times `jΔ < T − MIN_PLAN_HORIZON`.
    pub fn replan_times(&self) -> Vec<S> {
        let cutoff = self.spec.horizon - S::lit(MIN_PLAN_HORIZON);
        (0..)
            .map(|j| S::lit(j as f64) * self.config.replan_interval)
            .take_while(|&t| t < cutoff)
            .collect()
    }

    pub fn is_tabulated(&self) -> bool {
        self.table.is_some()
    }

    /// Solve times of the precomputed table (empty when not tabulated).
    pub fn table_solve_times(&self) -> &[f64] {
        &self.table_solve_times
    }

    fn human_capital_at(&self, t: S) -> S {
        self.human_capital.as_ref().map_or(S::zero(), |v| v.at(t))
    }

    fn held_from(&self, plan: &Trajectory<S>) -> Held<S> {
        let k_max = plan.periods();
        let total: Vec<S> = (0..k_max).map(|k| plan.wealth[k] + self.human_capital_at(plan.times[k])).collect();
        Held {
            times: plan.times[..k_max].to_vec(),
            consumption: (0..k_max).map(|k| plan.consumption[k] / total[k]).collect(),
            allocation: (0..k_max)
                .map(|k| plan.allocations[k].iter().map(|&x| x / total[k]).collect())
                .collect(),
            premium: (0..k_max)
                .map(|k| plan.premiums.as_ref().map_or(S::zero(), |l| l[k] / total[k]))
                .collect(),
        }
    }

    fn apply(&self, held: &Held<S>, t: S, w: S, out: &mut Action<S>) {
        let k = held.period(t);
        let total = w + self.human_capital_at(t);
        out.allocation.clear();
        out.allocation.extend(held.allocation[k].iter().map(|&x| x * total));
        if let Some(rf) = self.risk_free.filter(|_| self.human_capital.is_some()) {
            let risky = out
                .allocation
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != rf)
                .fold(S::zero(), |a, (_, &x)| a + x);
            out.allocation[rf] = w - risky;
        }
        out.premium = held.premium[k] * total;
        let ext = &self.spec.extensions;
        let mut c = held.consumption[k] * total;
        if let Some(f) = &ext.consumption_floor {
            c = c.max(f.at(t));
        }
        if let Some(lim) = &ext.spending_limit {
            let y = ext.income.as_ref().map_or(S::zero(), |y| y.at(t));
            let div = if lim.dividend.is_empty() { S::zero() } else { dot(&lim.dividend, &out.allocation) };
            c = c.min(lim.eta * y + div);
        }
        out.consumption = c.max(S::zero());
    }
}

impl<S: Scalar> Policy<S> for MpcPolicy<S> {
    type State = MpcState<S>;

    fn act(&self, state: &mut MpcState<S>, t: S, w: S, out: &mut Action<S>) -> Result<()> {
        let j = ((t / self.config.replan_interval).to_f64() + 1e-9).floor() as usize;
        let due = state.held.is_none() || j >= state.next_replan;
        let plannable = self.spec.horizon - t > S::lit(MIN_PLAN_HORIZON);
        if due && plannable {
            let held = match &self.table {
                Some(table) => table[j.min(table.len() - 1)].clone(),
                None => match (mpc_act(t, w, &self.spec, &self.config), state.held.take()) {
                    (Ok(d), _) => {
                        state.solve_times.push(d.elapsed);
                        self.held_from(&d.plan)
                    }
                    (Err(Error::Solver { .. }), Some(prev)) => {
                        state.failed_replans += 1;
                        prev
                    }
                    (Err(e), _) => return Err(e),
                },
            };
            state.held = Some(held);
            state.next_replan = j + 1;
        }
        let held = state
            .held
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("no plan available at t = {t}")))?;
        self.apply(held, t, w, out);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PolicyReport<S: Scalar> {
    pub policy: String,
    #[serde(flatten)]
    pub summary: Summary<S>,
    /// `(ρU/a₀)^{1/ρ}`: the initial wealth whose optimal value equals the mean utility.
    pub ce_wealth: Option<S>,
    /// `ce_wealth / w_init`.
    pub ce_wealth_ratio: Option<S>,
}

/// Mean utility difference (MPC minus reference) on common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Difference<S: Scalar> {
    pub mean: S,
    /// `√(SE₁² + SE₂²)`, ignoring the positive correlation of common draws.
    pub joint_se: S,
    /// Standard error of the per-path differences.
    pub paired_se: S,
    pub z_joint: S,
}

/// Deterministic part of a backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BacktestReport<S: Scalar> {
    pub paths: usize,
    pub seed: u64,
    pub h_sim: S,
    pub mpc_config: MpcConfig<S>,
    /// Where `a₀` for the CE wealth comes from: `analytic`, `mortality` or `plan`.
    pub normalizer: String,
    pub a0: S,
    pub mpc: PolicyReport<S>,
    /// Replans without a solution, summed over paths (the previous plan was kept).
    pub failed_replans: usize,
    pub reference: Option<PolicyReport<S>>,
    pub difference: Option<Difference<S>>,
}

/// Solve-time percentiles in seconds; varies between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub solves: usize,
    pub tabulated: bool,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub total: f64,
}

impl TimingReport {
    pub fn from_samples(mut t: Vec<f64>, tabulated: bool) -> Self {
        t.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            if t.is_empty() {
                0.0
            } else {
                t[((p * (t.len() - 1) as f64).round() as usize).min(t.len() - 1)]
            }
        };
        Self {
            solves: t.len(),
            tabulated,
            p50: pct(0.5),
            p90: pct(0.9),
            p99: pct(0.99),
            max: t.last().copied().unwrap_or(0.0),
            total: t.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtest<S: Scalar> {
    pub report: BacktestReport<S>,
    pub timing: TimingReport,
}

/// Runs the MPC policy and, when one exists, the known optimal policy on the
/// same random numbers.
pub fn backtest<S: Scalar>(
    spec: &ProblemSpec<S>,
    config: &MpcConfig<S>,
    sim: SimConfig<S>,
    paths: usize,
    seed: u64,
) -> Result<Backtest<S>> {
    if paths == 0 {
        return Err(Error::Domain("number of paths must be positive".into()));
    }
    let simulator = Simulator::new(spec, sim.clone())?;
    let mpc = MpcPolicy::new(spec, config.clone())?;
    let (mpc_run, states) = simulator.monte_carlo_with_states(&mpc, paths, seed)?;
    let reference = ReferencePolicy::for_spec(spec)?;
    let e = spec.utility.utility_exponent();
    let (normalizer, a0) = match &reference {
        Some(r) => (r.kind(), r.value_coefficient(S::zero())?),
        None => {
            let d = mpc_act(S::zero(), spec.w_init, spec, config)?;
            ("plan", e * d.plan.objective / spec.w_init.powf(e))
        }
    };
    let ce = |u: S| {
        let v = (e * u / a0).powf(S::one() / e);
        v.is_finite().then_some(v)
    };
    let report_of = |name: &str, s: Summary<S>| PolicyReport {
        policy: name.to_string(),
        ce_wealth: ce(s.mean_utility),
        ce_wealth_ratio: ce(s.mean_utility).map(|v| v / spec.w_init),
        summary: s,
    };
    let (reference_report, difference) = match &reference {
        Some(r) => {
            let ref_run = simulator.monte_carlo(r, paths, seed)?;
            let diffs: Vec<S> = mpc_run
                .outcomes
                .iter()
                .zip(&ref_run.outcomes)
                .map(|(a, b)| a.utility - b.utility)
                .collect();
            let (mean, paired) = mean_and_se(&diffs);
            let joint = match (mpc_run.summary.std_error, ref_run.summary.std_error) {
                (Some(a), Some(b)) => (a * a + b * b).sqrt(),
                _ => S::nan(),
            };
            let diff = Difference {
                mean,
                joint_se: joint,
                paired_se: paired.unwrap_or(S::nan()),
                z_joint: mean / joint,
            };
            (Some(report_of(normalizer, ref_run.summary)), Some(diff))
        }
        None => (None, None),
    };
    let mut times: Vec<f64> = mpc.table_solve_times().to_vec();
    times.extend(states.iter().flat_map(|s| s.solve_times.iter().copied()));
    Ok(Backtest {
        report: BacktestReport {
            paths,
            seed,
            h_sim: sim.h_sim,
            mpc_config: config.clone(),
            normalizer: normalizer.to_string(),
            a0,
            mpc: report_of("mpc", mpc_run.summary),
            failed_replans: states.iter().map(|s| s.failed_replans).sum(),
            reference: reference_report,
            difference,
        },
        timing: TimingReport::from_samples(times, mpc.is_tabulated()),
    })
}
