//! Monte Carlo simulation of the wealth dynamics under an arbitrary policy.
//!
//! Paths are driven by ChaCha8 streams: path `i` of a batch with master seed `m`
//! uses `ChaCha8Rng::seed_from_u64(m)` with stream `i` (stream `i/2` and mirrored
//! draws under antithetic sampling). Normals come from `rand_distr::StandardNormal`.

mod export;
mod policies;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{
    expand_covariance, human_capital, CovFactor, InsuranceModel, MortalityModel, ProblemSpec, UtilityParams,
};
use crate::scalar::{dot, Scalar};

pub use export::{summary_json, write_paths_csv};
pub use policies::{AnalyticPolicy, FnPolicy, MortalityPolicy, PlanPolicy, ReferencePolicy};

pub const DEFAULT_H_SIM: f64 = 1.0 / 250.0;

/// Controls applied over one simulation step. `allocation` holds dollar amounts.
#[derive(Debug, Clone, PartialEq)]
pub struct Action<S: Scalar> {
    pub consumption: S,
    pub allocation: Vec<S>,
    /// Insurance premium rate `l_t` (0 without insurance).
    pub premium: S,
}

impl<S: Scalar> Action<S> {
    /// `c = κw`, `x = θw`.
    pub fn proportional(w: S, consumption_rate: S, theta: &[S]) -> Self {
        let mut a = Self::default();
        a.set_proportional(w, consumption_rate, theta);
        a
    }

    /// Overwrites `self` with `c = κw`, `x = θw`, no premium.
    pub fn set_proportional(&mut self, w: S, consumption_rate: S, theta: &[S]) {
        self.consumption = consumption_rate * w;
        self.allocation.clear();
        self.allocation.extend(theta.iter().map(|&v| v * w));
        self.premium = S::zero();
    }
}

impl<S: Scalar> Default for Action<S> {
    fn default() -> Self {
        Self {
            consumption: S::zero(),
            allocation: Vec::new(),
            premium: S::zero(),
        }
    }
}

/// A feedback policy `(t, w) → (c, θ)`.
///
/// `State` is per-path memory (created fresh for each path), which lets a policy
/// hold decisions between replans without shared mutable state.
pub trait Policy<S: Scalar>: Sync {
    type State: Default + Send;

    /// Writes the control for `(t, w)` into `out`, which is reused across steps.
    fn act(&self, state: &mut Self::State, t: S, w: S, out: &mut Action<S>) -> Result<()>;

    /// True when `c/w` and `θ` do not depend on `w`, which the exact lognormal
    /// step requires.
    fn is_proportional(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    ExactLognormal,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" | "euler-maruyama" => Ok(Self::EulerMaruyama),
            "exact" | "exact-lognormal" => Ok(Self::ExactLognormal),
            _ => Err(Error::Domain(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SimConfig<S: Scalar> {
    pub h_sim: S,
    pub scheme: Scheme,
    /// Pair path `2i+1` with path `2i` using negated normals and `1 − u` for the death draw.
    pub antithetic: bool,
    /// Terminal utility assigned to a ruined path in place of the bequest term.
    /// `None` uses `u(0) = 0` for `γ > 0` and `β·u(w_init/1000)` for `γ < 0`.
    pub ruin_utility: Option<S>,
}

impl<S: Scalar> Default for SimConfig<S> {
    fn default() -> Self {
        Self {
            h_sim: S::lit(DEFAULT_H_SIM),
            scheme: Scheme::EulerMaruyama,
            antithetic: false,
            ruin_utility: None,
        }
    }
}

impl<S: Scalar> SimConfig<S> {
    pub fn with_step(h_sim: S) -> Self {
        Self {
            h_sim,
            ..Self::default()
        }
    }
}

/// One simulated path. Step `k` covers `[times[k], times[k+1]]`; `wealth` has one
/// more entry than the controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SimPath<S: Scalar> {
    pub path_id: u64,
    pub master_seed: u64,
    pub times: Vec<S>,
    pub wealth: Vec<S>,
    pub consumption: Vec<S>,
    pub theta: Vec<Vec<S>>,
    pub premiums: Vec<S>,
    /// Wealth entering the bequest term (including any insurance payout).
    pub bequest_wealth: S,
    pub death_time: Option<S>,
    pub ruined: bool,
    pub utility: S,
}

/// Market, preferences and life events as seen by the simulator, tabulated on
/// the uniform simulation grid `t_k = k T / ceil(T/h_sim)`.
#[derive(Debug, Clone)]
pub struct Simulator<S: Scalar> {
    times: Vec<S>,
    mu: Vec<Vec<S>>,
    /// Per-step covariance scale (empty when constant 1).
    cov_scale: Vec<S>,
    factor: CovFactor<S>,
    income: Vec<S>,
    human_capital: Vec<S>,
    mortality: Option<MortalityModel<S>>,
    insurance: Option<InsuranceModel<S>>,
    utility: UtilityParams<S>,
    w_init: S,
    config: SimConfig<S>,
}

impl<S: Scalar> Simulator<S> {
    pub fn new(spec: &ProblemSpec<S>, config: SimConfig<S>) -> Result<Self> {
        if !(config.h_sim > S::zero()) {
            return Err(Error::Domain(format!("h_sim must be positive, got {}", config.h_sim)));
        }
        let horizon = spec.horizon;
        let steps = ((horizon / config.h_sim).to_f64() - 1e-9).ceil().max(1.0) as usize;
        let h = horizon / S::lit(steps as f64);
        let times: Vec<S> = (0..=steps).map(|k| S::lit(k as f64) * h).collect();
        let ext = &spec.extensions;
        let (mu, cov_scale) = match &ext.time_varying {
            Some(tv) => (
                times[..steps].iter().map(|&t| tv.mu_at(t)).collect(),
                times[..steps].iter().map(|&t| tv.cov_scale_at(t)).collect(),
            ),
            None => (vec![spec.market.mu.clone()], Vec::new()),
        };
        let (income, human_capital) = match &ext.income {
            Some(y) => {
                let rf = spec
                    .market
                    .risk_free_rate()
                    .ok_or_else(|| Error::Domain("income requires a risk-free asset".into()))?;
                (times[..steps].iter().map(|&t| y.at(t)).collect(), human_capital(y, rf, &times, 4))
            }
            None => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            times,
            mu,
            cov_scale,
            factor: expand_covariance(&spec.market.cov)?,
            income,
            human_capital,
            mortality: ext.mortality.clone(),
            insurance: ext.insurance.clone().filter(|i| !i.is_disabled()),
            utility: spec.utility.clone(),
            w_init: spec.w_init,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig<S> {
        &self.config
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    fn ruin_terminal(&self) -> S {
        if let Some(u) = self.config.ruin_utility {
            return u;
        }
        let e = self.utility.utility_exponent();
        if e > S::zero() {
            S::zero()
        } else {
            self.utility.beta * crate::problem::crra(self.w_init / S::lit(1000.0), e)
        }
    }

    /// Simulates path `path_id` of the batch seeded by `master_seed`.
    pub fn simulate_path<P: Policy<S>>(&self, policy: &P, master_seed: u64, path_id: u64) -> Result<SimPath<S>> {
        Ok(self.run(policy, master_seed, path_id, true)?.0)
    }

    fn run<P: Policy<S>>(
        &self,
        policy: &P,
        master_seed: u64,
        path_id: u64,
        record: bool,
    ) -> Result<(SimPath<S>, P::State)> {
        let exact = self.config.scheme == Scheme::ExactLognormal;
        if exact && (!policy.is_proportional() || !self.income.is_empty()) {
            return Err(Error::Domain(
                "the exact lognormal step needs a proportional policy and no income".into(),
            ));
        }
        let (stream, sign) = if self.config.antithetic {
            (path_id / 2, if path_id % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (path_id, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        // Drawn unconditionally so every policy sees the same normals.
        let u: f64 = rng.gen();
        let u = if sign < 0.0 { 1.0 - u } else { u };
        let death = self.mortality.as_ref().and_then(|m| sample_death_from(m, S::lit(u)));

        let mut state = P::State::default();
        let mut a = Action::default();
        let mut scratch = Vec::new();
        let mut path = SimPath {
            path_id,
            master_seed,
            times: Vec::new(),
            wealth: Vec::new(),
            consumption: Vec::new(),
            theta: Vec::new(),
            premiums: Vec::new(),
            bequest_wealth: S::zero(),
            death_time: death,
            ruined: false,
            utility: S::zero(),
        };
        let e = self.utility.utility_exponent();
        let mut w = self.w_init;
        let mut consumption_utility = S::zero();
        let steps = self.steps();
        if record {
            path.times.push(self.times[0]);
            path.wealth.push(w);
        }
        for k in 0..steps {
            let t = self.times[k];
            let mut dt = self.times[k + 1] - t;
            let dies_here = death.is_some_and(|td| td < self.times[k + 1]);
            if let Some(td) = death.filter(|_| dies_here) {
                dt = td - t;
            }
            let z = S::lit(sign * rng.sample::<f64, _>(StandardNormal));
            policy.act(&mut state, t, w, &mut a)?;
            consumption_utility = consumption_utility + consumption_term(&self.utility, e, t, dt, a.consumption);
            let mu = &self.mu[if self.mu.len() == 1 { 0 } else { k }];
            let scale = self.cov_scale.get(k).copied().unwrap_or(S::one());
            let var = scale * self.factor.quad_with(&a.allocation, &mut scratch);
            let y = self.income.get(k).copied().unwrap_or(S::zero());
            if exact && a.premium != S::zero() {
                return Err(Error::Domain("the exact lognormal step does not support insurance premiums".into()));
            }
            let w_next = if exact {
                let drift = dot(mu, &a.allocation) / w - a.consumption / w - var / (S::lit(2.0) * w * w);
                w * (drift * dt + (var * dt).sqrt() / w * z).exp()
            } else {
                w + (dot(mu, &a.allocation) - a.consumption + y - a.premium) * dt + (var * dt).sqrt() * z
            };
            if record {
                path.times.push(t + dt);
                path.wealth.push(w_next);
                path.consumption.push(a.consumption);
                path.theta.push(a.allocation.iter().map(|&x| x / w).collect());
                path.premiums.push(a.premium);
            }
            w = w_next;
            let floor = -self.human_capital.get(k + 1).copied().unwrap_or(S::zero());
            if !(w > floor) {
                path.ruined = true;
                path.bequest_wealth = w;
                path.utility = consumption_utility + self.ruin_terminal();
                return Ok((path, state));
            }
            if dies_here {
                let lambda = self.insurance.as_ref().map_or(S::zero(), |i| i.payout_ratio.at(t));
                path.bequest_wealth = w + lambda * a.premium;
                path.utility = consumption_utility + bequest_term(&self.utility, e, path.bequest_wealth);
                return Ok((path, state));
            }
        }
        path.death_time = None;
        path.bequest_wealth = w;
        path.utility = consumption_utility + bequest_term(&self.utility, e, w);
        Ok((path, state))
    }

    /// Simulates `n` paths in parallel; per-path results are reduced in path
    /// order, so the output does not depend on thread scheduling.
    pub fn monte_carlo<P: Policy<S>>(&self, policy: &P, n: usize, master_seed: u64) -> Result<MonteCarlo<S>> {
        Ok(self.monte_carlo_with_states(policy, n, master_seed)?.0)
    }

    /// [`Simulator::monte_carlo`] that also returns each path's final policy state.
    pub fn monte_carlo_with_states<P: Policy<S>>(
        &self,
        policy: &P,
        n: usize,
        master_seed: u64,
    ) -> Result<(MonteCarlo<S>, Vec<P::State>)> {
        if n == 0 {
            return Err(Error::Domain("number of paths must be positive".into()));
        }
        if self.config.antithetic && n % 2 == 1 {
            return Err(Error::Domain("antithetic sampling needs an even number of paths".into()));
        }
        let runs: Vec<(PathOutcome<S>, P::State)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                self.run(policy, master_seed, i, false).map(|(p, state)| {
                    let outcome = PathOutcome {
                        utility: p.utility,
                        ruined: p.ruined,
                        died: p.death_time.is_some(),
                        terminal_wealth: p.bequest_wealth,
                    };
                    (outcome, state)
                })
            })
            .collect::<Result<_>>()?;
        let (outcomes, states) = runs.into_iter().unzip();
        Ok((MonteCarlo::new(outcomes, master_seed, self.config.antithetic), states))
    }
}

/// Index of the period of `starts` containing `t`, treating knots within
/// `1e-9` (relative to `t`) as reached, so `60 × 0.01` falls in the period
/// starting at `12 × 0.05`.
pub fn period_index<S: Scalar>(starts: &[S], t: S) -> usize {
    let eps = S::lit(1e-9) * t.abs().max(S::one());
    starts.partition_point(|&x| x <= t + eps).saturating_sub(1).min(starts.len() - 1)
}

/// `α_t (dt) u(c)`: the left-endpoint quadrature shared with the planner.
fn consumption_term<S: Scalar>(u: &UtilityParams<S>, e: S, t: S, dt: S, c: S) -> S {
    u.discount_at(t) * dt * crate::problem::crra(c, e)
}

fn bequest_term<S: Scalar>(u: &UtilityParams<S>, e: S, w: S) -> S {
    u.beta * crate::problem::crra(w, e)
}

/// Realized utility of a recorded path: left Riemann sum of discounted
/// consumption utility up to the end of the path plus the bequest term.
pub fn realized_utility<S: Scalar>(path: &SimPath<S>, utility: &UtilityParams<S>) -> S {
    let e = utility.utility_exponent();
    let mut total = S::zero();
    for (k, &c) in path.consumption.iter().enumerate() {
        total = total + consumption_term(utility, e, path.times[k], path.times[k + 1] - path.times[k], c);
    }
    if path.ruined {
        return total;
    }
    total + bequest_term(utility, e, path.bequest_wealth)
}

/// Death time from a uniform draw `u ∈ (0, 1]`: the first `t` with `s_t = u`
/// (linear interpolation of the survival curve), or `None` (alive at `T`) when
/// `u ≤ s_T`.
pub fn sample_death_from<S: Scalar>(mortality: &MortalityModel<S>, u: S) -> Option<S> {
    let (ts, s) = (&mortality.times, &mortality.survival);
    if u <= mortality.terminal_survival() {
        return None;
    }
    for i in 0..ts.len().saturating_sub(1) {
        if s[i + 1] < u {
            let drop = s[i] - s[i + 1];
            if drop <= S::zero() {
                return Some(ts[i + 1]);
            }
            let f = ((s[i] - u) / drop).max(S::zero());
            return Some(ts[i] + f * (ts[i + 1] - ts[i]));
        }
    }
    None
}

/// One death-time draw from a ChaCha8 stream seeded by `seed`.
pub fn sample_death<S: Scalar>(mortality: &MortalityModel<S>, seed: u64) -> Option<S> {
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
    sample_death_from(mortality, S::lit(1.0 - u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PathOutcome<S: Scalar> {
    pub utility: S,
    pub ruined: bool,
    pub died: bool,
    pub terminal_wealth: S,
}

/// Per-path outcomes of a batch and their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MonteCarlo<S: Scalar> {
    pub summary: Summary<S>,
    pub outcomes: Vec<PathOutcome<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Summary<S: Scalar> {
    pub paths: usize,
    pub master_seed: u64,
    pub antithetic: bool,
    pub mean_utility: S,
    /// Absent for a single path. Under antithetic sampling it is computed from pair means.
    pub std_error: Option<S>,
    pub ruined: usize,
    pub ruin_rate: S,
    pub deaths: usize,
    pub mean_terminal_wealth: S,
}

impl<S: Scalar> MonteCarlo<S> {
    fn new(outcomes: Vec<PathOutcome<S>>, master_seed: u64, antithetic: bool) -> Self {
        let n = outcomes.len();
        let utilities: Vec<S> = outcomes.iter().map(|o| o.utility).collect();
        let (mean_utility, std_error) = if antithetic {
            let pairs: Vec<S> = utilities.chunks(2).map(|p| (p[0] + p[1]) / S::lit(2.0)).collect();
            mean_and_se(&pairs)
        } else {
            mean_and_se(&utilities)
        };
        let ruined = outcomes.iter().filter(|o| o.ruined).count();
        let nf = S::lit(n as f64);
        let summary = Summary {
            paths: n,
            master_seed,
            antithetic,
            mean_utility,
            std_error,
            ruined,
            ruin_rate: S::lit(ruined as f64) / nf,
            deaths: outcomes.iter().filter(|o| o.died).count(),
            mean_terminal_wealth: outcomes.iter().fold(S::zero(), |a, o| a + o.terminal_wealth) / nf,
        };
        Self { summary, outcomes }
    }
}

/// Sample mean and standard error of the mean (`None` for fewer than two samples).
pub fn mean_and_se<S: Scalar>(x: &[S]) -> (S, Option<S>) {
    let n = S::lit(x.len() as f64);
    let mean = x.iter().fold(S::zero(), |a, &v| a + v) / n;
    if x.len() < 2 {
        return (mean, None);
    }
    let ss = x.iter().fold(S::zero(), |a, &v| a + (v - mean) * (v - mean));
    (mean, Some((ss / (n - S::one()) / n).sqrt()))
}

/// Builds a simulator for `spec` and runs one path.
pub fn simulate_path<S: Scalar, P: Policy<S>>(
    policy: &P,
    spec: &ProblemSpec<S>,
    config: SimConfig<S>,
    master_seed: u64,
    path_id: u64,
) -> Result<SimPath<S>> {
    Simulator::new(spec, config)?.simulate_path(policy, master_seed, path_id)
}

/// Builds a simulator for `spec` and runs `n` paths.
pub fn monte_carlo<S: Scalar, P: Policy<S>>(
    policy: &P,
    spec: &ProblemSpec<S>,
    n: usize,
    config: SimConfig<S>,
    master_seed: u64,
) -> Result<MonteCarlo<S>> {
    Simulator::new(spec, config)?.monte_carlo(policy, n, master_seed)
}
