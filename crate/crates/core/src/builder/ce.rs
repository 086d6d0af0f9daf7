//! Discretized certainty-equivalent program: forward-Euler wealth dynamics on
//! `t_k = t₀ + h k`, dollar allocations `x_k`, consumption rates `c_k`, and
//! utility terms as power-cone hypographs.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::cones::{perspective_of_theta, power_utility_hypograph, quad_over_lin_cone, FactorRows};
use crate::conic::{self, AffineExpr, ConicBackend, ConicProgram, ProgramBuilder, SolveResult, SolveStats, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::problem::{
    expand_covariance, human_capital, ConstraintSet, CovFactor, Curve, Extensions, IncomeModel, InsuranceModel,
    MinCash, MortalityModel, ProblemSpec, SpendingLimit, Trajectory,
};
use crate::scalar::{dot, Scalar};

/// Relative floor used for the strict wealth positivity `w_k > 0`.
pub const WEALTH_FLOOR: f64 = 1e-9;

/// How the wealth dynamics rows are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlackMode {
    /// `w_{k+1} ≤ w_k + h(…)`
    #[default]
    Inequality,
    /// `w_{k+1} = w_k + h(…) − u_k`, `u_k ≥ 0` as an explicit variable.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BuildOptions<S: Scalar> {
    /// Number of periods `K ≥ 1`.
    pub periods: usize,
    pub slack_mode: SlackMode,
    /// Plan start time `t₀`; the plan covers `[t₀, T]` with `h = (T − t₀)/K`.
    pub start: S,
}

impl<S: Scalar> BuildOptions<S> {
    pub fn new(periods: usize) -> Self {
        Self {
            periods,
            slack_mode: SlackMode::Inequality,
            start: S::zero(),
        }
    }

    #[must_use]
    pub fn with_slack_mode(mut self, mode: SlackMode) -> Self {
        self.slack_mode = mode;
        self
    }

    #[must_use]
    pub fn starting_at(mut self, t: S) -> Self {
        self.start = t;
        self
    }
}

/// Column map of the program variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub num_assets: usize,
    pub periods: usize,
    /// `w_k`, `k = 0..=K`
    pub wealth: Range<usize>,
    /// `x_k`, `k = 0..=K`, period-major
    pub allocations: Range<usize>,
    /// `c_k`, `k < K`
    pub consumption: Range<usize>,
    /// Risk epigraph `s_k ≥ x_kᵀΣx_k / w_k`, `k < K`
    pub risk: Range<usize>,
    /// Consumption utility hypographs, `k < K` (absent for zero weight or max-min)
    pub consumption_utility: Vec<Option<usize>>,
    /// Wealth (bequest) utility hypographs, `k = 0..=K`
    pub wealth_utility: Vec<Option<usize>>,
    /// Insurance premium rates `l_k`, `k < K`
    pub premiums: Option<Range<usize>>,
    /// Explicit dynamics slack `u_k`, `k < K`
    pub slack: Option<Range<usize>>,
    /// Max-min consumption level `m` and its hypograph
    pub min_consumption: Option<(usize, usize)>,
    pub num_vars: usize,
}

impl VariableLayout {
    pub fn w(&self, k: usize) -> usize {
        self.wealth.start + k
    }

    pub fn x(&self, k: usize) -> Range<usize> {
        let s = self.allocations.start + k * self.num_assets;
        s..s + self.num_assets
    }

    pub fn c(&self, k: usize) -> usize {
        self.consumption.start + k
    }

    pub fn s(&self, k: usize) -> usize {
        self.risk.start + k
    }

    pub fn l(&self, k: usize) -> Option<usize> {
        self.premiums.as_ref().filter(|_| k < self.periods).map(|r| r.start + k)
    }

    /// Every column claimed by the layout, in no particular order.
    pub fn columns(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .wealth
            .clone()
            .chain(self.allocations.clone())
            .chain(self.consumption.clone())
            .chain(self.risk.clone())
            .collect();
        v.extend(self.consumption_utility.iter().flatten());
        v.extend(self.wealth_utility.iter().flatten());
        v.extend(self.premiums.clone().into_iter().flatten());
        v.extend(self.slack.clone().into_iter().flatten());
        if let Some((m, t)) = self.min_consumption {
            v.extend([m, t]);
        }
        v
    }
}

/// Inexact blocks (utility modifications and limits).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InexactBlocks<S: Scalar> {
    pub consumption_floor: Option<Curve<S>>,
    pub spending_limit: Option<SpendingLimit<S>>,
    pub min_cash: Option<MinCash<S>>,
    pub max_min_consumption: bool,
}

impl<S: Scalar> InexactBlocks<S> {
    pub fn from_extensions(e: &Extensions<S>) -> Self {
        Self {
            consumption_floor: e.consumption_floor.clone(),
            spending_limit: e.spending_limit.clone(),
            min_cash: e.min_cash.clone(),
            max_min_consumption: e.max_min_consumption,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Insurance<S: Scalar> {
    lambda: Vec<S>,
    min: Option<S>,
    max: Option<S>,
}

#[derive(Debug, Clone, PartialEq)]
struct Income<S: Scalar> {
    /// `y_k`, `k < K`
    rate: Vec<S>,
    /// `v_k`, `k = 0..=K`
    human_capital: Vec<S>,
}

/// Per-period problem data, modified by the `apply_*` operations and compiled by [`CeBuilder::build`].
#[derive(Debug, Clone)]
pub struct CeBuilder<S: Scalar> {
    n: usize,
    periods: usize,
    h: S,
    start: S,
    horizon: S,
    /// Money unit of the program: every dollar amount is divided by `w_init`
    /// (by 1 when `w_init ≤ 0`, which income allows), so usually `w_0 = 1`.
    scale: S,
    w0: S,
    slack_mode: SlackMode,
    /// Risk exponent in the dynamics.
    gamma: S,
    /// Utility exponent.
    rho: S,
    beta: S,
    mu: Vec<Vec<S>>,
    factors: Vec<(CovFactor<S>, FactorRows<S>)>,
    factor_of: Vec<usize>,
    thetas: Vec<ConstraintSet<S>>,
    theta_of: Vec<usize>,
    /// Weight of `c_k^ρ/ρ`, `k < K`.
    consumption_weight: Vec<S>,
    /// Weight of `w_k^ρ/ρ` (or `(w_k + λ_k l_k)^ρ/ρ`), `k = 0..=K`.
    wealth_weight: Vec<S>,
    insurance: Option<Insurance<S>>,
    income: Option<Income<S>>,
    consumption_floor: Option<Vec<S>>,
    spending_limit: Option<(S, Vec<S>)>,
    min_cash: Option<(usize, Option<Vec<S>>, Option<S>)>,
    max_min: bool,
    mortality_applied: bool,
}

impl<S: Scalar> CeBuilder<S> {
    /// Base problem data from `spec`, ignoring its extension blocks.
    pub fn base(spec: &ProblemSpec<S>, options: &BuildOptions<S>) -> Result<Self> {
        let k = options.periods;
        if k == 0 {
            return Err(Error::Domain("number of periods must be at least 1".into()));
        }
        if !(options.start < spec.horizon) || options.start < S::zero() {
            return Err(Error::Domain(format!(
                "plan start {} must lie in [0, {})",
                options.start, spec.horizon
            )));
        }
        let h = (spec.horizon - options.start) / S::lit(k as f64);
        let factor = expand_covariance(&spec.market.cov)?;
        let rows = factor.transpose_rows();
        let times: Vec<S> = (0..k).map(|i| options.start + h * S::lit(i as f64)).collect();
        let mut wealth_weight = vec![S::zero(); k + 1];
        wealth_weight[k] = spec.utility.beta;
        Ok(Self {
            n: spec.num_assets(),
            periods: k,
            h,
            start: options.start,
            horizon: spec.horizon,
            scale: if spec.w_init > S::zero() { spec.w_init } else { S::one() },
            w0: if spec.w_init > S::zero() { S::one() } else { spec.w_init },
            slack_mode: options.slack_mode,
            gamma: spec.utility.gamma,
            rho: spec.utility.gamma,
            beta: spec.utility.beta,
            mu: vec![spec.market.mu.clone(); k],
            factors: vec![(factor, rows)],
            factor_of: vec![0; k],
            thetas: vec![spec.theta()],
            theta_of: vec![0; k + 1],
            consumption_weight: times.iter().map(|&t| h * spec.utility.discount_at(t)).collect(),
            wealth_weight,
            insurance: None,
            income: None,
            consumption_floor: None,
            spending_limit: None,
            min_cash: None,
            max_min: false,
            mortality_applied: false,
        })
    }

    /// Base problem plus every extension block of `spec`.
    pub fn from_spec(spec: &ProblemSpec<S>, options: &BuildOptions<S>) -> Result<Self> {
        let mut b = Self::base(spec, options)?;
        b.apply_extensions(spec)?;
        Ok(b)
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn step(&self) -> S {
        self.h
    }

    /// Start of period `k`.
    pub fn time(&self, k: usize) -> S {
        self.start + self.h * S::lit(k as f64)
    }

    fn grid(&self) -> Vec<S> {
        (0..=self.periods).map(|k| self.time(k)).collect()
    }

    pub fn apply_extensions(&mut self, spec: &ProblemSpec<S>) -> Result<&mut Self> {
        let e = &spec.extensions;
        if let Some(tv) = &e.time_varying {
            let mu = (0..self.periods).map(|k| tv.mu_at(self.time(k))).collect();
            let scale = (0..self.periods).map(|k| tv.cov_scale_at(self.time(k))).collect();
            self.apply_time_varying(mu, scale, None)?;
        }
        if let Some(m) = &e.mortality {
            self.apply_mortality(m)?;
        }
        if let Some(ins) = &e.insurance {
            self.apply_insurance(ins)?;
        }
        if let Some(inc) = &e.income {
            let rf = spec
                .market
                .risk_free_rate()
                .ok_or_else(|| Error::Domain("income requires a risk-free asset".into()))?;
            if !spec.theta().is_simple_budget() {
                return Err(Error::Domain("income requires theta_set = {1ᵀθ = 1}".into()));
            }
            self.apply_income(inc, rf)?;
        }
        if let Some(rho) = spec.utility.rho {
            self.apply_epstein_zin(rho)?;
        }
        self.apply_inexact(&InexactBlocks::from_extensions(e))?;
        Ok(self)
    }

    /// Replaces `μ`, `Σ` (as `scale_k · Σ`) and optionally Θ per period.
    pub fn apply_time_varying(
        &mut self,
        mu: Vec<Vec<S>>,
        cov_scale: Vec<S>,
        theta: Option<Vec<ConstraintSet<S>>>,
    ) -> Result<&mut Self> {
        let k = self.periods;
        if mu.len() != k || cov_scale.len() != k || mu.iter().any(|m| m.len() != self.n) {
            return Err(Error::Dimension(format!("time-varying data must have {k} periods of {} assets", self.n)));
        }
        if cov_scale.iter().any(|&s| !(s >= S::zero())) {
            return Err(Error::Domain("covariance scale must be nonnegative".into()));
        }
        self.mu = mu;
        let base = self.factors[0].0.clone();
        let mut factors: Vec<(CovFactor<S>, FactorRows<S>)> = Vec::new();
        let mut scales: Vec<S> = Vec::new();
        self.factor_of = cov_scale
            .iter()
            .map(|&s| {
                if let Some(i) = scales.iter().position(|&x| x == s) {
                    return i;
                }
                let f = base.scaled(s);
                let rows = f.transpose_rows();
                factors.push((f, rows));
                scales.push(s);
                factors.len() - 1
            })
            .collect();
        self.factors = factors;
        if let Some(sets) = theta {
            if sets.len() != k + 1 {
                return Err(Error::Dimension(format!("time-varying Θ needs {} sets", k + 1)));
            }
            self.thetas = sets.into_iter().map(|s| s.with_budget(self.n)).collect();
            self.theta_of = (0..=k).collect();
        }
        Ok(self)
    }

    /// Survival-weighted consumption utility plus death-density-weighted bequest.
    pub fn apply_mortality(&mut self, mortality: &MortalityModel<S>) -> Result<&mut Self> {
        if mortality.times.is_empty()
            || mortality.times.len() != mortality.density.len()
            || mortality.times.len() != mortality.survival.len()
        {
            return Err(Error::Dimension("mortality times, density and survival must align".into()));
        }
        let p = mortality.density_curve();
        let s = mortality.survival_curve();
        for k in 0..self.periods {
            let t = self.time(k);
            self.consumption_weight[k] = self.consumption_weight[k] * s.at(t);
            self.wealth_weight[k] = self.h * p.at(t) * self.beta;
        }
        self.wealth_weight[self.periods] = s.at(self.horizon) * self.beta;
        self.mortality_applied = true;
        Ok(self)
    }

    /// Premium rates `l_k` paid out at `λ_k l_k` on death.
    pub fn apply_insurance(&mut self, insurance: &InsuranceModel<S>) -> Result<&mut Self> {
        if !self.mortality_applied {
            return Err(Error::Domain("insurance requires the mortality block".into()));
        }
        if insurance.is_disabled() {
            return Ok(self);
        }
        self.insurance = Some(Insurance {
            lambda: (0..self.periods).map(|k| insurance.payout_ratio.at(self.time(k))).collect(),
            min: insurance.premium_min.map(|v| v / self.scale),
            max: insurance.premium_max.map(|v| v / self.scale),
        });
        Ok(self)
    }

    /// Deterministic income: `+h y_k` in the dynamics, risk measured on `w + v`,
    /// and Θ replaced by `1ᵀx = w`.
    pub fn apply_income(&mut self, income: &IncomeModel<S>, risk_free: S) -> Result<&mut Self> {
        let grid = self.grid();
        let rate = grid[..self.periods].iter().map(|&t| income.at(t) / self.scale).collect();
        let v = human_capital(income, risk_free, &grid, 16);
        self.income = Some(Income {
            rate,
            human_capital: v.into_iter().map(|x| x / self.scale).collect(),
        });
        self.thetas = vec![ConstraintSet::budget(self.n)];
        self.theta_of = vec![0; self.periods + 1];
        Ok(self)
    }

    /// Utility exponent `ρ` in the objective; `γ` stays in the dynamics.
    pub fn apply_epstein_zin(&mut self, rho: S) -> Result<&mut Self> {
        if rho == S::zero() || !(rho < S::one()) {
            return Err(Error::Domain(format!("rho must be below 1 and nonzero, got {rho}")));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn apply_inexact(&mut self, blocks: &InexactBlocks<S>) -> Result<&mut Self> {
        let times: Vec<S> = (0..=self.periods).map(|k| self.time(k)).collect();
        if let Some(f) = &blocks.consumption_floor {
            self.consumption_floor = Some(times[..self.periods].iter().map(|&t| f.at(t) / self.scale).collect());
        }
        if let Some(sl) = &blocks.spending_limit {
            let d = if sl.dividend.is_empty() {
                vec![S::zero(); self.n]
            } else if sl.dividend.len() == self.n {
                sl.dividend.clone()
            } else {
                return Err(Error::Dimension("dividend vector length differs from asset count".into()));
            };
            self.spending_limit = Some((sl.eta, d));
        }
        if let Some(mc) = &blocks.min_cash {
            if mc.asset >= self.n {
                return Err(Error::Dimension(format!("min_cash asset {} out of range", mc.asset)));
            }
            let floor = mc.floor.as_ref().map(|f| times.iter().map(|&t| f.at(t) / self.scale).collect());
            self.min_cash = Some((mc.asset, floor, mc.consumption_multiple));
        }
        self.max_min = blocks.max_min_consumption;
        Ok(self)
    }

    /// Compiles the program.
    pub fn build(self) -> CeProgram<S> {
        let (n, k_max, h) = (self.n, self.periods, self.h);
        let rho = self.rho;
        let mut b = ProgramBuilder::new();
        let wealth = b.add_vars(k_max + 1);
        let allocations = b.add_vars((k_max + 1) * n);
        let consumption = b.add_vars(k_max);
        let risk = b.add_vars(k_max);
        let premiums = self.insurance.as_ref().map(|_| b.add_vars(k_max));
        let slack = (self.slack_mode == SlackMode::Explicit).then(|| b.add_vars(k_max));
        let min_consumption = self.max_min.then(|| (b.add_var(), b.add_var()));
        let mut layout = VariableLayout {
            num_assets: n,
            periods: k_max,
            wealth,
            allocations,
            consumption,
            risk,
            consumption_utility: vec![None; k_max],
            wealth_utility: vec![None; k_max + 1],
            premiums,
            slack,
            min_consumption,
            num_vars: 0,
        };
        let eps = S::lit(WEALTH_FLOOR);
        let half_risk = h * (S::one() - self.gamma) / S::lit(2.0);
        let v = |k: usize| self.income.as_ref().map_or(S::zero(), |i| i.human_capital[k]);

        b.add_equality(AffineExpr::var(layout.w(0)).plus_const(-self.w0));

        for k in 0..k_max {
            let (w, c, s) = (layout.w(k), layout.c(k), layout.s(k));
            let x = layout.x(k);
            // w_k + h μᵀx_k − h c_k − h(1−γ)/2 s_k + h y_k − h l_k − w_{k+1}
            let mut dynamics = AffineExpr::var(w);
            for (i, &m) in self.mu[k].iter().enumerate() {
                if m != S::zero() {
                    dynamics = dynamics.plus(x.start + i, h * m);
                }
            }
            dynamics = dynamics.plus(c, -h).plus(s, -half_risk).plus(layout.w(k + 1), -S::one());
            if let Some(inc) = &self.income {
                dynamics = dynamics.plus_const(h * inc.rate[k]);
            }
            if let Some(l) = layout.l(k) {
                dynamics = dynamics.plus(l, -h);
            }
            match &layout.slack {
                None => b.add_nonnegative(dynamics),
                Some(u) => {
                    b.add_equality(dynamics.plus(u.start + k, -S::one()));
                    b.add_nonnegative(AffineExpr::var(u.start + k));
                }
            }

            let denom = AffineExpr::var(w).plus_const(v(k));
            quad_over_lin_cone(&mut b, &self.factors[self.factor_of[k]].1, x, &denom, &AffineExpr::var(s));
        }

        for k in 1..=k_max {
            b.add_nonnegative(AffineExpr::var(layout.w(k)).plus_const(v(k) - eps));
        }
        for k in 0..=k_max {
            let theta = &self.thetas[self.theta_of[k]];
            perspective_of_theta(&mut b, theta, layout.x(k), &AffineExpr::var(layout.w(k)));
        }

        // objective: maximize Σ weight·τ/ρ, i.e. minimize −Σ weight·τ/ρ
        let utility_term = |b: &mut ProgramBuilder<S>, arg: AffineExpr<S>, weight: S| -> usize {
            let tau = b.add_var();
            power_utility_hypograph(b, rho, arg, tau);
            b.add_objective(tau, -weight / rho);
            tau
        };
        if let Some((m, _)) = layout.min_consumption {
            let total = self.consumption_weight.iter().fold(S::zero(), |a, &w| a + w);
            let tau = utility_term(&mut b, AffineExpr::var(m), total);
            layout.min_consumption = Some((m, tau));
            for k in 0..k_max {
                b.add_nonnegative(AffineExpr::var(layout.c(k)).plus(m, -S::one()));
            }
        } else {
            for k in 0..k_max {
                let weight = self.consumption_weight[k];
                if weight != S::zero() {
                    layout.consumption_utility[k] = Some(utility_term(&mut b, AffineExpr::var(layout.c(k)), weight));
                } else {
                    b.add_nonnegative(AffineExpr::var(layout.c(k)));
                }
            }
        }
        for k in 0..=k_max {
            let mut arg = AffineExpr::var(layout.w(k));
            if let (Some(l), Some(ins)) = (layout.l(k), &self.insurance) {
                arg = arg.plus(l, ins.lambda[k]);
                b.add_nonnegative(arg.clone().plus_const(-eps));
            }
            let weight = self.wealth_weight[k];
            if weight != S::zero() {
                layout.wealth_utility[k] = Some(utility_term(&mut b, arg, weight));
            }
        }

        if let Some(ins) = &self.insurance {
            for k in 0..k_max {
                let l = layout.l(k).expect("premium column");
                if let Some(lo) = ins.min {
                    b.add_nonnegative(AffineExpr::var(l).plus_const(-lo));
                }
                if let Some(hi) = ins.max {
                    b.add_nonnegative(AffineExpr::term(l, -S::one()).plus_const(hi));
                }
            }
        }
        if let Some(floor) = &self.consumption_floor {
            for (k, &f) in floor.iter().enumerate() {
                // c_k ≥ 0 already holds through the utility cone
                if f > S::zero() {
                    b.add_nonnegative(AffineExpr::var(layout.c(k)).plus_const(-f));
                }
            }
        }
        if let Some((eta, d)) = &self.spending_limit {
            for k in 0..k_max {
                let y = self.income.as_ref().map_or(S::zero(), |i| i.rate[k]);
                let mut row = AffineExpr::term(layout.c(k), -S::one()).plus_const(*eta * y);
                for (i, &di) in d.iter().enumerate() {
                    if di != S::zero() {
                        row = row.plus(layout.x(k).start + i, di);
                    }
                }
                b.add_nonnegative(row);
            }
        }
        if let Some((asset, floor, multiple)) = &self.min_cash {
            for k in 0..=k_max {
                let col = layout.x(k).start + asset;
                if let Some(f) = floor {
                    b.add_nonnegative(AffineExpr::var(col).plus_const(-f[k]));
                }
                if let (Some(mult), true) = (multiple, k < k_max) {
                    b.add_nonnegative(AffineExpr::var(col).plus(layout.c(k), -*mult));
                }
            }
        }

        let program = b.finish();
        layout.num_vars = program.num_vars;
        CeProgram {
            program,
            layout,
            data: self,
        }
    }
}

/// `build_base(spec, options)`: the base program, extension blocks ignored.
pub fn build_base<S: Scalar>(spec: &ProblemSpec<S>, options: &BuildOptions<S>) -> Result<CeProgram<S>> {
    Ok(CeBuilder::base(spec, options)?.build())
}

/// The program with every extension block of `spec` applied.
pub fn build<S: Scalar>(spec: &ProblemSpec<S>, options: &BuildOptions<S>) -> Result<CeProgram<S>> {
    Ok(CeBuilder::from_spec(spec, options)?.build())
}

/// A compiled plan program together with what is needed to decode it.
#[derive(Debug, Clone)]
pub struct CeProgram<S: Scalar> {
    pub program: ConicProgram<S>,
    pub layout: VariableLayout,
    data: CeBuilder<S>,
}

impl<S: Scalar> CeProgram<S> {
    pub fn step(&self) -> S {
        self.data.h
    }

    /// Solves and decodes; statuses without a primal point become
    /// [`Error::Solver`] carrying the program text.
    pub fn solve(&self, settings: &SolverSettings<S>, backend: &dyn ConicBackend<S>) -> Result<Trajectory<S>> {
        let res = conic::solve(&self.program, settings, backend)?;
        self.decode(&res)
    }

    pub fn decode(&self, res: &SolveResult<S>) -> Result<Trajectory<S>> {
        match &res.primal {
            Some(p) if res.status.has_primal() => Ok(self.decode_primal(p, res.status, res.stats)),
            _ => Err(Error::Solver {
                status: res.status,
                program: Some(Box::new(self.program.to_text())),
            }),
        }
    }

    pub fn decode_primal(&self, p: &[S], status: SolveStatus, stats: SolveStats) -> Trajectory<S> {
        let d = &self.data;
        let lay = &self.layout;
        let (k_max, h, sc) = (lay.periods, d.h, d.scale);
        let wealth: Vec<S> = lay.wealth.clone().map(|i| sc * p[i]).collect();
        let allocations: Vec<Vec<S>> = (0..=k_max).map(|k| p[lay.x(k)].iter().map(|&v| sc * v).collect()).collect();
        let consumption: Vec<S> = lay.consumption.clone().map(|i| sc * p[i]).collect();
        let premiums = lay.premiums.as_ref().map(|r| r.clone().map(|i| sc * p[i]).collect::<Vec<S>>());
        let weights = allocations
            .iter()
            .zip(&wealth)
            .map(|(x, &w)| x.iter().map(|&xi| xi / w).collect())
            .collect();
        let half_risk = (S::one() - d.gamma) / S::lit(2.0);
        let slack = (0..k_max)
            .map(|k| {
                let y = d.income.as_ref().map_or(S::zero(), |i| sc * i.rate[k]);
                let l = premiums.as_ref().map_or(S::zero(), |l| l[k]);
                wealth[k] + h * (dot(&d.mu[k], &allocations[k]) - consumption[k] + y - l - half_risk * sc * p[lay.s(k)])
                    - wealth[k + 1]
            })
            .collect();
        let planned_returns = (0..k_max)
            .map(|k| {
                let sx = d.factors[d.factor_of[k]].0.cov_times(&allocations[k]);
                d.mu[k]
                    .iter()
                    .zip(&sx)
                    .map(|(&m, &v)| m - half_risk * v / wealth[k])
                    .collect()
            })
            .collect();
        Trajectory {
            times: (0..=k_max).map(|k| d.time(k)).collect(),
            wealth,
            allocations,
            consumption,
            weights,
            slack,
            premiums,
            planned_returns,
            objective: -self.program.objective_at(p) * sc.powf(d.rho),
            status,
            stats,
        }
    }

    /// Primal point of a trajectory: every auxiliary set to its tight value.
    pub fn encode(&self, traj: &Trajectory<S>) -> Vec<S> {
        let d = &self.data;
        let lay = &self.layout;
        let k_max = lay.periods;
        let mut p = vec![S::zero(); lay.num_vars];
        let rho = d.rho;
        let sc = d.scale;
        let v = |k: usize| d.income.as_ref().map_or(S::zero(), |i| i.human_capital[k]);
        let pow = |x: S| x.max(S::zero()).powf(rho);
        for k in 0..=k_max {
            p[lay.w(k)] = traj.wealth[k] / sc;
            for (slot, &v) in p[lay.x(k)].iter_mut().zip(&traj.allocations[k]) {
                *slot = v / sc;
            }
        }
        for k in 0..k_max {
            p[lay.c(k)] = traj.consumption[k] / sc;
            let f = &d.factors[d.factor_of[k]].0;
            p[lay.s(k)] = f.quad(&p[lay.x(k)]) / (p[lay.w(k)] + v(k));
            if let Some(u) = &lay.slack {
                p[u.start + k] = traj.slack[k] / sc;
            }
            if let (Some(l), Some(prem)) = (lay.l(k), &traj.premiums) {
                p[l] = prem[k] / sc;
            }
            if let Some(t) = lay.consumption_utility[k] {
                p[t] = pow(p[lay.c(k)]);
            }
        }
        for k in 0..=k_max {
            if let Some(t) = lay.wealth_utility[k] {
                let mut arg = p[lay.w(k)];
                if let (Some(l), Some(ins)) = (lay.l(k), &d.insurance) {
                    arg = arg + ins.lambda[k] * p[l];
                }
                p[t] = pow(arg);
            }
        }
        if let Some((m, t)) = lay.min_consumption {
            let lo = traj.consumption.iter().fold(S::infinity(), |a, &c| a.min(c)) / sc;
            p[m] = lo;
            p[t] = pow(lo);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::AnalyticSolution;
    use crate::conic::{verify, ClarabelBackend};
    use crate::problem::{Covariance, MarketModel};
    use crate::linalg::Matrix;

    fn solve(p: &CeProgram<f64>) -> Trajectory<f64> {
        p.solve(&SolverSettings::default(), &ClarabelBackend).unwrap()
    }

    #[test]
    fn layout_columns_are_disjoint_and_complete() {
        let mut spec = ProblemSpec::<f64>::reference();
        spec.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.05));
        spec.extensions.insurance = Some(InsuranceModel::fair(spec.extensions.mortality.as_ref().unwrap()));
        let p = build(&spec, &BuildOptions::new(7).with_slack_mode(SlackMode::Explicit)).unwrap();
        let mut cols = p.layout.columns();
        cols.sort_unstable();
        assert_eq!(cols, (0..p.layout.num_vars).collect::<Vec<_>>());
    }

    #[test]
    fn base_plan_is_tight_and_feasible() {
        let spec = ProblemSpec::<f64>::reference();
        let p = build_base(&spec, &BuildOptions::new(40)).unwrap();
        let res = conic::solve(&p.program, &SolverSettings::default(), &ClarabelBackend).unwrap();
        assert!(verify(&p.program, &res).unwrap().max() <= 1e-6);
        let t = p.decode(&res).unwrap();
        assert!((t.wealth[0] - 1.0f64).abs() < 1e-8);
        assert!(t.max_slack() <= 1e-6 * t.wealth.iter().cloned().fold(0.0, f64::max));
        let theta = spec.theta();
        assert!(t.weights.iter().all(|w| theta.contains(w, 1e-7)));
    }

    #[test]
    fn riskless_single_asset_matches_analytic_consumption() {
        let market = MarketModel::new(vec![0.03], Covariance::Dense(Matrix::diagonal(&[0.0]))).with_risk_free(0);
        let mut spec = ProblemSpec::reference();
        spec.market = market;
        spec.theta_set = ConstraintSet::fixed(&[1.0]);
        let t = solve(&build_base(&spec, &BuildOptions::new(400)).unwrap());
        let a = AnalyticSolution::solve(&spec).unwrap();
        assert!((a.r_ce - 0.03).abs() < 1e-9);
        for k in [0, 100, 300] {
            let want = a.consumption_rate(t.times[k]).unwrap();
            let got = t.consumption[k] / t.wealth[k];
            assert!((got - want).abs() < 0.05 * want, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let mut spec = ProblemSpec::<f64>::reference();
        spec.extensions.mortality = Some(MortalityModel::uniform_density(10.0, 0.05));
        spec.extensions.insurance =
            Some(InsuranceModel::fair(spec.extensions.mortality.as_ref().unwrap()).with_premium_bounds(Some(0.0), None));
        let p = build(&spec, &BuildOptions::new(6).with_slack_mode(SlackMode::Explicit)).unwrap();
        let traj = solve(&p);
        let again = p.decode_primal(&p.encode(&traj), traj.status, traj.stats);
        for (a, b) in traj.wealth.iter().zip(&again.wealth) {
            assert_eq!(a, b);
        }
        assert_eq!(traj.allocations, again.allocations);
        assert_eq!(traj.consumption, again.consumption);
        assert_eq!(traj.premiums, again.premiums);
        assert!((traj.objective - again.objective).abs() < 1e-6);
    }

    #[test]
    fn planned_return_identity() {
        let t = solve(&build_base(&ProblemSpec::reference(), &BuildOptions::new(10)).unwrap());
        let sigma = 0.04;
        for k in 0..10 {
            let th = &t.weights[k];
            let lhs: f64 = th.iter().zip(&t.planned_returns[k]).zip([0.10, 0.02]).map(|((a, r), m)| a * (m - r)).sum();
            let rhs = 0.25 * sigma * th.iter().map(|v| v * v).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn spending_limit_rows() {
        let mut spec = ProblemSpec::<f64>::reference();
        spec.market = MarketModel::new(vec![0.08, 0.02], Covariance::Dense(Matrix::diagonal(&[0.04, 0.0]))).with_risk_free(1);
        spec.extensions.income = Some(IncomeModel::constant(0.2));
        spec.extensions.spending_limit = Some(SpendingLimit { eta: 0.7, dividend: vec![] });
        let t = solve(&build(&spec, &BuildOptions::new(20)).unwrap());
        assert!(t.consumption.iter().all(|&c| c <= 0.7 * 0.2 + 1e-7));
    }

    #[test]
    fn emergency_fund_rows() {
        let mut spec = ProblemSpec::<f64>::reference();
        spec.extensions.min_cash = Some(MinCash { asset: 1, floor: None, consumption_multiple: Some(0.5) });
        let t = solve(&build(&spec, &BuildOptions::new(20)).unwrap());
        for k in 0..20 {
            assert!(t.allocations[k][1] >= 0.5 * t.consumption[k] - 1e-7);
        }
    }

    #[test]
    fn time_varying_rejects_bad_lengths() {
        let spec = ProblemSpec::<f64>::reference();
        let mut b = CeBuilder::base(&spec, &BuildOptions::new(4)).unwrap();
        assert!(matches!(b.apply_time_varying(vec![vec![0.1, 0.0]; 3], vec![1.0; 4], None), Err(Error::Dimension(_))));
    }

    #[test]
    fn identical_time_variation_is_bit_identical() {
        let spec = ProblemSpec::<f64>::reference();
        let opts = BuildOptions::new(5);
        let base = build_base(&spec, &opts).unwrap();
        let mut b = CeBuilder::base(&spec, &opts).unwrap();
        b.apply_time_varying(vec![spec.market.mu.clone(); 5], vec![1.0; 5], None).unwrap();
        assert_eq!(b.build().program, base.program);
    }

    #[test]
    fn insurance_requires_mortality() {
        let spec = ProblemSpec::<f64>::reference();
        let mut b = CeBuilder::base(&spec, &BuildOptions::new(4)).unwrap();
        let ins = InsuranceModel::new(Curve::constant(0.1));
        assert!(b.apply_insurance(&ins).is_err());
    }
}
