//! Ready-made policies: the closed-form optimum, the mortality optimum, an
//! open-loop CE plan and arbitrary closures.

use super::{Action, Policy};
use crate::analytic::{solve_markowitz, AnalyticSolution, MortalitySolution};
use crate::conic::{ClarabelBackend, SolverSettings};
use crate::error::{Error, Result};
use crate::problem::{ProblemSpec, Trajectory};
use crate::scalar::Scalar;

/// RK4 steps per year for the tabulated mortality solution.
const MORTALITY_STEPS_PER_YEAR: f64 = 2000.0;

/// `c = a_t^{1/(γ−1)} w`, `θ = θ_ce`.
#[derive(Debug, Clone)]
pub struct AnalyticPolicy<S: Scalar> {
    solution: AnalyticSolution<S>,
    /// `β^{1/(1−γ)}` and `x = γ r_ce/(1−γ)`; `x = 0` on the small-rate branch.
    b: S,
    x: S,
}

impl<S: Scalar> AnalyticPolicy<S> {
    pub fn new(solution: AnalyticSolution<S>) -> Self {
        let one = S::one();
        let g = solution.gamma;
        let x = if (g * solution.r_ce * solution.horizon).abs() < S::lit(crate::analytic::SMALL_RATE) {
            S::zero()
        } else {
            g * solution.r_ce / (one - g)
        };
        Self {
            b: solution.beta.powf(one / (one - g)),
            x,
            solution,
        }
    }

    pub fn solution(&self) -> &AnalyticSolution<S> {
        &self.solution
    }

    /// `1/q_t` with `q = b e^{xτ} + expm1(xτ)/x` and `b` precomputed.
    pub fn consumption_rate(&self, t: S) -> Result<S> {
        let tau = self.solution.horizon - t;
        if tau < S::zero() || t < S::zero() {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.solution.horizon)));
        }
        if tau == S::zero() {
            return self.solution.consumption_rate(t);
        }
        let q = if self.x == S::zero() {
            self.b + tau
        } else {
            let xt = self.x * tau;
            self.b * xt.exp() + xt.exp_m1() / self.x
        };
        Ok(S::one() / q)
    }
}

impl<S: Scalar> Policy<S> for AnalyticPolicy<S> {
    type State = ();

    fn act(&self, _: &mut (), t: S, w: S, out: &mut Action<S>) -> Result<()> {
        out.set_proportional(w, self.consumption_rate(t)?, &self.solution.theta_ce);
        Ok(())
    }

    fn is_proportional(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct MortalityPolicy<S: Scalar>(pub MortalitySolution<S>);

impl<S: Scalar> Policy<S> for MortalityPolicy<S> {
    type State = ();

    fn act(&self, _: &mut (), t: S, w: S, out: &mut Action<S>) -> Result<()> {
        out.set_proportional(w, self.0.consumption_rate(t), &self.0.theta_ce);
        Ok(())
    }

    fn is_proportional(&self) -> bool {
        true
    }
}

/// Known optimal policy of a spec, when one exists: the closed form for the
/// base problem and the tabulated solution under mortality alone.
#[derive(Debug, Clone)]
pub enum ReferencePolicy<S: Scalar> {
    Analytic(AnalyticPolicy<S>),
    Mortality(MortalityPolicy<S>),
}

impl<S: Scalar> ReferencePolicy<S> {
    pub fn for_spec(spec: &ProblemSpec<S>) -> Result<Option<Self>> {
        let u = &spec.utility;
        if u.discount.is_some() || u.rho.is_some_and(|r| r != u.gamma) {
            return Ok(None);
        }
        let mut rest = spec.extensions.clone();
        let mortality = rest.mortality.take();
        if rest.insurance.as_ref().is_some_and(|i| i.is_disabled()) {
            rest.insurance = None;
        }
        if !rest.is_empty() {
            return Ok(None);
        }
        let settings = SolverSettings::for_assets(spec.num_assets());
        let m = solve_markowitz(&spec.market, &spec.theta(), u.gamma, &settings, &ClarabelBackend)?;
        Ok(Some(match mortality {
            None => Self::Analytic(AnalyticPolicy::new(AnalyticSolution::from_markowitz(m, u.gamma, u.beta, spec.horizon))),
            Some(mort) => {
                let steps = (spec.horizon.to_f64() * MORTALITY_STEPS_PER_YEAR).ceil().max(100.0) as usize;
                Self::Mortality(MortalityPolicy(MortalitySolution::new(
                    &m,
                    u.gamma,
                    u.beta,
                    spec.horizon,
                    &mort,
                    steps,
                )?))
            }
        }))
    }

    /// `a_t` of the value function `a_t w^γ/γ`.
    pub fn value_coefficient(&self, t: S) -> Result<S> {
        match self {
            Self::Analytic(p) => p.solution.a(t),
            Self::Mortality(p) => Ok(p.0.a(t)),
        }
    }

    /// Optimal `c/w` at `t`.
    pub fn consumption_rate(&self, t: S) -> Result<S> {
        match self {
            Self::Analytic(p) => p.consumption_rate(t),
            Self::Mortality(p) => Ok(p.0.consumption_rate(t)),
        }
    }

    pub fn theta(&self) -> &[S] {
        match self {
            Self::Analytic(p) => &p.solution.theta_ce,
            Self::Mortality(p) => &p.0.theta_ce,
        }
    }

    pub fn r_ce(&self) -> S {
        match self {
            Self::Analytic(p) => p.solution.r_ce,
            Self::Mortality(p) => p.0.r_ce,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Analytic(_) => "analytic",
            Self::Mortality(_) => "mortality",
        }
    }

    pub fn value(&self, t: S, w: S) -> Result<S> {
        match self {
            Self::Analytic(p) => p.solution.value(t, w),
            Self::Mortality(p) => Ok(p.0.value(t, w)),
        }
    }
}

impl<S: Scalar> Policy<S> for ReferencePolicy<S> {
    type State = ();

    fn act(&self, s: &mut (), t: S, w: S, out: &mut Action<S>) -> Result<()> {
        match self {
            Self::Analytic(p) => p.act(s, t, w, out),
            Self::Mortality(p) => p.act(s, t, w, out),
        }
    }

    fn is_proportional(&self) -> bool {
        true
    }
}

/// Open-loop CE plan applied in feedback form: during period `k` the plan's
/// ratios `c_k/w_k`, `θ_k` and `l_k/w_k` are applied to current wealth.
#[derive(Debug, Clone)]
pub struct PlanPolicy<S: Scalar> {
    plan: Trajectory<S>,
}

impl<S: Scalar> PlanPolicy<S> {
    pub fn new(plan: Trajectory<S>) -> Self {
        Self { plan }
    }

    fn period(&self, t: S) -> usize {
        super::period_index(&self.plan.times[..self.plan.periods()], t)
    }
}

impl<S: Scalar> Policy<S> for PlanPolicy<S> {
    type State = ();

    fn act(&self, _: &mut (), t: S, w: S, out: &mut Action<S>) -> Result<()> {
        let k = self.period(t);
        let wk = self.plan.wealth[k];
        out.set_proportional(w, self.plan.consumption[k] / wk, &self.plan.weights[k]);
        if let Some(l) = &self.plan.premiums {
            out.premium = l[k] / wk * w;
        }
        Ok(())
    }

    fn is_proportional(&self) -> bool {
        self.plan.premiums.is_none()
    }
}

/// Wraps a closure `(t, w) → Action`.
pub struct FnPolicy<F> {
    f: F,
    proportional: bool,
}

impl<F> FnPolicy<F> {
    pub fn new(f: F) -> Self {
        Self { f, proportional: false }
    }

    /// Declares the closure proportional in `w` (enables the exact scheme).
    #[must_use]
    pub fn proportional(mut self) -> Self {
        self.proportional = true;
        self
    }
}

impl<S: Scalar, F: Fn(S, S) -> Action<S> + Sync> Policy<S> for FnPolicy<F> {
    type State = ();

    fn act(&self, _: &mut (), t: S, w: S, out: &mut Action<S>) -> Result<()> {
        *out = (self.f)(t, w);
        Ok(())
    }

    fn is_proportional(&self) -> bool {
        self.proportional
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::Markowitz;

    #[test]
    fn fast_rate_matches_closed_form() {
        for &(r, g, b) in &[(0.135f64, 0.5f64, 1.0f64), (0.04, -3.0, 0.2), (-0.1, 0.9, 5.0), (0.0, 0.5, 1.0), (1e-13, -1.0, 2.0)] {
            let sol = AnalyticSolution::from_markowitz(Markowitz { theta: vec![1.0], r_ce: r }, g, b, 20.0);
            let p = AnalyticPolicy::new(sol.clone());
            for t in [0.0, 3.3, 19.99, 20.0] {
                let (fast, slow) = (p.consumption_rate(t).unwrap(), sol.consumption_rate(t).unwrap());
                assert_eq!(fast, slow, "r={r} γ={g} t={t}");
            }
        }
    }

    #[test]
    fn plan_policy_applies_plan_ratios() {
        let spec = ProblemSpec::<f64>::reference();
        let plan = crate::builder::build(&spec, &crate::builder::BuildOptions::new(20))
            .unwrap()
            .solve(&SolverSettings::default(), &ClarabelBackend)
            .unwrap();
        let p = PlanPolicy::new(plan.clone());
        let mut a = Action::default();
        p.act(&mut (), 0.75, 2.0, &mut a).unwrap();
        assert!((a.consumption - 2.0 * plan.consumption[1] / plan.wealth[1]).abs() < 1e-12);
        p.act(&mut (), 10.0, 1.0, &mut a).unwrap();
        assert!((a.consumption - plan.consumption[19] / plan.wealth[19]).abs() < 1e-12);
    }
}
