//! Closed-form solution of the base problem: Markowitz subproblem, the value
//! coefficient `a_t`, the optimal policy and an ODE residual check.

use serde::{Deserialize, Serialize};

use crate::builder::cones::{perspective_of_theta, quad_over_lin_cone};
use crate::conic::{self, AffineExpr, ConicBackend, ProgramBuilder, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::problem::{expand_covariance, ConstraintSet, MarketModel, MortalityModel, ProblemSpec};
use crate::scalar::{dot, Scalar};

/// Below this value of `|γ r T|` the coefficient uses its `r → 0` limit.
pub const SMALL_RATE: f64 = 1e-10;

/// Optimal constant mix and certainty-equivalent return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Markowitz<S: Scalar> {
    pub theta: Vec<S>,
    pub r_ce: S,
}

/// `μᵀθ + ((γ−1)/2) θᵀΣθ`
pub fn markowitz_objective<S: Scalar>(market: &MarketModel<S>, gamma: S, theta: &[S]) -> Result<S> {
    let l = expand_covariance(&market.cov)?;
    Ok(dot(&market.mu, theta) - (S::one() - gamma) / S::lit(2.0) * l.quad(theta))
}

/// Maximizes `μᵀθ + ((γ−1)/2) θᵀΣθ` over Θ (budget row added if absent).
pub fn solve_markowitz<S: Scalar>(
    market: &MarketModel<S>,
    theta_set: &ConstraintSet<S>,
    gamma: S,
    settings: &SolverSettings<S>,
    backend: &dyn ConicBackend<S>,
) -> Result<Markowitz<S>> {
    if !(gamma < S::one()) || gamma == S::zero() {
        return Err(Error::Domain(format!("gamma must be below 1 and nonzero, got {gamma}")));
    }
    let n = market.num_assets();
    let theta_set = theta_set.clone().with_budget(n);
    let lt = expand_covariance(&market.cov)?.transpose_rows();
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(n);
    let s = b.add_var();
    let one = AffineExpr::constant(S::one());
    quad_over_lin_cone(&mut b, &lt, x.clone(), &one, &AffineExpr::var(s));
    perspective_of_theta(&mut b, &theta_set, x.clone(), &one);
    for (i, &m) in market.mu.iter().enumerate() {
        b.add_objective(x.start + i, -m);
    }
    b.add_objective(s, (S::one() - gamma) / S::lit(2.0));
    let program = b.finish();
    let res = conic::solve(&program, settings, backend)?;
    let Some(primal) = res.primal.filter(|_| res.status == SolveStatus::Optimal) else {
        return Err(Error::Solver {
            status: res.status,
            program: Some(Box::new(program.to_text())),
        });
    };
    let mut theta = primal[x].to_vec();
    let mut r_ce = markowitz_objective(market, gamma, &theta)?;
    if let Some(p) = polish(market, &theta_set, gamma, &theta) {
        let r = markowitz_objective(market, gamma, &p)?;
        if r >= r_ce - S::lit(1e-12) * (S::one() + r_ce.abs()) {
            theta = p;
            r_ce = r;
        }
    }
    Ok(Markowitz { theta, r_ce })
}

/// Re-solves the KKT system on the constraints active at `theta`.
///
/// Interior-point iterates stop at a relative gap of about 1e-8, which leaves
/// `θ` accurate only to roughly the square root of that on flat objectives.
/// The polished point is returned only if it is feasible; SOC constraints are
/// handled by requiring them to be inactive.
fn polish<S: Scalar>(market: &MarketModel<S>, theta_set: &ConstraintSet<S>, gamma: S, theta: &[S]) -> Option<Vec<S>> {
    use nalgebra::{DMatrix, DVector};
    let n = theta.len();
    let f = |v: S| v.to_f64();
    let th: Vec<f64> = theta.iter().map(|&v| f(v)).collect();
    let active_tol = 1e-6;
    let mut rows: Vec<(Vec<f64>, f64)> = theta_set
        .eq
        .iter()
        .map(|e| (e.a.iter().map(|&v| f(v)).collect(), f(e.b)))
        .collect();
    for e in &theta_set.ineq {
        let g: Vec<f64> = e.g.iter().map(|&v| f(v)).collect();
        let gap = f(e.h) - g.iter().zip(&th).map(|(a, b)| a * b).sum::<f64>();
        if gap.abs() <= active_tol * (1.0 + f(e.h).abs()) {
            rows.push((g, f(e.h)));
        }
    }
    for c in &theta_set.socs {
        let px = c.p.matvec(theta);
        let norm = px.iter().map(|&v| f(v) * f(v)).sum::<f64>().sqrt();
        if f(dot(&c.q, theta) + c.r) - norm <= active_tol {
            return None;
        }
    }
    let m = rows.len();
    let sigma = market.cov.to_dense();
    let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
    let mut rhs = DVector::<f64>::zeros(n + m);
    let k = 1.0 - f(gamma);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = k * f(sigma[(i, j)]);
        }
        rhs[i] = f(market.mu[i]);
    }
    for (r, (a, b)) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = a[j];
            kkt[(j, n + r)] = a[j];
        }
        rhs[n + r] = *b;
    }
    let sol = kkt.lu().solve(&rhs)?;
    let p: Vec<S> = (0..n).map(|i| S::lit(sol[i])).collect();
    if p.iter().any(|v| !v.is_finite()) || theta_set.max_violation(&p) > S::lit(1e-9) {
        return None;
    }
    Some(p)
}

/// `q_t = a_t^{1/(1−γ)}`, the inverse consumption rate `w/c` of the optimal policy.
///
/// Solves `dq/dτ = 1 + x q`, `q(0) = β^{1/(1−γ)}` in time-to-go `τ = T − t`
/// with `x = γ r/(1−γ)`.
pub fn q_coefficient<S: Scalar>(t: S, r_ce: S, gamma: S, beta: S, horizon: S) -> Result<S> {
    if t < S::zero() || t > horizon {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let one = S::one();
    let b = beta.powf(one / (one - gamma));
    let tau = horizon - t;
    let q = if (gamma * r_ce * horizon).abs() < S::lit(SMALL_RATE) {
        b + tau
    } else {
        let x = gamma * r_ce / (one - gamma);
        let xt = x * tau;
        b * xt.exp() + xt.exp_m1() / x
    };
    if !(q > S::zero()) || !q.is_finite() {
        return Err(Error::Domain(format!(
            "coefficient base {q} is not a positive finite number (γ={gamma}, β={beta}, r_ce={r_ce}, T−t={tau})"
        )));
    }
    Ok(q)
}

/// `a_t`, with `V_t(w) = a_t w^γ/γ`; `a_T = β`.
pub fn a_coefficient<S: Scalar>(t: S, r_ce: S, gamma: S, beta: S, horizon: S) -> Result<S> {
    if t == horizon {
        return Ok(beta);
    }
    Ok(q_coefficient(t, r_ce, gamma, beta, horizon)?.powf(S::one() - gamma))
}

/// Closed-form solution of a base problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AnalyticSolution<S: Scalar> {
    pub theta_ce: Vec<S>,
    pub r_ce: S,
    /// `1 + x β^{1/(1−γ)}`, so that `x q_t = C e^{x(T−t)} − 1`.
    pub c_const: S,
    pub gamma: S,
    pub beta: S,
    pub horizon: S,
}

impl<S: Scalar> AnalyticSolution<S> {
    pub fn from_markowitz(m: Markowitz<S>, gamma: S, beta: S, horizon: S) -> Self {
        let x = gamma * m.r_ce / (S::one() - gamma);
        let b = beta.powf(S::one() / (S::one() - gamma));
        Self {
            theta_ce: m.theta,
            r_ce: m.r_ce,
            c_const: S::one() + x * b,
            gamma,
            beta,
            horizon,
        }
    }

    /// Solves the Markowitz subproblem of `spec` with the default backend.
    pub fn solve(spec: &ProblemSpec<S>) -> Result<Self> {
        let settings = SolverSettings::for_assets(spec.num_assets());
        let m = solve_markowitz(&spec.market, &spec.theta(), spec.utility.gamma, &settings, &conic::ClarabelBackend)?;
        Ok(Self::from_markowitz(m, spec.utility.gamma, spec.utility.beta, spec.horizon))
    }

    pub fn a(&self, t: S) -> Result<S> {
        a_coefficient(t, self.r_ce, self.gamma, self.beta, self.horizon)
    }

    /// Optimal `c/w` at time `t`, `a_t^{1/(γ−1)}`.
    pub fn consumption_rate(&self, t: S) -> Result<S> {
        if t == self.horizon {
            return Ok(self.beta.powf(S::one() / (self.gamma - S::one())));
        }
        Ok(S::one() / q_coefficient(t, self.r_ce, self.gamma, self.beta, self.horizon)?)
    }

    /// `V_t(w) = a_t w^γ/γ`
    pub fn value(&self, t: S, w: S) -> Result<S> {
        if !(w > S::zero()) {
            return Err(Error::Domain(format!("wealth must be positive, got {w}")));
        }
        Ok(self.a(t)? * w.powf(self.gamma) / self.gamma)
    }

    /// `(c, θ)` of the optimal policy at `(t, w)`.
    pub fn policy(&self, t: S, w: S) -> Result<(S, Vec<S>)> {
        if !(w > S::zero()) {
            return Err(Error::Domain(format!("wealth must be positive, got {w}")));
        }
        Ok((self.consumption_rate(t)? * w, self.theta_ce.clone()))
    }

    /// Largest `|ȧ + (1−γ)a^{γ/(γ−1)} + γ a r_ce|` over a uniform grid of
    /// `(0, T)` with spacing `step`, using central differences for `ȧ`.
    pub fn hjb_ode_residual(&self, step: S) -> Result<S> {
        hjb_residual_of(|t| self.a(t), self.gamma, self.r_ce, self.horizon, step)
    }
}

/// ODE residual of an arbitrary coefficient candidate `a`.
pub fn hjb_residual_of<S: Scalar>(
    a: impl Fn(S) -> Result<S>,
    gamma: S,
    r_ce: S,
    horizon: S,
    step: S,
) -> Result<S> {
    let count = (horizon / step).to_f64().floor() as usize;
    let mut worst = S::zero();
    let two = S::lit(2.0);
    for i in 1..count {
        let t = S::lit(i as f64) * step;
        if t + step > horizon {
            break;
        }
        let at = a(t)?;
        let dot_a = (a(t + step)? - a(t - step)?) / (two * step);
        let r = dot_a + (S::one() - gamma) * at.powf(gamma / (gamma - S::one())) + gamma * at * r_ce;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Optimal policy of the mortality problem, tabulated on a fine grid.
///
/// The value function stays `a_t w^γ/γ`, with `a` solving
/// `−ȧ = (1−γ) a (a/s)^{1/(γ−1)} + γ r a + p β`, `a_T = s_T β`; consumption is
/// `(a/s)^{1/(γ−1)} w` and the mix is `θ_ce`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MortalitySolution<S: Scalar> {
    pub theta_ce: Vec<S>,
    pub r_ce: S,
    pub gamma: S,
    pub beta: S,
    pub horizon: S,
    pub times: Vec<S>,
    pub a: Vec<S>,
    pub survival: Vec<S>,
}

impl<S: Scalar> MortalitySolution<S> {
    /// Backward RK4 with `steps` uniform steps.
    pub fn new(m: &Markowitz<S>, gamma: S, beta: S, horizon: S, mortality: &MortalityModel<S>, steps: usize) -> Result<Self> {
        let one = S::one();
        let s_floor = S::lit(1e-12);
        let p = mortality.density_curve();
        let s = mortality.survival_curve();
        let rhs = |t: S, a: S| -> S {
            // da/dt
            let st = s.at(t).max(s_floor);
            -((one - gamma) * a * (a / st).powf(one / (gamma - one)) + gamma * m.r_ce * a + p.at(t) * beta)
        };
        let h = horizon / S::lit(steps as f64);
        let mut a = vec![S::zero(); steps + 1];
        a[steps] = s.at(horizon).max(s_floor) * beta;
        let half = S::lit(0.5);
        let sixth = one / S::lit(6.0);
        for k in (0..steps).rev() {
            let t = S::lit(k as f64 + 1.0) * h;
            let y = a[k + 1];
            let k1 = rhs(t, y);
            let k2 = rhs(t - half * h, y - half * h * k1);
            let k3 = rhs(t - half * h, y - half * h * k2);
            let k4 = rhs(t - h, y - h * k3);
            a[k] = y - h * sixth * (k1 + S::lit(2.0) * (k2 + k3) + k4);
            if !(a[k] > S::zero()) || !a[k].is_finite() {
                return Err(Error::Domain(format!("mortality value coefficient left the domain at t = {}", t - h)));
            }
        }
        let times: Vec<S> = (0..=steps).map(|k| S::lit(k as f64) * h).collect();
        let survival = times.iter().map(|&t| s.at(t).max(s_floor)).collect();
        Ok(Self {
            theta_ce: m.theta.clone(),
            r_ce: m.r_ce,
            gamma,
            beta,
            horizon,
            times,
            a,
            survival,
        })
    }

    fn interp(&self, v: &[S], t: S) -> S {
        let steps = self.times.len() - 1;
        let h = self.horizon / S::lit(steps as f64);
        let u = (t / h).max(S::zero()).min(S::lit(steps as f64));
        let k = (u.to_f64().floor() as usize).min(steps.saturating_sub(1));
        let f = u - S::lit(k as f64);
        v[k] + f * (v[k + 1] - v[k])
    }

    pub fn a(&self, t: S) -> S {
        self.interp(&self.a, t)
    }

    /// Optimal `c/w` at time `t`.
    pub fn consumption_rate(&self, t: S) -> S {
        let s = self.interp(&self.survival, t);
        (self.a(t) / s).powf(S::one() / (self.gamma - S::one()))
    }

    pub fn value(&self, t: S, w: S) -> S {
        self.a(t) * w.powf(self.gamma) / self.gamma
    }
}
