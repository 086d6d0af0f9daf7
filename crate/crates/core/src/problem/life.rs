//! Mortality, life insurance/annuities and labour income.

use serde::{Deserialize, Serialize};

use super::curve::Curve;
use crate::scalar::Scalar;

/// Random time of death on `[0, T]`: density `p_t` and survival `s_t = Prob(t_f > t)`,
/// both sampled on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct MortalityModel<S: Scalar> {
    pub times: Vec<S>,
    pub density: Vec<S>,
    pub survival: Vec<S>,
}

impl<S: Scalar> MortalityModel<S> {
    /// Certain survival to the horizon: `p ≡ 0`, `s ≡ 1`.
    pub fn immortal(horizon: S) -> Self {
        Self {
            times: vec![S::zero(), horizon],
            density: vec![S::zero(); 2],
            survival: vec![S::one(); 2],
        }
    }

    /// Constant density `rate` on `[0, T]`, so `s_t = 1 − rate·t` (requires `rate·T ≤ 1`).
    pub fn uniform_density(horizon: S, rate: S) -> Self {
        Self {
            times: vec![S::zero(), horizon],
            density: vec![rate; 2],
            survival: vec![S::one(), S::one() - rate * horizon],
        }
    }

    pub fn density_curve(&self) -> Curve<S> {
        Curve::new(self.times.clone(), self.density.clone())
    }

    pub fn survival_curve(&self) -> Curve<S> {
        Curve::new(self.times.clone(), self.survival.clone())
    }

    pub fn density_at(&self, t: S) -> S {
        self.density_curve().at(t)
    }

    pub fn survival_at(&self, t: S) -> S {
        self.survival_curve().at(t)
    }

    /// Probability of surviving past the horizon, `s_T`.
    pub fn terminal_survival(&self) -> S {
        self.survival.last().copied().unwrap_or(S::one())
    }

    /// `max_k |s_k − (s_T + ∫_{t_k}^T p dτ)|` with trapezoidal quadrature on the grid.
    pub fn consistency_error(&self) -> S {
        let n = self.times.len();
        let half = S::lit(0.5);
        let mut tail = S::zero();
        let mut worst = S::zero();
        let s_end = self.terminal_survival();
        for k in (0..n).rev() {
            if k + 1 < n {
                tail = tail + half * (self.density[k] + self.density[k + 1]) * (self.times[k + 1] - self.times[k]);
            }
            worst = worst.max((self.survival[k] - (s_end + tail)).abs());
        }
        worst
    }
}

/// Payout-to-premium ratio `λ_t` of life insurance; negative premiums are annuities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct InsuranceModel<S: Scalar> {
    pub payout_ratio: Curve<S>,
    /// Optional bounds on the premium rate `l_t` (`min = max = 0` disables trading).
    #[serde(default)]
    pub premium_min: Option<S>,
    #[serde(default)]
    pub premium_max: Option<S>,
}

impl<S: Scalar> InsuranceModel<S> {
    pub fn new(payout_ratio: Curve<S>) -> Self {
        Self {
            payout_ratio,
            premium_min: None,
            premium_max: None,
        }
    }

    /// Actuarially fair ratio `λ_t = p_t / s_t` sampled on the mortality grid.
    pub fn fair(mortality: &MortalityModel<S>) -> Self {
        let values = mortality
            .density
            .iter()
            .zip(&mortality.survival)
            .map(|(&p, &s)| if s > S::zero() { p / s } else { S::zero() })
            .collect();
        Self::new(Curve::new(mortality.times.clone(), values))
    }

    #[must_use]
    pub fn with_premium_bounds(mut self, min: Option<S>, max: Option<S>) -> Self {
        self.premium_min = min;
        self.premium_max = max;
        self
    }

    /// True when the premium is pinned to zero.
    pub fn is_disabled(&self) -> bool {
        self.premium_min == Some(S::zero()) && self.premium_max == Some(S::zero())
    }
}

/// Deterministic income rate `y_t ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct IncomeModel<S: Scalar> {
    pub rate: Curve<S>,
}

impl<S: Scalar> IncomeModel<S> {
    pub fn constant(rate: S) -> Self {
        Self {
            rate: Curve::constant(rate),
        }
    }

    pub fn at(&self, t: S) -> S {
        self.rate.at(t)
    }
}

/// Human capital `v_t = ∫_t^T e^{−r_f(τ−t)} y_τ dτ` at each grid time.
///
/// Integrates by the trapezoidal rule on `grid` refined `refine` times per
/// interval (`refine = 1` uses the grid itself). `v` at the last grid time is 0.
pub fn human_capital<S: Scalar>(income: &IncomeModel<S>, risk_free: S, grid: &[S], refine: usize) -> Vec<S> {
    let n = grid.len();
    let mut v = vec![S::zero(); n];
    let refine = refine.max(1);
    let half = S::lit(0.5);
    for k in (0..n.saturating_sub(1)).rev() {
        // v_k = ∫_{t_k}^{t_{k+1}} e^{−r(τ−t_k)} y dτ + e^{−r(t_{k+1}−t_k)} v_{k+1}
        let (a, b) = (grid[k], grid[k + 1]);
        let dt = (b - a) / S::from_usize(refine).unwrap();
        let f = |tau: S| (-risk_free * (tau - a)).exp() * income.at(tau);
        let mut seg = S::zero();
        for j in 0..refine {
            let t0 = a + dt * S::from_usize(j).unwrap();
            seg = seg + half * dt * (f(t0) + f(t0 + dt));
        }
        v[k] = seg + (-risk_free * (b - a)).exp() * v[k + 1];
    }
    v
}
