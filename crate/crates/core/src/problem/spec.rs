use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curve::Curve;
use super::life::{IncomeModel, InsuranceModel, MortalityModel};
use super::market::{Covariance, MarketModel};
use super::theta::ConstraintSet;
use super::utility::UtilityParams;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const SPEC_VERSION: u32 = 1;

/// `c_t ≤ η y_t + dᵀx_t`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct SpendingLimit<S: Scalar> {
    pub eta: S,
    /// Dividend yields `d`; empty means zero.
    #[serde(default)]
    pub dividend: Vec<S>,
}

/// Floor on the dollar holding of one (cash) asset: `(x_t)_i ≥ floor_t` and/or
/// `(x_t)_i ≥ multiple · c_t` (emergency fund, rates per year).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct MinCash<S: Scalar> {
    pub asset: usize,
    #[serde(default)]
    pub floor: Option<Curve<S>>,
    #[serde(default)]
    pub consumption_multiple: Option<S>,
}

/// Time-varying market parameters: mean vectors sampled at `times` (linear
/// interpolation) and an optional covariance scale curve, `Σ_t = scale_t · Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct TimeVarying<S: Scalar> {
    pub times: Vec<S>,
    pub mu: Vec<Vec<S>>,
    #[serde(default)]
    pub cov_scale: Option<Curve<S>>,
}

impl<S: Scalar> TimeVarying<S> {
    pub fn mu_at(&self, t: S) -> Vec<S> {
        let n = self.mu.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| Curve::new(self.times.clone(), self.mu.iter().map(|m| m[i]).collect()).at(t))
            .collect()
    }

    pub fn cov_scale_at(&self, t: S) -> S {
        self.cov_scale.as_ref().map_or(S::one(), |c| c.at(t))
    }
}

/// Optional blocks layered on the base problem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Extensions<S: Scalar> {
    #[serde(default)]
    pub time_varying: Option<TimeVarying<S>>,
    #[serde(default)]
    pub mortality: Option<MortalityModel<S>>,
    #[serde(default)]
    pub insurance: Option<InsuranceModel<S>>,
    #[serde(default)]
    pub income: Option<IncomeModel<S>>,
    /// Minimum consumption `c_t ≥ c_min_t`.
    #[serde(default)]
    pub consumption_floor: Option<Curve<S>>,
    #[serde(default)]
    pub spending_limit: Option<SpendingLimit<S>>,
    #[serde(default)]
    pub min_cash: Option<MinCash<S>>,
    /// Maximize the minimum consumption instead of summed consumption utility.
    #[serde(default)]
    pub max_min_consumption: bool,
}

impl<S: Scalar> Extensions<S> {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// True when the optimal plan scales linearly with initial wealth
    /// (no absolute amounts: income, floors, spending limits on income,
    /// nonzero premium bounds).
    pub fn is_wealth_homogeneous(&self) -> bool {
        let zero = |v: Option<S>| v.is_none_or(|x| x == S::zero());
        self.income.is_none()
            && self.consumption_floor.is_none()
            && self.min_cash.as_ref().is_none_or(|m| m.floor.is_none())
            && self.spending_limit.is_none()
            && self.insurance.as_ref().is_none_or(|i| zero(i.premium_min) && zero(i.premium_max))
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct ProblemSpec<S: Scalar> {
    #[serde(default = "default_version")]
    pub version: u32,
    pub market: MarketModel<S>,
    pub utility: UtilityParams<S>,
    /// Θ; the budget row `1ᵀθ = 1` is inserted if absent.
    #[serde(default)]
    pub theta_set: ConstraintSet<S>,
    /// Horizon `T` in years.
    pub horizon: S,
    pub w_init: S,
    #[serde(default)]
    pub extensions: Extensions<S>,
}

fn default_version() -> u32 {
    SPEC_VERSION
}

impl<S: Scalar> ProblemSpec<S> {
    pub fn new(market: MarketModel<S>, utility: UtilityParams<S>, horizon: S, w_init: S) -> Self {
        let n = market.num_assets();
        Self {
            version: SPEC_VERSION,
            market,
            utility,
            theta_set: ConstraintSet::budget(n),
            horizon,
            w_init,
            extensions: Extensions::default(),
        }
    }

    /// Two assets, μ = (0.10, 0.02), Σ = 0.04·I, γ = 0.5, β = 1, T = 10, w₀ = 1.
    pub fn reference() -> Self {
        Self::new(
            MarketModel::new(
                vec![S::lit(0.10), S::lit(0.02)],
                Covariance::Dense(Matrix::diagonal(&[S::lit(0.04), S::lit(0.04)])),
            ),
            UtilityParams::new(S::lit(0.5), S::one()),
            S::lit(10.0),
            S::one(),
        )
    }

    pub fn num_assets(&self) -> usize {
        self.market.num_assets()
    }

    /// Θ with the budget row guaranteed.
    pub fn theta(&self) -> ConstraintSet<S> {
        self.theta_set.clone().with_budget(self.num_assets())
    }

    #[must_use]
    pub fn with_w_init(mut self, w: S) -> Self {
        self.w_init = w;
        self
    }

    #[must_use]
    pub fn with_extensions(mut self, e: Extensions<S>) -> Self {
        self.extensions = e;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
