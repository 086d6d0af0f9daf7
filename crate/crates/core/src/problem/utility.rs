use serde::{Deserialize, Serialize};

use super::curve::Curve;
use crate::scalar::Scalar;

/// CRRA preferences `c^γ/γ` with bequest weight β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct UtilityParams<S: Scalar> {
    /// Risk aversion exponent, `γ < 1`, `γ ≠ 0`.
    pub gamma: S,
    /// Bequest weight, `β > 0`.
    pub beta: S,
    /// Utility exponent when it differs from the risk exponent (Epstein–Zin);
    /// `1/ρ` is the elasticity of intertemporal substitution.
    #[serde(default)]
    pub rho: Option<S>,
    /// Consumption utility discount `α_t > 0`.
    #[serde(default)]
    pub discount: Option<Curve<S>>,
}

impl<S: Scalar> UtilityParams<S> {
    pub fn new(gamma: S, beta: S) -> Self {
        Self {
            gamma,
            beta,
            rho: None,
            discount: None,
        }
    }

    /// Exponent used in the objective (ρ if set, otherwise γ).
    pub fn utility_exponent(&self) -> S {
        self.rho.unwrap_or(self.gamma)
    }

    pub fn discount_at(&self, t: S) -> S {
        self.discount.as_ref().map_or(S::one(), |d| d.at(t))
    }

    /// `x^γ/γ`
    pub fn crra(&self, x: S) -> S {
        crra(x, self.gamma)
    }
}

/// `x^e / e`, with `0^e/e = −∞` for negative exponents.
pub fn crra<S: Scalar>(x: S, e: S) -> S {
    if x <= S::zero() {
        return if e > S::zero() { S::zero() } else { S::neg_infinity() };
    }
    x.powf(e) / e
}
