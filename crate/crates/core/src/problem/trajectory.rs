use serde::{Deserialize, Serialize};

use crate::conic::{SolveStats, SolveStatus};
use crate::scalar::Scalar;

/// Decoded discretized plan on the grid `t_k = t_0 + h k`, `k = 0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<S: Scalar> {
    /// `K + 1` grid times
    pub times: Vec<S>,
    /// `w_k`, `K + 1` entries
    pub wealth: Vec<S>,
    /// Dollar allocations `x_k`, `K + 1` rows of `n`
    pub allocations: Vec<Vec<S>>,
    /// Consumption rates `c_k`, `K` entries
    pub consumption: Vec<S>,
    /// `θ_k = x_k / w_k`, `K + 1` rows
    pub weights: Vec<Vec<S>>,
    /// Dynamics slack `u_k ≥ 0` (wealth discarded in period k), `K` entries
    pub slack: Vec<S>,
    /// Insurance premium rates `l_k` when the insurance block is active
    pub premiums: Option<Vec<S>>,
    /// Planned asset returns `μ + ((γ−1)/2) Σ θ_k`, `K` rows
    pub planned_returns: Vec<Vec<S>>,
    /// Optimal utility of the plan (maximized objective)
    pub objective: S,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl<S: Scalar> Trajectory<S> {
    pub fn periods(&self) -> usize {
        self.consumption.len()
    }

    pub fn max_slack(&self) -> S {
        self.slack.iter().fold(S::zero(), |m, &u| m.max(u))
    }

    /// First-period policy `(c₀/w₀, θ₀)`.
    pub fn first_policy(&self) -> (S, Vec<S>) {
        (self.consumption[0] / self.wealth[0], self.weights[0].clone())
    }
}
