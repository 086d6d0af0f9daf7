use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};

/// `aᵀθ = b`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct LinearEq<S: Scalar> {
    pub a: Vec<S>,
    pub b: S,
}

/// `gᵀθ ≤ h`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct LinearIneq<S: Scalar> {
    pub g: Vec<S>,
    pub h: S,
}

/// `‖P θ‖₂ ≤ qᵀθ + r`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct SocConstraint<S: Scalar> {
    pub p: Matrix<S>,
    pub q: Vec<S>,
    pub r: S,
}

/// Convex set Θ of admissible fractional allocations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct ConstraintSet<S: Scalar> {
    #[serde(default)]
    pub eq: Vec<LinearEq<S>>,
    #[serde(default)]
    pub ineq: Vec<LinearIneq<S>>,
    #[serde(default)]
    pub socs: Vec<SocConstraint<S>>,
}

impl<S: Scalar> ConstraintSet<S> {
    /// `{θ | 1ᵀθ = 1}`
    pub fn budget(n: usize) -> Self {
        Self {
            eq: vec![LinearEq {
                a: vec![S::one(); n],
                b: S::one(),
            }],
            ..Self::default()
        }
    }

    /// Budget plus `θ ≥ 0`.
    pub fn long_only(n: usize) -> Self {
        let mut s = Self::budget(n);
        for i in 0..n {
            let mut g = vec![S::zero(); n];
            g[i] = -S::one();
            s.ineq.push(LinearIneq { g, h: S::zero() });
        }
        s
    }

    /// The single point `θ = target` (target must sum to one).
    pub fn fixed(target: &[S]) -> Self {
        let n = target.len();
        let mut s = Self::budget(n);
        for (i, &v) in target.iter().enumerate().skip(1) {
            let mut a = vec![S::zero(); n];
            a[i] = S::one();
            s.eq.push(LinearEq { a, b: v });
        }
        s
    }

    #[must_use]
    pub fn with_soc(mut self, c: SocConstraint<S>) -> Self {
        self.socs.push(c);
        self
    }

    #[must_use]
    pub fn with_ineq(mut self, g: Vec<S>, h: S) -> Self {
        self.ineq.push(LinearIneq { g, h });
        self
    }

    fn is_budget_row(row: &LinearEq<S>) -> bool {
        let Some(&c) = row.a.first() else { return false };
        c != S::zero() && row.a.iter().all(|&v| v == c) && row.b == c
    }

    pub fn has_budget(&self) -> bool {
        self.eq.iter().any(Self::is_budget_row)
    }

    /// Inserts `1ᵀθ = 1` unless an equivalent row is present.
    #[must_use]
    pub fn with_budget(mut self, n: usize) -> Self {
        if !self.has_budget() {
            self.eq.insert(
                0,
                LinearEq {
                    a: vec![S::one(); n],
                    b: S::one(),
                },
            );
        }
        self
    }

    /// True for exactly `{θ | 1ᵀθ = 1}`.
    pub fn is_simple_budget(&self) -> bool {
        self.ineq.is_empty() && self.socs.is_empty() && !self.eq.is_empty() && self.eq.iter().all(Self::is_budget_row)
    }

    /// Largest constraint violation at `theta` (zero inside Θ).
    pub fn max_violation(&self, theta: &[S]) -> S {
        let mut v = S::zero();
        for e in &self.eq {
            v = v.max((dot(&e.a, theta) - e.b).abs());
        }
        for i in &self.ineq {
            v = v.max(dot(&i.g, theta) - i.h);
        }
        for c in &self.socs {
            let px = c.p.matvec(theta);
            v = v.max(dot(&px, &px).sqrt() - dot(&c.q, theta) - c.r);
        }
        v.max(S::zero())
    }

    pub fn contains(&self, theta: &[S], tol: S) -> bool {
        self.max_violation(theta) <= tol
    }

    /// Dimension problems, as `(constraint label, found length)`.
    pub fn dimension_errors(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (i, e) in self.eq.iter().enumerate() {
            if e.a.len() != n {
                out.push(format!("eq[{i}].a has length {}, expected {n}", e.a.len()));
            }
        }
        for (i, e) in self.ineq.iter().enumerate() {
            if e.g.len() != n {
                out.push(format!("ineq[{i}].g has length {}, expected {n}", e.g.len()));
            }
        }
        for (i, c) in self.socs.iter().enumerate() {
            if c.p.cols() != n || c.q.len() != n {
                out.push(format!("socs[{i}] has P with {} columns and q of length {}, expected {n}", c.p.cols(), c.q.len()));
            }
        }
        out
    }
}
