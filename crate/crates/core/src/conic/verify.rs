use serde::{Deserialize, Serialize};

use super::program::{Cone, ConicProgram};
use super::solve::SolveResult;
use crate::scalar::{dot, norm_inf, Scalar};

/// Scaled optimality residuals of a returned point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ResidualReport<S: Scalar> {
    /// `max cone violation of b − Ax / (1 + ‖b‖∞)`
    pub primal: S,
    /// `(‖Aᵀz + c‖∞ + dual cone violation) / (1 + ‖c‖∞)`; absent without duals.
    pub dual: Option<S>,
    /// `|cᵀx + bᵀz| / (1 + min(|cᵀx|, |bᵀz|))`; absent without duals.
    pub gap: Option<S>,
}

impl<S: Scalar> ResidualReport<S> {
    pub fn max(&self) -> S {
        self.primal
            .max(self.dual.unwrap_or(S::zero()))
            .max(self.gap.unwrap_or(S::zero()))
    }
}

/// Distance-style violation of `s ∈ cone` (zero iff member).
pub fn cone_violation<S: Scalar>(cone: &Cone<S>, s: &[S]) -> S {
    match *cone {
        Cone::Zero(_) => norm_inf(s),
        Cone::Nonnegative(_) => s.iter().fold(S::zero(), |m, &v| m.max(-v)),
        Cone::SecondOrder(_) => (norm2(&s[1..]) - s[0]).max(S::zero()),
        Cone::Power3(alpha) => {
            let neg = (-s[0]).max(-s[1]).max(S::zero());
            let mean = s[0].max(S::zero()).powf(alpha) * s[1].max(S::zero()).powf(S::one() - alpha);
            neg.max(s[2].abs() - mean)
        }
    }
}

/// Violation of `z ∈ cone*`.
pub fn dual_cone_violation<S: Scalar>(cone: &Cone<S>, z: &[S]) -> S {
    match *cone {
        Cone::Zero(_) => S::zero(),
        Cone::Nonnegative(_) | Cone::SecondOrder(_) => cone_violation(cone, z),
        Cone::Power3(alpha) => {
            let neg = (-z[0]).max(-z[1]).max(S::zero());
            let mean = (z[0].max(S::zero()) / alpha).powf(alpha)
                * (z[1].max(S::zero()) / (S::one() - alpha)).powf(S::one() - alpha);
            neg.max(z[2].abs() - mean)
        }
    }
}

fn norm2<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

/// Residual report for `result`, or `None` when it carries no primal point.
pub fn verify<S: Scalar>(program: &ConicProgram<S>, result: &SolveResult<S>) -> Option<ResidualReport<S>> {
    let x = result.primal.as_ref()?;
    let s = program.slack_at(x);
    let ranges = program.cone_ranges();
    let primal = ranges
        .iter()
        .zip(&program.cones)
        .fold(S::zero(), |m, (r, c)| m.max(cone_violation(c, &s[r.clone()])))
        / (S::one() + norm_inf(&program.rhs));

    let (dual, gap) = match &result.dual {
        Some(z) if z.len() == program.num_rows() => {
            let mut r = program.tr_mul(z);
            for (ri, &ci) in r.iter_mut().zip(&program.objective) {
                *ri = *ri + ci;
            }
            let cone_v = ranges
                .iter()
                .zip(&program.cones)
                .fold(S::zero(), |m, (rg, c)| m.max(dual_cone_violation(c, &z[rg.clone()])));
            let dual = (norm_inf(&r) + cone_v) / (S::one() + norm_inf(&program.objective));
            let pobj = dot(&program.objective, x);
            let dobj = -dot(&program.rhs, z);
            let gap = (pobj - dobj).abs() / (S::one() + pobj.abs().min(dobj.abs()));
            (Some(dual), Some(gap))
        }
        _ => (None, None),
    };
    Some(ResidualReport { primal, dual, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, AffineExpr, ClarabelBackend, ProgramBuilder, SolveStatus, SolverSettings};

    fn small_socp() -> ConicProgram<f64> {
        // min t + x  s.t.  ‖(x − 1, 2)‖ ≤ t, x ≥ 0
        let mut b = ProgramBuilder::new();
        let t = b.add_var();
        let x = b.add_var();
        b.add_objective(t, 1.0);
        b.add_objective(x, 1.0);
        b.add_cone(
            Cone::SecondOrder(3),
            &[AffineExpr::var(t), AffineExpr::var(x).plus_const(-1.0), AffineExpr::constant(2.0)],
        );
        b.add_nonnegative(AffineExpr::var(x));
        b.finish()
    }

    #[test]
    fn optimal_point_has_small_residuals() {
        let p = small_socp();
        let r = solve(&p, &SolverSettings::default(), &ClarabelBackend).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let rep = verify(&p, &r).unwrap();
        assert!(rep.max() <= 1e-6, "{rep:?}");
    }

    #[test]
    fn perturbed_point_is_flagged() {
        let p = small_socp();
        let mut r = solve(&p, &SolverSettings::default(), &ClarabelBackend).unwrap();
        r.primal.as_mut().unwrap()[0] -= 1e-2;
        assert!(verify(&p, &r).unwrap().primal >= 1e-3);
    }

    #[test]
    fn power_cone_membership() {
        let c = Cone::Power3(0.5);
        assert_eq!(cone_violation(&c, &[4.0, 1.0, 2.0]), 0.0);
        assert!(cone_violation(&c, &[4.0, 1.0, 2.1]) > 0.09);
        assert!(cone_violation(&c, &[-1.0, 1.0, 0.0]) > 0.0);
    }
}
