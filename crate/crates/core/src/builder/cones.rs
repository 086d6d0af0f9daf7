//! Canonical cone encodings shared by the plan builder and the Markowitz solve.

use std::ops::Range;

use crate::conic::{AffineExpr, Cone, ProgramBuilder};
use crate::problem::ConstraintSet;
use crate::scalar::Scalar;

/// Rows of `Lᵀ` as sparse `(asset, coefficient)` lists, computed once per covariance.
pub type FactorRows<S> = Vec<Vec<(usize, S)>>;

/// `xᵀΣx / w ≤ s` as `‖(2Lᵀx, w − s)‖₂ ≤ w + s`.
///
/// Zero rows of `Lᵀ` are dropped, so a factor-form `L` gives a cone of
/// dimension at most `m + n + 2`.
pub fn quad_over_lin_cone<S: Scalar>(
    b: &mut ProgramBuilder<S>,
    lt_rows: &FactorRows<S>,
    x: Range<usize>,
    w: &AffineExpr<S>,
    s: &AffineExpr<S>,
) {
    let two = S::lit(2.0);
    let mut rows = Vec::with_capacity(lt_rows.len() + 2);
    rows.push(w.clone().plus_expr(s, S::one()));
    for r in lt_rows.iter().filter(|r| !r.is_empty()) {
        rows.push(AffineExpr {
            terms: r.iter().map(|&(j, v)| (x.start + j, two * v)).collect(),
            constant: S::zero(),
        });
    }
    rows.push(w.clone().plus_expr(s, -S::one()));
    b.add_cone(Cone::SecondOrder(rows.len()), &rows);
}

/// Hypograph (γ > 0) or epigraph (γ < 0) of `arg^γ` in the variable `tau`.
///
/// For `γ ∈ (0,1)` this is `(arg, 1, τ) ∈ P(γ)`, i.e. `|τ| ≤ arg^γ`; for
/// `γ < 0` it is `(τ, arg, 1) ∈ P(1/(1+|γ|))`, i.e. `τ·arg^{|γ|} ≥ 1`. In both
/// cases the objective term `(weight/γ)·τ` is the utility contribution to be
/// maximized.
pub fn power_utility_hypograph<S: Scalar>(b: &mut ProgramBuilder<S>, gamma: S, arg: AffineExpr<S>, tau: usize) {
    let one = AffineExpr::constant(S::one());
    if gamma > S::zero() {
        b.add_cone(Cone::Power3(gamma), &[arg, one, AffineExpr::var(tau)]);
    } else {
        let alpha = S::one() / (S::one() - gamma);
        b.add_cone(Cone::Power3(alpha), &[AffineExpr::var(tau), arg, one]);
    }
}

/// `{(x, w) : x/w ∈ Θ}` written with `w` multiplying every constant.
pub fn perspective_of_theta<S: Scalar>(
    b: &mut ProgramBuilder<S>,
    theta: &ConstraintSet<S>,
    x: Range<usize>,
    w: &AffineExpr<S>,
) {
    let lin = |coef: &[S], scale: S| AffineExpr {
        terms: coef
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != S::zero())
            .map(|(i, &v)| (x.start + i, scale * v))
            .collect(),
        constant: S::zero(),
    };
    for e in &theta.eq {
        b.add_equality(lin(&e.a, S::one()).plus_expr(w, -e.b));
    }
    for e in &theta.ineq {
        b.add_nonnegative(lin(&e.g, -S::one()).plus_expr(w, e.h));
    }
    for c in &theta.socs {
        let mut rows = Vec::with_capacity(c.p.rows() + 1);
        rows.push(lin(&c.q, S::one()).plus_expr(w, c.r));
        for i in 0..c.p.rows() {
            rows.push(lin(c.p.row(i), S::one()));
        }
        b.add_cone(Cone::SecondOrder(rows.len()), &rows);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, ClarabelBackend, SolveStatus, SolverSettings};
    use crate::linalg::Matrix;
    use crate::problem::{expand_covariance, Covariance};

    fn identity_rows(n: usize) -> FactorRows<f64> {
        expand_covariance(&Covariance::Dense(Matrix::identity(n))).unwrap().transpose_rows()
    }

    #[test]
    fn quad_over_lin_is_tight_at_the_minimum() {
        // Σ = I, x = (3,4), w = 5: minimal s = 25/5 = 5
        let mut b = ProgramBuilder::new();
        let x = b.add_vars(2);
        let s = b.add_var();
        b.add_equality(AffineExpr::var(x.start).plus_const(-3.0));
        b.add_equality(AffineExpr::var(x.start + 1).plus_const(-4.0));
        quad_over_lin_cone(&mut b, &identity_rows(2), x, &AffineExpr::constant(5.0), &AffineExpr::var(s));
        b.add_objective(s, 1.0);
        let r = solve(&b.finish(), &SolverSettings::default(), &ClarabelBackend).unwrap();
        let p = r.primal.unwrap();
        assert!((p[s] - 5.0).abs() < 1e-7);
        let lhs = (36.0 + 64.0 + (5.0 - p[s]).powi(2)).sqrt();
        assert!((lhs - (5.0 + p[s])).abs() < 1e-6);
    }

    #[test]
    fn power_hypograph_extremes() {
        for (gamma, c, want) in [(0.5f64, 4.0, 2.0), (-1.0, 2.0, 0.5), (0.3, 1.0, 1.0), (-2.0, 1.0, 1.0)] {
            let mut b = ProgramBuilder::new();
            let tau = b.add_var();
            power_utility_hypograph(&mut b, gamma, AffineExpr::constant(c), tau);
            // maximize τ/γ
            b.add_objective(tau, -1.0 / gamma);
            let r = solve(&b.finish(), &SolverSettings::default(), &ClarabelBackend).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.primal.unwrap()[tau] - want).abs() < 1e-7, "γ={gamma} c={c}");
        }
    }

    #[test]
    fn perspective_scales_constants_by_wealth() {
        let set = ConstraintSet::long_only(2).with_soc(crate::problem::SocConstraint {
            p: Matrix::identity(2),
            q: vec![0.0, 0.0],
            r: 0.2,
        });
        let mut b = ProgramBuilder::<f64>::new();
        let x = b.add_vars(2);
        perspective_of_theta(&mut b, &set, x, &AffineExpr::constant(3.0));
        let p = b.finish();
        // budget row: 1ᵀx = 3
        assert_eq!(p.rhs[0], -3.0);
        // long-only rows carry no wealth term
        assert_eq!(&p.rhs[1..3], &[0.0, 0.0]);
        // risk cap ‖x‖ ≤ 0.6
        assert!((p.rhs[3] - 0.6).abs() < 1e-15);
    }
}
