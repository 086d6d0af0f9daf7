//! Rewriting power cones with rational exponents as towers of second-order cones.
//!
//! For `α = p/q` and `N = 2^⌈log₂ q⌉`, `|c| ≤ a^α b^(1−α)` holds iff there is
//! `t ≥ |c|` with `t ≤ (a^p · b^(q−p) · t^(N−q))^(1/N)`. The N-fold geometric
//! mean is a binary tree of rotated cones `y² ≤ u·v`, each written as
//! `‖(2y, u − v)‖₂ ≤ u + v`.

use super::program::{AffineExpr, Cone, ConicProgram, ProgramBuilder};
use super::solve::{ClarabelBackend, ConicBackend, SolveResult, SolverSettings};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Best `p/q` with `q ≤ max_den` if it reproduces `alpha` to a few ulps.
pub fn rational_approximation<S: Scalar>(alpha: S, max_den: u64) -> Option<(u64, u64)> {
    let x = alpha.to_f64();
    if !(x > 0.0 && x < 1.0) {
        return None;
    }
    let tol = 8.0 * S::epsilon().to_f64();
    // Continued-fraction convergents.
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let ai = a as u64;
        let h2 = ai.checked_mul(h1)?.checked_add(h0)?;
        let k2 = ai.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if k1 > 0 && ((h1 as f64) / (k1 as f64) - x).abs() <= tol {
            return Some((h1, k1));
        }
        let frac = r - a;
        if frac.abs() < 1e-300 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

/// Returns an equivalent program without power cones. Original variables keep
/// their indices; auxiliaries are appended after them.
pub fn to_soc_tower<S: Scalar>(program: &ConicProgram<S>, max_den: u64) -> Result<ConicProgram<S>> {
    let mut rows: Vec<AffineExpr<S>> = program.rhs.iter().map(|&b| AffineExpr::constant(b)).collect();
    for &(i, j, v) in &program.matrix {
        rows[i].terms.push((j, -v));
    }

    let mut out = ProgramBuilder::new();
    out.add_vars(program.num_vars);
    for (j, &c) in program.objective.iter().enumerate() {
        if c != S::zero() {
            out.add_objective(j, c);
        }
    }
    out.add_objective_offset(program.objective_offset);

    for (cone, range) in program.cones.iter().zip(program.cone_ranges()) {
        let block = &rows[range];
        match *cone {
            Cone::Power3(alpha) => {
                let (p, q) = rational_approximation(alpha, max_den).ok_or_else(|| Error::Capability {
                    backend: "soc-tower".into(),
                    cone: format!("{cone:?}"),
                })?;
                emit_tower(&mut out, &block[0], &block[1], &block[2], p as usize, q as usize);
            }
            other => out.add_cone(other, block),
        }
    }
    Ok(out.finish())
}

fn emit_tower<S: Scalar>(
    out: &mut ProgramBuilder<S>,
    a: &AffineExpr<S>,
    b: &AffineExpr<S>,
    c: &AffineExpr<S>,
    p: usize,
    q: usize,
) {
    let t = out.add_var();
    let tv = AffineExpr::var(t);
    out.add_nonnegative(tv.clone().plus_expr(c, -S::one()));
    out.add_nonnegative(tv.clone().plus_expr(c, S::one()));
    out.add_nonnegative(a.clone());
    out.add_nonnegative(b.clone());

    let n = q.next_power_of_two();
    let mut level: Vec<AffineExpr<S>> = std::iter::repeat(a.clone())
        .take(p)
        .chain(std::iter::repeat(b.clone()).take(q - p))
        .chain(std::iter::repeat(tv.clone()).take(n - q))
        .collect();
    let two = S::lit(2.0);
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let (u, v) = (&pair[0], &pair[1]);
                let y = out.add_var();
                out.add_cone(
                    Cone::SecondOrder(3),
                    &[
                        u.clone().plus_expr(v, S::one()),
                        AffineExpr::term(y, two),
                        u.clone().plus_expr(v, -S::one()),
                    ],
                );
                AffineExpr::var(y)
            })
            .collect();
    }
    // t ≤ geometric mean
    out.add_nonnegative(level[0].clone().plus(t, -S::one()));
}

/// Second backend: the same interior-point solver, fed only second-order cones.
#[derive(Debug, Clone, Copy)]
pub struct SocTowerBackend {
    pub max_denominator: u64,
}

impl Default for SocTowerBackend {
    fn default() -> Self {
        Self { max_denominator: 1024 }
    }
}

impl<S: Scalar> ConicBackend<S> for SocTowerBackend {
    fn name(&self) -> &'static str {
        "soc-tower"
    }

    fn supports(&self, cone: &Cone<S>) -> bool {
        match *cone {
            Cone::Power3(a) => rational_approximation(a, self.max_denominator).is_some(),
            _ => true,
        }
    }

    fn solve_unchecked(&self, program: &ConicProgram<S>, settings: &SolverSettings<S>) -> SolveResult<S> {
        let tower = match to_soc_tower(program, self.max_denominator) {
            Ok(t) => t,
            Err(_) => {
                return SolveResult {
                    status: super::SolveStatus::Failed,
                    primal: None,
                    dual: None,
                    objective: S::nan(),
                    stats: Default::default(),
                    backend: "soc-tower".into(),
                }
            }
        };
        let mut r = ClarabelBackend.solve_unchecked(&tower, settings);
        r.backend = "soc-tower".into();
        // Duals of the tower rows do not map back onto the power-cone rows.
        r.dual = None;
        if let Some(x) = r.primal.as_mut() {
            x.truncate(program.num_vars);
            r.objective = program.objective_at(x);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolveStatus};

    #[test]
    fn rational_approximation_finds_small_fractions() {
        assert_eq!(rational_approximation(0.5f64, 64), Some((1, 2)));
        assert_eq!(rational_approximation(0.25f64, 64), Some((1, 4)));
        assert_eq!(rational_approximation(1.0f64 / 3.0, 64), Some((1, 3)));
        assert_eq!(rational_approximation(0.7f64, 64), Some((7, 10)));
        assert_eq!(rational_approximation(std::f64::consts::FRAC_1_SQRT_2, 1024), None);
        assert_eq!(rational_approximation(1.5f64, 64), None);
    }

    #[test]
    fn tower_matches_native_power_cone() {
        // max τ s.t. (4, 1, τ) ∈ P(α) for several rational α: τ* = 4^α
        for alpha in [0.5, 0.25, 0.75, 1.0 / 3.0, 0.6] {
            let mut b = ProgramBuilder::<f64>::new();
            let tau = b.add_var();
            b.add_objective(tau, -1.0);
            b.add_cone(
                Cone::Power3(alpha),
                &[AffineExpr::constant(4.0), AffineExpr::constant(1.0), AffineExpr::var(tau)],
            );
            let p = b.finish();
            let r = solve(&p, &SolverSettings::default(), &SocTowerBackend::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.primal.unwrap()[0] - 4f64.powf(alpha)).abs() < 1e-6, "alpha={alpha}");
        }
    }

    #[test]
    fn irrational_exponent_is_a_capability_error() {
        let mut b = ProgramBuilder::<f64>::new();
        let tau = b.add_var();
        b.add_objective(tau, -1.0);
        b.add_cone(
            Cone::Power3(std::f64::consts::FRAC_1_SQRT_2),
            &[AffineExpr::constant(4.0), AffineExpr::constant(1.0), AffineExpr::var(tau)],
        );
        let err = solve(&b.finish(), &SolverSettings::default(), &SocTowerBackend::default()).unwrap_err();
        assert!(matches!(err, Error::Capability { .. }));
    }
}
