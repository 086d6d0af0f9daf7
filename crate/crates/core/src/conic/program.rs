use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// One block of the cone product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum Cone<S: Scalar> {
    /// `{0}ᵈ` (equalities)
    Zero(usize),
    /// `ℝ₊ᵈ`
    Nonnegative(usize),
    /// `{(t, u) : ‖u‖₂ ≤ t}` of total dimension `d`
    SecondOrder(usize),
    /// `{(a, b, c) : a^α b^(1−α) ≥ |c|, a, b ≥ 0}`
    Power3(S),
}

impl<S: Scalar> Cone<S> {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonnegative(d) | Cone::SecondOrder(d) => d,
            Cone::Power3(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::Nonnegative(_) => "nonnegative",
            Cone::SecondOrder(_) => "second-order",
            Cone::Power3(_) => "power",
        }
    }
}

/// `constant + Σ coef · x[col]`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr<S: Scalar> {
    pub terms: Vec<(usize, S)>,
    pub constant: S,
}

impl<S: Scalar> AffineExpr<S> {
    pub fn zero() -> Self {
        Self {
            terms: Vec::new(),
            constant: S::zero(),
        }
    }

    pub fn constant(c: S) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(col: usize) -> Self {
        Self::zero().plus(col, S::one())
    }

    pub fn term(col: usize, coef: S) -> Self {
        Self::zero().plus(col, coef)
    }

    #[must_use]
    pub fn plus(mut self, col: usize, coef: S) -> Self {
        self.terms.push((col, coef));
        self
    }

    #[must_use]
    pub fn plus_const(mut self, c: S) -> Self {
        self.constant = self.constant + c;
        self
    }

    #[must_use]
    pub fn plus_expr(mut self, other: &Self, scale: S) -> Self {
        self.terms.extend(other.terms.iter().map(|&(j, v)| (j, v * scale)));
        self.constant = self.constant + other.constant * scale;
        self
    }

    pub fn eval(&self, x: &[S]) -> S {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(j, v)| acc + v * x[j])
    }
}

/// Standard-form cone program: minimize `cᵀx + c₀` subject to `b − A x ∈ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<S: Scalar> {
    pub num_vars: usize,
    pub objective: Vec<S>,
    pub objective_offset: S,
    /// `A` as `(row, col, value)` triplets, sorted by column then row, no duplicates
    /// and no stored zeros.
    pub matrix: Vec<(usize, usize, S)>,
    pub rhs: Vec<S>,
    pub cones: Vec<Cone<S>>,
}

impl<S: Scalar> ConicProgram<S> {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.len()
    }

    /// `b − A x`
    pub fn slack_at(&self, x: &[S]) -> Vec<S> {
        let mut s = self.rhs.clone();
        for &(i, j, v) in &self.matrix {
            s[i] = s[i] - v * x[j];
        }
        s
    }

    /// `Aᵀ z`
    pub fn tr_mul(&self, z: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.num_vars];
        for &(i, j, v) in &self.matrix {
            out[j] = out[j] + v * z[i];
        }
        out
    }

    pub fn objective_at(&self, x: &[S]) -> S {
        crate::scalar::dot(&self.objective, x) + self.objective_offset
    }

    /// Checks the structural invariants: cone dimensions sum to the row count,
    /// power exponents lie in (0, 1), indices in range, no stored zeros.
    pub fn check(&self) -> Result<(), String> {
        let dims: usize = self.cones.iter().map(Cone::dim).sum();
        if dims != self.num_rows() {
            return Err(format!("cone dimensions sum to {dims}, program has {} rows", self.num_rows()));
        }
        if self.objective.len() != self.num_vars {
            return Err("objective length differs from variable count".into());
        }
        for c in &self.cones {
            match *c {
                Cone::Power3(a) if !(a > S::zero() && a < S::one()) => {
                    return Err(format!("power cone exponent {a} outside (0, 1)"));
                }
                Cone::SecondOrder(0) => return Err("empty second-order cone".into()),
                _ => {}
            }
        }
        for &(i, j, v) in &self.matrix {
            if i >= self.num_rows() || j >= self.num_vars {
                return Err(format!("entry ({i}, {j}) out of range"));
            }
            if v == S::zero() {
                return Err(format!("explicit zero stored at ({i}, {j})"));
            }
        }
        Ok(())
    }

    /// Row ranges of each cone block, in order.
    pub fn cone_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.cones
            .iter()
            .map(|c| {
                let r = start..start + c.dim();
                start = r.end;
                r
            })
            .collect()
    }
}

/// Incremental assembly of a [`ConicProgram`] from affine rows.
#[derive(Debug, Clone)]
pub struct ProgramBuilder<S: Scalar> {
    num_vars: usize,
    objective: Vec<S>,
    objective_offset: S,
    triplets: Vec<(usize, usize, S)>,
    rhs: Vec<S>,
    cones: Vec<Cone<S>>,
}

impl<S: Scalar> Default for ProgramBuilder<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ProgramBuilder<S> {
    pub fn new() -> Self {
        Self {
            num_vars: 0,
            objective: Vec::new(),
            objective_offset: S::zero(),
            triplets: Vec::new(),
            rhs: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn add_var(&mut self) -> usize {
        self.add_vars(1).start
    }

    pub fn add_vars(&mut self, count: usize) -> Range<usize> {
        let r = self.num_vars..self.num_vars + count;
        self.num_vars += count;
        self.objective.resize(self.num_vars, S::zero());
        r
    }

    /// Adds `coef · x[col]` to the (minimized) objective.
    pub fn add_objective(&mut self, col: usize, coef: S) {
        self.objective[col] = self.objective[col] + coef;
    }

    pub fn add_objective_offset(&mut self, c: S) {
        self.objective_offset = self.objective_offset + c;
    }

    /// Appends the constraint `(rows[0](x), …, rows[d−1](x)) ∈ cone`.
    pub fn add_cone(&mut self, cone: Cone<S>, rows: &[AffineExpr<S>]) {
        assert_eq!(cone.dim(), rows.len(), "cone dimension / row count mismatch");
        if rows.is_empty() {
            return;
        }
        for e in rows {
            let i = self.rhs.len();
            for &(j, v) in &e.terms {
                assert!(j < self.num_vars, "row references undeclared column {j}");
                self.triplets.push((i, j, -v));
            }
            self.rhs.push(e.constant);
        }
        match (self.cones.last_mut(), cone) {
            (Some(Cone::Zero(d)), Cone::Zero(k)) | (Some(Cone::Nonnegative(d)), Cone::Nonnegative(k)) => *d += k,
            _ => self.cones.push(cone),
        }
    }

    pub fn add_equality(&mut self, e: AffineExpr<S>) {
        self.add_cone(Cone::Zero(1), &[e]);
    }

    pub fn add_nonnegative(&mut self, e: AffineExpr<S>) {
        self.add_cone(Cone::Nonnegative(1), &[e]);
    }

    pub fn finish(self) -> ConicProgram<S> {
        let mut t = self.triplets;
        t.sort_unstable_by_key(|&(i, j, _)| (j, i));
        let mut matrix: Vec<(usize, usize, S)> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            match matrix.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 = last.2 + v,
                _ => matrix.push((i, j, v)),
            }
        }
        matrix.retain(|&(_, _, v)| v != S::zero());
        ConicProgram {
            num_vars: self.num_vars,
            objective: self.objective,
            objective_offset: self.objective_offset,
            matrix,
            rhs: self.rhs,
            cones: self.cones,
        }
    }
}
