//! Sparse triplet text format for offline inspection of cone programs.
//!
//! ```text
//! conic-program v1
//! vars <n>
//! rows <m>
//! offset <c0>
//! objective <k>
//! <col> <value>            (k lines, nonzero entries only)
//! cones <count>
//! zero <d> | nonneg <d> | soc <d> | power <alpha>
//! matrix <nnz>
//! <row> <col> <value>      (nnz lines, column-major order)
//! rhs <k>
//! <row> <value>            (k lines, nonzero entries only)
//! end
//! ```
//!
//! Values use the shortest round-trip exponent notation, so parsing a written
//! program reproduces it exactly.

use std::fmt::Write as _;

use super::program::{Cone, ConicProgram};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "conic-program v1";

impl<S: Scalar> ConicProgram<S> {
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.nnz() + self.num_rows()) + 64);
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "vars {}", self.num_vars);
        let _ = writeln!(out, "rows {}", self.num_rows());
        let _ = writeln!(out, "offset {:e}", self.objective_offset);
        let obj: Vec<_> = self.objective.iter().enumerate().filter(|(_, v)| **v != S::zero()).collect();
        let _ = writeln!(out, "objective {}", obj.len());
        for (j, v) in obj {
            let _ = writeln!(out, "{j} {v:e}");
        }
        let _ = writeln!(out, "cones {}", self.cones.len());
        for c in &self.cones {
            let _ = match c {
                Cone::Zero(d) => writeln!(out, "zero {d}"),
                Cone::Nonnegative(d) => writeln!(out, "nonneg {d}"),
                Cone::SecondOrder(d) => writeln!(out, "soc {d}"),
                Cone::Power3(a) => writeln!(out, "power {a:e}"),
            };
        }
        let _ = writeln!(out, "matrix {}", self.nnz());
        for (i, j, v) in &self.matrix {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        let rhs: Vec<_> = self.rhs.iter().enumerate().filter(|(_, v)| **v != S::zero()).collect();
        let _ = writeln!(out, "rhs {}", rhs.len());
        for (i, v) in rhs {
            let _ = writeln!(out, "{i} {v:e}");
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()),
            line: 0,
        };
        let head = lines.next_line()?;
        if head.trim() != MAGIC {
            return Err(lines.err(format!("expected `{MAGIC}` header")));
        }
        let num_vars: usize = lines.keyed("vars")?;
        let num_rows: usize = lines.keyed("rows")?;
        let offset: S = lines.keyed("offset")?;

        let mut objective = vec![S::zero(); num_vars];
        for _ in 0..lines.keyed::<usize>("objective")? {
            let (j, v): (usize, S) = lines.pair()?;
            *objective.get_mut(j).ok_or_else(|| lines.err("objective index out of range"))? = v;
        }

        let count: usize = lines.keyed("cones")?;
        let mut cones = Vec::with_capacity(count);
        for _ in 0..count {
            let l = lines.next_line()?;
            let mut it = l.split_whitespace();
            let kind = it.next().unwrap_or_default();
            let arg = it.next().ok_or_else(|| lines.err("cone without size"))?;
            let cone = match kind {
                "zero" => Cone::Zero(lines.parse(arg)?),
                "nonneg" => Cone::Nonnegative(lines.parse(arg)?),
                "soc" => Cone::SecondOrder(lines.parse(arg)?),
                "power" => Cone::Power3(lines.parse(arg)?),
                other => return Err(lines.err(format!("unknown cone `{other}`"))),
            };
            cones.push(cone);
        }

        let nnz: usize = lines.keyed("matrix")?;
        let mut matrix = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let l = lines.next_line()?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(lines.err("matrix entry needs `row col value`"));
            }
            matrix.push((lines.parse(f[0])?, lines.parse(f[1])?, lines.parse(f[2])?));
        }

        let mut rhs = vec![S::zero(); num_rows];
        for _ in 0..lines.keyed::<usize>("rhs")? {
            let (i, v): (usize, S) = lines.pair()?;
            *rhs.get_mut(i).ok_or_else(|| lines.err("rhs index out of range"))? = v;
        }
        if lines.next_line()?.trim() != "end" {
            return Err(lines.err("expected `end`"));
        }

        let program = ConicProgram {
            num_vars,
            objective,
            objective_offset: offset,
            matrix,
            rhs,
            cones,
        };
        program.check().map_err(|m| Error::Parse { line: lines.line, message: m })?;
        Ok(program)
    }
}

struct Lines<'a, I: Iterator<Item = (usize, &'a str)>> {
    inner: I,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((n, l)) => {
                self.line = n + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let l = self.next_line()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => self.parse(v.trim()),
            _ => Err(self.err(format!("expected `{key} <value>`"))),
        }
    }

    fn pair<A: std::str::FromStr, B: std::str::FromStr>(&mut self) -> Result<(A, B)> {
        let l = self.next_line()?;
        match l.split_once(' ') {
            Some((a, b)) => Ok((self.parse(a)?, self.parse(b.trim())?)),
            None => Err(self.err("expected two fields")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::program::{AffineExpr, ProgramBuilder};
    use super::*;

    fn sample() -> ConicProgram<f64> {
        let mut b = ProgramBuilder::new();
        let x = b.add_vars(3);
        b.add_objective(x.start, 1.0 / 3.0);
        b.add_objective_offset(-0.125);
        b.add_equality(AffineExpr::constant(1.0).plus(x.start, -1.0));
        b.add_cone(
            super::super::Cone::SecondOrder(3),
            &[AffineExpr::var(2), AffineExpr::term(0, 2.0), AffineExpr::term(1, 1e-300)],
        );
        b.add_cone(
            super::super::Cone::Power3(0.37),
            &[AffineExpr::var(0), AffineExpr::constant(1.0), AffineExpr::var(1)],
        );
        b.finish()
    }

    #[test]
    fn round_trip_is_identity() {
        let p = sample();
        let text = p.to_text();
        assert_eq!(ConicProgram::from_text(&text).unwrap(), p);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = sample().to_text().replace("soc 3", "soc x");
        match ConicProgram::<f64>::from_text(&text) {
            Err(Error::Parse { line, .. }) => assert!(line > 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ConicProgram::<f64>::from_text("garbage").is_err());
    }
}
