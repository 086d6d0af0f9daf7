use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use super::program::{Cone, ConicProgram};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped near a solution without meeting full tolerances.
    Inaccurate,
    Failed,
}

impl SolveStatus {
    pub fn has_primal(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolverSettings<S: Scalar> {
    pub tol_feas: S,
    pub tol_gap_abs: S,
    pub tol_gap_rel: S,
    pub max_iter: u32,
    /// Row/column equilibration before solving. When enabled and the solve ends
    /// short of optimal, the Clarabel backend retries once without it.
    pub equilibrate: bool,
    /// Seconds; `None` means no limit.
    pub time_limit: Option<f64>,
    pub verbose: bool,
}

impl<S: Scalar> Default for SolverSettings<S> {
    fn default() -> Self {
        Self::with_tolerance(S::lit(1e-8))
    }
}

impl<S: Scalar> SolverSettings<S> {
    pub fn with_tolerance(tol: S) -> Self {
        Self {
            tol_feas: tol,
            tol_gap_abs: tol,
            tol_gap_rel: tol,
            max_iter: 200,
            equilibrate: true,
            time_limit: None,
            verbose: false,
        }
    }

    /// Default tolerances, relaxed to 1e-6 for universes of 500 assets or more.
    pub fn for_assets(n: usize) -> Self {
        if n >= 500 {
            Self::with_tolerance(S::lit(1e-6))
        } else {
            Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u32,
    /// Wall time in seconds, including setup and factorization.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolveResult<S: Scalar> {
    pub status: SolveStatus,
    /// Present iff `status.has_primal()`.
    pub primal: Option<Vec<S>>,
    pub dual: Option<Vec<S>>,
    /// Objective `cᵀx + c₀` of the returned point (NaN when absent).
    pub objective: S,
    pub stats: SolveStats,
    pub backend: String,
}

impl<S: Scalar> SolveResult<S> {
    fn failed(backend: &str, status: SolveStatus, stats: SolveStats) -> Self {
        Self {
            status,
            primal: None,
            dual: None,
            objective: S::nan(),
            stats,
            backend: backend.to_string(),
        }
    }
}

/// A solver able to handle (a subset of) the cone types.
pub trait ConicBackend<S: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports(&self, cone: &Cone<S>) -> bool;

    /// Solves without the capability check done by [`solve`].
    fn solve_unchecked(&self, program: &ConicProgram<S>, settings: &SolverSettings<S>) -> SolveResult<S>;
}

/// Backends selectable by name (`--backend`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Interior point with native power cones.
    #[default]
    Clarabel,
    /// Power cones rewritten as second-order towers before solving.
    SocTower,
}

impl BackendKind {
    pub fn backend<S: Scalar>(self) -> Box<dyn ConicBackend<S>> {
        match self {
            BackendKind::Clarabel => Box::new(ClarabelBackend),
            BackendKind::SocTower => Box::new(super::tower::SocTowerBackend::default()),
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clarabel" => Ok(Self::Clarabel),
            "soc-tower" | "socp" => Ok(Self::SocTower),
            other => Err(format!("unknown backend `{other}` (expected clarabel or soc-tower)")),
        }
    }
}

/// Solves `program` with `backend` after checking that every cone is supported.
pub fn solve<S: Scalar>(
    program: &ConicProgram<S>,
    settings: &SolverSettings<S>,
    backend: &dyn ConicBackend<S>,
) -> Result<SolveResult<S>> {
    program
        .check()
        .map_err(|m| Error::Dimension(format!("malformed program: {m}")))?;
    if let Some(c) = program.cones.iter().find(|c| !backend.supports(c)) {
        return Err(Error::Capability {
            backend: backend.name().to_string(),
            cone: format!("{c:?}"),
        });
    }
    Ok(backend.solve_unchecked(program, settings))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl<S: Scalar> ConicBackend<S> for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn supports(&self, _cone: &Cone<S>) -> bool {
        true
    }

    fn solve_unchecked(&self, program: &ConicProgram<S>, settings: &SolverSettings<S>) -> SolveResult<S> {
        let start = Instant::now();
        let first = self.solve_once(program, settings, start);
        if first.status != SolveStatus::Inaccurate || !settings.equilibrate {
            return first;
        }
        // equilibration occasionally stalls the line search on large second-order cones
        let retry = self.solve_once(
            program,
            &SolverSettings {
                equilibrate: false,
                ..*settings
            },
            start,
        );
        let iterations = first.stats.iterations + retry.stats.iterations;
        let mut best = if retry.status == SolveStatus::Optimal { retry } else { first };
        best.stats.iterations = iterations;
        best.stats.wall_time = start.elapsed().as_secs_f64();
        best
    }
}

impl ClarabelBackend {
    fn solve_once<S: Scalar>(&self, program: &ConicProgram<S>, settings: &SolverSettings<S>, start: Instant) -> SolveResult<S> {
        let n = program.num_vars;
        let m = program.num_rows();
        let p = CscMatrix::new(n, n, vec![0; n + 1], Vec::new(), Vec::new());
        let a = to_csc(program);
        let cones: Vec<SupportedConeT<S>> = program
            .cones
            .iter()
            .map(|c| match *c {
                Cone::Zero(d) => SupportedConeT::ZeroConeT(d),
                Cone::Nonnegative(d) => SupportedConeT::NonnegativeConeT(d),
                Cone::SecondOrder(d) => SupportedConeT::SecondOrderConeT(d),
                Cone::Power3(alpha) => SupportedConeT::PowerConeT(alpha),
            })
            .collect();
        let built = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .time_limit(settings.time_limit.unwrap_or(f64::INFINITY))
            .tol_feas(settings.tol_feas)
            .tol_gap_abs(settings.tol_gap_abs)
            .tol_gap_rel(settings.tol_gap_rel)
            .max_threads(1)
            .presolve_enable(false)
            .equilibrate_enable(settings.equilibrate)
            .build();
        let backend = "clarabel";
        let Ok(cfg) = built else {
            return SolveResult::failed(backend, SolveStatus::Failed, SolveStats::default());
        };
        let Ok(mut solver) = DefaultSolver::new(&p, &program.objective, &a, &program.rhs, &cones, cfg) else {
            return SolveResult::failed(backend, SolveStatus::Failed, SolveStats::default());
        };
        debug_assert_eq!(a.m, m);
        solver.solve();
        let sol = &solver.solution;
        let stats = SolveStats {
            iterations: sol.iterations,
            wall_time: start.elapsed().as_secs_f64(),
        };
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved
            | SolverStatus::MaxIterations
            | SolverStatus::MaxTime
            | SolverStatus::InsufficientProgress => SolveStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::Failed,
        };
        if !status.has_primal() || sol.x.iter().any(|v| !v.is_finite()) {
            let status = if status.has_primal() { SolveStatus::Failed } else { status };
            return SolveResult::failed(backend, status, stats);
        }
        SolveResult {
            status,
            objective: program.objective_at(&sol.x),
            primal: Some(sol.x.clone()),
            dual: Some(sol.z.clone()),
            stats,
            backend: backend.to_string(),
        }
    }
}

fn to_csc<S: Scalar>(program: &ConicProgram<S>) -> CscMatrix<S> {
    let n = program.num_vars;
    let mut colptr = vec![0usize; n + 1];
    for &(_, j, _) in &program.matrix {
        colptr[j + 1] += 1;
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    // `matrix` is kept sorted by (col, row), so the values are already in CSC order.
    let rowval = program.matrix.iter().map(|t| t.0).collect();
    let nzval = program.matrix.iter().map(|t| t.2).collect();
    CscMatrix::new(program.num_rows(), n, colptr, rowval, nzval)
}
