//! Standard-form cone programs and the solver boundary.
//!
//! A [`ConicProgram`] is
//!
//! ```text
//! minimize    cᵀx + c₀
//! subject to  b − A x ∈ K
//! ```
//!
//! where `K` is a product of zero, nonnegative, second-order and 3-D power
//! cones, listed in row order. This is the layout used by the interior-point
//! backends, so programs are handed over without reshuffling.

mod program;
mod solve;
mod text;
mod tower;
mod verify;

pub use program::{AffineExpr, Cone, ConicProgram, ProgramBuilder};
pub use solve::{
    solve, BackendKind, ClarabelBackend, ConicBackend, SolveResult, SolveStats, SolveStatus,
    SolverSettings,
};
pub use tower::{rational_approximation, to_soc_tower, SocTowerBackend};
pub use verify::{cone_violation, dual_cone_violation, verify, ResidualReport};
