//! Compiles a problem spec into the discretized certainty-equivalent cone program.

mod ce;
pub mod cones;

pub use ce::{build, build_base, BuildOptions, CeBuilder, CeProgram, InexactBlocks, SlackMode, VariableLayout, WEALTH_FLOOR};
pub use cones::{perspective_of_theta, power_utility_hypograph, quad_over_lin_cone, FactorRows};
