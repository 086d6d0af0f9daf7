//! Merton consumption-investment toolkit: closed-form solution, certainty-equivalent
//! conic program, model predictive control and Monte Carlo validation.
//!
//! Core math is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the common `f64` instantiation.

pub mod analytic;
pub mod builder;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod mpc;
pub mod problem;
pub mod scalar;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use validate::{validate, Violation, ViolationCode};

pub type Spec = problem::ProblemSpec<f64>;
pub type Market = problem::MarketModel<f64>;
pub type Utility = problem::UtilityParams<f64>;
pub type Plan = problem::Trajectory<f64>;
pub type Analytic = analytic::AnalyticSolution<f64>;
pub type Program = conic::ConicProgram<f64>;
pub type Settings = conic::SolverSettings<f64>;
pub type SimPath = sim::SimPath<f64>;
pub type MpcConfig = mpc::MpcConfig<f64>;
