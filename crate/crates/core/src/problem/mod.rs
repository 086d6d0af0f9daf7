//! Problem data: market, preferences, allocation constraints and extension blocks.

mod curve;
mod life;
mod market;
mod spec;
pub mod synthetic;
mod theta;
mod trajectory;
mod utility;

pub use curve::Curve;
pub use life::{human_capital, IncomeModel, InsuranceModel, MortalityModel};
pub use market::{expand_covariance, CovFactor, Covariance, MarketModel};
pub use spec::{Extensions, MinCash, ProblemSpec, SpendingLimit, TimeVarying, SPEC_VERSION};
pub use theta::{ConstraintSet, LinearEq, LinearIneq, SocConstraint};
pub use trajectory::Trajectory;
pub use utility::{crra, UtilityParams};
