//! Risk-aware linear contextual bandits.
//!
//! Rewards are scored by an elicitable risk measure (expectile, entropic
//! risk, mean) instead of the mean. The risk of each action is assumed linear
//! in an unknown parameter and is learned by regularized convex empirical
//! risk minimization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confidence;
pub mod environments;
pub mod estimator;
pub mod harness;
pub mod loss;
pub mod policies;
pub mod quadrature;
pub mod risk_oracle;
pub mod rng;

pub use confidence::BanditParams;
pub use environments::RiskEnvironment;
pub use estimator::{DesignState, Estimate};
pub use loss::{CurvatureBounds, LossModel};
pub use risk_oracle::Distribution;
