//! Decentralized team-optimal control for linear stochastic systems with
//! noisy, decentralized observations.
//!
//! Each decision maker (DM) sees its own noisy observation channel and acts
//! on its own conditional-mean estimate. The crate computes the team-optimal
//! affine laws for three problem families:
//!
//! * a static Gaussian message broadcast to several receivers
//!   ([`team::solve_broadcast_team`]),
//! * coupled linear-quadratic teams ([`team::solve_lq_team`],
//!   [`team::solve_lq_team_n`]),
//! * distributed filtering teams without control in the dynamics
//!   ([`team::solve_filtering_team`]),
//!
//! and checks the result numerically: Monte Carlo cost estimates with common
//! random numbers, a person-by-person perturbation battery, conditional
//! gradients and an adjoint consistency check ([`optimality`]).

pub mod config;
pub mod error;
pub mod export;
pub mod filters;
pub mod integrators;
pub mod linalg;
pub mod model;
pub mod optimality;
pub mod oracle;
pub mod riccati;
pub mod rng;
pub mod team;

pub use error::{Error, Result};
pub mod runner;
