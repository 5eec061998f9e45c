//! Time integration: deterministic RK4, transition matrices and the
//! stochastic path simulator.

mod ode;
mod simulate;
mod transition;

pub use ode::{rk4_backward, rk4_backward_with, rk4_forward, rk4_forward_with, OdeState};
pub use simulate::{euler_maruyama, monte_carlo, NodeView, PathObserver, Simulator, TrajectoryRecorder};
pub use transition::{transition_matrix, TransitionFamily};
