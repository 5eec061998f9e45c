//! Problem definitions and result types shared by every solver.

mod grid;
mod report;
mod schedule;
pub mod serde_mat;
mod spec;
mod strategy;
#[cfg(test)]
pub(crate) mod testing;
mod trajectory;
mod validate;

pub use grid::TimeGrid;
pub use report::{Diagnostics, SolverReport, SolverStatus, TerminalResiduals};
pub use schedule::{MatrixSchedule, Sample, Schedule, VectorSchedule};
pub use spec::{BroadcastSpec, FeedbackGain, LqTeamSpec, ObservationChannel, ObservationGain};
pub use strategy::{AgentLaw, DecentralizedStrategy, StrategyDelta};
pub use trajectory::Trajectory;
pub use validate::{validate_spec, Validate, ValidationOutcome};
