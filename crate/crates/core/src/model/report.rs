use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::serde_mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// Fixed-point iteration reached its tolerance.
    Converged,
    /// Closed-form solve, no iteration involved.
    Direct,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TerminalResiduals {
    /// `‖Kⁱ(T) − M_T‖_max` per DM.
    pub riccati: Vec<f64>,
    /// `‖Σ(T) − M_T‖_max`.
    pub sigma: f64,
    /// `‖rⁱ(T)‖_max` per DM.
    pub offsets: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Worst condition number of the normalised coupling matrix Λ(t).
    pub max_coupling_condition: f64,
    /// Worst condition number of R(t).
    pub max_control_weight_condition: f64,
    pub riccati_max_asymmetry: Vec<f64>,
    pub riccati_min_eigenvalue: Vec<f64>,
}

/// Everything a team solve produced besides the strategy itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverReport {
    pub scenario: String,
    pub status: SolverStatus,
    /// How the conditional covariance in the team filters is closed.
    pub moment_closure: String,
    pub times: Vec<f64>,
    #[serde(serialize_with = "serde_mat::matrices2")]
    pub riccati: Vec<Vec<DMatrix<f64>>>,
    #[serde(serialize_with = "serde_mat::matrices")]
    pub sigma: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "serde_mat::vectors2")]
    pub offsets: Vec<Vec<DVector<f64>>>,
    #[serde(serialize_with = "serde_mat::vectors")]
    pub mean_state: Vec<DVector<f64>>,
    #[serde(serialize_with = "serde_mat::vectors")]
    pub mean_controls: Vec<DVector<f64>>,
    #[serde(serialize_with = "serde_mat::matrices2")]
    pub filter_covariances: Vec<Vec<DMatrix<f64>>>,
    pub iterations: usize,
    pub tolerance: f64,
    pub fixed_point_residual: f64,
    pub residual_history: Vec<f64>,
    pub terminal_residuals: TerminalResiduals,
    pub diagnostics: Diagnostics,
}

impl SolverReport {
    pub fn empty(scenario: &str, times: Vec<f64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            status: SolverStatus::Direct,
            moment_closure: String::new(),
            times,
            riccati: Vec::new(),
            sigma: Vec::new(),
            offsets: Vec::new(),
            mean_state: Vec::new(),
            mean_controls: Vec::new(),
            filter_covariances: Vec::new(),
            iterations: 0,
            tolerance: 0.0,
            fixed_point_residual: 0.0,
            residual_history: Vec::new(),
            terminal_residuals: TerminalResiduals::default(),
            diagnostics: Diagnostics::default(),
        }
    }
}
