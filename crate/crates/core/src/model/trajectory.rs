use nalgebra::DVector;
use serde::Serialize;

use super::serde_mat;

/// One simulated sample path on the grid.
///
/// Per-DM arrays are indexed `[dm][node]`. Increments stored at node `k`
/// drive the step `t_k → t_{k+1}`; the entries at the final node are zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub path: u64,
    pub times: Vec<f64>,
    #[serde(serialize_with = "serde_mat::vectors")]
    pub states: Vec<DVector<f64>>,
    #[serde(serialize_with = "serde_mat::vectors2")]
    pub observations: Vec<Vec<DVector<f64>>>,
    #[serde(serialize_with = "serde_mat::vectors2")]
    pub estimates: Vec<Vec<DVector<f64>>>,
    #[serde(serialize_with = "serde_mat::vectors2")]
    pub controls: Vec<Vec<DVector<f64>>>,
    #[serde(serialize_with = "serde_mat::vectors")]
    pub state_noise: Vec<DVector<f64>>,
    #[serde(serialize_with = "serde_mat::vectors2")]
    pub observation_noise: Vec<Vec<DVector<f64>>>,
    #[serde(serialize_with = "serde_mat::vectors2")]
    pub innovations: Vec<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_agents(&self) -> usize {
        self.observations.len()
    }

    /// Joint control `u(t_k)`.
    pub fn joint_control(&self, node: usize) -> DVector<f64> {
        let parts: Vec<f64> = self
            .controls
            .iter()
            .flat_map(|c| c[node].iter().copied())
            .collect();
        DVector::from_vec(parts)
    }
}
