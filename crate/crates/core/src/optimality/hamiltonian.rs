use nalgebra::{DMatrix, DVector};

use crate::model::LqTeamSpec;

/// Arguments of the pointwise Hamiltonian at grid node `node`.
///
/// The observation-block adjoint and its intensities are identically zero
/// for this model class and are not carried.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianInput {
    pub node: usize,
    pub state: DVector<f64>,
    pub adjoint: DVector<f64>,
    /// `q₁₁`, `n × m`.
    pub intensity: DMatrix<f64>,
    /// Joint action `u = (u¹, …, u^N)`.
    pub action: DVector<f64>,
}

impl HamiltonianInput {
    pub fn zeros(spec: &LqTeamSpec, node: usize) -> Self {
        let n = spec.state_dim();
        Self {
            node,
            state: DVector::zeros(n),
            adjoint: DVector::zeros(n),
            intensity: DMatrix::zeros(n, spec.noise_dim()),
            action: DVector::zeros(spec.control_dim()),
        }
    }
}

/// `ℓ = ½⟨u,Ru⟩ + ½⟨x,Hx⟩ + ⟨x,F⟩ + ⟨u,Ex⟩ + ⟨u,m⟩` at node `k`.
pub fn running_cost(spec: &LqTeamSpec, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(spec.r.at(k) * u))
        + 0.5 * x.dot(&(spec.h.at(k) * x))
        + x.dot(spec.f.at(k))
        + u.dot(&(spec.e.at(k) * x))
        + u.dot(spec.m.at(k))
}

/// `H = ⟨Ax + Bu, ψ⟩ + tr(q₁₁* G) + ℓ`.
pub fn hamiltonian(spec: &LqTeamSpec, input: &HamiltonianInput) -> f64 {
    let k = input.node;
    let drift = spec.a.at(k) * &input.state + spec.b.at(k) * &input.action;
    let diffusion = input.intensity.dot(spec.g.at(k));
    drift.dot(&input.adjoint) + diffusion + running_cost(spec, k, &input.state, &input.action)
}

/// Per-DM blocks of `∂H/∂u`:
/// `Bᵢ*ψ + Σⱼ R_ij uʲ + Eᵢ x + mⁱ`.
pub fn hamiltonian_grad_u(spec: &LqTeamSpec, input: &HamiltonianInput) -> Vec<DVector<f64>> {
    let k = input.node;
    let full = spec.b.at(k).transpose() * &input.adjoint
        + spec.r.at(k) * &input.action
        + spec.e.at(k) * &input.state
        + spec.m.at(k);
    (0..spec.num_agents())
        .map(|i| full.rows(spec.control_offset(i), spec.control_dims[i]).into_owned())
        .collect()
}
