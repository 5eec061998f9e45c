//! Consistency of the affine adjoint `ψ = Σx + β` along simulated paths.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LqTeamSpec, TimeGrid, Trajectory};
use crate::riccati::{adjoint_intensity, RiccatiSolution};

/// Outcome of [`adjoint_consistency_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdjointCheck {
    /// Worst drift residual over nodes and paths.
    pub max_residual: f64,
    pub worst_node: usize,
    pub residual_tolerance: f64,
    /// `‖ψ(T) − M_T x(T)‖` statistics over paths.
    pub terminal_max: f64,
    pub terminal_mean: f64,
    pub terminal_tolerance: f64,
    /// `max ‖q₁₁ − ΣG‖`; zero by construction.
    pub intensity_identity_error: f64,
    /// Observation-block adjoint and intensities, identically zero here.
    pub observation_adjoint: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Backward reconstruction of `β` along one trajectory:
/// `β̇ = −(A*β + ΣBu + E*u + F)`, `β(T) = 0`, with `u` held constant on
/// each step and `Σ`, `A`, `B` interpolated between nodes (RK4).
pub fn reconstruct_beta(
    spec: &LqTeamSpec,
    sigma: &RiccatiSolution,
    trajectory: &Trajectory,
    grid: &TimeGrid,
) -> Vec<DVector<f64>> {
    let n = spec.state_dim();
    let s = sigma.as_schedule();
    let steps = grid.steps();
    let dt = grid.dt();
    let mut beta = vec![DVector::zeros(n); grid.len()];
    for k in (0..steps).rev() {
        let u = trajectory.joint_control(k);
        let field = |pos: f64, b: &DVector<f64>| -> DVector<f64> {
            let ap = spec.a.at_pos(pos);
            let su = &*s.at_pos(pos) * (&*spec.b.at_pos(pos) * &u);
            -(ap.transpose() * b + su + spec.e.at_pos(pos).transpose() * &u + &*spec.f.at_pos(pos))
        };
        let (p1, ph, p0) = ((k + 1) as f64, k as f64 + 0.5, k as f64);
        let b1 = &beta[k + 1];
        let k1 = field(p1, b1);
        let k2 = field(ph, &(b1 - &k1 * (0.5 * dt)));
        let k3 = field(ph, &(b1 - &k2 * (0.5 * dt)));
        let k4 = field(p0, &(b1 - &k3 * dt));
        beta[k] = b1 - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    beta
}

/// Checks the adjoint representation on an ensemble of trajectories:
/// the Itô drift of `Σx + β` against `−(A*ψ + Hx + E*u + F)` at each node
/// (tolerance `10·dt`), and `ψ(T) = M_T x(T)` (tolerance `1e-8`).
pub fn adjoint_consistency_check(
    spec: &LqTeamSpec,
    sigma: &RiccatiSolution,
    trajectories: &[Trajectory],
    grid: &TimeGrid,
) -> Result<AdjointCheck> {
    if sigma.values.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "Σ has {} nodes, grid has {}",
            sigma.values.len(),
            grid.len()
        )));
    }
    for tr in trajectories {
        if tr.len() != grid.len() {
            return Err(Error::Dimension(format!("trajectory {} does not match the grid", tr.path)));
        }
    }
    let dt = grid.dt();
    let steps = grid.steps();

    let q11 = adjoint_intensity(sigma, &spec.g);
    let intensity_identity_error = q11
        .iter()
        .enumerate()
        .map(|(k, q)| (q - &sigma.values[k] * spec.g.at(k)).amax())
        .fold(0.0, f64::max);
    assert!(intensity_identity_error == 0.0, "q11 must equal ΣG");

    let mut check = AdjointCheck {
        max_residual: 0.0,
        worst_node: 0,
        residual_tolerance: 10.0 * dt,
        terminal_max: 0.0,
        terminal_mean: 0.0,
        terminal_tolerance: 1e-8,
        intensity_identity_error,
        observation_adjoint: 0.0,
        failures: Vec::new(),
        pass: true,
    };
    let mut failing_nodes = vec![false; grid.len()];
    for tr in trajectories {
        let beta = reconstruct_beta(spec, sigma, tr, grid);
        let psi: Vec<DVector<f64>> = (0..grid.len()).map(|k| &sigma.values[k] * &tr.states[k] + &beta[k]).collect();
        for k in 0..steps {
            let u = tr.joint_control(k);
            let x = &tr.states[k];
            let drift = -(spec.a.at(k).transpose() * &psi[k]
                + spec.h.at(k) * x
                + spec.e.at(k).transpose() * &u
                + spec.f.at(k));
            let res = ((&psi[k + 1] - &psi[k]) / dt - drift).norm();
            if res > check.max_residual {
                check.max_residual = res;
                check.worst_node = k;
            }
            if res > check.residual_tolerance {
                failing_nodes[k] = true;
            }
        }
        let term = (&psi[steps] - &spec.terminal * &tr.states[steps]).norm();
        check.terminal_max = check.terminal_max.max(term);
        check.terminal_mean += term / trajectories.len() as f64;
    }
    for (k, bad) in failing_nodes.iter().enumerate() {
        if *bad {
            check.failures.push(format!("drift residual above {:.3e} at node {k}", check.residual_tolerance));
        }
    }
    if check.terminal_max > check.terminal_tolerance {
        check
            .failures
            .push(format!("terminal residual {:.3e} at node {steps}", check.terminal_max));
    }
    check.pass = check.failures.is_empty();
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterBank;
    use crate::integrators::euler_maruyama;
    use crate::model::testing::scalar;
    use crate::riccati::{solve_sigma_lyapunov, FixedPointConfig};
    use crate::team::solve_lq_team;

    #[test]
    fn no_cost_gives_vanishing_adjoint() {
        let spec = scalar(0.4, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
        let tr = euler_maruyama(&spec, Some(&sol.strategy), Some(&bank), &grid, 2).unwrap();
        let sigma = solve_sigma_lyapunov(&spec.a, &spec.h, &spec.terminal, &grid).unwrap();
        let chk = adjoint_consistency_check(&spec, &sigma, &[tr], &grid).unwrap();
        assert_eq!(chk.max_residual, 0.0);
        assert_eq!(chk.terminal_max, 0.0);
        assert!(chk.pass);
    }

    #[test]
    fn deterministic_run_passes() {
        let spec = scalar(0.5, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.0);
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
        let tr = euler_maruyama(&spec, Some(&sol.strategy), Some(&bank), &grid, 2).unwrap();
        let sigma = solve_sigma_lyapunov(&spec.a, &spec.h, &spec.terminal, &grid).unwrap();
        let chk = adjoint_consistency_check(&spec, &sigma, &[tr], &grid).unwrap();
        assert!(chk.pass, "{chk:?}");
        assert!(chk.terminal_max <= 1e-8);
    }

    #[test]
    fn beta_matches_quadrature() {
        // constant coefficients, deterministic path with nonzero control
        let (a, b, h, mt) = (0.3, 1.0, 1.0, 0.5);
        let spec = scalar(a, b, 0.0, 1.0, 1.0, h, 1.0, mt, 1.0, 0.0);
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
        let tr = euler_maruyama(&spec, Some(&sol.strategy), Some(&bank), &grid, 0).unwrap();
        let sigma = solve_sigma_lyapunov(&spec.a, &spec.h, &spec.terminal, &grid).unwrap();
        let beta = reconstruct_beta(&spec, &sigma, &tr, &grid);

        // β(0) = ∫₀ᵀ e^{as} Σ(s) b u(s) ds with Σ in closed form, Simpson per step
        let t_end = 1.0;
        let sig = |s: f64| (mt + h / (2.0 * a)) * (2.0 * a * (t_end - s)).exp() - h / (2.0 * a);
        let mut integral = 0.0;
        let sub = 50;
        for k in 0..grid.steps() {
            let u = tr.controls[0][k][0];
            let (t0, t1) = (grid.time(k), grid.time(k + 1));
            let w = (t1 - t0) / sub as f64;
            for j in 0..sub {
                let s0 = t0 + j as f64 * w;
                let f = |s: f64| (a * s).exp() * sig(s) * b * u;
                integral += w / 6.0 * (f(s0) + 4.0 * f(s0 + 0.5 * w) + f(s0 + w));
            }
        }
        assert!((beta[0][0] - integral).abs() < 1e-6, "{} vs {integral}", beta[0][0]);
    }
}
