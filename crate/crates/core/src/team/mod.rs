//! End-to-end solvers for the three team scenarios.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::{FilterBank, MOMENT_CLOSURE};
use crate::integrators::rk4_forward;
use crate::linalg::condition_number;
use crate::model::{
    validate_spec, AgentLaw, BroadcastSpec, DecentralizedStrategy, Diagnostics, LqTeamSpec, SolverReport,
    SolverStatus, TerminalResiduals, TimeGrid, Validate,
};
use crate::riccati::{
    coupling_matrix, mean_field_fixed_point, solve_sigma_lyapunov, solve_team_riccati, FixedPointConfig,
    RiccatiSolution,
};

/// A solved strategy with its report.
#[derive(Clone, Debug)]
pub struct TeamSolution {
    pub strategy: DecentralizedStrategy,
    pub report: SolverReport,
}

fn ensure_valid<S: Validate + ?Sized>(spec: &S, grid: &TimeGrid) -> Result<()> {
    let v = validate_spec(spec, grid);
    if v.is_pass() {
        Ok(())
    } else {
        Err(Error::Config(v.violations.join("; ")))
    }
}

fn inv(m: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    crate::linalg::inverse(m).ok_or_else(|| Error::Degenerate {
        node,
        what: "R_ii not invertible".into(),
    })
}

/// `γᵢ = −R_ii⁻¹(Bᵢ* rⁱ + Σⱼ≠ᵢ R_ij ūʲ + mⁱ)` (the `Bᵢ* rⁱ` part is passed in
/// already multiplied).
fn offset_law(spec: &LqTeamSpec, i: usize, k: usize, w: &DMatrix<f64>, btr: DVector<f64>, ubar: &DVector<f64>) -> DVector<f64> {
    let mut inner = btr + spec.m_block(i).at(k);
    for j in 0..spec.num_agents() {
        if j != i {
            let uj = ubar.rows(spec.control_offset(j), spec.control_dims[j]);
            inner += spec.r_block(i, j).at(k) * uj;
        }
    }
    -(w * inner)
}

fn control_weight_condition(spec_r: &crate::model::MatrixSchedule, grid: &TimeGrid) -> f64 {
    if spec_r.is_constant() {
        condition_number(spec_r.at(0))
    } else {
        (0..grid.len()).map(|k| condition_number(spec_r.at(k))).fold(0.0, f64::max)
    }
}

fn filter_covariances(spec: &LqTeamSpec, strategy: &DecentralizedStrategy, grid: &TimeGrid) -> Result<Vec<Vec<DMatrix<f64>>>> {
    if spec.has_feedback_channels() {
        // path-dependent covariances; nothing to tabulate
        return Ok(Vec::new());
    }
    Ok(FilterBank::for_strategy(spec, strategy, grid)?.covariance_schedules())
}

fn report_base(scenario: &str, spec: &LqTeamSpec, grid: &TimeGrid) -> Result<(SolverReport, RiccatiSolution)> {
    let mut report = SolverReport::empty(scenario, grid.nodes().collect());
    report.moment_closure = MOMENT_CLOSURE.to_string();
    let sigma = solve_sigma_lyapunov(&spec.a, &spec.h, &spec.terminal, grid)?;
    report.terminal_residuals.sigma = (&sigma.values[grid.steps()] - &spec.terminal).amax();
    report.diagnostics.max_control_weight_condition = control_weight_condition(&spec.r, grid);
    Ok((report, sigma))
}

/// General `N`-DM solve shared by [`solve_lq_team`] and [`solve_lq_team_n`].
fn solve_general(spec: &LqTeamSpec, grid: &TimeGrid, config: FixedPointConfig, scenario: &str) -> Result<TeamSolution> {
    ensure_valid(spec, grid)?;
    let riccati = solve_team_riccati(spec, grid)?;
    let fp = mean_field_fixed_point(spec, &riccati, grid, config)?;
    let agents = spec.num_agents();
    let mut laws = Vec::with_capacity(agents);
    for i in 0..agents {
        let b = spec.b_block(i);
        let e = spec.e_block(i);
        let r = spec.r_block(i, i);
        let mut law = AgentLaw::zeros(spec.control_dims[i], spec.state_dim(), grid.len());
        for k in 0..grid.len() {
            let w = inv(r.at(k), k)?;
            let bt = b.at(k).transpose();
            law.gains[k] = -(&w * (&bt * riccati[i].at(k) + e.at(k)));
            law.offsets[k] = offset_law(spec, i, k, &w, &bt * &fp.offsets[i][k], &fp.mean_controls[k]);
        }
        laws.push(law);
    }
    let strategy = DecentralizedStrategy {
        laws,
        mean_controls: fp.mean_controls.clone(),
    };
    let (mut report, sigma) = report_base(scenario, spec, grid)?;
    report.status = SolverStatus::Converged;
    report.iterations = fp.iterations;
    report.tolerance = config.tol;
    report.fixed_point_residual = fp.residual;
    report.residual_history = fp.history.clone();
    report.terminal_residuals = TerminalResiduals {
        riccati: riccati.iter().map(|k| (&k.values[grid.steps()] - &spec.terminal).amax()).collect(),
        sigma: report.terminal_residuals.sigma,
        offsets: fp.offsets.iter().map(|r| r[grid.steps()].amax()).collect(),
    };
    report.diagnostics = Diagnostics {
        max_coupling_condition: fp.max_coupling_condition,
        max_control_weight_condition: report.diagnostics.max_control_weight_condition,
        riccati_max_asymmetry: riccati.iter().map(|k| k.max_asymmetry).collect(),
        riccati_min_eigenvalue: riccati.iter().map(|k| k.min_eigenvalue).collect(),
    };
    report.riccati = riccati.into_iter().map(|k| k.values).collect();
    report.sigma = sigma.values;
    report.offsets = fp.offsets;
    report.mean_state = fp.mean_state;
    report.mean_controls = fp.mean_controls;
    report.filter_covariances = filter_covariances(spec, &strategy, grid)?;
    Ok(TeamSolution { strategy, report })
}

/// Coupled LQ team with one or two decision makers.
///
/// `uⁱ = −R_ii⁻¹(Bᵢ*(Kⁱ x̂ⁱ + rⁱ) + Eᵢ x̂ⁱ + Σⱼ≠ᵢ R_ij ūʲ + mⁱ)` acting on
/// the team filter `x̂ⁱ`. With one DM this is the classical
/// partially-observed LQG law.
pub fn solve_lq_team(spec: &LqTeamSpec, grid: &TimeGrid, config: FixedPointConfig) -> Result<TeamSolution> {
    let n = spec.num_agents();
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "solve_lq_team handles one or two decision makers, got {n}; use solve_lq_team_n"
        )));
    }
    solve_general(spec, grid, config, "lq_team")
}

/// `N`-DM generalisation of [`solve_lq_team`] (`N ≥ 2`).
pub fn solve_lq_team_n(spec: &LqTeamSpec, grid: &TimeGrid, config: FixedPointConfig) -> Result<TeamSolution> {
    let n = spec.num_agents();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("solve_lq_team_n needs N >= 2, got {n}")));
    }
    solve_general(spec, grid, config, "lq_team")
}

/// Laws `uⁱ = −R_ii⁻¹(Eᵢ x̂ⁱ + mⁱ + Σⱼ≠ᵢ R_ij ūʲ)` with
/// `R ū + E x̄ + m = 0` solved directly at every node.
fn direct_laws(
    spec: &LqTeamSpec,
    mean_state: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<(DecentralizedStrategy, f64)> {
    let agents = spec.num_agents();
    let mut worst: f64 = 0.0;
    let mut ubar = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let lam = coupling_matrix(spec.r.at(k), &spec.control_dims, k)?;
        let cond = condition_number(&lam);
        if !cond.is_finite() || cond > crate::riccati::SINGULAR_CONDITION {
            return Err(Error::SingularCoupling { node: k, condition: cond });
        }
        worst = worst.max(cond);
        // Λ ū = −[R_ii⁻¹(Eᵢ x̄ + mⁱ)]ᵢ
        let mut rhs = DVector::zeros(spec.control_dim());
        for i in 0..agents {
            let w = inv(spec.r_block(i, i).at(k), k)?;
            let v = -(&w * (spec.e_block(i).at(k) * &mean_state[k] + spec.m_block(i).at(k)));
            rhs.rows_mut(spec.control_offset(i), spec.control_dims[i]).copy_from(&v);
        }
        let u = lam.lu().solve(&rhs).ok_or(Error::SingularCoupling {
            node: k,
            condition: f64::INFINITY,
        })?;
        ubar.push(u);
    }
    let mut laws = Vec::with_capacity(agents);
    for i in 0..agents {
        let mut law = AgentLaw::zeros(spec.control_dims[i], spec.state_dim(), grid.len());
        for k in 0..grid.len() {
            let w = inv(spec.r_block(i, i).at(k), k)?;
            law.gains[k] = -(&w * spec.e_block(i).at(k));
            law.offsets[k] = offset_law(spec, i, k, &w, DVector::zeros(spec.control_dims[i]), &ubar[k]);
        }
        laws.push(law);
    }
    Ok((
        DecentralizedStrategy {
            laws,
            mean_controls: ubar,
        },
        worst,
    ))
}

/// Distributed filtering team (`B = 0`): the controls only enter the cost.
pub fn solve_filtering_team(spec: &LqTeamSpec, grid: &TimeGrid) -> Result<TeamSolution> {
    ensure_valid(spec, grid)?;
    if !spec.is_uncontrolled() {
        return Err(Error::InvalidArgument("solve_filtering_team needs B = 0".into()));
    }
    let mean_state = rk4_forward(grid, spec.initial_mean.clone(), |pos, x| &*spec.a.at_pos(pos) * x)?;
    let (strategy, worst) = direct_laws(spec, &mean_state, grid)?;
    let (mut report, sigma) = report_base("filtering", spec, grid)?;
    report.diagnostics.max_coupling_condition = worst;
    report.sigma = sigma.values;
    report.mean_state = mean_state;
    report.mean_controls = strategy.mean_controls.clone();
    report.filter_covariances = filter_covariances(spec, &strategy, grid)?;
    Ok(TeamSolution { strategy, report })
}

/// Static Gaussian message broadcast to `N` receivers.
///
/// `ū = Λ⁻¹(M + K)` with `M = −[R_ii⁻¹Eᵢ θ̄]ᵢ` and `K = −[R_ii⁻¹mⁱ]ᵢ`;
/// receiver `i` plays `uⁱ = −R_ii⁻¹(Eᵢ θ̂ⁱ + mⁱ + Σⱼ≠ᵢ R_ij ūʲ)` on its
/// channel filter `θ̂ⁱ`.
pub fn solve_broadcast_team(spec: &BroadcastSpec, grid: &TimeGrid) -> Result<TeamSolution> {
    ensure_valid(spec, grid)?;
    let team = spec.to_team_spec();
    let mean_state = vec![spec.prior_mean.clone(); grid.len()];
    let (strategy, worst) = direct_laws(&team, &mean_state, grid)?;
    let mut report = SolverReport::empty("broadcast", grid.nodes().collect());
    report.moment_closure = MOMENT_CLOSURE.to_string();
    report.diagnostics.max_coupling_condition = worst;
    report.diagnostics.max_control_weight_condition = control_weight_condition(&spec.r, grid);
    report.mean_state = mean_state;
    report.mean_controls = strategy.mean_controls.clone();
    report.filter_covariances = filter_covariances(&team, &strategy, grid)?;
    Ok(TeamSolution { strategy, report })
}

#[cfg(test)]
mod tests;
