use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::adjoint::AdjointCheck;
use super::cost::{path_costs, CostEstimate};
use crate::error::{Error, Result};
use crate::filters::FilterBank;
use crate::model::{DecentralizedStrategy, LqTeamSpec, StrategyDelta, TimeGrid};
use crate::riccati::{solve_offset_odes, solve_team_riccati};

/// Version tag of [`standard_battery`]; bump on any change to its entries.
pub const BATTERY_VERSION: &str = "1";

/// Statistical tests pass within this many standard errors.
pub const SIGMA_MULTIPLIER: f64 = 4.0;

/// Relative tolerance of the closed-form conditional gradient.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Monte Carlo verdicts need at least this many paths.
pub const MIN_PATHS: u64 = 100;

/// A unilateral change to one DM's law.
#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    /// `Γᵢ → factor·Γᵢ` at every node.
    GainScale { dm: usize, factor: f64 },
    /// `γᵢ → γᵢ + shift·1`.
    OffsetShift { dm: usize, shift: f64 },
    /// `Γᵢ → factor·Γᵢ` on nodes with `start ≤ t/T < end`.
    Spike { dm: usize, start: f64, end: f64, factor: f64 },
    /// An arbitrary direction; it must touch at most one DM.
    Direction { label: String, delta: StrategyDelta },
}

impl Perturbation {
    /// The DM whose law changes (`None` for an empty direction).
    pub fn dm(&self) -> Result<Option<usize>> {
        match self {
            Self::GainScale { dm, .. } | Self::OffsetShift { dm, .. } | Self::Spike { dm, .. } => Ok(Some(*dm)),
            Self::Direction { delta, .. } => {
                let touched = delta.touched();
                if touched.len() > 1 {
                    return Err(Error::Inadmissible(format!("direction changes the laws of DMs {touched:?}")));
                }
                Ok(touched.first().copied())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::GainScale { factor, .. } => format!("gain_x{factor}"),
            Self::OffsetShift { shift, .. } => format!("offset{shift:+}"),
            Self::Spike { start, end, factor, .. } => format!("spike[{start},{end}]_x{factor}"),
            Self::Direction { label, .. } => label.clone(),
        }
    }

    /// The perturbed joint strategy; other DMs keep their laws.
    pub fn apply(&self, strategy: &DecentralizedStrategy, grid: &TimeGrid) -> Result<DecentralizedStrategy> {
        let agents = strategy.num_agents();
        let dm = self.dm()?;
        if let Some(d) = dm {
            if d >= agents {
                return Err(Error::Inadmissible(format!("DM {d} does not exist (N = {agents})")));
            }
        }
        let mut out = strategy.clone();
        match self {
            Self::GainScale { dm, factor } => out.laws[*dm].gains.iter_mut().for_each(|g| *g *= *factor),
            Self::OffsetShift { dm, shift } => out.laws[*dm].offsets.iter_mut().for_each(|o| o.add_scalar_mut(*shift)),
            Self::Spike { dm, start, end, factor } => {
                if !(0.0..=1.0).contains(start) || !(0.0..=1.0).contains(end) || start >= end {
                    return Err(Error::InvalidArgument(format!("spike window [{start}, {end}) is not inside [0, 1]")));
                }
                let horizon = grid.horizon();
                for (k, g) in out.laws[*dm].gains.iter_mut().enumerate() {
                    let s = grid.time(k) / horizon;
                    if s >= *start && s < *end {
                        *g *= *factor;
                    }
                }
            }
            Self::Direction { delta, .. } => {
                if delta.laws.len() != agents {
                    return Err(Error::Dimension(format!(
                        "direction has {} laws for {agents} DMs",
                        delta.laws.len()
                    )));
                }
                out = strategy.perturbed(delta, 1.0);
            }
        }
        Ok(out)
    }
}

/// The fixed battery: per DM, gain ×1.1 and ×0.9, offset ±0.1, and gain ×1.5
/// on the windows `[0.2T, 0.3T)` and `[0.6T, 0.7T)`.
pub fn standard_battery(agents: usize) -> Vec<Perturbation> {
    (0..agents)
        .flat_map(|dm| {
            [
                Perturbation::GainScale { dm, factor: 1.1 },
                Perturbation::GainScale { dm, factor: 0.9 },
                Perturbation::OffsetShift { dm, shift: 0.1 },
                Perturbation::OffsetShift { dm, shift: -0.1 },
                Perturbation::Spike { dm, start: 0.2, end: 0.3, factor: 1.5 },
                Perturbation::Spike { dm, start: 0.6, end: 0.7, factor: 1.5 },
            ]
        })
        .collect()
}

/// One row of the battery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationEntry {
    pub dm: Option<usize>,
    pub perturbation: String,
    pub cost: CostEstimate,
    /// Paired `J(perturbed) − J(reference)`.
    pub delta: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Closed-form conditional gradient of DM `dm` over the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientProfile {
    pub dm: usize,
    pub norms: Vec<f64>,
    pub scales: Vec<f64>,
    pub max_norm: f64,
    pub worst_node: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Paired cost differences of a strategy against a perturbation battery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub battery_version: String,
    pub seed: u64,
    pub paths: u64,
    pub sigma_multiplier: f64,
    pub reference: CostEstimate,
    pub entries: Vec<PerturbationEntry>,
    pub gradient: Vec<GradientProfile>,
    pub adjoint: Option<AdjointCheck>,
    pub pass: bool,
}

impl VerificationReport {
    /// Recomputes the overall verdict from the sections.
    pub fn refresh(&mut self) {
        self.pass = self.entries.iter().all(|e| e.pass)
            && self.gradient.iter().all(|g| g.pass)
            && self.adjoint.as_ref().is_none_or(|a| a.pass);
    }

    /// `dm,perturbation,dJ,se,pass` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dm,perturbation,dJ,se,pass\n");
        for e in &self.entries {
            let dm = e.dm.map(|d| d.to_string()).unwrap_or_default();
            out.push_str(&format!("{dm},{},{:e},{:e},{}\n", e.perturbation, e.delta, e.std_error, e.pass));
        }
        out
    }
}

/// `E{∂H/∂uⁱ | Gⁱ}` as an affine function of `x̂ⁱ`: with the filtered
/// adjoint `Kⁱx̂ⁱ + rⁱ` and `E{uʲ | Gⁱ} = ūʲ`, the slope is
/// `Bᵢ*Kⁱ + R_iiΓᵢ + Eᵢ` and the intercept
/// `Bᵢ*rⁱ + R_iiγᵢ + Σⱼ≠ᵢ R_ij ūʲ + mⁱ`. Reports Frobenius norms of both,
/// summed, per node.
pub fn conditional_gradient(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    grid: &TimeGrid,
) -> Result<Vec<GradientProfile>> {
    strategy.check(&spec.control_dims, spec.state_dim(), grid)?;
    let agents = spec.num_agents();
    let n = spec.state_dim();
    let (riccati, offsets): (Vec<Vec<DMatrix<f64>>>, Vec<Vec<DVector<f64>>>) = if spec.is_uncontrolled() {
        (
            vec![vec![DMatrix::zeros(n, n); grid.len()]; agents],
            vec![vec![DVector::zeros(n); grid.len()]; agents],
        )
    } else {
        let k = solve_team_riccati(spec, grid)?;
        let r = solve_offset_odes(spec, &k, &strategy.mean_controls, grid)?;
        (k.into_iter().map(|s| s.values).collect(), r)
    };
    let mut out = Vec::with_capacity(agents);
    for i in 0..agents {
        let b = spec.b_block(i);
        let e = spec.e_block(i);
        let m = spec.m_block(i);
        let rows: Vec<_> = (0..agents).map(|j| spec.r_block(i, j)).collect();
        let law = &strategy.laws[i];
        let mut norms = Vec::with_capacity(grid.len());
        let mut scales = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let bt = b.at(k).transpose();
            let rii = rows[i].at(k);
            let bk = &bt * &riccati[i][k];
            let rg = rii * &law.gains[k];
            let slope = &bk + &rg + e.at(k);
            let br = &bt * &offsets[i][k];
            let ro = rii * &law.offsets[k];
            let mut coupling = DVector::zeros(spec.control_dims[i]);
            for (j, rij) in rows.iter().enumerate() {
                if j != i {
                    coupling += rij.at(k) * strategy.mean_controls[k].rows(spec.control_offset(j), spec.control_dims[j]);
                }
            }
            let intercept = &br + &ro + &coupling + m.at(k);
            norms.push(slope.norm() + intercept.norm());
            scales.push(
                1.0 + bk.norm() + rg.norm() + e.at(k).norm() + br.norm() + ro.norm() + coupling.norm() + m.at(k).norm(),
            );
        }
        let (worst_node, max_norm) = norms
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        let pass = norms.iter().zip(&scales).all(|(v, s)| *v <= GRADIENT_TOLERANCE * s);
        out.push(GradientProfile {
            dm: i,
            norms,
            scales,
            max_norm,
            worst_node,
            tolerance: GRADIENT_TOLERANCE,
            pass,
        });
    }
    Ok(out)
}

/// Mean and standard error of paired differences `b − a`.
pub(crate) fn paired(a: &[f64], b: &[f64]) -> CostEstimate {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    CostEstimate::from_samples(&diff)
}

pub(crate) fn check_paths(paths: u64) -> Result<()> {
    if paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!(
            "{paths} paths requested; standard errors need at least {MIN_PATHS}"
        )));
    }
    Ok(())
}

/// Checks that no single DM can lower the pay-off by switching to any
/// battery entry: `ΔJ ≥ −4·SE` with common random numbers. Every run uses
/// the team filters of the reference strategy.
pub fn verify_person_by_person(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    battery: &[Perturbation],
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
) -> Result<VerificationReport> {
    verify_person_by_person_with(spec, strategy, battery, grid, paths, seed, None)
}

/// [`verify_person_by_person`] with a worker cap.
pub fn verify_person_by_person_with(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    battery: &[Perturbation],
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<VerificationReport> {
    check_paths(paths)?;
    // reject bad entries before spending any simulation time
    let perturbed: Vec<DecentralizedStrategy> = battery
        .iter()
        .map(|p| p.apply(strategy, grid))
        .collect::<Result<_>>()?;
    let bank = FilterBank::for_strategy(spec, strategy, grid)?;
    let base = path_costs(spec, strategy, &bank, grid, paths, seed, threads)?;
    let mut entries = Vec::with_capacity(battery.len());
    for (p, s) in battery.iter().zip(&perturbed) {
        let costs = path_costs(spec, s, &bank, grid, paths, seed, threads)?;
        let d = paired(&base, &costs);
        entries.push(PerturbationEntry {
            dm: p.dm()?,
            perturbation: p.label(),
            cost: CostEstimate::from_samples(&costs),
            delta: d.mean,
            std_error: d.std_error,
            pass: d.mean >= -SIGMA_MULTIPLIER * d.std_error,
        });
    }
    let mut report = VerificationReport {
        battery_version: BATTERY_VERSION.to_string(),
        seed,
        paths,
        sigma_multiplier: SIGMA_MULTIPLIER,
        reference: CostEstimate::from_samples(&base),
        entries,
        gradient: conditional_gradient(spec, strategy, grid)?,
        adjoint: None,
        pass: false,
    };
    report.refresh();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::{scalar, twin_decoupled};
    use crate::model::{AgentLaw, MatrixSchedule};
    use crate::optimality::cost::estimate_cost;
    use crate::riccati::FixedPointConfig;
    use crate::team::{solve_filtering_team, solve_lq_team};

    #[test]
    fn battery_has_six_entries_per_dm() {
        let b = standard_battery(2);
        assert_eq!(b.len(), 12);
        assert_eq!(b.iter().filter(|p| p.dm().unwrap() == Some(1)).count(), 6);
    }

    #[test]
    fn identity_perturbation_is_exactly_neutral() {
        let spec = scalar(0.2, 1.0, 0.5, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.3);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let battery = [
            Perturbation::GainScale { dm: 0, factor: 1.0 },
            Perturbation::OffsetShift { dm: 0, shift: 0.0 },
        ];
        let rep = verify_person_by_person(&spec, &sol.strategy, &battery, &grid, 200, 4).unwrap();
        for e in &rep.entries {
            assert_eq!(e.delta, 0.0);
            assert_eq!(e.std_error, 0.0);
            assert!(e.pass);
        }
    }

    #[test]
    fn cross_dm_direction_is_rejected() {
        let spec = twin_decoupled(0.0, 1.0, 0.3, 0.5, 0.0, 0.1);
        let grid = TimeGrid::new(1.0, 0.05).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let mut law = AgentLaw::zeros(1, 2, grid.len());
        law.offsets[3][0] = 1.0;
        let delta = StrategyDelta {
            laws: vec![Some(law.clone()), Some(law)],
        };
        let p = Perturbation::Direction {
            label: "both".into(),
            delta,
        };
        let err = verify_person_by_person(&spec, &sol.strategy, &[p], &grid, 100, 1).unwrap_err();
        assert!(matches!(err, Error::Inadmissible(_)));
    }

    #[test]
    fn too_few_paths_rejected() {
        let spec = scalar(0.0, 1.0, 0.5, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.3);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        assert!(verify_person_by_person(&spec, &sol.strategy, &[], &grid, 99, 1).is_err());
    }

    #[test]
    fn noiseless_offset_shift_strictly_worse() {
        // zero is optimal from the origin without noise
        let spec = scalar(0.5, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let battery = [
            Perturbation::OffsetShift { dm: 0, shift: 0.1 },
            Perturbation::OffsetShift { dm: 0, shift: -0.05 },
        ];
        let rep = verify_person_by_person(&spec, &sol.strategy, &battery, &grid, 100, 2).unwrap();
        for e in &rep.entries {
            assert!(e.delta > 0.0, "{e:?}");
            assert!(e.std_error < 1e-12);
        }
    }

    #[test]
    fn gain_scaling_bounded_below_by_grid_search() {
        let spec = scalar(0.5, 1.0, 0.6, 1.0, 0.3, 1.0, 1.0, 1.0, 0.5, 0.2);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let (paths, seed) = (5000, 12);
        let j0 = estimate_cost(&spec, &sol.strategy, &grid, paths, seed).unwrap();
        let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
        let base = path_costs(&spec, &sol.strategy, &bank, &grid, paths, seed, None).unwrap();
        // brute force over constant scalings c·Γ
        let mut best = f64::INFINITY;
        for step in 0..=10 {
            let c = 0.75 + 0.05 * step as f64;
            let s = Perturbation::GainScale { dm: 0, factor: c }.apply(&sol.strategy, &grid).unwrap();
            let costs = path_costs(&spec, &s, &bank, &grid, paths, seed, None).unwrap();
            let d = paired(&base, &costs);
            assert!(d.mean >= -4.0 * d.std_error, "scaling {c} beats the solver: {d:?}");
            best = best.min(d.mean);
        }
        let rep = verify_person_by_person(
            &spec,
            &sol.strategy,
            &[Perturbation::GainScale { dm: 0, factor: 1.1 }],
            &grid,
            paths,
            seed,
        )
        .unwrap();
        let e = &rep.entries[0];
        assert!(e.delta > 4.0 * e.std_error, "{e:?}");
        assert!(e.delta / j0.mean.abs() >= best / j0.mean.abs());
    }

    #[test]
    fn solver_outputs_are_stationary() {
        let spec = twin_decoupled(0.3, 1.0, 0.4, 0.5, 0.5, 0.2);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        for g in conditional_gradient(&spec, &sol.strategy, &grid).unwrap() {
            assert!(g.pass, "dm {} max {}", g.dm, g.max_norm);
        }
        let filt = twin_decoupled(0.3, 0.0, 0.4, 0.5, 0.5, 0.2).with_cross(MatrixSchedule::constant(DMatrix::identity(2, 2)));
        let sol = solve_filtering_team(&filt, &grid).unwrap();
        for g in conditional_gradient(&filt, &sol.strategy, &grid).unwrap() {
            assert!(g.pass, "dm {} max {}", g.dm, g.max_norm);
        }
    }

    #[test]
    fn non_optimal_law_has_gradient() {
        let spec = scalar(0.3, 1.0, 0.4, 1.0, 0.5, 1.0, 1.0, 1.0, 0.5, 0.2);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let bad = Perturbation::GainScale { dm: 0, factor: 1.1 }.apply(&sol.strategy, &grid).unwrap();
        let g = conditional_gradient(&spec, &bad, &grid).unwrap();
        assert!(!g[0].pass);
    }

    #[test]
    fn csv_table_columns() {
        let spec = scalar(0.0, 1.0, 0.5, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.3);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let rep = verify_person_by_person(&spec, &sol.strategy, &standard_battery(1), &grid, 100, 1).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "dm,perturbation,dJ,se,pass");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("0,gain_x1.1,"));
    }
}
