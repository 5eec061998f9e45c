//! Cost of the covariance closure in the team filters.
//!
//! Each DM's team filter replaces the other DMs' actions by their means and
//! propagates a deterministic Riccati covariance. Running DM `i` instead on
//! the exact augmented filter (others unchanged) and comparing pay-offs
//! with common random numbers measures what the closure costs. Without
//! control in the dynamics the two filters coincide, so the gap there must
//! vanish up to Monte Carlo noise; with control there is no reference
//! value, only the measured gap.

use serde::Serialize;

use super::cost::{path_costs, CostEstimate};
use super::verify::{check_paths, paired, SIGMA_MULTIPLIER};
use crate::error::Result;
use crate::filters::FilterBank;
use crate::model::{DecentralizedStrategy, LqTeamSpec, TimeGrid};

/// Rounding floor added to the zero-gap test, relative to `1 + |J|`.
pub const ROUNDING_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosureGapEntry {
    pub dm: usize,
    pub exact_cost: CostEstimate,
    /// Paired `J(closure) − J(exact filter for this DM)`.
    pub gap: f64,
    pub std_error: f64,
    /// `|gap| ≤ 4·SE` (plus the rounding floor).
    pub within_noise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosureGapReport {
    /// True when `B ≡ 0`, where the gap must vanish.
    pub uncontrolled: bool,
    pub closure_cost: CostEstimate,
    pub entries: Vec<ClosureGapEntry>,
    /// Only meaningful when `uncontrolled`: every gap is within noise.
    /// Always true otherwise, where the report is a measurement.
    pub pass: bool,
}

/// Measures, per DM, the pay-off change from switching that DM to its exact
/// filter while all laws stay fixed.
pub fn closure_gap_report(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<ClosureGapReport> {
    check_paths(paths)?;
    let bank = FilterBank::for_strategy(spec, strategy, grid)?;
    let closure = path_costs(spec, strategy, &bank, grid, paths, seed, threads)?;
    let closure_cost = CostEstimate::from_samples(&closure);
    let mut entries = Vec::with_capacity(spec.num_agents());
    for dm in 0..spec.num_agents() {
        let exact_bank = bank.clone().with_exact_filter(spec, strategy, dm, grid)?;
        let exact = path_costs(spec, strategy, &exact_bank, grid, paths, seed, threads)?;
        let d = paired(&exact, &closure);
        let floor = ROUNDING_FLOOR * (1.0 + closure_cost.mean.abs());
        entries.push(ClosureGapEntry {
            dm,
            exact_cost: CostEstimate::from_samples(&exact),
            gap: d.mean,
            std_error: d.std_error,
            within_noise: d.mean.abs() <= SIGMA_MULTIPLIER * d.std_error + floor,
        });
    }
    let uncontrolled = spec.is_uncontrolled();
    let pass = !uncontrolled || entries.iter().all(|e| e.within_noise);
    Ok(ClosureGapReport {
        uncontrolled,
        closure_cost,
        entries,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::twin_decoupled;
    use crate::model::MatrixSchedule;
    use crate::riccati::FixedPointConfig;
    use crate::team::{solve_filtering_team, solve_lq_team};
    use nalgebra::DMatrix;

    fn coupled(b: f64) -> LqTeamSpec {
        let mut spec = twin_decoupled(0.2, b, 0.5, 0.3, 0.4, 0.2);
        spec.a = MatrixSchedule::constant(DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.3, 0.2]));
        spec
    }

    #[test]
    fn uncontrolled_gap_vanishes() {
        let spec = coupled(0.0).with_cross(MatrixSchedule::constant(DMatrix::identity(2, 2)));
        let grid = TimeGrid::new(1.0, 0.02).unwrap();
        let sol = solve_filtering_team(&spec, &grid).unwrap();
        let rep = closure_gap_report(&spec, &sol.strategy, &grid, 500, 3, None).unwrap();
        assert!(rep.uncontrolled);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn controlled_gap_is_reported() {
        let spec = coupled(1.0);
        let grid = TimeGrid::new(1.0, 0.02).unwrap();
        let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
        let rep = closure_gap_report(&spec, &sol.strategy, &grid, 500, 3, None).unwrap();
        assert!(!rep.uncontrolled);
        assert_eq!(rep.entries.len(), 2);
        assert!(rep.entries.iter().all(|e| e.gap.is_finite() && e.std_error > 0.0));
    }
}
