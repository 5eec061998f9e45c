//! Cost of the covariance closure in the team filters: run each DM on an
//! exact augmented filter instead and compare on common random numbers.
//! Without control in the dynamics the gap must vanish.
//!
//! cargo run --release --example closure_gap

use team_lqg::config::ScenarioConfig;
use team_lqg::optimality::{closure_gap_report, ClosureGapReport};
use team_lqg::team::{solve_filtering_team, solve_lq_team};

fn show(title: &str, r: &ClosureGapReport) {
    println!("{title}: J = {:.4} ± {:.4}", r.closure_cost.mean, r.closure_cost.std_error);
    for e in &r.entries {
        println!("  DM {}: gap {:+.3e} (se {:.1e}, within noise {})", e.dm, e.gap, e.std_error, e.within_noise);
    }
}

fn main() -> team_lqg::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let team_cfg = ScenarioConfig::load(&dir.join("coupled_team.json"))?;
    let grid = team_cfg.grid(Some(0.005))?;
    let team = team_cfg.lq_spec(&grid)?;
    let sol = solve_lq_team(&team, &grid, team_cfg.fixed_point())?;
    show("controlled", &closure_gap_report(&team, &sol.strategy, &grid, 1000, 3, None)?);

    let free = ScenarioConfig::load(&dir.join("coupled_filtering.json"))?.lq_spec(&grid)?;
    let sol = solve_filtering_team(&free, &grid)?;
    show("B = 0", &closure_gap_report(&free, &sol.strategy, &grid, 1000, 3, None)?);
    Ok(())
}
