//! Closed-loop Monte Carlo: record a few paths, write them as CSV, and
//! estimate the team cost.
//!
//! cargo run --release --example simulate

use team_lqg::config::ScenarioConfig;
use team_lqg::export::trajectories_csv;
use team_lqg::filters::FilterBank;
use team_lqg::integrators::Simulator;
use team_lqg::optimality::estimate_cost_with;
use team_lqg::team::solve_lq_team;

fn main() -> team_lqg::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/coupled_team.json");
    let cfg = ScenarioConfig::load(&path)?;
    let grid = cfg.grid(Some(0.005))?;
    let spec = cfg.lq_spec(&grid)?;
    let sol = solve_lq_team(&spec, &grid, cfg.fixed_point())?;
    let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid)?;

    let sim = Simulator::new(&spec, Some(&sol.strategy), Some(&bank), &grid)?;
    let paths = (0..3).map(|p| sim.trajectory(42, p)).collect::<team_lqg::Result<Vec<_>>>()?;
    let out = std::env::temp_dir().join("team_lqg_paths.csv");
    std::fs::write(&out, trajectories_csv(&paths))?;
    println!("wrote {} paths to {}", paths.len(), out.display());

    let last = grid.steps();
    for tr in &paths {
        let x = &tr.states[last];
        let e = &tr.estimates[0][last];
        println!("path {}: x(T) = {:+.3?}, DM 0 estimate = {:+.3?}", tr.path, x.as_slice(), e.as_slice());
    }

    let j = estimate_cost_with(&spec, &sol.strategy, &bank, &grid, 2000, 42, None)?;
    println!("J = {:.4} ± {:.4} over {} paths", j.mean, j.std_error, j.paths);
    Ok(())
}
