//! With one decision maker the team solution is classical LQG. Compare the
//! team solver with the centralized reference.
//!
//! cargo run --example oracle_lqg

use team_lqg::config::ScenarioConfig;
use team_lqg::oracle::centralized_lqg;
use team_lqg::team::solve_lq_team;

fn main() -> team_lqg::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/single_dm.json");
    let cfg = ScenarioConfig::load(&path)?;
    let grid = cfg.grid(None)?;
    let spec = cfg.lq_spec(&grid)?;

    let team = solve_lq_team(&spec, &grid, cfg.fixed_point())?;
    let lqg = centralized_lqg(&spec, &grid)?;
    let worst = (0..grid.len())
        .map(|k| (&team.strategy.laws[0].gains[k] - &lqg.gains[k]).amax())
        .fold(0.0, f64::max);
    println!(
        "gain at t = 0: team {:+.6?}, centralized {:+.6?}",
        team.strategy.laws[0].gains[0].as_slice(),
        lqg.gains[0].as_slice()
    );
    println!("largest gain difference over {} nodes: {worst:.2e}", grid.len());

    // scalar check: A = 0, B = R = H = 1, no terminal weight gives K(0) = tanh(1)
    let scalar = ScenarioConfig::load(&path.with_file_name("scalar_riccati.json"))?;
    let sgrid = scalar.grid(None)?;
    let sol = solve_lq_team(&scalar.lq_spec(&sgrid)?, &sgrid, scalar.fixed_point())?;
    let k0 = sol.report.riccati[0][0][(0, 0)];
    println!("scalar Riccati K(0) = {k0:.10}, tanh(1) = {:.10}", 1f64.tanh());
    Ok(())
}
