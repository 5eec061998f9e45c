//! Static message broadcast: two receivers with different channel noise
//! coordinate through the cross term in R.
//!
//! cargo run --example broadcast

use team_lqg::config::ScenarioConfig;
use team_lqg::team::solve_broadcast_team;

fn main() -> team_lqg::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/broadcast_pair.json");
    let cfg = ScenarioConfig::load(&path)?;
    let grid = cfg.grid(None)?;
    let spec = cfg.broadcast_spec(&grid)?;
    let sol = solve_broadcast_team(&spec, &grid)?;

    println!("mean actions: {:?}", sol.strategy.mean_controls[0].as_slice());
    println!("coupling condition number: {:.3}", sol.report.diagnostics.max_coupling_condition);
    println!("\n   t     P1(t)    P2(t)   offset1  offset2");
    for k in (0..grid.len()).step_by(grid.steps() / 5) {
        let p: Vec<f64> = sol.report.filter_covariances.iter().map(|p| p[k][(0, 0)]).collect();
        let o: Vec<f64> = sol.strategy.laws.iter().map(|l| l.offsets[k][0]).collect();
        println!("{:5.2}  {:7.4}  {:7.4}  {:7.4}  {:7.4}", grid.time(k), p[0], p[1], o[0], o[1]);
    }
    Ok(())
}
