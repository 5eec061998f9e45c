//! Person-by-person check: perturb one DM at a time and compare costs on
//! common random numbers, then check the conditional gradient.
//!
//! cargo run --release --example verify

use team_lqg::config::ScenarioConfig;
use team_lqg::optimality::{standard_battery, verify_person_by_person};
use team_lqg::team::solve_lq_team;

fn main() -> team_lqg::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/coupled_team.json");
    let cfg = ScenarioConfig::load(&path)?;
    let grid = cfg.grid(Some(0.005))?;
    let spec = cfg.lq_spec(&grid)?;
    let sol = solve_lq_team(&spec, &grid, cfg.fixed_point())?;

    let battery = standard_battery(spec.num_agents());
    let report = verify_person_by_person(&spec, &sol.strategy, &battery, &grid, 2000, 7)?;
    println!("reference J = {:.4} ± {:.4}", report.reference.mean, report.reference.std_error);
    println!("{:>3}  {:<22} {:>11} {:>9}", "dm", "perturbation", "dJ", "dJ/se");
    for e in &report.entries {
        let dm = e.dm.map_or_else(|| "-".into(), |d| d.to_string());
        println!("{dm:>3}  {:<22} {:>+11.3e} {:>9.1}", e.perturbation, e.delta, e.delta / e.std_error);
    }
    for g in &report.gradient {
        println!("DM {} conditional gradient: max {:.1e} at node {}", g.dm, g.max_norm, g.worst_node);
    }
    println!("all checks pass: {}", report.pass);
    Ok(())
}
