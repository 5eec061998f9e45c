//! Two coupled oscillators, each steered by a DM that sees only the
//! position of its own subsystem.
//!
//! cargo run --release --example lq_team

use team_lqg::config::ScenarioConfig;
use team_lqg::team::solve_lq_team;

fn main() -> team_lqg::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/coupled_team.json");
    let cfg = ScenarioConfig::load(&path)?;
    let grid = cfg.grid(None)?;
    let spec = cfg.lq_spec(&grid)?;
    let sol = solve_lq_team(&spec, &grid, cfg.fixed_point())?;
    let rep = &sol.report;

    println!(
        "fixed point: {} iterations, residual {:.2e} (tol {:.0e})",
        rep.iterations, rep.fixed_point_residual, rep.tolerance
    );
    println!("moment closure: {}", rep.moment_closure);
    for (i, law) in sol.strategy.laws.iter().enumerate() {
        println!("\nDM {i}: u = G(t) xhat + g(t)");
        for k in [0, grid.steps() / 2, grid.steps()] {
            let g: Vec<String> = law.gains[k].iter().map(|v| format!("{v:+.3}")).collect();
            println!("  t = {:.2}  G = [{}]  g = {:+.4}", grid.time(k), g.join(" "), law.offsets[k][0]);
        }
    }
    println!("\nmean actions at t = 0: {:?}", sol.strategy.mean_controls[0].as_slice());
    Ok(())
}
