//! Distributed filtering team: controls only enter the cost, so each DM's
//! filter is an ordinary Kalman–Bucy filter. Checks the filter ensemble
//! statistics on 2000 simulated paths.
//!
//! cargo run --release --example filtering

use team_lqg::config::ScenarioConfig;
use team_lqg::filters::FilterBank;
use team_lqg::optimality::{default_probes, filter_statistics};
use team_lqg::team::solve_filtering_team;

fn main() -> team_lqg::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/coupled_filtering.json");
    let cfg = ScenarioConfig::load(&path)?;
    let grid = cfg.grid(Some(0.005))?;
    let spec = cfg.lq_spec(&grid)?;
    let sol = solve_filtering_team(&spec, &grid)?;
    let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid)?;

    let stats = filter_statistics(&spec, &sol.strategy, &bank, &grid, &default_probes(&grid), 2000, 1, None)?;
    for s in &stats {
        println!("DM {}", s.dm);
        for p in &s.probes {
            let bias: Vec<String> = p.error_mean.iter().map(|e| format!("{:+.3}", e.mean / e.std_error)).collect();
            println!("  t = {:.2}  error mean / se: [{}]", grid.time(p.node), bias.join(" "));
        }
        println!(
            "  innovation variation {:.5} vs {:.5}  (unbiased {}, orthogonal {}, innovation {})",
            s.innovation_variation[0], s.innovation_expected[0], s.error_mean_pass, s.cross_covariance_pass, s.innovation_pass
        );
    }
    Ok(())
}
