use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use team_lqg::config::{ScenarioConfig, ScenarioKind};
use team_lqg::filters::FilterBank;
use team_lqg::model::{BroadcastSpec, MatrixSchedule, ObservationChannel, TimeGrid, VectorSchedule};
use team_lqg::optimality::{estimate_cost_with, path_costs};
use team_lqg::team::{solve_broadcast_team, solve_lq_team};

fn c(v: f64) -> MatrixSchedule {
    MatrixSchedule::constant(DMatrix::from_element(1, 1, v))
}

fn load(name: &str) -> ScenarioConfig {
    let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ScenarioConfig::load(&p).unwrap()
}

#[test]
fn config_round_trip_gives_the_same_solution() {
    let cfg = load("coupled_team.json");
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let spec = cfg.lq_spec(&grid).unwrap();
    let again = ScenarioConfig::from_json(&ScenarioConfig::from_lq_spec(ScenarioKind::LqTeam, &spec, &grid).to_json().unwrap())
        .unwrap()
        .lq_spec(&grid)
        .unwrap();
    let a = solve_lq_team(&spec, &grid, cfg.fixed_point()).unwrap();
    let b = solve_lq_team(&again, &grid, cfg.fixed_point()).unwrap();
    assert_eq!(a.strategy, b.strategy);
}

#[test]
fn cost_estimate_is_the_mean_of_path_costs() {
    let cfg = load("coupled_team.json");
    let grid = TimeGrid::new(1.0, 0.02).unwrap();
    let spec = cfg.lq_spec(&grid).unwrap();
    let sol = solve_lq_team(&spec, &grid, cfg.fixed_point()).unwrap();
    let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
    let costs = path_costs(&spec, &sol.strategy, &bank, &grid, 300, 4, None).unwrap();
    let est = estimate_cost_with(&spec, &sol.strategy, &bank, &grid, 300, 4, Some(2)).unwrap();
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    assert!((est.mean - mean).abs() <= 1e-12 * mean.abs());
    assert!(costs.iter().all(|j| *j > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // R ū + m = 0 for any positive-definite 2x2 coupling when E = 0.
    #[test]
    fn broadcast_means_solve_the_coupled_system(
        a in 0.5f64..3.0, b in 0.5f64..3.0, rho in -0.9f64..0.9, m0 in -2.0f64..2.0, m1 in -2.0f64..2.0,
    ) {
        let off = rho * (a * b).sqrt();
        let r = DMatrix::from_row_slice(2, 2, &[a, off, off, b]);
        let spec = BroadcastSpec {
            message_dims: vec![1],
            control_dims: vec![1, 1],
            channels: vec![
                ObservationChannel::linear(c(1.0), c(1.0)),
                ObservationChannel::linear(c(0.5), c(2.0)),
            ],
            prior_mean: DVector::from_element(1, 0.2),
            prior_cov: DMatrix::from_element(1, 1, 1.0),
            r: MatrixSchedule::constant(r.clone()),
            e: MatrixSchedule::zeros(2, 1),
            h: c(1.0),
            f: VectorSchedule::zeros(1),
            m: VectorSchedule::constant(DVector::from_vec(vec![m0, m1])),
        };
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let sol = solve_broadcast_team(&spec, &grid).unwrap();
        let m = DVector::from_vec(vec![m0, m1]);
        for u in &sol.strategy.mean_controls {
            prop_assert!((&r * u + &m).amax() < 1e-12);
        }
    }
}
