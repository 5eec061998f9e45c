use nalgebra::{DMatrix, DVector};

use super::*;
use crate::integrators::{monte_carlo, transition_matrix, NodeView, Simulator};
use crate::linalg::min_eigenvalue;
use crate::model::testing::{c, mat, scalar, twin_decoupled};
use crate::model::{FeedbackGain, ObservationChannel};
use crate::rng::NoiseSource;

fn scalar_broadcast(cc: f64, d: f64, p0: f64) -> BroadcastSpec {
    BroadcastSpec {
        message_dims: vec![1],
        control_dims: vec![1],
        channels: vec![ObservationChannel::linear(c(cc), c(d))],
        prior_mean: DVector::from_element(1, 0.7),
        prior_cov: DMatrix::from_element(1, 1, p0),
        r: c(1.0),
        e: c(0.0),
        h: c(0.0),
        f: VectorSchedule::zeros(1),
        m: VectorSchedule::zeros(1),
    }
}

fn zeros_path(grid: &TimeGrid) -> Vec<DVector<f64>> {
    vec![DVector::zeros(1); grid.len()]
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn static_channel_covariance_is_one_over_one_plus_t() {
    let spec = scalar_broadcast(1.0, 1.0, 1.0);
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let track = static_channel_filter(&spec, 0, &zeros_path(&grid), &grid).unwrap();
    assert!((track.covariances[grid.steps()][(0, 0)] - 0.5).abs() < 1e-6);
}

#[test]
fn silent_channel_keeps_prior() {
    let spec = scalar_broadcast(0.0, 1.0, 0.8);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let y: Vec<DVector<f64>> = (0..grid.len()).map(|k| DVector::from_element(1, (k as f64).sin())).collect();
    let track = static_channel_filter(&spec, 0, &y, &grid).unwrap();
    assert!(track.estimates.iter().all(|e| e[0] == 0.7));
    assert!(track.covariances.iter().all(|p| p[(0, 0)] == 0.8));
}

#[test]
fn kalman_steady_state_root() {
    let spec = scalar(-1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0);
    let grid = TimeGrid::new(10.0, 1e-3).unwrap();
    let track = kalman_bucy_filter(&spec, 0, &zeros_path(&grid), &grid).unwrap();
    let want = 2f64.sqrt() - 1.0;
    assert!((track.covariances[grid.steps()][(0, 0)] - want).abs() < 1e-4);
}

#[test]
fn blind_random_walk_covariance_grows_linearly() {
    let spec = scalar(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0);
    let grid = TimeGrid::new(2.0, 0.01).unwrap();
    let track = kalman_bucy_filter(&spec, 0, &zeros_path(&grid), &grid).unwrap();
    for (k, p) in track.covariances.iter().enumerate() {
        assert!((p[(0, 0)] - grid.time(k)).abs() < 1e-12);
    }
}

#[test]
fn noiseless_blind_covariance_is_transported() {
    let a = mat(2, 2, &[-0.3, 1.0, -0.5, 0.1]);
    let mut spec = twin_decoupled(0.0, 0.0, 0.0, 1.0, 0.0, 1.0);
    spec.a = a.clone();
    spec.channels[0] = ObservationChannel::linear(mat(1, 2, &[0.0, 0.0]), c(1.0));
    spec.initial_cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let track = kalman_bucy_filter(&spec, 0, &zeros_path(&grid), &grid).unwrap();
    for k in [0, 250, 1000] {
        let phi = transition_matrix(&a, &grid, 0, k).unwrap();
        let want = &phi * &spec.initial_cov * phi.transpose();
        assert!((&track.covariances[k] - want).amax() < 1e-9);
    }
}

#[test]
fn controlled_spec_needs_explicit_input() {
    let spec = scalar(0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0);
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    assert!(kalman_bucy_filter(&spec, 0, &zeros_path(&grid), &grid).is_err());
}

#[test]
fn single_dm_team_filter_is_kalman_with_input() {
    let spec = scalar(-0.4, 1.5, 0.5, 1.0, 0.3, 1.0, 1.0, 1.0, 0.2, 0.4);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let mut strat = DecentralizedStrategy::zero(&[1], 1, &grid);
    for k in 0..grid.len() {
        strat.laws[0].gains[k][(0, 0)] = -0.7;
        strat.laws[0].offsets[k][0] = 0.1 * grid.time(k);
    }
    let bank = FilterBank::for_strategy(&spec, &strat, &grid).unwrap();
    let sim = Simulator::new(&spec, Some(&strat), Some(&bank), &grid).unwrap();
    let tr = sim.trajectory(7, 0).unwrap();
    let team = team_coupled_filter(&spec, &strat, 0, &tr.observations[0], &grid).unwrap();
    let input: Vec<DVector<f64>> = (0..grid.len()).map(|k| tr.controls[0][k].clone() * 1.5).collect();
    let kal = kalman_bucy_filter_with_input(&spec, 0, &input, &tr.observations[0], &grid).unwrap();
    for k in 0..grid.len() {
        assert!((&team.estimates[k] - &kal.estimates[k]).amax() < 1e-12);
        // the standalone run reproduces the simulator's filter
        assert!((&team.estimates[k] - &tr.estimates[0][k]).amax() < 1e-10);
    }
    assert_eq!(team.covariances, kal.covariances);
}

#[test]
fn uncontrolled_team_filter_is_kalman() {
    let spec = twin_decoupled(-0.5, 0.0, 0.4, 0.2, 0.3, 0.5);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let mut strat = DecentralizedStrategy::zero(&[1, 1], 2, &grid);
    for m in strat.mean_controls.iter_mut() {
        m.fill(0.3);
    }
    let y: Vec<DVector<f64>> = (0..grid.len()).map(|k| DVector::from_element(1, 0.01 * k as f64)).collect();
    for dm in 0..2 {
        let a = team_coupled_filter(&spec, &strat, dm, &y, &grid).unwrap();
        let b = kalman_bucy_filter(&spec, dm, &y, &grid).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn symmetric_subsystems_give_matching_filter_statistics() {
    let spec = twin_decoupled(-0.5, 1.0, 0.5, 0.2, 1.0, 0.3);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let mut strat = DecentralizedStrategy::zero(&[1, 1], 2, &grid);
    for k in 0..grid.len() {
        strat.laws[0].gains[k] = DMatrix::from_row_slice(1, 2, &[-0.8, 0.0]);
        strat.laws[1].gains[k] = DMatrix::from_row_slice(1, 2, &[0.0, -0.8]);
    }
    let bank = FilterBank::for_strategy(&spec, &strat, &grid).unwrap();
    let sim = Simulator::new(&spec, Some(&strat), Some(&bank), &grid).unwrap();
    let noise = NoiseSource::new(21);
    let ends = monte_carlo(10_000, None, |p| {
        let mut last = (0.0, 0.0);
        sim.run_path(&noise, p, &mut |v: &NodeView<'_>| last = (v.estimate(0)[0], v.estimate(1)[1]))
            .unwrap();
        last
    });
    let diff: Vec<f64> = ends.iter().map(|(a, b)| a - b).collect();
    let (m, se) = mean_se(&diff);
    assert!(m.abs() <= 4.0 * se, "{m} vs se {se}");
}

fn broadcast_ensemble(spec: &BroadcastSpec, grid: &TimeGrid, paths: u64, seed: u64) -> Vec<(f64, f64, Vec<f64>)> {
    let team = spec.to_team_spec();
    let bank = FilterBank::uncontrolled(&team, grid).unwrap();
    let zero = DecentralizedStrategy::zero(&team.control_dims, team.state_dim(), grid);
    let sim = Simulator::new(&team, Some(&zero), Some(&bank), grid).unwrap();
    let noise = NoiseSource::new(seed);
    monte_carlo(paths, None, |p| {
        let mut theta = 0.0;
        let mut est = 0.0;
        let mut innov = Vec::with_capacity(grid.len());
        sim.run_path(&noise, p, &mut |v: &NodeView<'_>| {
            theta = v.state[0];
            est = v.estimate(0)[0];
            innov.push(v.innovations[0][0]);
        })
        .unwrap();
        (theta, est, innov)
    })
}

#[test]
fn channel_filter_is_unbiased_orthogonal_and_white() {
    let spec = scalar_broadcast(1.0, 0.5, 1.0);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let paths = 10_000;
    let runs = broadcast_ensemble(&spec, &grid, paths, 77);

    let est: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (m, se) = mean_se(&est);
    assert!((m - 0.7).abs() <= 4.0 * se);

    // cov(θ − θ̂, θ̂)
    let prod: Vec<f64> = runs.iter().map(|r| (r.0 - r.1) * (r.1 - 0.7)).collect();
    let (m, se) = mean_se(&prod);
    assert!(m.abs() <= 4.0 * se, "orthogonality {m} se {se}");

    // innovation variance and lag-1 correlation
    let total: Vec<f64> = runs.iter().map(|r| r.2.iter().sum::<f64>()).collect();
    let var = total.iter().map(|v| v * v).sum::<f64>() / paths as f64;
    assert!((var - 0.5).abs() <= 0.05 * 0.5, "innovation variance {var}");
    let lag: Vec<f64> = runs.iter().map(|r| r.2[40] * r.2[41]).collect();
    let (m, se) = mean_se(&lag);
    assert!(m.abs() <= 4.0 * se);
}

#[test]
fn channel_covariance_is_monotone() {
    let spec = scalar_broadcast(1.3, 0.4, 2.0);
    let grid = TimeGrid::new(2.0, 0.01).unwrap();
    let track = static_channel_filter(&spec, 0, &zeros_path(&grid), &grid).unwrap();
    for w in track.covariances.windows(2) {
        assert!(min_eigenvalue(&(&w[0] - &w[1])) >= -1e-8);
    }
}

#[test]
fn feedback_channel_runs_pathwise_covariance() {
    let mut spec = scalar_broadcast(1.0, 1.0, 1.0);
    spec.channels[0].gain = ObservationGain::Feedback(FeedbackGain {
        base: c(1.0),
        slope: DMatrix::from_element(1, 1, 0.5),
        direction: DVector::from_element(1, 2.0),
        lipschitz: 1.0,
    });
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let y: Vec<DVector<f64>> = (0..grid.len()).map(|k| DVector::from_element(1, 0.02 * k as f64)).collect();
    let track = static_channel_filter(&spec, 0, &y, &grid).unwrap();
    for w in track.covariances.windows(2) {
        assert!(w[1][(0, 0)] <= w[0][(0, 0)] && w[1][(0, 0)] > 0.0);
    }
    // a stronger gain than the base channel learns faster
    let base = static_channel_filter(&scalar_broadcast(1.0, 1.0, 1.0), 0, &y, &grid).unwrap();
    assert!(track.covariances[grid.steps()][(0, 0)] < base.covariances[grid.steps()][(0, 0)]);
}

#[test]
fn exact_filter_of_uncontrolled_team_matches_closure() {
    let spec = twin_decoupled(-0.5, 0.0, 0.4, 0.2, 0.3, 0.5);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let strat = DecentralizedStrategy::zero(&[1, 1], 2, &grid);
    let bank = FilterBank::for_strategy(&spec, &strat, &grid).unwrap();
    let exact = bank.clone().with_exact_filter(&spec, &strat, 0, &grid).unwrap();
    let p_closure = &bank.designs[0].tabulated.as_ref().unwrap().0;
    let p_exact = &exact.designs[0].tabulated.as_ref().unwrap().0;
    for k in 0..grid.len() {
        assert!((p_exact[k].view((0, 0), (2, 2)) - &p_closure[k]).amax() < 1e-9);
    }
}
