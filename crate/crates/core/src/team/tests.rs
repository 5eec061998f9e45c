use nalgebra::{DMatrix, DVector};

use super::*;
use crate::filters::team_coupled_filter;
use crate::integrators::Simulator;
use crate::model::testing::{c, mat, scalar, twin_decoupled};
use crate::model::{MatrixSchedule, ObservationChannel, VectorSchedule};
use crate::oracle::centralized_lqg;

fn pair_broadcast(r: MatrixSchedule, m: [f64; 2]) -> BroadcastSpec {
    BroadcastSpec {
        message_dims: vec![1],
        control_dims: vec![1, 1],
        channels: vec![
            ObservationChannel::linear(c(1.0), c(1.0)),
            ObservationChannel::linear(c(1.0), c(2.0)),
        ],
        prior_mean: DVector::from_element(1, 0.5),
        prior_cov: DMatrix::from_element(1, 1, 1.0),
        r,
        e: MatrixSchedule::zeros(2, 1),
        h: c(1.0),
        f: VectorSchedule::zeros(1),
        m: VectorSchedule::constant(DVector::from_vec(m.to_vec())),
    }
}

#[test]
fn broadcast_mean_controls_solve_the_two_by_two_system() {
    let spec = pair_broadcast(mat(2, 2, &[1.0, 0.5, 0.5, 1.0]), [1.0, 1.0]);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let sol = solve_broadcast_team(&spec, &grid).unwrap();
    for u in &sol.strategy.mean_controls {
        assert!((u[0] + 2.0 / 3.0).abs() < 1e-9 && (u[1] + 2.0 / 3.0).abs() < 1e-9);
    }
    assert_eq!(sol.report.status, SolverStatus::Direct);
}

#[test]
fn broadcast_without_coupling_uses_own_terms_only() {
    let mut spec = pair_broadcast(mat(2, 2, &[2.0, 0.0, 0.0, 4.0]), [1.0, -2.0]);
    spec.e = mat(2, 1, &[1.0, 3.0]);
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let sol = solve_broadcast_team(&spec, &grid).unwrap();
    for k in 0..grid.len() {
        assert!((sol.strategy.laws[0].gains[k][(0, 0)] + 0.5).abs() < 1e-15);
        assert!((sol.strategy.laws[1].gains[k][(0, 0)] + 0.75).abs() < 1e-15);
        assert!((sol.strategy.laws[0].offsets[k][0] + 0.5).abs() < 1e-15);
        assert!((sol.strategy.laws[1].offsets[k][0] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn broadcast_singular_coupling_names_the_node() {
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let mut rs = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]); grid.len()];
    rs[3] = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 - 1e-13, 1.0 - 1e-13, 1.0]);
    let spec = pair_broadcast(MatrixSchedule::tabulated(rs), [1.0, 1.0]);
    match solve_broadcast_team(&spec, &grid) {
        Err(Error::SingularCoupling { node, condition }) => {
            assert_eq!(node, 3);
            assert!(condition > 1e12);
        }
        other => panic!("expected singular coupling, got {other:?}"),
    }
}

#[test]
fn invalid_spec_is_a_config_error() {
    let spec = scalar(0.0, 1.0, 0.0, 1.0, 1.0, 1.0, -0.1, 0.0, 0.0, 1.0);
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    match solve_lq_team(&spec, &grid, FixedPointConfig::default()) {
        Err(Error::Config(msg)) => assert!(msg.contains("R not positive definite")),
        other => panic!("expected config error, got {other:?}"),
    }
}

/// A 2-state single-DM spec with PSD weights built from fixed factors.
fn two_state_single_dm() -> LqTeamSpec {
    let l = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, -0.4, 0.6]);
    let h = &l * l.transpose();
    let lm = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.5]);
    LqTeamSpec::new(
        vec![2],
        vec![1],
        mat(2, 2, &[0.1, 1.0, -0.6, -0.2]),
        mat(2, 1, &[0.2, 1.0]),
        mat(2, 1, &[0.1, 0.5]),
        vec![ObservationChannel::linear(mat(1, 2, &[1.0, 0.3]), c(0.2))],
        MatrixSchedule::constant(h),
        c(0.7),
        &lm * lm.transpose(),
        DVector::from_vec(vec![0.5, -0.2]),
        DMatrix::identity(2, 2) * 0.3,
    )
}

#[test]
fn single_dm_matches_centralized_lqg() {
    let spec = two_state_single_dm();
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
    let lqg = centralized_lqg(&spec, &grid).unwrap();
    let worst = (0..grid.len())
        .map(|k| (&sol.strategy.laws[0].gains[k] - &lqg.gains[k]).amax())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "gain error {worst}");
    assert!(sol.report.offsets[0].iter().all(|r| r.amax() == 0.0));
    assert!(sol.strategy.laws[0].offsets.iter().all(|o| o.amax() == 0.0));
    assert!((&sol.report.filter_covariances[0][grid.steps()] - &lqg.filter_covariance[grid.steps()]).amax() < 1e-12);
}

#[test]
fn single_dm_with_cross_and_linear_terms_matches_centralized_lqg() {
    let spec = two_state_single_dm()
        .with_cross(mat(1, 2, &[0.2, -0.1]))
        .with_control_linear(VectorSchedule::constant(DVector::from_element(1, 0.3)))
        .with_state_linear(VectorSchedule::constant(DVector::from_vec(vec![0.1, -0.2])));
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
    let lqg = centralized_lqg(&spec, &grid).unwrap();
    for k in 0..grid.len() {
        assert!((&sol.strategy.laws[0].gains[k] - &lqg.gains[k]).amax() < 1e-8);
        assert!((&sol.strategy.laws[0].offsets[k] - &lqg.offsets[k]).amax() < 1e-8);
    }
}

#[test]
fn noiseless_origin_start_gives_zero_controls() {
    let mut spec = twin_decoupled(0.2, 1.0, 0.0, 0.3, 0.0, 0.0);
    spec.a = mat(2, 2, &[0.2, 0.3, -0.1, 0.0]);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
    assert!(sol.strategy.mean_controls.iter().all(|u| u.amax() == 0.0));
    let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
    let tr = Simulator::new(&spec, Some(&sol.strategy), Some(&bank), &grid)
        .unwrap()
        .trajectory(1, 0)
        .unwrap();
    assert!(tr.controls.iter().flatten().all(|u| u.amax() == 0.0));
    assert!(tr.estimates.iter().flatten().all(|e| e.amax() == 0.0));
}

#[test]
fn twin_subsystems_have_mirrored_gains() {
    let spec = twin_decoupled(-0.3, 1.0, 0.4, 0.2, 0.6, 0.5);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
    for k in 0..grid.len() {
        let g1 = &sol.strategy.laws[0].gains[k];
        let g2 = &sol.strategy.laws[1].gains[k];
        assert!((g1[(0, 0)] - g2[(0, 1)]).abs() < 1e-9 && (g1[(0, 1)] - g2[(0, 0)]).abs() < 1e-9);
    }
    let n = solve_lq_team_n(&spec, &grid, FixedPointConfig::default()).unwrap();
    assert_eq!(n.strategy, sol.strategy);
}

#[test]
fn domain_of_each_entry_point() {
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let one = scalar(0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0);
    assert!(solve_lq_team_n(&one, &grid, FixedPointConfig::default()).is_err());
    let three = ring(0.0);
    assert!(solve_lq_team(&three, &grid, FixedPointConfig::default()).is_err());
    let ctrl = twin_decoupled(0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
    assert!(solve_filtering_team(&ctrl, &grid).is_err());
}

/// Three scalar subsystems on a ring: `ẋᵢ = −0.4 xᵢ + κ xᵢ₊₁ + uᵢ`.
fn ring(kappa: f64) -> LqTeamSpec {
    let mut a = DMatrix::identity(3, 3) * -0.4;
    for i in 0..3 {
        a[(i, (i + 1) % 3)] = kappa;
    }
    // coupled rings also share control weight
    let off = if kappa == 0.0 { 0.0 } else { 0.2 };
    let r = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { off });
    let e = |i: usize| {
        let mut m = DMatrix::zeros(1, 3);
        m[(0, i)] = 1.0;
        MatrixSchedule::constant(m)
    };
    LqTeamSpec::new(
        vec![1, 1, 1],
        vec![1, 1, 1],
        MatrixSchedule::constant(a),
        MatrixSchedule::constant(DMatrix::identity(3, 3)),
        MatrixSchedule::constant(DMatrix::identity(3, 3) * 0.3),
        (0..3).map(|i| ObservationChannel::linear(e(i), c(0.2))).collect(),
        MatrixSchedule::constant(DMatrix::identity(3, 3)),
        MatrixSchedule::constant(r),
        DMatrix::identity(3, 3) * 0.5,
        DVector::from_element(3, 0.8),
        DMatrix::identity(3, 3) * 0.2,
    )
}

#[test]
fn decoupled_three_dm_team_splits_into_single_dm_problems() {
    let spec = ring(0.0);
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let sol = solve_lq_team_n(&spec, &grid, FixedPointConfig::default()).unwrap();
    let single = scalar(-0.4, 1.0, 0.3, 1.0, 0.2, 1.0, 1.0, 0.5, 0.8, 0.2);
    let lqg = centralized_lqg(&single, &grid).unwrap();
    for i in 0..3 {
        for k in 0..grid.len() {
            let g = &sol.strategy.laws[i].gains[k];
            for j in 0..3 {
                let want = if i == j { lqg.gains[k][(0, 0)] } else { 0.0 };
                assert!((g[(0, j)] - want).abs() < 1e-9);
            }
            assert!(sol.strategy.laws[i].offsets[k].amax() < 1e-12);
        }
    }
}

#[test]
fn ring_gains_are_invariant_under_relabeling() {
    let spec = ring(0.3);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let sol = solve_lq_team_n(&spec, &grid, FixedPointConfig::default()).unwrap();
    for k in 0..grid.len() {
        let g0 = &sol.strategy.laws[0].gains[k];
        for i in 1..3 {
            let gi = &sol.strategy.laws[i].gains[k];
            for j in 0..3 {
                assert!((gi[(0, (j + i) % 3)] - g0[(0, j)]).abs() < 1e-9);
            }
            assert!((sol.strategy.laws[i].offsets[k][0] - sol.strategy.laws[0].offsets[k][0]).abs() < 1e-9);
        }
    }
}

fn filtering_pair(a: f64, r: [f64; 4], e: [f64; 4], m: [f64; 2], x0: [f64; 2]) -> LqTeamSpec {
    let mut spec = twin_decoupled(a, 0.0, 0.3, 0.2, 0.0, 0.4);
    spec.r = mat(2, 2, &r);
    spec.initial_mean = DVector::from_vec(x0.to_vec());
    spec.with_cross(mat(2, 2, &e))
        .with_control_linear(VectorSchedule::constant(DVector::from_vec(m.to_vec())))
}

#[test]
fn identity_weights_give_negated_estimates() {
    let spec = filtering_pair(-0.5, [1.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 1.0], [0.0, 0.0], [1.0, -2.0]);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let sol = solve_filtering_team(&spec, &grid).unwrap();
    for k in 0..grid.len() {
        assert_eq!(sol.strategy.laws[0].gains[k], DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
        assert_eq!(sol.strategy.laws[1].gains[k], DMatrix::from_row_slice(1, 2, &[0.0, -1.0]));
        assert!((&sol.strategy.mean_controls[k] + &sol.report.mean_state[k]).amax() < 1e-15);
    }
}

#[test]
fn frozen_mean_gives_constant_mean_control() {
    let spec = filtering_pair(0.0, [1.0, 0.4, 0.4, 2.0], [1.0, 0.5, -0.3, 1.0], [0.2, 0.1], [1.0, -1.0]);
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let sol = solve_filtering_team(&spec, &grid).unwrap();
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
    let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 1.0]);
    let want = -r.lu().solve(&(e * DVector::from_vec(vec![1.0, -1.0]) + DVector::from_vec(vec![0.2, 0.1]))).unwrap();
    for u in &sol.strategy.mean_controls {
        assert!((u - &want).amax() < 1e-12);
    }

    // m = −E x̄₀ cancels the mean
    let e = [1.0, 0.5, -0.3, 1.0];
    let m = [-(1.0 - 0.5), -(-0.3 - 1.0)];
    let spec = filtering_pair(0.0, [1.0, 0.4, 0.4, 2.0], e, m, [1.0, -1.0]);
    let sol = solve_filtering_team(&spec, &grid).unwrap();
    assert!(sol.strategy.mean_controls.iter().all(|u| u.amax() < 1e-15));
}

#[test]
fn lq_team_without_control_matches_filtering_team() {
    let spec = filtering_pair(-0.3, [1.0, 0.3, 0.3, 1.5], [0.7, 0.2, 0.1, -0.5], [0.4, -0.2], [0.5, 1.0]);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let a = solve_filtering_team(&spec, &grid).unwrap();
    let b = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
    for i in 0..2 {
        for k in 0..grid.len() {
            assert!((&a.strategy.laws[i].gains[k] - &b.strategy.laws[i].gains[k]).amax() < 1e-8);
            assert!((&a.strategy.laws[i].offsets[k] - &b.strategy.laws[i].offsets[k]).amax() < 1e-8);
        }
    }
}

#[test]
fn each_law_reads_only_its_own_observations() {
    let spec = twin_decoupled(-0.3, 1.0, 0.4, 0.2, 0.6, 0.5);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let sol = solve_lq_team(&spec, &grid, FixedPointConfig::default()).unwrap();
    let bank = FilterBank::for_strategy(&spec, &sol.strategy, &grid).unwrap();
    let tr = Simulator::new(&spec, Some(&sol.strategy), Some(&bank), &grid)
        .unwrap()
        .trajectory(2, 0)
        .unwrap();
    // rebuild DM 0's actions from y⁰ alone
    let track = team_coupled_filter(&spec, &sol.strategy, 0, &tr.observations[0], &grid).unwrap();
    for k in 0..grid.len() {
        let u = sol.strategy.control(0, k, &track.estimates[k]);
        assert!((u - &tr.controls[0][k]).amax() < 1e-10);
    }
}
