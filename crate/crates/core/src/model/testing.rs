//! Small spec builders shared by unit tests.

use nalgebra::{DMatrix, DVector};

use super::{LqTeamSpec, MatrixSchedule, ObservationChannel};

pub fn c(v: f64) -> MatrixSchedule {
    MatrixSchedule::constant(DMatrix::from_element(1, 1, v))
}

pub fn mat(rows: usize, cols: usize, v: &[f64]) -> MatrixSchedule {
    MatrixSchedule::constant(DMatrix::from_row_slice(rows, cols, v))
}

/// Scalar one-DM spec.
#[allow(clippy::too_many_arguments)]
pub fn scalar(a: f64, b: f64, g: f64, cc: f64, d: f64, h: f64, r: f64, mt: f64, x0: f64, p0: f64) -> LqTeamSpec {
    LqTeamSpec::new(
        vec![1],
        vec![1],
        c(a),
        c(b),
        c(g),
        vec![ObservationChannel::linear(c(cc), c(d))],
        c(h),
        c(r),
        DMatrix::from_element(1, 1, mt),
        DVector::from_element(1, x0),
        DMatrix::from_element(1, 1, p0),
    )
}

/// Two identical scalar subsystems, each DM observing its own state.
pub fn twin_decoupled(a: f64, b: f64, g: f64, d: f64, x0: f64, p0: f64) -> LqTeamSpec {
    LqTeamSpec::new(
        vec![1, 1],
        vec![1, 1],
        mat(2, 2, &[a, 0.0, 0.0, a]),
        mat(2, 2, &[b, 0.0, 0.0, b]),
        mat(2, 2, &[g, 0.0, 0.0, g]),
        vec![
            ObservationChannel::linear(mat(1, 2, &[1.0, 0.0]), c(d)),
            ObservationChannel::linear(mat(1, 2, &[0.0, 1.0]), c(d)),
        ],
        mat(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        mat(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        DMatrix::identity(2, 2),
        DVector::from_element(2, x0),
        DMatrix::identity(2, 2) * p0,
    )
}
