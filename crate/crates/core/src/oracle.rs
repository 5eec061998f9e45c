//! Centralized partially-observed LQG reference.
//!
//! Treats every control as one decision maker that sees every observation
//! channel, and solves the textbook pipeline: a control Riccati equation
//! (cross weight removed by the usual change of variables), a linear offset
//! equation for the `m`, `F` terms, and a Kalman–Bucy filter with stacked
//! channels and block-diagonal noise.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::riccati_covariance;
use crate::integrators::rk4_backward;
use crate::linalg::inverse;
use crate::model::{serde_mat, LqTeamSpec, MatrixSchedule, TimeGrid, VectorSchedule};
use crate::riccati::solve_riccati;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CentralizedLqg {
    pub times: Vec<f64>,
    /// `u = gains[k] x̂ + offsets[k]`.
    #[serde(serialize_with = "serde_mat::matrices")]
    pub gains: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "serde_mat::vectors")]
    pub offsets: Vec<DVector<f64>>,
    #[serde(serialize_with = "serde_mat::matrices")]
    pub riccati: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "serde_mat::matrices")]
    pub filter_covariance: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "serde_mat::matrices")]
    pub filter_gain: Vec<DMatrix<f64>>,
}

fn tab(grid: &TimeGrid, f: impl Fn(usize) -> DMatrix<f64>) -> MatrixSchedule {
    MatrixSchedule::tabulated((0..grid.len()).map(f).collect())
}

fn r_inv(spec: &LqTeamSpec, k: usize) -> Result<DMatrix<f64>> {
    inverse(spec.r.at(k)).ok_or_else(|| Error::Degenerate {
        node: k,
        what: "R not invertible".into(),
    })
}

/// Centralized LQG gains, offsets and filter for `spec`.
pub fn centralized_lqg(spec: &LqTeamSpec, grid: &TimeGrid) -> Result<CentralizedLqg> {
    let n = spec.state_dim();
    if spec.has_feedback_channels() {
        return Err(Error::InvalidArgument("the LQG reference needs observation-independent channels".into()));
    }
    let mut rinv = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        rinv.push(r_inv(spec, k)?);
    }
    // u = v − R⁻¹E x turns the cross weight into A − BR⁻¹E and H − E*R⁻¹E
    let a_t = tab(grid, |k| spec.a.at(k) - spec.b.at(k) * &rinv[k] * spec.e.at(k));
    let h_t = tab(grid, |k| {
        let mut h = spec.h.at(k) - spec.e.at(k).transpose() * &rinv[k] * spec.e.at(k);
        crate::linalg::symmetrize(&mut h);
        h
    });
    let kk = solve_riccati(&a_t, &spec.b, &spec.r, &h_t, &spec.terminal, grid)?;
    let gains: Vec<DMatrix<f64>> = (0..grid.len())
        .map(|k| -(&rinv[k] * (spec.b.at(k).transpose() * kk.at(k) + spec.e.at(k))))
        .collect();

    // ṙ = −(A + B Γ)* r + (K B + E*) R⁻¹ m − F,  r(T) = 0
    let closed = tab(grid, |k| spec.a.at(k) + spec.b.at(k) * &gains[k]);
    let forcing = VectorSchedule::tabulated(
        (0..grid.len())
            .map(|k| {
                (kk.at(k) * spec.b.at(k) + spec.e.at(k).transpose()) * &rinv[k] * spec.m.at(k) - spec.f.at(k)
            })
            .collect(),
    );
    let r = rk4_backward(grid, DVector::zeros(n), |pos, r| {
        -(closed.at_pos(pos).tr_mul(r)) + &*forcing.at_pos(pos)
    })?;
    let offsets = (0..grid.len())
        .map(|k| -(&rinv[k] * (spec.b.at(k).transpose() * &r[k] + spec.m.at(k))))
        .collect();

    // stacked channels
    let kdim: usize = spec.obs_dims().iter().sum();
    let c = tab(grid, |k| {
        let mut out = DMatrix::zeros(kdim, n);
        let mut row = 0;
        for ch in &spec.channels {
            let ci = ch.gain.linear().expect("checked above").at(k);
            out.view_mut((row, 0), (ci.nrows(), n)).copy_from(ci);
            row += ci.nrows();
        }
        out
    });
    let mut dinv_tab = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut out = DMatrix::zeros(kdim, kdim);
        let mut row = 0;
        for ch in &spec.channels {
            let di = ch.noise.at(k);
            let inv = inverse(di).ok_or_else(|| Error::Degenerate {
                node: k,
                what: "observation noise not invertible".into(),
            })?;
            out.view_mut((row, row), (di.nrows(), di.nrows())).copy_from(&inv);
            row += di.nrows();
        }
        dinv_tab.push(out);
    }
    let dinv = MatrixSchedule::tabulated(dinv_tab);
    let q = spec.g.map(|g| g * g.transpose());
    let p = riccati_covariance(&spec.a, &q, &c, &dinv, &spec.initial_cov, grid)?;
    let filter_gain = p
        .iter()
        .enumerate()
        .map(|(k, pk)| pk * c.at(k).transpose() * dinv.at(k))
        .collect();
    Ok(CentralizedLqg {
        times: grid.nodes().collect(),
        gains,
        offsets,
        riccati: kk.values,
        filter_covariance: p,
        filter_gain,
    })
}
