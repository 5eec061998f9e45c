//! Classical fourth-order Runge–Kutta on the time grid.
//!
//! Vector fields receive a fractional node position (`k`, `k + ½`, `k + 1`)
//! instead of a time so coefficient schedules can be sampled or
//! interpolated directly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::TimeGrid;

/// States an ODE integrator can advance.
pub trait OdeState: Clone {
    fn add_scaled(&mut self, alpha: f64, other: &Self);
    fn is_finite(&self) -> bool;
}

impl OdeState for DMatrix<f64> {
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        crate::linalg::add_scaled(self, alpha, other);
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite() && v.abs() < 1e150)
    }
}

impl OdeState for DVector<f64> {
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.axpy(alpha, other, 1.0);
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite() && v.abs() < 1e150)
    }
}

impl OdeState for Vec<DVector<f64>> {
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.axpy(alpha, b, 1.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.iter().all(OdeState::is_finite)
    }
}

fn step<S: OdeState>(y: &S, pos: f64, h_nodes: f64, dt: f64, field: &mut impl FnMut(f64, &S) -> S) -> S {
    // h_nodes is +1 (forward) or -1 (backward); dt carries the sign.
    let half = 0.5 * h_nodes;
    let k1 = field(pos, y);
    let mut tmp = y.clone();
    tmp.add_scaled(0.5 * dt, &k1);
    let k2 = field(pos + half, &tmp);
    let mut tmp = y.clone();
    tmp.add_scaled(0.5 * dt, &k2);
    let k3 = field(pos + half, &tmp);
    let mut tmp = y.clone();
    tmp.add_scaled(dt, &k3);
    let k4 = field(pos + h_nodes, &tmp);
    let mut out = y.clone();
    out.add_scaled(dt / 6.0, &k1);
    out.add_scaled(dt / 3.0, &k2);
    out.add_scaled(dt / 3.0, &k3);
    out.add_scaled(dt / 6.0, &k4);
    out
}

/// Integrates `ẏ = f(t, y)` backward from `y(T) = terminal`; entry `k` of the
/// result is `y(t_k)`.
pub fn rk4_backward<S: OdeState>(
    grid: &TimeGrid,
    terminal: S,
    field: impl FnMut(f64, &S) -> S,
) -> Result<Vec<S>> {
    rk4_backward_with(grid, terminal, field, |_| {})
}

/// As [`rk4_backward`], calling `post` on every new value (e.g. to
/// symmetrise).
pub fn rk4_backward_with<S: OdeState>(
    grid: &TimeGrid,
    terminal: S,
    mut field: impl FnMut(f64, &S) -> S,
    mut post: impl FnMut(&mut S),
) -> Result<Vec<S>> {
    let kmax = grid.steps();
    let dt = grid.dt();
    let mut out = Vec::with_capacity(kmax + 1);
    let mut y = terminal;
    if !y.is_finite() {
        return Err(Error::IntegrationBlowup {
            node: kmax,
            time: grid.time(kmax),
        });
    }
    out.push(y.clone());
    for k in (0..kmax).rev() {
        let mut next = step(&y, (k + 1) as f64, -1.0, -dt, &mut field);
        post(&mut next);
        if !next.is_finite() {
            return Err(Error::IntegrationBlowup {
                node: k,
                time: grid.time(k),
            });
        }
        out.push(next.clone());
        y = next;
    }
    out.reverse();
    Ok(out)
}

/// Integrates `ẏ = f(t, y)` forward from `y(0) = initial`.
pub fn rk4_forward<S: OdeState>(
    grid: &TimeGrid,
    initial: S,
    field: impl FnMut(f64, &S) -> S,
) -> Result<Vec<S>> {
    rk4_forward_with(grid, initial, field, |_| {})
}

pub fn rk4_forward_with<S: OdeState>(
    grid: &TimeGrid,
    initial: S,
    mut field: impl FnMut(f64, &S) -> S,
    mut post: impl FnMut(&mut S),
) -> Result<Vec<S>> {
    let kmax = grid.steps();
    let dt = grid.dt();
    let mut out = Vec::with_capacity(kmax + 1);
    let mut y = initial;
    if !y.is_finite() {
        return Err(Error::IntegrationBlowup { node: 0, time: 0.0 });
    }
    out.push(y.clone());
    for k in 0..kmax {
        let mut next = step(&y, k as f64, 1.0, dt, &mut field);
        post(&mut next);
        if !next.is_finite() {
            return Err(Error::IntegrationBlowup {
                node: k + 1,
                time: grid.time(k + 1),
            });
        }
        out.push(next.clone());
        y = next;
    }
    Ok(out)
}
