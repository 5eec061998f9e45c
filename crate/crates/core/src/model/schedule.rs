//! Time-indexed coefficient samples.
//!
//! Coefficients live on grid nodes. Integrators that need values between
//! nodes (Runge–Kutta stages) ask for a fractional node position; tabulated
//! schedules answer with a four-point Lagrange interpolant, which keeps the
//! fourth-order accuracy of RK4 on smooth schedules.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// A sample type that can be linearly combined.
pub trait Sample: Clone + PartialEq + std::fmt::Debug {
    fn combine(terms: &[(f64, &Self)]) -> Self;
    fn shape(&self) -> (usize, usize);
}

impl Sample for DMatrix<f64> {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        let (w0, m0) = terms[0];
        let mut out = m0 * w0;
        for &(w, m) in &terms[1..] {
            crate::linalg::add_scaled(&mut out, w, m);
        }
        out
    }

    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }
}

impl Sample for DVector<f64> {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        let (w0, v0) = terms[0];
        let mut out = v0 * w0;
        for &(w, v) in &terms[1..] {
            out.axpy(w, v, 1.0);
        }
        out
    }

    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

/// Either one value broadcast to every node, or one value per node.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    Tabulated(Vec<T>),
}

pub type MatrixSchedule = Schedule<DMatrix<f64>>;
pub type VectorSchedule = Schedule<DVector<f64>>;

impl<T: Sample> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule::Constant(value)
    }

    pub fn tabulated(values: Vec<T>) -> Self {
        Schedule::Tabulated(values)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }

    /// Value at grid node `k`.
    #[inline]
    pub fn at(&self, k: usize) -> &T {
        match self {
            Schedule::Constant(v) => v,
            Schedule::Tabulated(vs) => &vs[k.min(vs.len() - 1)],
        }
    }

    /// Value at a fractional node position.
    pub fn at_pos(&self, pos: f64) -> Cow<'_, T> {
        match self {
            Schedule::Constant(v) => Cow::Borrowed(v),
            Schedule::Tabulated(vs) => {
                let last = vs.len() - 1;
                let pos = pos.clamp(0.0, last as f64);
                let base = pos.floor();
                if pos == base {
                    return Cow::Borrowed(&vs[base as usize]);
                }
                if last < 3 {
                    let i = base as usize;
                    let w = pos - base;
                    return Cow::Owned(T::combine(&[(1.0 - w, &vs[i]), (w, &vs[i + 1])]));
                }
                let j0 = (base as isize - 1).clamp(0, last as isize - 3) as usize;
                let nodes = [j0 as f64, j0 as f64 + 1.0, j0 as f64 + 2.0, j0 as f64 + 3.0];
                let mut weights = [0.0; 4];
                for (a, w) in weights.iter_mut().enumerate() {
                    let mut l = 1.0;
                    for b in 0..4 {
                        if a != b {
                            l *= (pos - nodes[b]) / (nodes[a] - nodes[b]);
                        }
                    }
                    *w = l;
                }
                Cow::Owned(T::combine(&[
                    (weights[0], &vs[j0]),
                    (weights[1], &vs[j0 + 1]),
                    (weights[2], &vs[j0 + 2]),
                    (weights[3], &vs[j0 + 3]),
                ]))
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.at(0).shape()
    }

    pub fn len_samples(&self) -> Option<usize> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::Tabulated(v) => Some(v.len()),
        }
    }

    /// Applies `f` sample-wise; constants stay constant.
    pub fn map<U: Sample>(&self, mut f: impl FnMut(&T) -> U) -> Schedule<U> {
        match self {
            Schedule::Constant(v) => Schedule::Constant(f(v)),
            Schedule::Tabulated(vs) => Schedule::Tabulated(vs.iter().map(f).collect()),
        }
    }

    /// Every sample, materialised on the grid.
    pub fn samples(&self, grid: &TimeGrid) -> Vec<T> {
        (0..grid.len()).map(|k| self.at(k).clone()).collect()
    }

    /// Iterates the distinct samples (one for constants).
    pub fn values(&self) -> Box<dyn Iterator<Item = (usize, &T)> + '_> {
        match self {
            Schedule::Constant(v) => Box::new(std::iter::once((0, v))),
            Schedule::Tabulated(vs) => Box::new(vs.iter().enumerate()),
        }
    }

    /// Checks that the sample count matches the grid and all samples share
    /// one shape.
    pub fn check(&self, name: &str, grid: &TimeGrid, shape: (usize, usize)) -> Result<()> {
        if let Some(len) = self.len_samples() {
            if len != grid.len() {
                return Err(Error::Dimension(format!(
                    "{name}: {len} samples for a grid of {} nodes",
                    grid.len()
                )));
            }
        }
        for (k, v) in self.values() {
            if v.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} at node {k}: expected {}x{}, got {}x{}",
                    shape.0,
                    shape.1,
                    v.shape().0,
                    v.shape().1
                )));
            }
        }
        Ok(())
    }
}

impl MatrixSchedule {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Schedule::Constant(DMatrix::zeros(rows, cols))
    }

    /// Sub-block `[row0.., col0..]` of every sample.
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        self.map(|m| m.view((row0, col0), (rows, cols)).into_owned())
    }

    pub fn max_abs(&self) -> f64 {
        self.values().map(|(_, m)| m.amax()).fold(0.0, f64::max)
    }
}

impl VectorSchedule {
    pub fn zeros(len: usize) -> Self {
        Schedule::Constant(DVector::zeros(len))
    }

    pub fn segment(&self, start: usize, len: usize) -> Self {
        self.map(|v| v.rows(start, len).into_owned())
    }
}
