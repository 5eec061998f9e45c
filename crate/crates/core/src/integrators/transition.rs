use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{MatrixSchedule, TimeGrid};

/// State-transition family `Φ(t_k, t_j)` of `Φ̇ = A(t) Φ`.
///
/// Stores the one-step RK4 propagators; since the RK4 map of a linear ODE
/// is linear in the initial value, composing them reproduces RK4 from any
/// starting node and the cocycle identity holds up to rounding.
#[derive(Clone, Debug)]
pub struct TransitionFamily {
    steps: Vec<DMatrix<f64>>,
    dim: usize,
}

impl TransitionFamily {
    /// Family of the generator `A(pos)` sampled at fractional node positions.
    pub fn from_generator(grid: &TimeGrid, dim: usize, mut generator: impl FnMut(f64) -> DMatrix<f64>) -> Self {
        let dt = grid.dt();
        let eye = DMatrix::<f64>::identity(dim, dim);
        let steps = (0..grid.steps())
            .map(|k| {
                let p = k as f64;
                let a0 = generator(p);
                let am = generator(p + 0.5);
                let a1 = generator(p + 1.0);
                let k1 = a0.clone();
                let k2 = &am * (&eye + &k1 * (0.5 * dt));
                let k3 = &am * (&eye + &k2 * (0.5 * dt));
                let k4 = &a1 * (&eye + &k3 * dt);
                &eye + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            })
            .collect();
        Self { steps, dim }
    }

    pub fn new(a: &MatrixSchedule, grid: &TimeGrid) -> Self {
        let n = a.shape().0;
        Self::from_generator(grid, n, |p| a.at_pos(p).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Φ(t_to, t_from)`, `from <= to`.
    pub fn between(&self, to: usize, from: usize) -> DMatrix<f64> {
        assert!(from <= to, "transition requested backward in time");
        let mut out = DMatrix::identity(self.dim, self.dim);
        for s in &self.steps[from..to] {
            out = s * out;
        }
        out
    }

    /// `Φ*(t_to, t_from)`.
    pub fn adjoint(&self, to: usize, from: usize) -> DMatrix<f64> {
        self.between(to, from).transpose()
    }

    /// `Φ(t_k, t_from)` for every `k >= from`, built in one sweep.
    pub fn sweep_from(&self, from: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1 - from);
        let mut cur = DMatrix::identity(self.dim, self.dim);
        out.push(cur.clone());
        for s in &self.steps[from..] {
            cur = s * cur;
            out.push(cur.clone());
        }
        out
    }

    /// `Φ(t_to, t_j)` for every `j <= to`, indexed by `j`.
    pub fn sweep_to(&self, to: usize) -> Vec<DMatrix<f64>> {
        let mut out = vec![DMatrix::identity(self.dim, self.dim); to + 1];
        for j in (0..to).rev() {
            out[j] = &out[j + 1] * &self.steps[j];
        }
        out
    }
}

/// `Φ(t_to, t_from)` for the generator `A`.
pub fn transition_matrix(a: &MatrixSchedule, grid: &TimeGrid, from: usize, to: usize) -> Result<DMatrix<f64>> {
    if from > to {
        return Err(crate::error::Error::InvalidArgument(format!(
            "transition from node {from} to earlier node {to}"
        )));
    }
    Ok(TransitionFamily::new(a, grid).between(to, from))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_generator_gives_identity() {
        let g = TimeGrid::new(1.0, 0.1).unwrap();
        let a = MatrixSchedule::zeros(2, 2);
        let phi = transition_matrix(&a, &g, 2, 9).unwrap();
        assert_eq!(phi, DMatrix::identity(2, 2));
    }

    #[test]
    fn scalar_decay() {
        let g = TimeGrid::new(1.0, 1e-3).unwrap();
        let a = MatrixSchedule::constant(DMatrix::from_element(1, 1, -1.0));
        let phi = transition_matrix(&a, &g, 0, 1000).unwrap();
        assert!((phi[(0, 0)] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn nilpotent_generator_is_exact() {
        let g = TimeGrid::new(1.0, 0.01).unwrap();
        let a = MatrixSchedule::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let phi = transition_matrix(&a, &g, 0, 100).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((phi - want).amax() < 1e-12);
    }

    #[test]
    fn cocycle_and_identity() {
        let g = TimeGrid::new(1.0, 0.01).unwrap();
        let vals: Vec<DMatrix<f64>> = (0..=100)
            .map(|k| {
                let t = k as f64 * 0.01;
                DMatrix::from_row_slice(2, 2, &[-0.5 + t, 1.0, -1.0 - t * t, 0.2])
            })
            .collect();
        let fam = TransitionFamily::new(&MatrixSchedule::tabulated(vals), &g);
        assert_eq!(fam.between(40, 40), DMatrix::identity(2, 2));
        let lhs = fam.between(90, 10);
        let rhs = fam.between(90, 55) * fam.between(55, 10);
        assert!((&lhs - &rhs).amax() <= 1e-8 * lhs.amax());
        let sweep = fam.sweep_from(10);
        assert!((&sweep[80] - &lhs).amax() < 1e-12);
        let back = fam.sweep_to(90);
        assert!((&back[10] - &lhs).amax() < 1e-12);
    }
}
