//! Backward matrix equations and the mean-field fixed point.
//!
//! For DM `i` with `W = R_ii⁻¹`:
//!
//! ```text
//! K̇ + A*K + KA − (K Bᵢ + Eᵢ*) W (Bᵢ* K + Eᵢ) + H = 0,          K(T) = M_T
//! ṙ = −A* r + (K Bᵢ + Eᵢ*) W (Bᵢ* r + Σⱼ≠ᵢ R_ij ūʲ + mⁱ)
//!          − Σⱼ≠ᵢ (K Bⱼ + Eⱼ*) ūʲ − F,                          r(T) = 0
//! Σ̇ + A*Σ + ΣA + H = 0,                                         Σ(T) = M_T
//! ```

mod fixed_point;
mod offsets;

use nalgebra::DMatrix;
use serde::Serialize;

pub use fixed_point::{coupling_matrix, mean_field_fixed_point, FixedPointConfig, FixedPointState, SINGULAR_CONDITION};
pub use offsets::{offset_closed_loop, offset_forcing, solve_offset_odes};

use crate::error::{Error, Result};
use crate::integrators::rk4_backward_with;
use crate::linalg::{asymmetry, inverse, min_eigenvalue, symmetrize};
use crate::model::{LqTeamSpec, MatrixSchedule, TimeGrid};

/// A backward matrix solution tabulated on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiccatiSolution {
    #[serde(serialize_with = "crate::model::serde_mat::matrices")]
    pub values: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "crate::model::serde_mat::matrix")]
    pub terminal: DMatrix<f64>,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
}

impl RiccatiSolution {
    fn new(values: Vec<DMatrix<f64>>, terminal: DMatrix<f64>) -> Self {
        let max_asymmetry = values.iter().map(asymmetry).fold(0.0, f64::max);
        let min_eigenvalue = values.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
        Self {
            values,
            terminal,
            max_asymmetry,
            min_eigenvalue,
        }
    }

    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.values[k]
    }

    pub fn initial(&self) -> &DMatrix<f64> {
        &self.values[0]
    }

    pub fn as_schedule(&self) -> MatrixSchedule {
        MatrixSchedule::tabulated(self.values.clone())
    }
}

/// Builds a schedule from a per-node formula, collapsing to a constant when
/// every input is constant.
pub(crate) fn per_node(grid: &TimeGrid, constant: bool, f: impl Fn(usize) -> Result<DMatrix<f64>>) -> Result<MatrixSchedule> {
    if constant {
        Ok(MatrixSchedule::constant(f(0)?))
    } else {
        Ok(MatrixSchedule::tabulated((0..grid.len()).map(f).collect::<Result<_>>()?))
    }
}

pub(crate) fn invert_at(m: &DMatrix<f64>, node: usize, what: &str) -> Result<DMatrix<f64>> {
    inverse(m).ok_or_else(|| Error::Degenerate {
        node,
        what: format!("{what} not invertible"),
    })
}

/// Coefficients of the Riccati flow in the form
/// `K̇ = −(Ã*K + KÃ − K S K + Q)`.
pub(crate) struct RiccatiCoefficients {
    pub a_tilde: MatrixSchedule,
    pub s: MatrixSchedule,
    pub q: MatrixSchedule,
}

pub(crate) fn riccati_coefficients(
    a: &MatrixSchedule,
    b: &MatrixSchedule,
    r: &MatrixSchedule,
    e: Option<&MatrixSchedule>,
    h: &MatrixSchedule,
    grid: &TimeGrid,
) -> Result<RiccatiCoefficients> {
    let constant = a.is_constant() && b.is_constant() && r.is_constant() && h.is_constant() && e.is_none_or(|e| e.is_constant());
    let w = per_node(grid, r.is_constant(), |k| invert_at(r.at(k), k, "control weight"))?;
    let a_tilde = per_node(grid, constant, |k| {
        let mut at = a.at(k).clone();
        if let Some(e) = e {
            at -= b.at(k) * w.at(k) * e.at(k);
        }
        Ok(at)
    })?;
    let s = per_node(grid, constant, |k| {
        let mut s = b.at(k) * w.at(k) * b.at(k).transpose();
        symmetrize(&mut s);
        Ok(s)
    })?;
    let q = per_node(grid, constant, |k| {
        let mut q = h.at(k).clone();
        if let Some(e) = e {
            q -= e.at(k).transpose() * w.at(k) * e.at(k);
        }
        symmetrize(&mut q);
        Ok(q)
    })?;
    Ok(RiccatiCoefficients { a_tilde, s, q })
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Solves `K̇ + A*K + KA − K B R⁻¹ B* K + H = 0`, `K(T) = M_T` by RK4.
pub fn solve_riccati(
    a: &MatrixSchedule,
    b: &MatrixSchedule,
    r: &MatrixSchedule,
    h: &MatrixSchedule,
    terminal: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    solve_riccati_with_cross(a, b, r, None, h, terminal, grid)
}

/// As [`solve_riccati`] with a control–state cross weight `E`
/// (`⟨u, E x⟩` in the running cost).
pub fn solve_riccati_with_cross(
    a: &MatrixSchedule,
    b: &MatrixSchedule,
    r: &MatrixSchedule,
    e: Option<&MatrixSchedule>,
    h: &MatrixSchedule,
    terminal: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    let n = a.shape().0;
    check_square("M_T", terminal, n)?;
    a.check("A", grid, (n, n))?;
    h.check("H", grid, (n, n))?;
    let d = r.shape().0;
    b.check("B", grid, (n, d))?;
    if let Some(e) = e {
        e.check("E", grid, (d, n))?;
    }
    let co = riccati_coefficients(a, b, r, e, h, grid)?;
    let values = rk4_backward_with(
        grid,
        terminal.clone(),
        |pos, k| riccati_field(&co, pos, k),
        symmetrize,
    )?;
    let mut values = values;
    values[grid.steps()] = terminal.clone();
    Ok(RiccatiSolution::new(values, terminal.clone()))
}

fn riccati_field(co: &RiccatiCoefficients, pos: f64, k: &DMatrix<f64>) -> DMatrix<f64> {
    let at = co.a_tilde.at_pos(pos);
    let ka = k * &*at;
    let ks = k * &*co.s.at_pos(pos);
    -(ka.transpose() + &ka - ks * k + &*co.q.at_pos(pos))
}

/// Per-DM Riccati solutions of a team spec.
pub fn solve_team_riccati(spec: &LqTeamSpec, grid: &TimeGrid) -> Result<Vec<RiccatiSolution>> {
    use rayon::prelude::*;
    (0..spec.num_agents())
        .into_par_iter()
        .map(|i| {
            let e = spec.e_block(i);
            solve_riccati_with_cross(
                &spec.a,
                &spec.b_block(i),
                &spec.r_block(i, i),
                Some(&e),
                &spec.h,
                &spec.terminal,
                grid,
            )
        })
        .collect()
}

/// Solves `Σ̇ + A*Σ + ΣA + H = 0`, `Σ(T) = M_T`.
pub fn solve_sigma_lyapunov(
    a: &MatrixSchedule,
    h: &MatrixSchedule,
    terminal: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    let n = a.shape().0;
    check_square("M_T", terminal, n)?;
    a.check("A", grid, (n, n))?;
    h.check("H", grid, (n, n))?;
    let values = rk4_backward_with(
        grid,
        terminal.clone(),
        |pos, s| {
            let sa = s * &*a.at_pos(pos);
            -(sa.transpose() + &sa + &*h.at_pos(pos))
        },
        symmetrize,
    )?;
    Ok(RiccatiSolution::new(values, terminal.clone()))
}

/// Martingale intensity `q₁₁(t_k) = Σ(t_k) G(t_k)` of the adjoint `ψ = Σx + β`.
pub fn adjoint_intensity(sigma: &RiccatiSolution, g: &MatrixSchedule) -> Vec<DMatrix<f64>> {
    sigma.values.iter().enumerate().map(|(k, s)| s * g.at(k)).collect()
}

/// Fourth-order finite-difference derivative of a tabulated matrix function
/// (five-point stencil, one-sided near the ends). Needs at least 5 nodes.
pub fn derivative_5pt(values: &[DMatrix<f64>], dt: f64) -> Vec<DMatrix<f64>> {
    let n = values.len();
    assert!(n >= 5, "five-point stencil needs five nodes");
    let comb = |w: [f64; 5], start: usize| {
        let mut out = &values[start] * w[0];
        for (j, wj) in w.iter().enumerate().skip(1) {
            out += &values[start + j] * *wj;
        }
        out / (12.0 * dt)
    };
    (0..n)
        .map(|k| match k {
            0 => comb([-25.0, 48.0, -36.0, 16.0, -3.0], 0),
            1 => comb([-3.0, -10.0, 18.0, -6.0, 1.0], 0),
            k if k + 2 < n => comb([1.0, -8.0, 0.0, 8.0, -1.0], k - 2),
            k if k + 2 == n => comb([-1.0, 6.0, -18.0, 10.0, 3.0], n - 5),
            _ => comb([3.0, -16.0, 36.0, -48.0, 25.0], n - 5),
        })
        .collect()
}

/// Max-node norm of the Riccati ODE defect, with `K̇` from
/// [`derivative_5pt`].
pub fn riccati_residual(
    sol: &RiccatiSolution,
    a: &MatrixSchedule,
    b: &MatrixSchedule,
    r: &MatrixSchedule,
    e: Option<&MatrixSchedule>,
    h: &MatrixSchedule,
    grid: &TimeGrid,
) -> Result<f64> {
    let co = riccati_coefficients(a, b, r, e, h, grid)?;
    let kdot = derivative_5pt(&sol.values, grid.dt());
    Ok(sol
        .values
        .iter()
        .zip(&kdot)
        .enumerate()
        .map(|(k, (kk, kd))| (kd - riccati_field(&co, k as f64, kk)).norm())
        .fold(0.0, f64::max))
}
