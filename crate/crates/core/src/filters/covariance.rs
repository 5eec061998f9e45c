use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrators::rk4_forward_with;
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::model::{MatrixSchedule, TimeGrid};

/// Filter Riccati equation `Ṗ = AP + PA* − P C* D⁻¹ C P + Q`, `P(0) = P₀`,
/// integrated forward by RK4 and symmetrised after each step.
///
/// Fails with a degeneracy error at the first node where `P` leaves the PSD
/// cone by more than `1e-9` (relative).
pub fn riccati_covariance(
    a: &MatrixSchedule,
    q: &MatrixSchedule,
    c: &MatrixSchedule,
    d_inv: &MatrixSchedule,
    p0: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<Vec<DMatrix<f64>>> {
    // C* D⁻¹ C is fixed per sample; interpolate it rather than its factors.
    let info = match (c, d_inv) {
        (MatrixSchedule::Constant(c), MatrixSchedule::Constant(di)) => {
            MatrixSchedule::constant(c.transpose() * di * c)
        }
        _ => MatrixSchedule::tabulated(
            (0..grid.len())
                .map(|k| c.at(k).transpose() * d_inv.at(k) * c.at(k))
                .collect(),
        ),
    };
    let mut p0 = p0.clone();
    symmetrize(&mut p0);
    let out = rk4_forward_with(
        grid,
        p0,
        |pos, p| {
            let a = a.at_pos(pos);
            let ap = &*a * p;
            &ap + ap.transpose() - p * &*info.at_pos(pos) * p + &*q.at_pos(pos)
        },
        symmetrize,
    )?;
    for (k, p) in out.iter().enumerate() {
        let scale = 1.0 + p.amax();
        let lo = min_eigenvalue(p);
        if lo < -1e-9 * scale {
            return Err(Error::Degenerate {
                node: k,
                what: format!("filter covariance lost positive semidefiniteness (min eigenvalue {lo:.3e})"),
            });
        }
    }
    Ok(out)
}
