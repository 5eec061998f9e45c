use nalgebra::{DMatrix, DVector};

use super::{invert_at, RiccatiSolution};
use crate::error::{Error, Result};
use crate::integrators::rk4_backward;
use crate::model::{LqTeamSpec, MatrixSchedule, TimeGrid, VectorSchedule};

/// Closed-loop generator `A − Bᵢ R_ii⁻¹ (Bᵢ* Kⁱ + Eᵢ)` at every node.
pub fn offset_closed_loop(spec: &LqTeamSpec, dm: usize, k: &RiccatiSolution, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    let b = spec.b_block(dm);
    let r = spec.r_block(dm, dm);
    let e = spec.e_block(dm);
    (0..grid.len())
        .map(|node| {
            let w = invert_at(r.at(node), node, "R_ii")?;
            let bk = b.at(node);
            Ok(spec.a.at(node) - bk * w * (bk.transpose() * k.at(node) + e.at(node)))
        })
        .collect()
}

/// Forcing of DM `dm`'s offset equation at every node, so that
/// `ṙ = −Ã* r + f` with `Ã` from [`offset_closed_loop`].
pub fn offset_forcing(
    spec: &LqTeamSpec,
    dm: usize,
    k: &RiccatiSolution,
    mean_controls: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    let agents = spec.num_agents();
    let n = spec.state_dim();
    let bi = spec.b_block(dm);
    let ei = spec.e_block(dm);
    let rii = spec.r_block(dm, dm);
    let mi = spec.m_block(dm);
    let blocks: Vec<_> = (0..agents)
        .map(|j| (spec.b_block(j), spec.e_block(j), spec.r_block(dm, j)))
        .collect();
    (0..grid.len())
        .map(|node| {
            let kk = k.at(node);
            let w = invert_at(rii.at(node), node, "R_ii")?;
            let mut inner = mi.at(node).clone();
            let mut out = -spec.f.at(node);
            for (j, (bj, ej, rij)) in blocks.iter().enumerate() {
                if j == dm {
                    continue;
                }
                let uj = mean_controls[node].rows(spec.control_offset(j), spec.control_dims[j]);
                inner += rij.at(node) * uj;
                out -= (kk * bj.at(node) + ej.at(node).transpose()) * uj;
            }
            out += (kk * bi.at(node) + ei.at(node).transpose()) * w * inner;
            debug_assert_eq!(out.len(), n);
            Ok(out)
        })
        .collect()
}

/// Integrates every DM's offset equation backward from `rⁱ(T) = 0` for the
/// mean-control schedule `mean_controls`.
pub fn solve_offset_odes(
    spec: &LqTeamSpec,
    riccati: &[RiccatiSolution],
    mean_controls: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if riccati.len() != spec.num_agents() || mean_controls.len() != grid.len() {
        return Err(Error::Dimension(
            "offset equations need one Riccati solution per DM and a mean control per node".into(),
        ));
    }
    let n = spec.state_dim();
    (0..spec.num_agents())
        .map(|i| {
            let forcing = offset_forcing(spec, i, &riccati[i], mean_controls, grid)?;
            if forcing.iter().all(|f| f.iter().all(|v| *v == 0.0)) {
                return Ok(vec![DVector::zeros(n); grid.len()]);
            }
            let cl = MatrixSchedule::tabulated(offset_closed_loop(spec, i, &riccati[i], grid)?);
            let f = VectorSchedule::tabulated(forcing);
            rk4_backward(grid, DVector::zeros(n), |pos, r| {
                -(cl.at_pos(pos).tr_mul(r)) + &*f.at_pos(pos)
            })
        })
        .collect()
}
