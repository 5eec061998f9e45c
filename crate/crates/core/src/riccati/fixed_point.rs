use nalgebra::{DMatrix, DVector};

use super::{invert_at, solve_offset_odes, RiccatiSolution};
use crate::error::{Error, Result};
use crate::integrators::rk4_forward;
use crate::linalg::condition_number;
use crate::model::{LqTeamSpec, TimeGrid, VectorSchedule};

/// Condition number above which the coupling matrix counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping `α ∈ (0, 1]`; halved to 0.5 once if the residual grows.
    pub damping: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            damping: 1.0,
        }
    }
}

/// Self-consistent mean controls, offsets and mean state.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointState {
    pub iterations: usize,
    pub mean_controls: Vec<DVector<f64>>,
    /// `[dm][node]`.
    pub offsets: Vec<Vec<DVector<f64>>>,
    pub mean_state: Vec<DVector<f64>>,
    pub residual: f64,
    pub history: Vec<f64>,
    pub max_coupling_condition: f64,
}

/// Normalised coupling matrix `Λ`: identity diagonal blocks and
/// `R_ii⁻¹ R_ij` off the diagonal.
pub fn coupling_matrix(r: &DMatrix<f64>, control_dims: &[usize], node: usize) -> Result<DMatrix<f64>> {
    let d: usize = control_dims.iter().sum();
    let mut lam = DMatrix::identity(d, d);
    let mut oi = 0;
    for &di in control_dims {
        let w = invert_at(&r.view((oi, oi), (di, di)).into_owned(), node, "R_ii")?;
        let mut oj = 0;
        for &dj in control_dims {
            if oi != oj {
                let blk = &w * r.view((oi, oj), (di, dj));
                lam.view_mut((oi, oj), (di, dj)).copy_from(&blk);
            }
            oj += dj;
        }
        oi += di;
    }
    Ok(lam)
}

/// LU factors of `Λ(t_k)` for every node, failing on the first singular one.
pub(crate) fn coupling_factors(
    spec: &LqTeamSpec,
    grid: &TimeGrid,
) -> Result<(Vec<DMatrix<f64>>, Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>, f64)> {
    let mut mats = Vec::with_capacity(grid.len());
    let mut lus = Vec::with_capacity(grid.len());
    let mut worst: f64 = 0.0;
    for k in 0..grid.len() {
        let lam = coupling_matrix(spec.r.at(k), &spec.control_dims, k)?;
        let cond = condition_number(&lam);
        if !cond.is_finite() || cond > SINGULAR_CONDITION {
            return Err(Error::SingularCoupling { node: k, condition: cond });
        }
        worst = worst.max(cond);
        lus.push(lam.clone().lu());
        mats.push(lam);
    }
    Ok((mats, lus, worst))
}

struct Sweep {
    offsets: Vec<Vec<DVector<f64>>>,
    mean_state: Vec<DVector<f64>>,
    rhs: Vec<DVector<f64>>,
}

/// Per node: `feedback_k` (`d × n`) and the per-DM blocks needed for the
/// right-hand side `−[R_ii⁻¹((Bᵢ*Kⁱ + Eᵢ) x̄ + Bᵢ* rⁱ + mⁱ)]ᵢ`.
struct RhsTerms {
    state_gain: Vec<Vec<DMatrix<f64>>>,
    offset_gain: Vec<Vec<DMatrix<f64>>>,
    constant: Vec<DVector<f64>>,
}

fn rhs_terms(spec: &LqTeamSpec, riccati: &[RiccatiSolution], grid: &TimeGrid) -> Result<RhsTerms> {
    let agents = spec.num_agents();
    let d = spec.control_dim();
    let blocks: Vec<_> = (0..agents)
        .map(|i| (spec.b_block(i), spec.e_block(i), spec.r_block(i, i), spec.m_block(i)))
        .collect();
    let mut state_gain = Vec::with_capacity(grid.len());
    let mut offset_gain = Vec::with_capacity(grid.len());
    let mut constant = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut sg = Vec::with_capacity(agents);
        let mut og = Vec::with_capacity(agents);
        let mut c = DVector::zeros(d);
        for (i, (b, e, r, m)) in blocks.iter().enumerate() {
            let w = invert_at(r.at(k), k, "R_ii")?;
            let bt = b.at(k).transpose();
            sg.push(-(&w * (&bt * riccati[i].at(k) + e.at(k))));
            og.push(-(&w * bt));
            c.rows_mut(spec.control_offset(i), spec.control_dims[i])
                .copy_from(&(-(&w * m.at(k))));
        }
        state_gain.push(sg);
        offset_gain.push(og);
        constant.push(c);
    }
    Ok(RhsTerms {
        state_gain,
        offset_gain,
        constant,
    })
}

fn sweep(
    spec: &LqTeamSpec,
    riccati: &[RiccatiSolution],
    terms: &RhsTerms,
    mean_controls: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<Sweep> {
    let offsets = solve_offset_odes(spec, riccati, mean_controls, grid)?;
    let input = VectorSchedule::tabulated(
        (0..grid.len())
            .map(|k| spec.b.at(k) * &mean_controls[k])
            .collect(),
    );
    let mean_state = rk4_forward(grid, spec.initial_mean.clone(), |pos, x| {
        &*spec.a.at_pos(pos) * x + &*input.at_pos(pos)
    })?;
    let rhs = (0..grid.len())
        .map(|k| {
            let mut out = terms.constant[k].clone();
            for i in 0..spec.num_agents() {
                let mut blk = out.rows_mut(spec.control_offset(i), spec.control_dims[i]);
                blk += &terms.state_gain[k][i] * &mean_state[k];
                blk += &terms.offset_gain[k][i] * &offsets[i][k];
            }
            out
        })
        .collect();
    Ok(Sweep {
        offsets,
        mean_state,
        rhs,
    })
}

/// Damped Picard iteration for the mean-field system
///
/// ```text
/// x̄' = A x̄ + B ū,  x̄(0) = x̄₀
/// Λ ū = −[R_ii⁻¹((Bᵢ*Kⁱ + Eᵢ) x̄ + Bᵢ* rⁱ + mⁱ)]ᵢ
/// ```
///
/// with `rⁱ` from [`solve_offset_odes`]. The residual is the max-node norm
/// of the defect of the second line divided by `1 + ‖ū‖`.
pub fn mean_field_fixed_point(
    spec: &LqTeamSpec,
    riccati: &[RiccatiSolution],
    grid: &TimeGrid,
    config: FixedPointConfig,
) -> Result<FixedPointState> {
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping {} outside (0, 1]", config.damping)));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", config.tol)));
    }
    let (lams, lus, worst) = coupling_factors(spec, grid)?;
    let terms = rhs_terms(spec, riccati, grid)?;
    let d = spec.control_dim();
    let mut ubar = vec![DVector::zeros(d); grid.len()];
    let mut alpha = config.damping;
    let mut history = Vec::new();
    for iter in 0..=config.max_iter {
        let sw = sweep(spec, riccati, &terms, &ubar, grid)?;
        let residual = (0..grid.len())
            .map(|k| (&lams[k] * &ubar[k] - &sw.rhs[k]).norm() / (1.0 + ubar[k].norm()))
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual,
                history,
            });
        }
        if history.last().is_some_and(|&prev| residual > prev) && alpha > 0.5 {
            alpha = 0.5;
        }
        history.push(residual);
        if residual <= config.tol {
            return Ok(FixedPointState {
                iterations: iter,
                mean_controls: ubar,
                offsets: sw.offsets,
                mean_state: sw.mean_state,
                residual,
                history,
                max_coupling_condition: worst,
            });
        }
        for k in 0..grid.len() {
            let new = lus[k].solve(&sw.rhs[k]).ok_or(Error::SingularCoupling {
                node: k,
                condition: f64::INFINITY,
            })?;
            ubar[k] = &ubar[k] * (1.0 - alpha) + new * alpha;
        }
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        residual,
        history,
    })
}
