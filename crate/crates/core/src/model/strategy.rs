use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// Affine law `uⁱ(t) = Γᵢ(t) x̂ⁱ(t) + γᵢ(t)` of one decision maker, tabulated
/// on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentLaw {
    /// `dᵢ × n` per node.
    #[serde(serialize_with = "super::serde_mat::matrices")]
    pub gains: Vec<DMatrix<f64>>,
    /// `dᵢ` per node.
    #[serde(serialize_with = "super::serde_mat::vectors")]
    pub offsets: Vec<DVector<f64>>,
}

impl AgentLaw {
    pub fn zeros(control_dim: usize, state_dim: usize, nodes: usize) -> Self {
        Self {
            gains: vec![DMatrix::zeros(control_dim, state_dim); nodes],
            offsets: vec![DVector::zeros(control_dim); nodes],
        }
    }

    pub fn control_dim(&self) -> usize {
        self.offsets[0].len()
    }

    #[inline]
    pub fn control(&self, node: usize, estimate: &DVector<f64>) -> DVector<f64> {
        &self.gains[node] * estimate + &self.offsets[node]
    }
}

/// Per-decision-maker laws acting on each DM's own filter state, plus the
/// mean-control schedule `ū(t)` the filters use for the other DMs' actions.
///
/// A law only ever sees its owner's estimate, so adaptedness to the owner's
/// observations holds by construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecentralizedStrategy {
    pub laws: Vec<AgentLaw>,
    /// Joint mean control (`d`) per node.
    #[serde(serialize_with = "super::serde_mat::vectors")]
    pub mean_controls: Vec<DVector<f64>>,
}

impl DecentralizedStrategy {
    pub fn num_agents(&self) -> usize {
        self.laws.len()
    }

    pub fn nodes(&self) -> usize {
        self.mean_controls.len()
    }

    /// The zero law for every DM.
    pub fn zero(control_dims: &[usize], state_dim: usize, grid: &TimeGrid) -> Self {
        let d: usize = control_dims.iter().sum();
        Self {
            laws: control_dims
                .iter()
                .map(|&di| AgentLaw::zeros(di, state_dim, grid.len()))
                .collect(),
            mean_controls: vec![DVector::zeros(d); grid.len()],
        }
    }

    pub fn control(&self, dm: usize, node: usize, estimate: &DVector<f64>) -> DVector<f64> {
        self.laws[dm].control(node, estimate)
    }

    /// Mean control of DM `dm` at `node`.
    pub fn mean_control(&self, dm: usize, node: usize) -> DVector<f64> {
        let off: usize = self.laws[..dm].iter().map(|l| l.control_dim()).sum();
        self.mean_controls[node].rows(off, self.laws[dm].control_dim()).into_owned()
    }

    pub fn check(&self, control_dims: &[usize], state_dim: usize, grid: &TimeGrid) -> Result<()> {
        if self.laws.len() != control_dims.len() {
            return Err(Error::Dimension(format!(
                "strategy has {} laws for {} decision makers",
                self.laws.len(),
                control_dims.len()
            )));
        }
        if self.mean_controls.len() != grid.len() {
            return Err(Error::Dimension("mean-control schedule length differs from grid".into()));
        }
        for (i, law) in self.laws.iter().enumerate() {
            if law.gains.len() != grid.len() || law.offsets.len() != grid.len() {
                return Err(Error::Dimension(format!("law {i} not defined on every node")));
            }
            let g = &law.gains[0];
            if g.nrows() != control_dims[i] || g.ncols() != state_dim {
                return Err(Error::Dimension(format!(
                    "law {i}: gain is {}x{}, expected {}x{}",
                    g.nrows(),
                    g.ncols(),
                    control_dims[i],
                    state_dim
                )));
            }
        }
        Ok(())
    }

    /// Applies `delta` scaled by `eps`; the mean-control schedule is left as is.
    pub fn perturbed(&self, delta: &StrategyDelta, eps: f64) -> Self {
        let mut out = self.clone();
        for (law, d) in out.laws.iter_mut().zip(&delta.laws) {
            if let Some(d) = d {
                for (g, dg) in law.gains.iter_mut().zip(&d.gains) {
                    crate::linalg::add_scaled(g, eps, dg);
                }
                for (o, dof) in law.offsets.iter_mut().zip(&d.offsets) {
                    o.axpy(eps, dof, 1.0);
                }
            }
        }
        out
    }
}

/// A direction in strategy space; `None` leaves that DM's law untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyDelta {
    pub laws: Vec<Option<AgentLaw>>,
}

impl StrategyDelta {
    pub fn none(agents: usize) -> Self {
        Self {
            laws: vec![None; agents],
        }
    }

    /// Difference `to − from`, restricted to DM `dm` when given.
    pub fn between(from: &DecentralizedStrategy, to: &DecentralizedStrategy, dm: Option<usize>) -> Self {
        let laws = from
            .laws
            .iter()
            .zip(&to.laws)
            .enumerate()
            .map(|(i, (a, b))| {
                if dm.is_some_and(|d| d != i) {
                    return None;
                }
                Some(AgentLaw {
                    gains: a.gains.iter().zip(&b.gains).map(|(x, y)| y - x).collect(),
                    offsets: a.offsets.iter().zip(&b.offsets).map(|(x, y)| y - x).collect(),
                })
            })
            .collect();
        Self { laws }
    }

    /// Decision makers whose law actually changes.
    pub fn touched(&self) -> Vec<usize> {
        self.laws
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.as_ref()?;
                let nz = l.gains.iter().any(|g| g.amax() != 0.0) || l.offsets.iter().any(|o| o.amax() != 0.0);
                nz.then_some(i)
            })
            .collect()
    }
}
