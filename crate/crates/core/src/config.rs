//! JSON scenario files.
//!
//! One schema covers every scenario; the `scenario` field selects how it is
//! read. Matrices are row-major nested arrays. A matrix field takes a bare
//! number (a 1×1 matrix), a constant `[[..], ..]`, or a per-node table
//! `[[[..], ..], ..]` with one entry per grid node; vector fields likewise
//! take `[..]` or `[[..], ..]`.
//!
//! ```json
//! {
//!   "scenario": "lq_team",
//!   "grid": { "T": 1.0, "dt": 0.01 },
//!   "dims": { "state": [1], "control": [1] },
//!   "dynamics": { "A": 0.0, "B": 1.0, "G": 1.0 },
//!   "observations": { "C": [1.0], "D": [1.0] },
//!   "cost": { "H": 1.0, "R": 1.0, "M_T": 0.0 },
//!   "init": { "mean": [0.0], "cov": 1.0 }
//! }
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BroadcastSpec, FeedbackGain, LqTeamSpec, MatrixSchedule, ObservationChannel, ObservationGain, Schedule,
    TimeGrid, VectorSchedule,
};
use crate::riccati::FixedPointConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Broadcast,
    LqTeam,
    Filtering,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Broadcast => "broadcast",
            Self::LqTeam => "lq_team",
            Self::Filtering => "filtering",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Constant(Vec<Vec<f64>>),
    Tabulated(Vec<Vec<Vec<f64>>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorValue {
    Constant(Vec<f64>),
    Tabulated(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    /// Subsystem sizes (team scenarios) or message block sizes (broadcast).
    #[serde(alias = "message")]
    pub state: Vec<usize>,
    pub control: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(rename = "A")]
    pub a: MatrixValue,
    #[serde(rename = "B")]
    pub b: MatrixValue,
    #[serde(rename = "G")]
    pub g: MatrixValue,
}

/// `C(t, y) = C(t) + slope·tanh(⟨direction, y⟩)` with a declared Lipschitz bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub slope: Vec<Vec<f64>>,
    pub direction: Vec<f64>,
    pub lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsConfig {
    /// One gain per DM.
    #[serde(rename = "C")]
    pub c: Vec<MatrixValue>,
    /// One noise intensity per DM.
    #[serde(rename = "D")]
    pub d: Vec<MatrixValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Vec<Option<FeedbackConfig>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(rename = "H")]
    pub h: MatrixValue,
    #[serde(rename = "R")]
    pub r: MatrixValue,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<MatrixValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<VectorValue>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<VectorValue>,
    #[serde(rename = "M_T", default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<MatrixValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub mean: Vec<f64>,
    pub cov: MatrixValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_tol() -> f64 {
    FixedPointConfig::default().tol
}

fn default_max_iter() -> usize {
    FixedPointConfig::default().max_iter
}

fn default_damping() -> f64 {
    FixedPointConfig::default().damping
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            damping: default_damping(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub grid: GridConfig,
    pub dims: DimsConfig,
    /// Absent for broadcast scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    pub observations: ObservationsConfig,
    pub cost: CostConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl MatrixValue {
    pub fn to_schedule(&self, what: &str, grid: &TimeGrid) -> Result<MatrixSchedule> {
        match self {
            Self::Scalar(v) => Ok(Schedule::constant(DMatrix::from_element(1, 1, *v))),
            Self::Constant(rows) => Ok(Schedule::constant(rows_to_matrix(rows, what)?)),
            Self::Tabulated(nodes) => {
                if nodes.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "{what}: {} samples for {} grid nodes",
                        nodes.len(),
                        grid.len()
                    )));
                }
                let values = nodes
                    .iter()
                    .map(|n| rows_to_matrix(n, what))
                    .collect::<Result<Vec<_>>>()?;
                if values.iter().any(|v| v.shape() != values[0].shape()) {
                    return Err(Error::Config(format!("{what}: samples have different shapes")));
                }
                Ok(Schedule::tabulated(values))
            }
        }
    }

    pub fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        match self {
            Self::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
            Self::Constant(rows) => rows_to_matrix(rows, what),
            Self::Tabulated(_) => Err(Error::Config(format!("{what} must be a constant matrix"))),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self::Constant(matrix_to_rows(m))
    }

    pub fn from_schedule(s: &MatrixSchedule) -> Self {
        match s {
            Schedule::Constant(m) => Self::from_matrix(m),
            Schedule::Tabulated(v) => Self::Tabulated(v.iter().map(matrix_to_rows).collect()),
        }
    }
}

impl VectorValue {
    pub fn to_schedule(&self, what: &str, grid: &TimeGrid) -> Result<VectorSchedule> {
        match self {
            Self::Constant(v) => Ok(Schedule::constant(DVector::from_column_slice(v))),
            Self::Tabulated(nodes) => {
                if nodes.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "{what}: {} samples for {} grid nodes",
                        nodes.len(),
                        grid.len()
                    )));
                }
                if nodes.iter().any(|n| n.len() != nodes[0].len()) {
                    return Err(Error::Config(format!("{what}: samples have different lengths")));
                }
                Ok(Schedule::tabulated(
                    nodes.iter().map(|v| DVector::from_column_slice(v)).collect(),
                ))
            }
        }
    }

    pub fn from_schedule(s: &VectorSchedule) -> Self {
        match s {
            Schedule::Constant(v) => Self::Constant(v.iter().copied().collect()),
            Schedule::Tabulated(vs) => Self::Tabulated(vs.iter().map(|v| v.iter().copied().collect()).collect()),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse config: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The grid, with `dt` replaced when `dt_override` is given.
    pub fn grid(&self, dt_override: Option<f64>) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, dt_override.unwrap_or(self.grid.dt))
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            damping: self.solver.damping,
        }
    }

    fn channels(&self, grid: &TimeGrid) -> Result<Vec<ObservationChannel>> {
        let obs = &self.observations;
        let agents = self.dims.control.len();
        if obs.c.len() != agents || obs.d.len() != agents {
            return Err(Error::Config(format!(
                "observations need one C and one D per decision maker ({agents})"
            )));
        }
        if let Some(fb) = &obs.feedback {
            if fb.len() != agents {
                return Err(Error::Config("feedback needs one entry (or null) per decision maker".into()));
            }
        }
        (0..agents)
            .map(|i| {
                let base = obs.c[i].to_schedule(&format!("C[{i}]"), grid)?;
                let noise = obs.d[i].to_schedule(&format!("D[{i}]"), grid)?;
                let gain = match obs.feedback.as_ref().and_then(|f| f[i].as_ref()) {
                    None => ObservationGain::Linear(base),
                    Some(f) => ObservationGain::Feedback(FeedbackGain {
                        base,
                        slope: rows_to_matrix(&f.slope, "feedback slope")?,
                        direction: DVector::from_column_slice(&f.direction),
                        lipschitz: f.lipschitz,
                    }),
                };
                Ok(ObservationChannel { gain, noise })
            })
            .collect()
    }

    fn zero_or(&self, v: &Option<MatrixValue>, what: &str, shape: (usize, usize), grid: &TimeGrid) -> Result<MatrixSchedule> {
        match v {
            Some(v) => v.to_schedule(what, grid),
            None => Ok(MatrixSchedule::zeros(shape.0, shape.1)),
        }
    }

    fn zero_or_vec(v: &Option<VectorValue>, what: &str, len: usize, grid: &TimeGrid) -> Result<VectorSchedule> {
        match v {
            Some(v) => v.to_schedule(what, grid),
            None => Ok(VectorSchedule::zeros(len)),
        }
    }

    /// The team spec of an `lq_team` or `filtering` scenario.
    pub fn lq_spec(&self, grid: &TimeGrid) -> Result<LqTeamSpec> {
        if self.scenario == ScenarioKind::Broadcast {
            return Err(Error::Config("broadcast scenarios have no dynamics; use broadcast_spec".into()));
        }
        let dyn_ = self
            .dynamics
            .as_ref()
            .ok_or_else(|| Error::Config("missing \"dynamics\" section".into()))?;
        let n: usize = self.dims.state.iter().sum();
        let d: usize = self.dims.control.iter().sum();
        let cost = &self.cost;
        let terminal = match &cost.terminal {
            Some(m) => m.to_matrix("M_T")?,
            None => DMatrix::zeros(n, n),
        };
        Ok(LqTeamSpec {
            state_dims: self.dims.state.clone(),
            control_dims: self.dims.control.clone(),
            a: dyn_.a.to_schedule("A", grid)?,
            b: dyn_.b.to_schedule("B", grid)?,
            g: dyn_.g.to_schedule("G", grid)?,
            channels: self.channels(grid)?,
            h: cost.h.to_schedule("H", grid)?,
            r: cost.r.to_schedule("R", grid)?,
            e: self.zero_or(&cost.e, "E", (d, n), grid)?,
            m: Self::zero_or_vec(&cost.m, "m", d, grid)?,
            f: Self::zero_or_vec(&cost.f, "F", n, grid)?,
            terminal,
            initial_mean: DVector::from_column_slice(&self.init.mean),
            initial_cov: self.init.cov.to_matrix("init.cov")?,
        })
    }

    /// The broadcast spec of a `broadcast` scenario.
    pub fn broadcast_spec(&self, grid: &TimeGrid) -> Result<BroadcastSpec> {
        if self.scenario != ScenarioKind::Broadcast {
            return Err(Error::Config("not a broadcast scenario".into()));
        }
        if self.dynamics.is_some() {
            return Err(Error::Config("broadcast scenarios take no \"dynamics\" section".into()));
        }
        if self.cost.terminal.is_some() {
            return Err(Error::Config("broadcast scenarios take no terminal weight".into()));
        }
        let n: usize = self.dims.state.iter().sum();
        let d: usize = self.dims.control.iter().sum();
        Ok(BroadcastSpec {
            message_dims: self.dims.state.clone(),
            control_dims: self.dims.control.clone(),
            channels: self.channels(grid)?,
            prior_mean: DVector::from_column_slice(&self.init.mean),
            prior_cov: self.init.cov.to_matrix("init.cov")?,
            r: self.cost.r.to_schedule("R", grid)?,
            e: self.zero_or(&self.cost.e, "E", (d, n), grid)?,
            h: self.cost.h.to_schedule("H", grid)?,
            f: Self::zero_or_vec(&self.cost.f, "F", n, grid)?,
            m: Self::zero_or_vec(&self.cost.m, "m", d, grid)?,
        })
    }

    fn observations_of(channels: &[ObservationChannel]) -> ObservationsConfig {
        let feedback: Vec<Option<FeedbackConfig>> = channels
            .iter()
            .map(|c| match &c.gain {
                ObservationGain::Linear(_) => None,
                ObservationGain::Feedback(f) => Some(FeedbackConfig {
                    slope: matrix_to_rows(&f.slope),
                    direction: f.direction.iter().copied().collect(),
                    lipschitz: f.lipschitz,
                }),
            })
            .collect();
        ObservationsConfig {
            c: channels
                .iter()
                .map(|c| match &c.gain {
                    ObservationGain::Linear(s) => MatrixValue::from_schedule(s),
                    ObservationGain::Feedback(f) => MatrixValue::from_schedule(&f.base),
                })
                .collect(),
            d: channels.iter().map(|c| MatrixValue::from_schedule(&c.noise)).collect(),
            feedback: feedback.iter().any(Option::is_some).then_some(feedback),
        }
    }

    /// Config describing `spec` on `grid`.
    pub fn from_lq_spec(kind: ScenarioKind, spec: &LqTeamSpec, grid: &TimeGrid) -> Self {
        Self {
            scenario: kind,
            grid: GridConfig {
                horizon: grid.horizon(),
                dt: grid.dt(),
            },
            dims: DimsConfig {
                state: spec.state_dims.clone(),
                control: spec.control_dims.clone(),
            },
            dynamics: Some(DynamicsConfig {
                a: MatrixValue::from_schedule(&spec.a),
                b: MatrixValue::from_schedule(&spec.b),
                g: MatrixValue::from_schedule(&spec.g),
            }),
            observations: Self::observations_of(&spec.channels),
            cost: CostConfig {
                h: MatrixValue::from_schedule(&spec.h),
                r: MatrixValue::from_schedule(&spec.r),
                e: Some(MatrixValue::from_schedule(&spec.e)),
                m: Some(VectorValue::from_schedule(&spec.m)),
                f: Some(VectorValue::from_schedule(&spec.f)),
                terminal: Some(MatrixValue::from_matrix(&spec.terminal)),
            },
            init: InitConfig {
                mean: spec.initial_mean.iter().copied().collect(),
                cov: MatrixValue::from_matrix(&spec.initial_cov),
            },
            solver: SolverConfig::default(),
        }
    }

    pub fn from_broadcast_spec(spec: &BroadcastSpec, grid: &TimeGrid) -> Self {
        Self {
            scenario: ScenarioKind::Broadcast,
            grid: GridConfig {
                horizon: grid.horizon(),
                dt: grid.dt(),
            },
            dims: DimsConfig {
                state: spec.message_dims.clone(),
                control: spec.control_dims.clone(),
            },
            dynamics: None,
            observations: Self::observations_of(&spec.channels),
            cost: CostConfig {
                h: MatrixValue::from_schedule(&spec.h),
                r: MatrixValue::from_schedule(&spec.r),
                e: Some(MatrixValue::from_schedule(&spec.e)),
                m: Some(VectorValue::from_schedule(&spec.m)),
                f: Some(VectorValue::from_schedule(&spec.f)),
                terminal: None,
            },
            init: InitConfig {
                mean: spec.prior_mean.iter().copied().collect(),
                cov: MatrixValue::from_matrix(&spec.prior_cov),
            },
            solver: SolverConfig::default(),
        }
    }
}
