//! Per-decision-maker conditional-mean filters.
//!
//! Every filter here is a linear filter on some state `z` (the message, the
//! full plant state, or the plant state augmented with other DMs' filter
//! states):
//!
//! ```text
//! dẑ = (A_z ẑ + B_own uⁱ + w(t)) dt + L (dyⁱ − C_z ẑ dt),   L = P C_z* D⁻¹
//! Ṗ  = A_z P + P A_z* − P C_z* D⁻¹ C_z P + Q
//! ```
//!
//! `P` is tabulated once by RK4 when `C_z` does not depend on the
//! observation, and propagated per path by Euler otherwise.

mod covariance;

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

pub use covariance::riccati_covariance;

use crate::error::{Error, Result};
use crate::linalg::{inverse, symmetrize};
use crate::model::{
    AgentLaw, BroadcastSpec, DecentralizedStrategy, LqTeamSpec, MatrixSchedule, ObservationGain, TimeGrid,
    VectorSchedule,
};

/// Label recorded in solver reports for the covariance closure used by the
/// team filters.
pub const MOMENT_CLOSURE: &str = "riccati_covariance";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    /// Kalman–Bucy filter of the plant state with known inputs.
    Kalman,
    /// Team filter: other DMs' actions replaced by their means.
    TeamCoupled,
    /// Exact filter on the plant state augmented with the other DMs'
    /// filter states.
    Augmented,
}

/// Offline description of one DM's filter.
#[derive(Clone, Debug)]
pub struct FilterDesign {
    pub dm: usize,
    pub kind: FilterKind,
    /// Dimension of the plant state; the law acts on the first `plant_dim`
    /// entries of the filter state.
    pub plant_dim: usize,
    pub drift: MatrixSchedule,
    pub own_input: MatrixSchedule,
    pub exogenous: VectorSchedule,
    pub observation: ObservationGain,
    pub noise_inv: MatrixSchedule,
    pub process_cov: MatrixSchedule,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    /// Tabulated `P` and `L`; `None` when the channel gain depends on the
    /// observation.
    pub tabulated: Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)>,
}

/// Filter output along one observation path.
///
/// `innovations[k]` is `Δy(t_k) − C x̂(t_k) dt`; the last entry is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterTrack {
    pub estimates: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub innovations: Vec<DVector<f64>>,
}

/// Per-path mutable filter state.
#[derive(Clone, Debug)]
pub struct FilterState {
    pub estimate: DVector<f64>,
    /// Path covariance (observation-dependent gains only).
    pub covariance: Option<DMatrix<f64>>,
    drift: DVector<f64>,
}

pub(crate) fn inverse_schedule(s: &MatrixSchedule, what: &str) -> Result<MatrixSchedule> {
    let mut bad = None;
    let out = s.map(|m| {
        inverse(m).unwrap_or_else(|| {
            bad = Some(());
            DMatrix::zeros(m.nrows(), m.ncols())
        })
    });
    match bad {
        Some(()) => Err(Error::Degenerate {
            node: 0,
            what: format!("{what} not invertible"),
        }),
        None => Ok(out),
    }
}

impl FilterState {
    /// State of a DM that runs no filter; the estimate stays at `mean`.
    pub fn plain(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            estimate: mean,
            covariance: None,
            drift: DVector::zeros(n),
        }
    }
}

impl FilterDesign {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dm: usize,
        kind: FilterKind,
        plant_dim: usize,
        drift: MatrixSchedule,
        own_input: MatrixSchedule,
        exogenous: VectorSchedule,
        observation: ObservationGain,
        noise: &MatrixSchedule,
        process_cov: MatrixSchedule,
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let noise_inv = inverse_schedule(noise, &format!("D[{dm}]"))?;
        let tabulated = match &observation {
            ObservationGain::Linear(c) => {
                let p = riccati_covariance(&drift, &process_cov, c, &noise_inv, &initial_cov, grid)?;
                let l = p
                    .iter()
                    .enumerate()
                    .map(|(k, pk)| pk * c.at(k).transpose() * noise_inv.at(k))
                    .collect();
                Some((p, l))
            }
            ObservationGain::Feedback(_) => None,
        };
        Ok(Self {
            dm,
            kind,
            plant_dim,
            drift,
            own_input,
            exogenous,
            observation,
            noise_inv,
            process_cov,
            initial_mean,
            initial_cov,
            tabulated,
        })
    }

    /// Kalman–Bucy filter of DM `dm` with a known deterministic input
    /// `w(t_k)` added to the drift (`None` = zero).
    pub fn kalman(spec: &LqTeamSpec, dm: usize, input: Option<VectorSchedule>, grid: &TimeGrid) -> Result<Self> {
        let n = spec.state_dim();
        check_dm(spec, dm)?;
        Self::assemble(
            dm,
            FilterKind::Kalman,
            n,
            spec.a.clone(),
            MatrixSchedule::zeros(n, spec.control_dims[dm]),
            input.unwrap_or_else(|| VectorSchedule::zeros(n)),
            spec.channels[dm].gain.clone(),
            &spec.channels[dm].noise,
            spec.g.map(|g| g * g.transpose()),
            spec.initial_mean.clone(),
            spec.initial_cov.clone(),
            grid,
        )
    }

    /// Team filter of DM `dm`: own action enters through `B⁽ⁱ⁾`, the others
    /// through their mean controls.
    pub fn team_coupled(spec: &LqTeamSpec, strategy: &DecentralizedStrategy, dm: usize, grid: &TimeGrid) -> Result<Self> {
        check_dm(spec, dm)?;
        let n = spec.state_dim();
        let exo = (0..grid.len())
            .map(|k| others_mean_input(spec, strategy, dm, k))
            .collect();
        Self::assemble(
            dm,
            FilterKind::TeamCoupled,
            n,
            spec.a.clone(),
            spec.b_block(dm),
            VectorSchedule::tabulated(exo),
            spec.channels[dm].gain.clone(),
            &spec.channels[dm].noise,
            spec.g.map(|g| g * g.transpose()),
            spec.initial_mean.clone(),
            spec.initial_cov.clone(),
            grid,
        )
    }

    /// Exact conditional-mean filter of DM `dm` when every other DM `j`
    /// runs `bank.designs[j]` with `strategy.laws[j]`.
    ///
    /// The other filters are linear in `x` and their own innovations, so
    /// `z = (x, x̂ʲ…)` is linear Gaussian given DM `dm`'s own inputs and an
    /// ordinary Kalman filter on `z` is exact.
    pub fn augmented(
        spec: &LqTeamSpec,
        strategy: &DecentralizedStrategy,
        bank: &FilterBank,
        dm: usize,
        grid: &TimeGrid,
    ) -> Result<Self> {
        check_dm(spec, dm)?;
        let n = spec.state_dim();
        let others: Vec<usize> = (0..spec.num_agents()).filter(|&j| j != dm).collect();
        let c_own = spec.channels[dm].gain.linear().ok_or_else(|| {
            Error::InvalidArgument("exact filter needs an observation-independent channel gain".into())
        })?;
        for &j in &others {
            let d = &bank.designs[j];
            if d.tabulated.is_none() || d.initial_mean.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "exact filter needs DM {j} to run a plant-state filter with tabulated gains"
                )));
            }
        }
        let s = n * (1 + others.len());
        let mut drift = Vec::with_capacity(grid.len());
        let mut q = Vec::with_capacity(grid.len());
        let mut exo = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let a = spec.a.at(k);
            let g = spec.g.at(k);
            let mut az = DMatrix::zeros(s, s);
            let mut qz = DMatrix::zeros(s, s);
            let mut wz = DVector::zeros(s);
            az.view_mut((0, 0), (n, n)).copy_from(a);
            qz.view_mut((0, 0), (n, n)).copy_from(&(g * g.transpose()));
            for (slot, &j) in others.iter().enumerate() {
                let off = n * (1 + slot);
                let d = &bank.designs[j];
                let (_, gains) = d.tabulated.as_ref().expect("checked above");
                let lj = &gains[k];
                let cj = d.observation.linear().expect("tabulated").at(k);
                let bj = spec.b_block(j);
                let bj = bj.at(k);
                let law = &strategy.laws[j];
                let closed = bj * &law.gains[k];
                // x gets B_j u^j
                az.view_mut((0, off), (n, n)).add_assign(&closed);
                wz.rows_mut(0, n).add_assign(&(bj * &law.offsets[k]));
                // x̂^j dynamics
                let ajj = d.drift.at(k) + d.own_input.at(k) * &law.gains[k] - lj * cj;
                az.view_mut((off, off), (n, n)).copy_from(&ajj);
                az.view_mut((off, 0), (n, n)).copy_from(&(lj * cj));
                let wj = d.own_input.at(k) * &law.offsets[k] + d.exogenous.at(k);
                wz.rows_mut(off, n).copy_from(&wj);
                let dj = inverse(d.noise_inv.at(k)).ok_or_else(|| Error::Degenerate {
                    node: k,
                    what: format!("D[{j}] not invertible"),
                })?;
                qz.view_mut((off, off), (n, n)).copy_from(&(lj * dj * lj.transpose()));
            }
            drift.push(az);
            q.push(qz);
            exo.push(wz);
        }
        let mut own_input = Vec::with_capacity(grid.len());
        let mut cz = Vec::with_capacity(grid.len());
        let b_own = spec.b_block(dm);
        for k in 0..grid.len() {
            let mut bz = DMatrix::zeros(s, spec.control_dims[dm]);
            bz.view_mut((0, 0), (n, spec.control_dims[dm])).copy_from(b_own.at(k));
            own_input.push(bz);
            let c = c_own.at(k);
            let mut ck = DMatrix::zeros(c.nrows(), s);
            ck.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
            cz.push(ck);
        }
        let mut mean = DVector::zeros(s);
        let mut cov = DMatrix::zeros(s, s);
        for slot in 0..=others.len() {
            mean.rows_mut(slot * n, n).copy_from(&spec.initial_mean);
        }
        cov.view_mut((0, 0), (n, n)).copy_from(&spec.initial_cov);
        Self::assemble(
            dm,
            FilterKind::Augmented,
            n,
            MatrixSchedule::tabulated(drift),
            MatrixSchedule::tabulated(own_input),
            VectorSchedule::tabulated(exo),
            ObservationGain::Linear(MatrixSchedule::tabulated(cz)),
            &spec.channels[dm].noise,
            MatrixSchedule::tabulated(q),
            mean,
            cov,
            grid,
        )
    }

    pub fn dim(&self) -> usize {
        self.initial_mean.len()
    }

    pub fn is_path_dependent(&self) -> bool {
        self.tabulated.is_none()
    }

    pub fn start(&self) -> FilterState {
        FilterState {
            estimate: self.initial_mean.clone(),
            covariance: self.is_path_dependent().then(|| self.initial_cov.clone()),
            drift: DVector::zeros(self.dim()),
        }
    }

    /// Channel gain at node `k` for the receiver's observation `y`.
    pub fn channel_gain<'a>(&'a self, k: usize, y: &DVector<f64>) -> std::borrow::Cow<'a, DMatrix<f64>> {
        self.observation.at(k, y)
    }

    /// Advances the filter from `t_k` to `t_{k+1}` given the own action at
    /// `t_k`, the innovation increment and the gain `c_k` it was formed with.
    pub fn advance(
        &self,
        state: &mut FilterState,
        k: usize,
        dt: f64,
        own_control: &DVector<f64>,
        innovation: &DVector<f64>,
        c_k: &DMatrix<f64>,
    ) {
        let FilterState {
            estimate,
            covariance,
            drift,
        } = state;
        drift.gemv(1.0, self.drift.at(k), estimate, 0.0);
        if !own_control.is_empty() {
            drift.gemv(1.0, self.own_input.at(k), own_control, 1.0);
        }
        *drift += self.exogenous.at(k);
        match (&self.tabulated, covariance) {
            (Some((_, gains)), _) => {
                estimate.gemv(1.0, &gains[k], innovation, 1.0);
            }
            (None, Some(p)) => {
                let a = self.drift.at(k);
                let l = &*p * c_k.transpose() * self.noise_inv.at(k);
                estimate.gemv(1.0, &l, innovation, 1.0);
                let dp = a * &*p + &*p * a.transpose() - &l * c_k * &*p + self.process_cov.at(k);
                crate::linalg::add_scaled(p, dt, &dp);
                symmetrize(p);
            }
            (None, None) => unreachable!("path-dependent filter without covariance"),
        }
        estimate.axpy(dt, drift, 1.0);
    }

    /// Covariance at node `k` for the current path state.
    pub fn covariance<'a>(&'a self, state: &'a FilterState, k: usize) -> &'a DMatrix<f64> {
        match (&self.tabulated, &state.covariance) {
            (Some((p, _)), _) => &p[k],
            (None, Some(p)) => p,
            (None, None) => unreachable!("path-dependent filter without covariance"),
        }
    }

    /// Runs the filter along an observation path `y(t_k)`; `law` supplies the
    /// DM's own action from its estimate.
    pub fn run(&self, observations: &[DVector<f64>], law: Option<&AgentLaw>, grid: &TimeGrid) -> Result<FilterTrack> {
        if observations.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "observation path has {} nodes, grid has {}",
                observations.len(),
                grid.len()
            )));
        }
        let dt = grid.dt();
        let kdim = self.observation.shape().0;
        let du = self.own_input.shape().1;
        let mut st = self.start();
        let mut track = FilterTrack {
            estimates: Vec::with_capacity(grid.len()),
            covariances: Vec::with_capacity(grid.len()),
            innovations: Vec::with_capacity(grid.len()),
        };
        for k in 0..grid.len() {
            let y = &observations[k];
            if y.len() != kdim {
                return Err(Error::Dimension(format!("observation at node {k} has length {}", y.len())));
            }
            let c = self.channel_gain(k, y).into_owned();
            let u = match law {
                Some(l) => &l.gains[k] * st.estimate.rows(0, self.plant_dim) + &l.offsets[k],
                None => DVector::zeros(du),
            };
            let innov = if k + 1 < grid.len() {
                (&observations[k + 1] - y) - &c * &st.estimate * dt
            } else {
                DVector::zeros(kdim)
            };
            track.estimates.push(st.estimate.clone());
            track.covariances.push(self.covariance(&st, k).clone());
            track.innovations.push(innov.clone());
            if k + 1 < grid.len() {
                self.advance(&mut st, k, dt, &u, &innov, &c);
            }
        }
        Ok(track)
    }
}

fn check_dm(spec: &LqTeamSpec, dm: usize) -> Result<()> {
    if dm >= spec.num_agents() {
        return Err(Error::InvalidArgument(format!(
            "decision maker {dm} out of range (N = {})",
            spec.num_agents()
        )));
    }
    Ok(())
}

fn others_mean_input(spec: &LqTeamSpec, strategy: &DecentralizedStrategy, dm: usize, k: usize) -> DVector<f64> {
    let b = spec.b.at(k);
    let mut ubar = strategy.mean_controls[k].clone();
    ubar.rows_mut(spec.control_offset(dm), spec.control_dims[dm]).fill(0.0);
    b * ubar
}

/// One filter design per decision maker.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub designs: Vec<FilterDesign>,
}

impl FilterBank {
    /// Kalman–Bucy filters with no inputs.
    pub fn uncontrolled(spec: &LqTeamSpec, grid: &TimeGrid) -> Result<Self> {
        let designs = (0..spec.num_agents())
            .map(|i| FilterDesign::kalman(spec, i, None, grid))
            .collect::<Result<_>>()?;
        Ok(Self { designs })
    }

    /// Team filters for `strategy`.
    pub fn for_strategy(spec: &LqTeamSpec, strategy: &DecentralizedStrategy, grid: &TimeGrid) -> Result<Self> {
        strategy.check(&spec.control_dims, spec.state_dim(), grid)?;
        let designs = (0..spec.num_agents())
            .map(|i| FilterDesign::team_coupled(spec, strategy, i, grid))
            .collect::<Result<_>>()?;
        Ok(Self { designs })
    }

    /// Replaces DM `dm`'s filter by the exact augmented filter.
    pub fn with_exact_filter(
        mut self,
        spec: &LqTeamSpec,
        strategy: &DecentralizedStrategy,
        dm: usize,
        grid: &TimeGrid,
    ) -> Result<Self> {
        self.designs[dm] = FilterDesign::augmented(spec, strategy, &self, dm, grid)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn covariance_schedules(&self) -> Vec<Vec<DMatrix<f64>>> {
        self.designs
            .iter()
            .filter_map(|d| d.tabulated.as_ref().map(|(p, _)| p.clone()))
            .collect()
    }
}

/// Static-message channel filter of receiver `dm`.
pub fn static_channel_filter(
    spec: &BroadcastSpec,
    dm: usize,
    observations: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<FilterTrack> {
    let team = spec.to_team_spec();
    FilterDesign::kalman(&team, dm, None, grid)?.run(observations, None, grid)
}

/// Kalman–Bucy filter of DM `dm` for a spec without controls.
pub fn kalman_bucy_filter(
    spec: &LqTeamSpec,
    dm: usize,
    observations: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<FilterTrack> {
    if !spec.is_uncontrolled() {
        return Err(Error::InvalidArgument(
            "kalman_bucy_filter needs B = 0; use kalman_bucy_filter_with_input".into(),
        ));
    }
    FilterDesign::kalman(spec, dm, None, grid)?.run(observations, None, grid)
}

/// Kalman–Bucy filter with a known deterministic input `B u(t_k)` per node.
pub fn kalman_bucy_filter_with_input(
    spec: &LqTeamSpec,
    dm: usize,
    input: &[DVector<f64>],
    observations: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<FilterTrack> {
    let sched = VectorSchedule::tabulated(input.to_vec());
    sched.check("input", grid, (spec.state_dim(), 1))?;
    FilterDesign::kalman(spec, dm, Some(sched), grid)?.run(observations, None, grid)
}

/// Team filter of DM `dm` driven by its own law in `strategy`.
pub fn team_coupled_filter(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    dm: usize,
    observations: &[DVector<f64>],
    grid: &TimeGrid,
) -> Result<FilterTrack> {
    strategy.check(&spec.control_dims, spec.state_dim(), grid)?;
    FilterDesign::team_coupled(spec, strategy, dm, grid)?.run(observations, Some(&strategy.laws[dm]), grid)
}

#[cfg(test)]
mod tests;
