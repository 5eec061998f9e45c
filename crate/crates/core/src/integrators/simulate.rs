//! Left-point Euler–Maruyama simulation of the closed-loop team system.
//!
//! A path is streamed node by node to a [`PathObserver`]; nothing is kept
//! unless the observer keeps it. Buffers are allocated once per path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::{FilterBank, FilterState};
use crate::linalg::psd_sqrt;
use crate::model::{DecentralizedStrategy, LqTeamSpec, MatrixSchedule, TimeGrid, Trajectory};
use crate::rng::NoiseSource;

/// Everything known at node `k` of one path.
///
/// Increments drive the step `t_k → t_{k+1}` and are zero at the final node.
pub struct NodeView<'a> {
    pub path: u64,
    pub node: usize,
    pub time: f64,
    pub state: &'a DVector<f64>,
    pub observations: &'a [DVector<f64>],
    /// Full filter states; the plant estimate is the leading block.
    pub estimates: &'a [FilterState],
    pub controls: &'a [DVector<f64>],
    pub state_noise: &'a DVector<f64>,
    pub observation_noise: &'a [DVector<f64>],
    pub innovations: &'a [DVector<f64>],
}

impl NodeView<'_> {
    /// Plant-state estimate of DM `dm` (first `n` entries of its filter).
    pub fn estimate(&self, dm: usize) -> nalgebra::DVectorView<'_, f64> {
        self.estimates[dm].estimate.rows(0, self.state.len())
    }

    pub fn joint_control(&self) -> DVector<f64> {
        let parts: Vec<f64> = self.controls.iter().flat_map(|c| c.iter().copied()).collect();
        DVector::from_vec(parts)
    }
}

pub trait PathObserver {
    fn observe(&mut self, view: &NodeView<'_>);
}

impl<F: FnMut(&NodeView<'_>)> PathObserver for F {
    fn observe(&mut self, view: &NodeView<'_>) {
        self(view)
    }
}

/// Records the full trajectory.
#[derive(Default)]
pub struct TrajectoryRecorder {
    pub trajectory: Option<Trajectory>,
}

impl PathObserver for TrajectoryRecorder {
    fn observe(&mut self, v: &NodeView<'_>) {
        let n = v.state.len();
        let agents = v.observations.len();
        let tr = self.trajectory.get_or_insert_with(|| Trajectory {
            seed: 0,
            path: v.path,
            times: Vec::new(),
            states: Vec::new(),
            observations: vec![Vec::new(); agents],
            estimates: vec![Vec::new(); agents],
            controls: vec![Vec::new(); agents],
            state_noise: Vec::new(),
            observation_noise: vec![Vec::new(); agents],
            innovations: vec![Vec::new(); agents],
        });
        tr.times.push(v.time);
        tr.states.push(v.state.clone());
        tr.state_noise.push(v.state_noise.clone());
        for i in 0..agents {
            tr.observations[i].push(v.observations[i].clone());
            tr.estimates[i].push(v.estimates[i].estimate.rows(0, n).into_owned());
            tr.controls[i].push(v.controls[i].clone());
            tr.observation_noise[i].push(v.observation_noise[i].clone());
            tr.innovations[i].push(v.innovations[i].clone());
        }
    }
}

/// Closed-loop simulator for one spec, strategy and filter bank.
///
/// Noise channels for path `p` at node `k`: `0..m` drive `W`, then each DM's
/// observation noise in order. The initial state draws use node `u32::MAX`.
pub struct Simulator<'a> {
    spec: &'a LqTeamSpec,
    grid: &'a TimeGrid,
    strategy: Option<&'a DecentralizedStrategy>,
    filters: Option<&'a FilterBank>,
    noise_sqrt: Vec<MatrixSchedule>,
    b_blocks: Vec<MatrixSchedule>,
    initial_sqrt: DMatrix<f64>,
    obs_channel: Vec<u32>,
}

const INITIAL_NODE: u32 = u32::MAX;

impl<'a> Simulator<'a> {
    pub fn new(
        spec: &'a LqTeamSpec,
        strategy: Option<&'a DecentralizedStrategy>,
        filters: Option<&'a FilterBank>,
        grid: &'a TimeGrid,
    ) -> Result<Self> {
        let n = spec.state_dim();
        if strategy.is_some() && filters.is_none() {
            return Err(Error::InvalidArgument(
                "a strategy acts on filter states; supply a filter bank".into(),
            ));
        }
        if let Some(s) = strategy {
            s.check(&spec.control_dims, n, grid)?;
        }
        if let Some(f) = filters {
            if f.len() != spec.num_agents() {
                return Err(Error::Dimension(format!(
                    "filter bank has {} filters for {} decision makers",
                    f.len(),
                    spec.num_agents()
                )));
            }
            for d in &f.designs {
                if d.plant_dim != n || d.observation.shape().0 != spec.channels[d.dm].dim() {
                    return Err(Error::Dimension(format!("filter {} does not match the model", d.dm)));
                }
            }
        }
        if spec.initial_mean.len() != n || spec.channels.len() != spec.num_agents() {
            return Err(Error::Dimension("spec is not dimension-consistent".into()));
        }
        spec.a.check("A", grid, (n, n))?;
        spec.b.check("B", grid, (n, spec.control_dim()))?;
        spec.g.check("G", grid, (n, spec.noise_dim()))?;
        let mut obs_channel = Vec::with_capacity(spec.num_agents());
        let mut next = spec.noise_dim() as u32;
        for ch in &spec.channels {
            obs_channel.push(next);
            next += ch.dim() as u32;
        }
        Ok(Self {
            spec,
            grid,
            strategy,
            filters,
            noise_sqrt: spec.channels.iter().map(|c| c.noise.map(psd_sqrt)).collect(),
            b_blocks: (0..spec.num_agents()).map(|i| spec.b_block(i)).collect(),
            initial_sqrt: psd_sqrt(&spec.initial_cov),
            obs_channel,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.grid
    }

    pub fn spec(&self) -> &LqTeamSpec {
        self.spec
    }

    /// Streams path `path` of the ensemble keyed by `noise` to `observer`.
    pub fn run_path(&self, noise: &NoiseSource, path: u64, observer: &mut impl PathObserver) -> Result<()> {
        let spec = self.spec;
        let n = spec.state_dim();
        let m = spec.noise_dim();
        let agents = spec.num_agents();
        let dt = self.grid.dt();
        let sqdt = dt.sqrt();
        let kmax = self.grid.steps();

        let mut z0 = DVector::zeros(n);
        noise.fill(path, INITIAL_NODE, 0, z0.as_mut_slice());
        let mut x = &spec.initial_mean + &self.initial_sqrt * z0;
        let mut drift = DVector::zeros(n);
        let mut dw = DVector::zeros(m);
        // all channels of one node in a single pass (pairs are shared)
        let mut z = vec![0.0; self.obs_channel.last().map_or(m, |&c| c as usize + spec.channels[agents - 1].dim())];
        let obs_dims = spec.obs_dims();
        let mut y: Vec<DVector<f64>> = obs_dims.iter().map(|&k| DVector::zeros(k)).collect();
        let mut db: Vec<DVector<f64>> = obs_dims.iter().map(|&k| DVector::zeros(k)).collect();
        let mut dy: Vec<DVector<f64>> = obs_dims.iter().map(|&k| DVector::zeros(k)).collect();
        let mut innov: Vec<DVector<f64>> = obs_dims.iter().map(|&k| DVector::zeros(k)).collect();
        let mut gains: Vec<DMatrix<f64>> = (0..agents)
            .map(|i| spec.channels[i].gain.at(0, &y[i]).into_owned())
            .collect();
        let mut controls: Vec<DVector<f64>> = spec.control_dims.iter().map(|&d| DVector::zeros(d)).collect();
        let mut filt: Vec<FilterState> = match self.filters {
            Some(f) => f.designs.iter().map(|d| d.start()).collect(),
            None => (0..agents)
                .map(|_| crate::filters::FilterState::plain(spec.initial_mean.clone()))
                .collect(),
        };

        for k in 0..=kmax {
            if let Some(s) = self.strategy {
                for i in 0..agents {
                    let law = &s.laws[i];
                    controls[i].copy_from(&law.offsets[k]);
                    controls[i].gemv(1.0, &law.gains[k], &filt[i].estimate.rows(0, n), 1.0);
                }
            }
            let last = k == kmax;
            for i in 0..agents {
                if spec.channels[i].gain.is_feedback() {
                    gains[i] = spec.channels[i].gain.at(k, &y[i]).into_owned();
                } else if let Some(c) = spec.channels[i].gain.linear() {
                    if !c.is_constant() || k == 0 {
                        gains[i].copy_from(c.at(k));
                    }
                }
            }
            if last {
                dw.fill(0.0);
                for i in 0..agents {
                    db[i].fill(0.0);
                    dy[i].fill(0.0);
                    innov[i].fill(0.0);
                }
            } else {
                noise.fill(path, k as u32, 0, &mut z);
                for (w, v) in dw.iter_mut().zip(&z) {
                    *w = v * sqdt;
                }
                for i in 0..agents {
                    let first = self.obs_channel[i] as usize;
                    for (b, v) in db[i].iter_mut().zip(&z[first..]) {
                        *b = v * sqdt;
                    }
                    dy[i].gemv(dt, &gains[i], &x, 0.0);
                    dy[i].gemv(1.0, self.noise_sqrt[i].at(k), &db[i], 1.0);
                    innov[i].copy_from(&dy[i]);
                    innov[i].gemv(-dt, &gains[i], &filt[i].estimate.rows(0, n), 1.0);
                }
            }
            if let Some(f) = self.filters {
                // augmented filters observe through their own C_z
                for (i, d) in f.designs.iter().enumerate() {
                    if d.dim() != n && !last {
                        let cz = d.channel_gain(k, &y[i]);
                        innov[i].copy_from(&dy[i]);
                        innov[i].gemv(-dt, &cz, &filt[i].estimate, 1.0);
                    }
                }
            }
            observer.observe(&NodeView {
                path,
                node: k,
                time: self.grid.time(k),
                state: &x,
                observations: &y,
                estimates: &filt,
                controls: &controls,
                state_noise: &dw,
                observation_noise: &db,
                innovations: &innov,
            });
            if last {
                break;
            }
            if let Some(f) = self.filters {
                for (i, d) in f.designs.iter().enumerate() {
                    if d.dim() == n {
                        d.advance(&mut filt[i], k, dt, &controls[i], &innov[i], &gains[i]);
                    } else {
                        let cz = d.channel_gain(k, &y[i]).into_owned();
                        d.advance(&mut filt[i], k, dt, &controls[i], &innov[i], &cz);
                    }
                }
            }
            drift.gemv(1.0, spec.a.at(k), &x, 0.0);
            for i in 0..agents {
                if !controls[i].is_empty() {
                    drift.gemv(1.0, self.b_blocks[i].at(k), &controls[i], 1.0);
                }
            }
            x.axpy(dt, &drift, 1.0);
            x.gemv(1.0, spec.g.at(k), &dw, 1.0);
            for i in 0..agents {
                y[i] += &dy[i];
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationBlowup {
                    node: k + 1,
                    time: self.grid.time(k + 1),
                });
            }
        }
        Ok(())
    }

    /// Records path `path` as a [`Trajectory`].
    pub fn trajectory(&self, seed: u64, path: u64) -> Result<Trajectory> {
        let mut rec = TrajectoryRecorder::default();
        self.run_path(&NoiseSource::new(seed), path, &mut rec)?;
        let mut tr = rec.trajectory.expect("at least one node observed");
        tr.seed = seed;
        Ok(tr)
    }
}

/// One sample path (path index 0) of the closed-loop system.
pub fn euler_maruyama(
    spec: &LqTeamSpec,
    strategy: Option<&DecentralizedStrategy>,
    filters: Option<&FilterBank>,
    grid: &TimeGrid,
    seed: u64,
) -> Result<Trajectory> {
    Simulator::new(spec, strategy, filters, grid)?.trajectory(seed, 0)
}

/// Evaluates `f(path)` for `0..paths` in parallel, returning results in path
/// order. `threads` caps the worker count; results never depend on it.
pub fn monte_carlo<T, F>(paths: u64, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let go = || (0..paths).into_par_iter().map(&f).collect::<Vec<T>>();
    match threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(go),
            Err(_) => go(),
        },
        _ => go(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::scalar;
    use crate::model::{AgentLaw, DecentralizedStrategy};

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn deterministic_decay_converges_to_exponential() {
        let spec = scalar(-1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        let grid = TimeGrid::new(1.0, 1e-4).unwrap();
        let tr = euler_maruyama(&spec, None, None, &grid, 3).unwrap();
        assert!((tr.states[grid.steps()][0] - (-1f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn brownian_motion_moments() {
        let spec = scalar(0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let grid = TimeGrid::new(1.0, 0.05).unwrap();
        let sim = Simulator::new(&spec, None, None, &grid).unwrap();
        let noise = NoiseSource::new(11);
        let ends = monte_carlo(100_000, None, |p| {
            let mut last = 0.0;
            sim.run_path(&noise, p, &mut |v: &NodeView<'_>| last = v.state[0]).unwrap();
            last
        });
        let (m, var) = mean_var(&ends);
        assert!(m.abs() < 3.0 / (1e5f64).sqrt(), "mean {m}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn zero_strategy_matches_uncontrolled_bit_for_bit() {
        let spec = scalar(0.3, 2.0, 0.5, 1.0, 0.2, 1.0, 1.0, 1.0, 0.4, 0.3);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let bank = FilterBank::uncontrolled(&spec, &grid).unwrap();
        let zero = DecentralizedStrategy::zero(&[1], 1, &grid);
        let a = euler_maruyama(&spec, None, None, &grid, 5).unwrap();
        let b = euler_maruyama(&spec, Some(&zero), Some(&bank), &grid, 5).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.observations, b.observations);
    }

    #[test]
    fn strategy_without_filters_is_rejected() {
        let spec = scalar(0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let zero = DecentralizedStrategy::zero(&[1], 1, &grid);
        assert!(euler_maruyama(&spec, Some(&zero), None, &grid, 1).is_err());
    }

    #[test]
    fn same_seed_same_path_any_thread_count() {
        let spec = scalar(-0.5, 1.0, 0.7, 1.0, 0.3, 1.0, 1.0, 1.0, 0.2, 0.5);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let a = euler_maruyama(&spec, None, None, &grid, 99).unwrap();
        let b = euler_maruyama(&spec, None, None, &grid, 99).unwrap();
        assert_eq!(a, b);
        let c = euler_maruyama(&spec, None, None, &grid, 100).unwrap();
        assert_ne!(a.states, c.states);
        let sim = Simulator::new(&spec, None, None, &grid).unwrap();
        let noise = NoiseSource::new(4);
        let run = |threads| {
            monte_carlo(64, Some(threads), |p| {
                let mut s = 0.0;
                sim.run_path(&noise, p, &mut |v: &NodeView<'_>| s += v.state[0]).unwrap();
                s
            })
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), four.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn ensemble_mean_follows_mean_ode() {
        // open-loop constant control u = 0.5, A = −0.8, B = 1
        let spec = scalar(-0.8, 1.0, 0.6, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.2);
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let mut strat = DecentralizedStrategy::zero(&[1], 1, &grid);
        strat.laws[0] = AgentLaw {
            gains: vec![DMatrix::zeros(1, 1); grid.len()],
            offsets: vec![DVector::from_element(1, 0.5); grid.len()],
        };
        let bank = FilterBank::uncontrolled(&spec, &grid).unwrap();
        let sim = Simulator::new(&spec, Some(&strat), Some(&bank), &grid).unwrap();
        let noise = NoiseSource::new(8);
        let paths = 4000;
        let per_path = monte_carlo(paths, None, |p| {
            let mut xs = Vec::with_capacity(grid.len());
            sim.run_path(&noise, p, &mut |v: &NodeView<'_>| xs.push(v.state[0])).unwrap();
            xs
        });
        for k in (0..grid.len()).step_by(10) {
            let t = grid.time(k);
            let exact = 0.625 + (1.0 - 0.625) * (-0.8 * t).exp();
            let col: Vec<f64> = per_path.iter().map(|xs| xs[k]).collect();
            let (m, var) = mean_var(&col);
            let se = (var / paths as f64).sqrt();
            assert!((m - exact).abs() <= 4.0 * se + 1e-2, "node {k}: {m} vs {exact}");
        }
    }
}
