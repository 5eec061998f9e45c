use nalgebra::DVector;
use serde::Serialize;

use crate::error::Result;
use crate::filters::FilterBank;
use crate::integrators::{monte_carlo, NodeView, PathObserver, Simulator};
use crate::model::{DecentralizedStrategy, LqTeamSpec, TimeGrid};
use crate::rng::NoiseSource;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: u64,
}

impl CostEstimate {
    /// Mean and standard error of `samples`, summed in order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std_error: 0.0,
                paths: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            paths: n as u64,
        }
    }
}

/// Accumulates `∫ℓ dt + ½⟨x(T), M_T x(T)⟩` along one path, left-point rule.
pub struct CostAccumulator<'a> {
    spec: &'a LqTeamSpec,
    last: usize,
    dt: f64,
    total: f64,
    u: DVector<f64>,
    xbuf: DVector<f64>,
    ubuf: DVector<f64>,
    cross: bool,
    control_linear: bool,
    state_linear: bool,
}

impl<'a> CostAccumulator<'a> {
    pub fn new(spec: &'a LqTeamSpec, grid: &TimeGrid) -> Self {
        let n = spec.state_dim();
        let d = spec.control_dim();
        Self {
            spec,
            last: grid.steps(),
            dt: grid.dt(),
            total: 0.0,
            u: DVector::zeros(d),
            xbuf: DVector::zeros(n),
            ubuf: DVector::zeros(d),
            cross: spec.e.max_abs() != 0.0,
            control_linear: spec.m.values().any(|(_, v)| v.amax() != 0.0),
            state_linear: spec.f.values().any(|(_, v)| v.amax() != 0.0),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

impl PathObserver for CostAccumulator<'_> {
    fn observe(&mut self, v: &NodeView<'_>) {
        let spec = self.spec;
        let k = v.node;
        let x = v.state;
        if k == self.last {
            self.xbuf.gemv(1.0, &spec.terminal, x, 0.0);
            self.total += 0.5 * x.dot(&self.xbuf);
            return;
        }
        let mut off = 0;
        for c in v.controls {
            self.u.rows_mut(off, c.len()).copy_from(c);
            off += c.len();
        }
        self.xbuf.gemv(1.0, spec.h.at(k), x, 0.0);
        let mut l = 0.5 * x.dot(&self.xbuf);
        if !self.u.is_empty() {
            self.ubuf.gemv(1.0, spec.r.at(k), &self.u, 0.0);
            l += 0.5 * self.u.dot(&self.ubuf);
            if self.cross {
                self.ubuf.gemv(1.0, spec.e.at(k), x, 0.0);
                l += self.u.dot(&self.ubuf);
            }
            if self.control_linear {
                l += self.u.dot(spec.m.at(k));
            }
        }
        if self.state_linear {
            l += x.dot(spec.f.at(k));
        }
        self.total += l * self.dt;
    }
}

/// Per-path realized costs for `strategy` run on `bank`, in path order.
pub fn path_costs(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    bank: &FilterBank,
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<f64>> {
    let sim = Simulator::new(spec, Some(strategy), Some(bank), grid)?;
    let noise = NoiseSource::new(seed);
    monte_carlo(paths, threads, |p| {
        let mut acc = CostAccumulator::new(spec, grid);
        sim.run_path(&noise, p, &mut acc)?;
        Ok(acc.total())
    })
    .into_iter()
    .collect()
}

/// Monte Carlo pay-off of `strategy`, with the team filters it induces.
pub fn estimate_cost(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
) -> Result<CostEstimate> {
    let bank = FilterBank::for_strategy(spec, strategy, grid)?;
    estimate_cost_with(spec, strategy, &bank, grid, paths, seed, None)
}

/// [`estimate_cost`] on an explicit filter bank and worker cap.
pub fn estimate_cost_with(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    bank: &FilterBank,
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<CostEstimate> {
    let costs = path_costs(spec, strategy, bank, grid, paths, seed, threads)?;
    Ok(CostEstimate::from_samples(&costs))
}
