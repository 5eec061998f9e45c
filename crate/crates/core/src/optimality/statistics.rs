use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::cost::CostEstimate;
use super::verify::{check_paths, SIGMA_MULTIPLIER};
use crate::error::Result;
use crate::filters::FilterBank;
use crate::integrators::{monte_carlo, NodeView, Simulator};
use crate::model::{DecentralizedStrategy, LqTeamSpec, TimeGrid};
use crate::rng::NoiseSource;

/// Relative tolerance on the innovation quadratic variation.
pub const INNOVATION_TOLERANCE: f64 = 0.05;

/// Ensemble statistics of one DM's filter at a probe node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeStatistics {
    pub node: usize,
    /// `E[x − x̂]`, per component.
    pub error_mean: Vec<CostEstimate>,
    /// `E[(x − x̂)_a x̂_b]`, row-major.
    pub cross_covariance: Vec<CostEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterStatistics {
    pub dm: usize,
    pub probes: Vec<ProbeStatistics>,
    /// Ensemble mean of `Σₖ ΔIₖ ΔIₖ*`, row-major.
    pub innovation_variation: Vec<f64>,
    /// `∫ D dt` on the grid, row-major.
    pub innovation_expected: Vec<f64>,
    pub error_mean_pass: bool,
    pub cross_covariance_pass: bool,
    pub innovation_pass: bool,
}

/// Probe nodes at a quarter, half, three quarters and the end of the horizon.
pub fn default_probes(grid: &TimeGrid) -> Vec<usize> {
    let s = grid.steps();
    vec![s / 4, s / 2, 3 * s / 4, s]
}

struct PathRecord {
    // [dm][probe] -> (error, estimate)
    probes: Vec<Vec<(DVector<f64>, DVector<f64>)>>,
    variation: Vec<DMatrix<f64>>,
}

/// Checks each filter for unbiasedness, orthogonality of error and estimate,
/// and innovation intensity `D` over an ensemble of closed-loop paths.
#[allow(clippy::too_many_arguments)]
pub fn filter_statistics(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    bank: &FilterBank,
    grid: &TimeGrid,
    probes: &[usize],
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<FilterStatistics>> {
    check_paths(paths)?;
    let sim = Simulator::new(spec, Some(strategy), Some(bank), grid)?;
    let noise = NoiseSource::new(seed);
    let agents = spec.num_agents();
    let n = spec.state_dim();
    let obs = spec.obs_dims();
    let records: Vec<PathRecord> = monte_carlo(paths, threads, |p| {
        let mut rec = PathRecord {
            probes: vec![Vec::with_capacity(probes.len()); agents],
            variation: obs.iter().map(|&k| DMatrix::zeros(k, k)).collect(),
        };
        sim.run_path(&noise, p, &mut |v: &NodeView<'_>| {
            for i in 0..agents {
                rec.variation[i].ger(1.0, &v.innovations[i], &v.innovations[i], 1.0);
                if probes.contains(&v.node) {
                    let est = v.estimate(i).into_owned();
                    rec.probes[i].push((v.state - &est, est));
                }
            }
        })?;
        Ok(rec)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(agents);
    for i in 0..agents {
        let mut probe_stats = Vec::with_capacity(probes.len());
        for (q, &node) in probes.iter().enumerate() {
            let error_mean = (0..n)
                .map(|a| CostEstimate::from_samples(&records.iter().map(|r| r.probes[i][q].0[a]).collect::<Vec<_>>()))
                .collect();
            let cross_covariance = (0..n * n)
                .map(|ab| {
                    let (a, b) = (ab / n, ab % n);
                    CostEstimate::from_samples(
                        &records
                            .iter()
                            .map(|r| r.probes[i][q].0[a] * r.probes[i][q].1[b])
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            probe_stats.push(ProbeStatistics {
                node,
                error_mean,
                cross_covariance,
            });
        }
        let k = obs[i];
        let mut variation = DMatrix::zeros(k, k);
        for r in &records {
            variation += &r.variation[i];
        }
        variation /= records.len() as f64;
        let mut expected = DMatrix::zeros(k, k);
        for node in 0..grid.steps() {
            crate::linalg::add_scaled(&mut expected, grid.dt(), spec.channels[i].noise.at(node));
        }
        let within = |e: &CostEstimate| e.mean.abs() <= SIGMA_MULTIPLIER * e.std_error;
        let innovation_pass = (0..k).all(|a| {
            (0..k).all(|b| {
                let scale = (expected[(a, a)] * expected[(b, b)]).sqrt();
                (variation[(a, b)] - expected[(a, b)]).abs() <= INNOVATION_TOLERANCE * scale
            })
        });
        out.push(FilterStatistics {
            dm: i,
            error_mean_pass: probe_stats.iter().all(|p| p.error_mean.iter().all(within)),
            cross_covariance_pass: probe_stats.iter().all(|p| p.cross_covariance.iter().all(within)),
            probes: probe_stats,
            innovation_variation: variation.transpose().as_slice().to_vec(),
            innovation_expected: expected.transpose().as_slice().to_vec(),
            innovation_pass,
        });
    }
    Ok(out)
}
