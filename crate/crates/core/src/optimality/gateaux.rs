use serde::Serialize;

use super::cost::{path_costs, CostEstimate};
use super::verify::{check_paths, paired, SIGMA_MULTIPLIER};
use crate::error::{Error, Result};
use crate::filters::FilterBank;
use crate::model::{DecentralizedStrategy, LqTeamSpec, StrategyDelta, TimeGrid};

/// Smallest accepted finite-difference step.
pub const MIN_STEP: f64 = 1e-8;

/// Directional derivative of the pay-off, extrapolated to `ε → 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateauxEstimate {
    pub derivative: f64,
    pub std_error: f64,
    /// `(ε, mean quotient, its standard error)` for each step.
    pub quotients: Vec<(f64, f64, f64)>,
}

/// Intercept weights of the least-squares line through `(εⱼ, qⱼ)`.
fn intercept_weights(eps: &[f64]) -> Vec<f64> {
    let n = eps.len() as f64;
    let s1: f64 = eps.iter().sum();
    let s2: f64 = eps.iter().map(|e| e * e).sum();
    let den = n * s2 - s1 * s1;
    if eps.len() == 1 || den.abs() <= 1e-12 * s2 * n {
        return vec![1.0 / n; eps.len()];
    }
    eps.iter().map(|e| (s2 - e * s1) / den).collect()
}

/// `(J(u + εδ) − J(u))/ε` with common random numbers, fitted per path by a
/// line in `ε` whose intercept is the derivative estimate. Every run uses
/// the team filters of `strategy`.
#[allow(clippy::too_many_arguments)]
pub fn gateaux_fd(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    direction: &StrategyDelta,
    eps: &[f64],
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<GateauxEstimate> {
    if eps.is_empty() {
        return Err(Error::InvalidArgument("no finite-difference steps given".into()));
    }
    if let Some(e) = eps.iter().find(|e| !(**e >= MIN_STEP) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step {e} is below {MIN_STEP:e}; the difference would be dominated by rounding"
        )));
    }
    check_paths(paths)?;
    if direction.laws.len() != strategy.num_agents() {
        return Err(Error::Dimension("direction does not match the strategy".into()));
    }
    if direction.touched().is_empty() {
        return Ok(GateauxEstimate {
            derivative: 0.0,
            std_error: 0.0,
            quotients: eps.iter().map(|&e| (e, 0.0, 0.0)).collect(),
        });
    }
    let bank = FilterBank::for_strategy(spec, strategy, grid)?;
    let base = path_costs(spec, strategy, &bank, grid, paths, seed, threads)?;
    let weights = intercept_weights(eps);
    let mut fitted = vec![0.0; base.len()];
    let mut quotients = Vec::with_capacity(eps.len());
    for (&e, &w) in eps.iter().zip(&weights) {
        let moved = strategy.perturbed(direction, e);
        let costs = path_costs(spec, &moved, &bank, grid, paths, seed, threads)?;
        let q: Vec<f64> = base.iter().zip(&costs).map(|(a, b)| (b - a) / e).collect();
        for (f, qp) in fitted.iter_mut().zip(&q) {
            *f += w * qp;
        }
        let est = CostEstimate::from_samples(&q);
        quotients.push((e, est.mean, est.std_error));
    }
    let est = CostEstimate::from_samples(&fitted);
    Ok(GateauxEstimate {
        derivative: est.mean,
        std_error: est.std_error,
        quotients,
    })
}

/// Pay-off along `u + sδ`, `s ∈ {0, ¼, ½, ¾, 1}`, with midpoint tests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityWitness {
    pub s: Vec<f64>,
    pub costs: Vec<CostEstimate>,
    /// Paired `J(s−¼) − 2J(s) + J(s+¼)` at the three interior points.
    pub second_differences: Vec<CostEstimate>,
    pub pass: bool,
}

/// Midpoint convexity of the pay-off along a segment of strategies.
pub fn convexity_witness(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    direction: &StrategyDelta,
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<ConvexityWitness> {
    check_paths(paths)?;
    let s: Vec<f64> = (0..5).map(|j| j as f64 / 4.0).collect();
    let bank = FilterBank::for_strategy(spec, strategy, grid)?;
    let runs: Vec<Vec<f64>> = s
        .iter()
        .map(|&sj| path_costs(spec, &strategy.perturbed(direction, sj), &bank, grid, paths, seed, threads))
        .collect::<Result<_>>()?;
    let second_differences: Vec<CostEstimate> = (1..4)
        .map(|j| {
            let outer: Vec<f64> = runs[j - 1].iter().zip(&runs[j + 1]).map(|(a, b)| a + b).collect();
            let mid: Vec<f64> = runs[j].iter().map(|v| 2.0 * v).collect();
            paired(&mid, &outer)
        })
        .collect();
    let pass = second_differences
        .iter()
        .all(|d| d.mean >= -SIGMA_MULTIPLIER * d.std_error);
    Ok(ConvexityWitness {
        s,
        costs: runs.iter().map(|r| CostEstimate::from_samples(r)).collect(),
        second_differences,
        pass,
    })
}
