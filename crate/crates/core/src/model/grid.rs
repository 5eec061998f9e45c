use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_0 = 0 < t_1 < ... < t_K = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// Builds a grid from a horizon and a step; `T / dt` must be an integer
    /// to within one part in 10⁹.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if steps < 1.0 || ((steps * dt - horizon).abs() > 1e-9 * horizon) {
            return Err(Error::Config(format!(
                "horizon {horizon} is not an integer multiple of dt {dt}"
            )));
        }
        Ok(Self {
            horizon,
            steps: steps as usize,
        })
    }

    pub fn with_steps(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("grid needs at least one step".into()));
        }
        Self::new(horizon, horizon / steps as f64)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes `K + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, node: usize) -> f64 {
        if node == self.steps {
            self.horizon
        } else {
            self.horizon * node as f64 / self.steps as f64
        }
    }

    /// Time at a fractional node position.
    pub fn time_at(&self, position: f64) -> f64 {
        position * self.dt()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// Index of the last node with `t_k <= t`.
    pub fn node_at_or_before(&self, t: f64) -> usize {
        let k = (t / self.dt() + 1e-9).floor();
        (k.max(0.0) as usize).min(self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_end_at_horizon() {
        let g = TimeGrid::new(1.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 1000);
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(1000), 1.0);
        let t: Vec<f64> = g.nodes().collect();
        for w in t.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 1e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_divisible_step() {
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        assert!(TimeGrid::new(-1.0, 0.1).is_err());
    }
}
