use nalgebra::DMatrix;
use serde::Serialize;

use super::grid::TimeGrid;
use super::schedule::{MatrixSchedule, VectorSchedule};
use super::spec::{BroadcastSpec, LqTeamSpec, ObservationChannel, ObservationGain};
use crate::linalg;

/// Result of [`validate_spec`]: empty means the model passed.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationOutcome {
    pub violations: Vec<String>,
}

impl ValidationOutcome {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }

    fn push(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

/// Problem definitions that can be checked against their invariants.
pub trait Validate {
    fn violations(&self, grid: &TimeGrid) -> ValidationOutcome;
}

/// Checks sign, symmetry and dimension constraints. Never fails; every
/// violated invariant is listed.
pub fn validate_spec<S: Validate + ?Sized>(spec: &S, grid: &TimeGrid) -> ValidationOutcome {
    spec.violations(grid)
}

#[derive(Clone, Copy, PartialEq)]
enum Sign {
    Any,
    Semidefinite,
    Definite,
}

struct Checker<'a> {
    grid: &'a TimeGrid,
    out: ValidationOutcome,
}

impl Checker<'_> {
    fn matrix(&mut self, name: &str, m: &DMatrix<f64>, node: Option<usize>, shape: (usize, usize), sign: Sign) {
        let at = node.map(|k| format!(" (node {k})")).unwrap_or_default();
        if (m.nrows(), m.ncols()) != shape {
            self.out.push(format!(
                "{name} dimension mismatch{at}: expected {}x{}, got {}x{}",
                shape.0,
                shape.1,
                m.nrows(),
                m.ncols()
            ));
            return;
        }
        if !linalg::all_finite_mat(m) {
            self.out.push(format!("{name} has non-finite entries{at}"));
            return;
        }
        if sign == Sign::Any {
            return;
        }
        if !linalg::is_symmetric(m) {
            self.out.push(format!(
                "{name} not symmetric{at}: asymmetry {:.3e}",
                linalg::asymmetry(m)
            ));
            return;
        }
        let lmin = linalg::min_eigenvalue(m);
        match sign {
            Sign::Definite if lmin <= 0.0 => self.out.push(format!(
                "{name} not positive definite{at}: min eigenvalue {lmin:.3e}"
            )),
            Sign::Semidefinite if lmin < -1e-9 * (1.0 + m.amax()) => self.out.push(format!(
                "{name} not positive semidefinite{at}: min eigenvalue {lmin:.3e}"
            )),
            _ => {}
        }
    }

    fn schedule(&mut self, name: &str, s: &MatrixSchedule, shape: (usize, usize), sign: Sign) {
        if let Some(len) = s.len_samples() {
            if len != self.grid.len() {
                self.out.push(format!(
                    "{name} dimension mismatch: {len} samples for {} grid nodes",
                    self.grid.len()
                ));
                return;
            }
        }
        let before = self.out.violations.len();
        for (k, m) in s.values() {
            let node = if s.is_constant() { None } else { Some(k) };
            self.matrix(name, m, node, shape, sign);
            if self.out.violations.len() > before {
                // one report per coefficient is enough
                return;
            }
        }
    }

    fn vector(&mut self, name: &str, s: &VectorSchedule, len: usize) {
        if let Some(l) = s.len_samples() {
            if l != self.grid.len() {
                self.out.push(format!(
                    "{name} dimension mismatch: {l} samples for {} grid nodes",
                    self.grid.len()
                ));
                return;
            }
        }
        for (k, v) in s.values() {
            if v.len() != len {
                self.out.push(format!(
                    "{name} dimension mismatch (node {k}): expected length {len}, got {}",
                    v.len()
                ));
                return;
            }
            if !linalg::all_finite_vec(v) {
                self.out.push(format!("{name} has non-finite entries (node {k})"));
                return;
            }
        }
    }

    fn channels(&mut self, channels: &[ObservationChannel], agents: usize, n: usize) {
        if channels.len() != agents {
            self.out.push(format!(
                "observation dimension mismatch: {} channels for {agents} decision makers",
                channels.len()
            ));
            return;
        }
        for (i, ch) in channels.iter().enumerate() {
            let k = ch.dim();
            self.schedule(&format!("D[{i}]"), &ch.noise, (k, k), Sign::Definite);
            match &ch.gain {
                ObservationGain::Linear(c) => {
                    self.schedule(&format!("C[{i}]"), c, (k, n), Sign::Any);
                }
                ObservationGain::Feedback(fb) => {
                    self.schedule(&format!("C[{i}].base"), &fb.base, (k, n), Sign::Any);
                    self.matrix(&format!("C[{i}].slope"), &fb.slope, None, (k, n), Sign::Any);
                    if fb.direction.len() != k {
                        self.out.push(format!(
                            "C[{i}].direction dimension mismatch: expected length {k}, got {}",
                            fb.direction.len()
                        ));
                    }
                    if !(fb.lipschitz.is_finite() && fb.lipschitz >= fb.intrinsic_lipschitz()) {
                        self.out.push(format!(
                            "C[{i}] declared Lipschitz bound {} below the gain's bound {:.6}",
                            fb.lipschitz,
                            fb.intrinsic_lipschitz()
                        ));
                    }
                }
            }
        }
    }
}

fn check_partition(out: &mut ValidationOutcome, state_dims: &[usize], control_dims: &[usize]) {
    if control_dims.is_empty() {
        out.push("dimension mismatch: no decision makers".into());
    }
    // one shared block is allowed; otherwise one block per DM
    if state_dims.len() > 1 && state_dims.len() != control_dims.len() {
        out.push(format!(
            "dimension mismatch: {} state blocks for {} decision makers",
            state_dims.len(),
            control_dims.len()
        ));
    }
}

impl Validate for LqTeamSpec {
    fn violations(&self, grid: &TimeGrid) -> ValidationOutcome {
        let n = self.state_dim();
        let d = self.control_dim();
        let mut c = Checker {
            grid,
            out: ValidationOutcome::default(),
        };
        check_partition(&mut c.out, &self.state_dims, &self.control_dims);
        c.schedule("A", &self.a, (n, n), Sign::Any);
        c.schedule("B", &self.b, (n, d), Sign::Any);
        let m = self.noise_dim();
        c.schedule("G", &self.g, (n, m), Sign::Any);
        c.channels(&self.channels, self.num_agents(), n);
        c.schedule("H", &self.h, (n, n), Sign::Semidefinite);
        c.schedule("R", &self.r, (d, d), Sign::Definite);
        c.schedule("E", &self.e, (d, n), Sign::Any);
        c.vector("m", &self.m, d);
        c.vector("F", &self.f, n);
        c.matrix("M_T", &self.terminal, None, (n, n), Sign::Semidefinite);
        if self.initial_mean.len() != n {
            c.out.push(format!(
                "initial mean dimension mismatch: expected length {n}, got {}",
                self.initial_mean.len()
            ));
        }
        c.matrix("P0", &self.initial_cov, None, (n, n), Sign::Semidefinite);
        c.out
    }
}

impl Validate for BroadcastSpec {
    fn violations(&self, grid: &TimeGrid) -> ValidationOutcome {
        let n = self.message_dim();
        let d = self.control_dim();
        let mut c = Checker {
            grid,
            out: ValidationOutcome::default(),
        };
        check_partition(&mut c.out, &self.message_dims, &self.control_dims);
        c.channels(&self.channels, self.num_agents(), n);
        c.schedule("H", &self.h, (n, n), Sign::Semidefinite);
        c.schedule("R", &self.r, (d, d), Sign::Definite);
        c.schedule("E", &self.e, (d, n), Sign::Any);
        c.vector("m", &self.m, d);
        c.vector("F", &self.f, n);
        if self.prior_mean.len() != n {
            c.out.push(format!(
                "prior mean dimension mismatch: expected length {n}, got {}",
                self.prior_mean.len()
            ));
        }
        c.matrix("P0", &self.prior_cov, None, (n, n), Sign::Semidefinite);
        c.out
    }
}
