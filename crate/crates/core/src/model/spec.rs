use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::schedule::{MatrixSchedule, VectorSchedule};

/// Observation gain of the form `C(t, y) = C₀(t) + C₁·tanh(⟨w, y⟩)`.
///
/// The receiver's own observation feeds back into its channel. `lipschitz`
/// is the bound declared by the user for `y ↦ C(t, y)`; it must dominate
/// `‖C₁‖_F·‖w‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackGain {
    pub base: MatrixSchedule,
    pub slope: DMatrix<f64>,
    pub direction: DVector<f64>,
    pub lipschitz: f64,
}

impl FeedbackGain {
    pub fn eval(&self, node: usize, y: &DVector<f64>) -> DMatrix<f64> {
        let s = self.direction.dot(y).tanh();
        let mut c = self.base.at(node).clone();
        crate::linalg::add_scaled(&mut c, s, &self.slope);
        c
    }

    pub fn intrinsic_lipschitz(&self) -> f64 {
        self.slope.norm() * self.direction.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservationGain {
    Linear(MatrixSchedule),
    Feedback(FeedbackGain),
}

impl ObservationGain {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            ObservationGain::Linear(s) => s.shape(),
            ObservationGain::Feedback(f) => f.base.shape(),
        }
    }

    pub fn is_feedback(&self) -> bool {
        matches!(self, ObservationGain::Feedback(_))
    }

    pub fn linear(&self) -> Option<&MatrixSchedule> {
        match self {
            ObservationGain::Linear(s) => Some(s),
            ObservationGain::Feedback(_) => None,
        }
    }

    /// Gain at node `k` given the receiver's observation `y(t_k)`.
    #[inline]
    pub fn at(&self, node: usize, y: &DVector<f64>) -> Cow<'_, DMatrix<f64>> {
        match self {
            ObservationGain::Linear(s) => Cow::Borrowed(s.at(node)),
            ObservationGain::Feedback(f) => Cow::Owned(f.eval(node, y)),
        }
    }
}

/// One decision maker's observation channel `dy = C x dt + D^{1/2} dB`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationChannel {
    /// `k_i × n`; acts on the full state.
    pub gain: ObservationGain,
    /// `k_i × k_i`, symmetric positive definite.
    pub noise: MatrixSchedule,
}

impl ObservationChannel {
    pub fn linear(gain: MatrixSchedule, noise: MatrixSchedule) -> Self {
        Self {
            gain: ObservationGain::Linear(gain),
            noise,
        }
    }

    pub fn dim(&self) -> usize {
        self.noise.shape().0
    }
}

/// Linear-quadratic team problem with `N` decision makers.
///
/// State `x = (x¹,…,x^N)`, joint control `u = (u¹,…,u^N)`:
///
/// ```text
/// dx  = (A x + B u) dt + G dW
/// dyⁱ = C⁽ⁱ⁾ x dt + Dᵢ^{1/2} dBⁱ
/// J   = E{ ∫ ½⟨u,Ru⟩ + ½⟨x,Hx⟩ + ⟨x,F⟩ + ⟨u,Ex⟩ + ⟨u,m⟩ dt + ½⟨x(T), M x(T)⟩ }
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LqTeamSpec {
    pub state_dims: Vec<usize>,
    pub control_dims: Vec<usize>,
    pub a: MatrixSchedule,
    pub b: MatrixSchedule,
    pub g: MatrixSchedule,
    pub channels: Vec<ObservationChannel>,
    pub h: MatrixSchedule,
    pub r: MatrixSchedule,
    pub e: MatrixSchedule,
    pub m: VectorSchedule,
    pub f: VectorSchedule,
    pub terminal: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl LqTeamSpec {
    /// Spec with zero linear and cross terms (`E = 0`, `m = 0`, `F = 0`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dims: Vec<usize>,
        control_dims: Vec<usize>,
        a: MatrixSchedule,
        b: MatrixSchedule,
        g: MatrixSchedule,
        channels: Vec<ObservationChannel>,
        h: MatrixSchedule,
        r: MatrixSchedule,
        terminal: DMatrix<f64>,
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
    ) -> Self {
        let n: usize = state_dims.iter().sum();
        let d: usize = control_dims.iter().sum();
        Self {
            state_dims,
            control_dims,
            a,
            b,
            g,
            channels,
            h,
            r,
            e: MatrixSchedule::zeros(d, n),
            m: VectorSchedule::zeros(d),
            f: VectorSchedule::zeros(n),
            terminal,
            initial_mean,
            initial_cov,
        }
    }

    pub fn with_cross(mut self, e: MatrixSchedule) -> Self {
        self.e = e;
        self
    }

    pub fn with_control_linear(mut self, m: VectorSchedule) -> Self {
        self.m = m;
        self
    }

    pub fn with_state_linear(mut self, f: VectorSchedule) -> Self {
        self.f = f;
        self
    }

    pub fn num_agents(&self) -> usize {
        self.control_dims.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dims.iter().sum()
    }

    pub fn control_dim(&self) -> usize {
        self.control_dims.iter().sum()
    }

    pub fn noise_dim(&self) -> usize {
        self.g.shape().1
    }

    pub fn obs_dims(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.dim()).collect()
    }

    pub fn control_offset(&self, dm: usize) -> usize {
        self.control_dims[..dm].iter().sum()
    }

    pub fn state_offset(&self, dm: usize) -> usize {
        self.state_dims[..dm].iter().sum()
    }

    /// `B⁽ⁱ⁾`: the columns of `B` driven by DM `i` (`n × dᵢ`).
    pub fn b_block(&self, dm: usize) -> MatrixSchedule {
        self.b
            .block(0, self.control_offset(dm), self.state_dim(), self.control_dims[dm])
    }

    /// `R_ij` (`dᵢ × dⱼ`).
    pub fn r_block(&self, i: usize, j: usize) -> MatrixSchedule {
        self.r.block(
            self.control_offset(i),
            self.control_offset(j),
            self.control_dims[i],
            self.control_dims[j],
        )
    }

    /// `E^{[i]}`: block row of `E` for DM `i` (`dᵢ × n`).
    pub fn e_block(&self, dm: usize) -> MatrixSchedule {
        self.e
            .block(self.control_offset(dm), 0, self.control_dims[dm], self.state_dim())
    }

    pub fn m_block(&self, dm: usize) -> VectorSchedule {
        self.m.segment(self.control_offset(dm), self.control_dims[dm])
    }

    /// True when every `B` sample is exactly zero.
    pub fn is_uncontrolled(&self) -> bool {
        self.b.max_abs() == 0.0
    }

    pub fn has_feedback_channels(&self) -> bool {
        self.channels.iter().any(|c| c.gain.is_feedback())
    }
}

/// Static Gaussian message `θ ~ N(θ̄, P₀)` broadcast to `N` receivers.
///
/// Receiver `i` sees `dyⁱ = Cᵢᵢ(t, yⁱ) θ dt + Dᵢᵢ^{1/2} dBⁱ` and acts with
/// `uⁱ`; the pay-off is
/// `E ∫ ½⟨u,Ru⟩ + ½⟨θ,Hθ⟩ + ⟨θ,F⟩ + ⟨u,Eθ⟩ + ⟨u,m⟩ dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastSpec {
    pub message_dims: Vec<usize>,
    pub control_dims: Vec<usize>,
    pub channels: Vec<ObservationChannel>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    pub r: MatrixSchedule,
    pub e: MatrixSchedule,
    pub h: MatrixSchedule,
    pub f: VectorSchedule,
    pub m: VectorSchedule,
}

impl BroadcastSpec {
    pub fn message_dim(&self) -> usize {
        self.message_dims.iter().sum()
    }

    pub fn control_dim(&self) -> usize {
        self.control_dims.iter().sum()
    }

    pub fn num_agents(&self) -> usize {
        self.control_dims.len()
    }

    /// The same problem written as a team spec with frozen dynamics
    /// (`A = 0`, `B = 0`, `G = 0`, `M_T = 0`).
    pub fn to_team_spec(&self) -> LqTeamSpec {
        let n = self.message_dim();
        let d = self.control_dim();
        LqTeamSpec {
            state_dims: self.message_dims.clone(),
            control_dims: self.control_dims.clone(),
            a: MatrixSchedule::zeros(n, n),
            b: MatrixSchedule::zeros(n, d),
            g: MatrixSchedule::zeros(n, 1),
            channels: self.channels.clone(),
            h: self.h.clone(),
            r: self.r.clone(),
            e: self.e.clone(),
            m: self.m.clone(),
            f: self.f.clone(),
            terminal: DMatrix::zeros(n, n),
            initial_mean: self.prior_mean.clone(),
            initial_cov: self.prior_cov.clone(),
        }
    }
}
