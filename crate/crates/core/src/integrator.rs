//! Fixed-step classical Runge–Kutta integration with snapshot recording.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{DynamicsError, SeekerState, SeekingDynamics};
use crate::game::{pseudogradient, Game};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("invalid integration config: {0}")]
    Config(String),
}

/// Vector-space operations RK4 needs on a state.
pub trait OdeState: Clone {
    /// `self + scale·other`.
    fn add_scaled(&self, other: &Self, scale: f64) -> Self;
    fn is_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        self + scale * other
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl OdeState for DVector<f64> {
    fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        self + other * scale
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for DMatrix<f64> {
    fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        self + other * scale
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for SeekerState {
    fn add_scaled(&self, other: &Self, scale: f64) -> Self {
        SeekerState::add_scaled(self, other, scale)
    }

    fn is_finite(&self) -> bool {
        SeekerState::is_finite(self)
    }
}

/// One classical RK4 step. Field errors propagate; a non-finite result is
/// reported as [`IntegrationError::NonFinite`] with `time = NaN` (the
/// caller knows the clock).
pub fn rk4_step<S, F, E>(field: F, state: &S, h: f64) -> Result<S, IntegrationError>
where
    S: OdeState,
    F: Fn(&S) -> Result<S, E>,
    IntegrationError: From<E>,
{
    let k1 = field(state)?;
    let k2 = field(&state.add_scaled(&k1, 0.5 * h))?;
    let k3 = field(&state.add_scaled(&k2, 0.5 * h))?;
    let k4 = field(&state.add_scaled(&k3, h))?;
    let next =
        state.add_scaled(&k1, h / 6.0).add_scaled(&k2, h / 3.0).add_scaled(&k3, h / 3.0).add_scaled(&k4, h / 6.0);
    if !next.is_finite() {
        return Err(IntegrationError::NonFinite { time: f64::NAN });
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub step: f64,
    pub horizon: f64,
    /// Record every k-th step (plus the first and the last).
    pub record_every: usize,
    /// Stop once both the NE residual and the consensus error drop below
    /// this; `0` disables early stopping.
    pub stop_tol: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self { step: 1e-3, horizon: 30.0, record_every: 10, stop_tol: 0.0 }
    }
}

impl IntegrationConfig {
    pub fn new(step: f64, horizon: f64, record_every: usize) -> Self {
        Self { step, horizon, record_every, stop_tol: 0.0 }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(IntegrationError::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(IntegrationError::Config(format!(
                "horizon {} must be at least one step ({})",
                self.horizon, self.step
            )));
        }
        if self.record_every == 0 {
            return Err(IntegrationError::Config("record_every must be >= 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(IntegrationError::Config(format!("stop_tol must be >= 0, got {}", self.stop_tol)));
        }
        Ok(())
    }

    /// Number of steps to cover the horizon: `round(T/h)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Horizon,
    Tolerance,
    Failed(IntegrationError),
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::Tolerance => "tolerance",
            StopReason::Failed(_) => "error",
        }
    }
}

/// Recorded snapshots. Times are `k·h` for integer step counts `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub step_counts: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<SeekerState>,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SeekerState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds the initial state")
    }

    pub fn completed(&self) -> bool {
        !matches!(self.stop, StopReason::Failed(_))
    }

    pub fn error(&self) -> Option<&IntegrationError> {
        match &self.stop {
            StopReason::Failed(e) => Some(e),
            _ => None,
        }
    }

    fn push(&mut self, k: usize, state: SeekerState) {
        self.step_counts.push(k);
        self.times.push(k as f64 * self.step);
        self.states.push(state);
    }
}

/// Largest deviation of an agent's estimate row from the mean row.
pub fn consensus_error(z: &DMatrix<f64>) -> f64 {
    let mean = z.row_mean();
    z.row_iter().map(|row| (row - &mean).norm()).fold(0.0, f64::max)
}

/// `‖F(diag Z)‖∞`: how far the agents' own decisions are from stationarity.
pub fn ne_residual<G: Game + ?Sized>(game: &G, z: &DMatrix<f64>) -> f64 {
    let own = DVector::from_fn(z.nrows(), |i, _| z[(i, i)]);
    pseudogradient(game, &own).map(|g| g.amax()).unwrap_or(f64::INFINITY)
}

/// Integrates from `t = 0` to the horizon (or until the stopping
/// tolerance is met). On a field error or a non-finite state the
/// trajectory up to the last good step is returned with
/// [`StopReason::Failed`].
pub fn integrate<G: Game + ?Sized>(
    dynamics: &SeekingDynamics<'_, G>,
    initial: SeekerState,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, IntegrationError> {
    cfg.validate()?;
    let n = dynamics.n();
    if initial.z.shape() != (n, n) {
        return Err(IntegrationError::Config(format!("initial Z must be {n}x{n}")));
    }
    let steps = cfg.steps();
    let mut traj = Trajectory {
        step: cfg.step,
        step_counts: Vec::with_capacity(steps / cfg.record_every + 2),
        times: Vec::with_capacity(steps / cfg.record_every + 2),
        states: Vec::with_capacity(steps / cfg.record_every + 2),
        stop: StopReason::Horizon,
    };
    let converged = |s: &SeekerState| {
        cfg.stop_tol > 0.0 && ne_residual(dynamics.game(), &s.z).max(consensus_error(&s.z)) < cfg.stop_tol
    };
    let mut state = initial;
    traj.push(0, state.clone());
    for k in 1..=steps {
        match rk4_step(|s: &SeekerState| dynamics.derivative(s), &state, cfg.step) {
            Ok(next) => state = next,
            Err(err) => {
                let err = match err {
                    IntegrationError::NonFinite { .. } => IntegrationError::NonFinite { time: k as f64 * cfg.step },
                    other => other,
                };
                if traj.step_counts.last() != Some(&(k - 1)) {
                    traj.push(k - 1, state);
                }
                traj.stop = StopReason::Failed(err);
                return Ok(traj);
            }
        }
        let done = converged(&state);
        if k % cfg.record_every == 0 || k == steps || done {
            traj.push(k, state.clone());
        }
        if done {
            traj.stop = StopReason::Tolerance;
            break;
        }
    }
    Ok(traj)
}
