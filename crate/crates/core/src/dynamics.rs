//! The seeking dynamics as vector fields on the stacked agent state.
//!
//! Row `i` of `Z` is agent `i`'s estimate of the whole strategy profile; its
//! diagonal entry `Z_ii` is the agent's actual decision. Every variant has
//! the shape
//!
//! ```text
//! Ż = −α · S · L · Z − diag(F(Z))
//! ```
//!
//! where `F` is the extended pseudogradient and `S` a per-row gain:
//! the identity for weight-balanced graphs, `diag(ξ)` when the left
//! eigenvector is known, and `diag(Ξ_11, …, Ξ_NN)` when each agent uses its
//! own running estimate of `ξ_i`. The estimator runs `Ξ̇ = −L Ξ` from
//! `Ξ(0) = I`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::digraph::{DiGraph, GraphError, ScalingMode};
use crate::game::{extended_pseudogradient, Game, GameConstants, GameError};

/// Estimates `Ξ_ii` below this are treated as a broken discretisation.
pub const ESTIMATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("estimate of xi_{agent} fell to {value} (step size too large?)")]
    DegenerateEstimate { agent: usize, value: f64 },
    #[error("gain must be positive, got {0}")]
    InvalidGain(f64),
    #[error("connectivity eigenvalue must be positive, got {0}")]
    InvalidEigenvalue(f64),
    #[error("gain {alpha} does not exceed the threshold {threshold}")]
    GainTooSmall { alpha: f64, threshold: f64 },
    #[error("the {0} variant needs an estimator state")]
    MissingEstimator(&'static str),
    #[error("the nominal variant needs the left eigenvector")]
    MissingEigenvector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Which seeking rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Uniform gain; needs a weight-balanced graph.
    Balanced,
    /// Rows scaled by the true left eigenvector.
    NominalUnbalanced,
    /// Rows scaled by each agent's running estimate of its eigenvector entry.
    Adaptive,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Balanced => "balanced",
            Variant::NominalUnbalanced => "nominal",
            Variant::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "balanced" => Ok(Variant::Balanced),
            "nominal" | "nominal-unbalanced" => Ok(Variant::NominalUnbalanced),
            "adaptive" => Ok(Variant::Adaptive),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub alpha: f64,
    pub scaling: ScalingMode,
    /// Required by [`Variant::NominalUnbalanced`].
    pub xi: Option<DVector<f64>>,
}

impl AlgorithmSpec {
    pub fn balanced(alpha: f64) -> Self {
        Self { variant: Variant::Balanced, alpha, scaling: ScalingMode::default(), xi: None }
    }

    pub fn nominal(alpha: f64, xi: DVector<f64>, scaling: ScalingMode) -> Self {
        Self { variant: Variant::NominalUnbalanced, alpha, scaling, xi: Some(xi) }
    }

    pub fn adaptive(alpha: f64, scaling: ScalingMode) -> Self {
        Self { variant: Variant::Adaptive, alpha, scaling, xi: None }
    }
}

/// Agent estimates `Z` and, for the adaptive rule, eigenvector estimates `Ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeekerState {
    pub z: DMatrix<f64>,
    pub xi: Option<DMatrix<f64>>,
}

impl SeekerState {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().chain(self.xi.iter().flat_map(|m| m.iter())).all(|v| v.is_finite())
    }

    /// `self + scale · other`, blockwise.
    pub fn add_scaled(&self, other: &SeekerState, scale: f64) -> SeekerState {
        let z = &self.z + &other.z * scale;
        let xi = match (&self.xi, &other.xi) {
            (Some(a), Some(b)) => Some(a + b * scale),
            (Some(a), None) => Some(a.clone()),
            (None, _) => None,
        };
        SeekerState { z, xi }
    }

    /// Consensus at `z*` with every estimator row equal to `ξ` (if present).
    pub fn equilibrium(z_star: &DVector<f64>, xi: Option<&DVector<f64>>) -> SeekerState {
        let n = z_star.len();
        let ones = DVector::from_element(n, 1.0);
        SeekerState { z: &ones * z_star.transpose(), xi: xi.map(|x| &ones * x.transpose()) }
    }
}

/// How to initialise `Z`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialZ {
    /// Row `i` (1-based) is `(i/n)·1`.
    Spread,
    /// Entries uniform on `[−1, 1]`, ChaCha8-seeded.
    Seeded(u64),
    Explicit(DMatrix<f64>),
}

impl InitialZ {
    pub fn build(&self, n: usize) -> Result<DMatrix<f64>, DynamicsError> {
        match self {
            InitialZ::Spread => Ok(DMatrix::from_fn(n, n, |i, _| (i + 1) as f64 / n as f64)),
            InitialZ::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                // Row-major fill so the draw order matches the CSV layout.
                let mut z = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        z[(i, j)] = rng.gen_range(-1.0..=1.0);
                    }
                }
                Ok(z)
            }
            InitialZ::Explicit(z) => {
                if z.shape() != (n, n) {
                    return Err(DynamicsError::Dimension { expected: n, got: z.nrows() });
                }
                Ok(z.clone())
            }
        }
    }
}

/// `Ξ(0) = I` always; `Z(0)` from `z0` or the default spread.
pub fn initial_state(n: usize, z0: Option<DMatrix<f64>>, with_estimator: bool) -> SeekerState {
    let z = z0.unwrap_or_else(|| InitialZ::Spread.build(n).expect("spread has the right shape"));
    SeekerState { z, xi: with_estimator.then(|| DMatrix::identity(n, n)) }
}

/// `Ż = −α·diag(row_gain)·L·Z − diag(F(Z))`.
fn seeking_field<G: Game + ?Sized>(
    lap: &DMatrix<f64>,
    game: &G,
    alpha: f64,
    row_gain: impl Fn(usize) -> f64,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>, DynamicsError> {
    let n = lap.nrows();
    if z.shape() != (n, n) {
        return Err(DynamicsError::Dimension { expected: n, got: z.nrows() });
    }
    let grad = extended_pseudogradient(game, z)?;
    let mut dz = lap * z;
    for i in 0..n {
        dz.row_mut(i).scale_mut(-alpha * row_gain(i));
        dz[(i, i)] -= grad[i];
    }
    Ok(dz)
}

/// Proportional-gain gradient play on a weight-balanced graph. With
/// `alpha = 1` this is plain consensus-based gradient play.
pub fn field_balanced<G: Game + ?Sized>(
    graph: &DiGraph,
    game: &G,
    alpha: f64,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>, DynamicsError> {
    seeking_field(&graph.laplacian(), game, alpha, |_| 1.0, z)
}

/// Consensus rows scaled by the known left eigenvector `xi`.
pub fn field_nominal<G: Game + ?Sized>(
    graph: &DiGraph,
    game: &G,
    alpha: f64,
    xi: &DVector<f64>,
    mode: ScalingMode,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>, DynamicsError> {
    check_positive(xi.iter().copied())?;
    if xi.len() != graph.n() {
        return Err(DynamicsError::Dimension { expected: graph.n(), got: xi.len() });
    }
    seeking_field(&graph.laplacian(), game, alpha, |i| row_scale(xi[i], mode), z)
}

/// `Ξ̇ = −L Ξ`: every agent diffuses its eigenvector estimate.
pub fn estimator_field(graph: &DiGraph, xi: &DMatrix<f64>) -> DMatrix<f64> {
    -(graph.laplacian() * xi)
}

/// Seeking driven by the agents' own estimates `Ξ_ii`, together with the
/// estimator.
pub fn field_adaptive<G: Game + ?Sized>(
    graph: &DiGraph,
    game: &G,
    alpha: f64,
    mode: ScalingMode,
    state: &SeekerState,
) -> Result<SeekerState, DynamicsError> {
    SeekingDynamics::new(graph, game, AlgorithmSpec::adaptive(alpha, mode))?.derivative(state)
}

fn row_scale(estimate: f64, mode: ScalingMode) -> f64 {
    match mode {
        ScalingMode::BalanceCorrected => estimate,
        ScalingMode::Inverse => 1.0 / estimate,
    }
}

fn check_positive(values: impl Iterator<Item = f64>) -> Result<(), DynamicsError> {
    for (index, value) in values.enumerate() {
        if !(value > 0.0) {
            return Err(GraphError::NonPositiveEigenvector { index, value }.into());
        }
    }
    Ok(())
}

/// A graph, game and algorithm bound together, with the Laplacian cached.
pub struct SeekingDynamics<'a, G: Game + ?Sized> {
    graph: &'a DiGraph,
    game: &'a G,
    spec: AlgorithmSpec,
    laplacian: DMatrix<f64>,
}

impl<'a, G: Game + ?Sized> SeekingDynamics<'a, G> {
    /// Checks dimensions, the gain, and that the nominal variant has `ξ`.
    pub fn new(graph: &'a DiGraph, game: &'a G, spec: AlgorithmSpec) -> Result<Self, DynamicsError> {
        let n = graph.n();
        if game.players() != n {
            return Err(DynamicsError::Dimension { expected: n, got: game.players() });
        }
        if !(spec.alpha > 0.0) || !spec.alpha.is_finite() {
            return Err(DynamicsError::InvalidGain(spec.alpha));
        }
        if spec.variant == Variant::NominalUnbalanced {
            let xi = spec.xi.as_ref().ok_or(DynamicsError::MissingEigenvector)?;
            if xi.len() != n {
                return Err(DynamicsError::Dimension { expected: n, got: xi.len() });
            }
            check_positive(xi.iter().copied())?;
        }
        Ok(Self { graph, game, spec, laplacian: graph.laplacian() })
    }

    pub fn spec(&self) -> &AlgorithmSpec {
        &self.spec
    }

    pub fn graph(&self) -> &DiGraph {
        self.graph
    }

    pub fn game(&self) -> &G {
        self.game
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Initial state with an estimator exactly when the variant needs one.
    pub fn initial_state(&self, z0: DMatrix<f64>) -> SeekerState {
        initial_state(self.n(), Some(z0), self.spec.variant == Variant::Adaptive)
    }

    pub fn derivative(&self, state: &SeekerState) -> Result<SeekerState, DynamicsError> {
        let alpha = self.spec.alpha;
        let mode = self.spec.scaling;
        match self.spec.variant {
            Variant::Balanced => {
                let z = seeking_field(&self.laplacian, self.game, alpha, |_| 1.0, &state.z)?;
                Ok(SeekerState { z, xi: None })
            }
            Variant::NominalUnbalanced => {
                let xi = self.spec.xi.as_ref().ok_or(DynamicsError::MissingEigenvector)?;
                let z = seeking_field(&self.laplacian, self.game, alpha, |i| row_scale(xi[i], mode), &state.z)?;
                Ok(SeekerState { z, xi: None })
            }
            Variant::Adaptive => {
                let est = state.xi.as_ref().ok_or(DynamicsError::MissingEstimator("adaptive"))?;
                if est.shape() != (self.n(), self.n()) {
                    return Err(DynamicsError::Dimension { expected: self.n(), got: est.nrows() });
                }
                for agent in 0..self.n() {
                    let value = est[(agent, agent)];
                    if !(value >= ESTIMATE_FLOOR) {
                        return Err(DynamicsError::DegenerateEstimate { agent, value });
                    }
                }
                let z = seeking_field(&self.laplacian, self.game, alpha, |i| row_scale(est[(i, i)], mode), &state.z)?;
                Ok(SeekerState { z, xi: Some(-(&self.laplacian * est)) })
            }
        }
    }
}

/// Smallest gain the convergence guarantee admits: `(l²/l̲ + l)/λ`. Pass
/// `λ₂` for balanced graphs and the scaled `λ'₂` otherwise; the gain must
/// be chosen strictly above this.
pub fn min_gain(constants: &GameConstants, lambda: f64) -> Result<f64, DynamicsError> {
    if !(lambda > 0.0) {
        return Err(DynamicsError::InvalidEigenvalue(lambda));
    }
    let l = constants.l;
    Ok((l * l / constants.mono_lower + l) / lambda)
}

/// The 2×2 matrix bounding `−V̇` in the coordinates
/// `(‖consensus part‖, ‖disagreement part‖)`.
pub fn decay_matrix(constants: &GameConstants, alpha: f64, lambda2: f64, n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    let l = constants.l;
    let off = -l / nf.sqrt();
    DMatrix::from_row_slice(2, 2, &[constants.mono_lower / nf, off, off, alpha * lambda2 - l])
}

/// Certified rate `ν` in `V̇ ≤ −νV` for `V = ½‖Z − 1z*ᵀ‖²_F`: twice the
/// smallest eigenvalue of [`decay_matrix`].
pub fn lyapunov_decay_rate(
    constants: &GameConstants,
    alpha: f64,
    lambda2: f64,
    n: usize,
) -> Result<f64, DynamicsError> {
    if !(lambda2 > 0.0) {
        return Err(DynamicsError::InvalidEigenvalue(lambda2));
    }
    let threshold = min_gain(constants, lambda2)?;
    let smallest = SymmetricEigen::new(decay_matrix(constants, alpha, lambda2, n)).eigenvalues.min();
    if !(alpha > threshold) || smallest <= 0.0 {
        return Err(DynamicsError::GainTooSmall { alpha, threshold });
    }
    Ok(2.0 * smallest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::QuadraticGame;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn pair() -> DiGraph {
        DiGraph::complete(2, 1.0).unwrap()
    }

    fn unbalanced_pair() -> DiGraph {
        DiGraph::from_weights(dmatrix![0.0, 2.0; 1.0, 0.0]).unwrap()
    }

    #[test]
    fn balanced_field_hand_example() {
        let g = QuadraticGame::two_player_example();
        let dz = field_balanced(&pair(), &g, 1.0, &dmatrix![1.0, 1.0; 0.0, 0.0]).unwrap();
        assert_eq!(dz, dmatrix![-2.0, -1.0; 1.0, 5.0]);
    }

    #[test]
    fn balanced_field_vanishes_at_consensus_ne() {
        let g = QuadraticGame::two_player_example();
        let ring = DiGraph::complete(2, 3.0).unwrap();
        let eq = SeekerState::equilibrium(&dvector![0.0, 2.0], None);
        assert_eq!(field_balanced(&ring, &g, 5.0, &eq.z).unwrap().amax(), 0.0);
    }

    #[test]
    fn zero_game_is_pure_consensus() {
        // Q = 0 is not a valid game instance; use a game-like closure instead.
        struct Zero;
        impl Game for Zero {
            fn players(&self) -> usize {
                3
            }
            fn cost(&self, _: usize, _: &[f64]) -> f64 {
                0.0
            }
            fn partial_gradient(&self, _: usize, _: &[f64]) -> f64 {
                0.0
            }
        }
        let ring = DiGraph::directed_ring(3, 1.0).unwrap();
        let z = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let dz = field_balanced(&ring, &Zero, 2.0, &z).unwrap();
        assert_relative_eq!(dz, -(ring.laplacian() * &z) * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn nominal_field_hand_example() {
        let g = QuadraticGame::two_player_example();
        let xi = dvector![1.0 / 3.0, 2.0 / 3.0];
        let z = dmatrix![1.0, 1.0; 0.0, 0.0];
        let dz = field_nominal(&unbalanced_pair(), &g, 9.0, &xi, ScalingMode::BalanceCorrected, &z).unwrap();
        assert_relative_eq!(dz, dmatrix![-7.0, -6.0; 6.0, 10.0], epsilon = 1e-14);
        let bad = dvector![0.0, 1.0];
        assert!(field_nominal(&unbalanced_pair(), &g, 9.0, &bad, ScalingMode::BalanceCorrected, &z).is_err());
    }

    #[test]
    fn nominal_uniform_xi_equals_scaled_gain() {
        let g = QuadraticGame::cournot(&[6.0, 8.0, 10.0]).unwrap();
        let ring = DiGraph::directed_ring(3, 1.0).unwrap();
        let z = DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.7);
        let xi = DVector::from_element(3, 1.0 / 3.0);
        let nominal = field_nominal(&ring, &g, 6.0, &xi, ScalingMode::BalanceCorrected, &z).unwrap();
        let balanced = field_balanced(&ring, &g, 2.0, &z).unwrap();
        assert_relative_eq!(nominal, balanced, epsilon = 1e-14);
    }

    #[test]
    fn nominal_zero_at_equilibrium_both_modes() {
        let g = QuadraticGame::two_player_example();
        let xi = dvector![1.0 / 3.0, 2.0 / 3.0];
        let eq = SeekerState::equilibrium(&dvector![0.0, 2.0], None);
        for mode in [ScalingMode::BalanceCorrected, ScalingMode::Inverse] {
            let dz = field_nominal(&unbalanced_pair(), &g, 4.0, &xi, mode, &eq.z).unwrap();
            assert_eq!(dz.amax(), 0.0);
        }
    }

    #[test]
    fn estimator_field_cases() {
        let g = unbalanced_pair();
        assert_eq!(estimator_field(&g, &DMatrix::identity(2, 2)), dmatrix![-2.0, 2.0; 1.0, -1.0]);
        let agreed = dvector![1.0, 1.0] * dvector![0.25, 0.75].transpose();
        assert_eq!(estimator_field(&g, &agreed).amax(), 0.0);
    }

    #[test]
    fn adaptive_field_cases() {
        let g = QuadraticGame::two_player_example();
        let graph = unbalanced_pair();
        let z = dmatrix![1.0, 1.0; 0.0, 0.0];

        let converged = SeekerState { z: z.clone(), xi: Some(dmatrix![1.0 / 3.0, 2.0 / 3.0; 1.0 / 3.0, 2.0 / 3.0]) };
        let d = field_adaptive(&graph, &g, 9.0, ScalingMode::BalanceCorrected, &converged).unwrap();
        assert_relative_eq!(d.z, dmatrix![-7.0, -6.0; 6.0, 10.0], epsilon = 1e-14);
        assert_eq!(d.xi.unwrap().amax(), 0.0);

        // At t = 0 every agent's gain is 1.
        let start = initial_state(2, Some(z.clone()), true);
        let d = field_adaptive(&graph, &g, 9.0, ScalingMode::BalanceCorrected, &start).unwrap();
        assert_eq!(d.z, field_balanced(&graph, &g, 9.0, &z).unwrap());

        let eq = SeekerState::equilibrium(&dvector![0.0, 2.0], Some(&dvector![1.0 / 3.0, 2.0 / 3.0]));
        let d = field_adaptive(&graph, &g, 9.0, ScalingMode::Inverse, &eq).unwrap();
        assert_eq!(d.z.amax(), 0.0);
        assert!(d.xi.unwrap().amax() <= 1e-15);

        let broken = SeekerState { z, xi: Some(dmatrix![0.0, 1.0; 0.5, 0.5]) };
        assert!(matches!(
            field_adaptive(&graph, &g, 9.0, ScalingMode::BalanceCorrected, &broken),
            Err(DynamicsError::DegenerateEstimate { agent: 0, .. })
        ));
    }

    #[test]
    fn gains() {
        let c = QuadraticGame::two_player_example().constants().unwrap();
        assert_relative_eq!(min_gain(&c, 4.0 / 3.0).unwrap(), 9.0, epsilon = 1e-12);
        assert_relative_eq!(min_gain(&c, 2.0).unwrap(), 6.0, epsilon = 1e-12);
        let unit = GameConstants::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(min_gain(&unit, 1.0).unwrap(), 2.0);
        assert!(min_gain(&unit, 0.0).is_err());
    }

    #[test]
    fn decay_rate() {
        let c = GameConstants { mono_lower: 1.0, lip_f: 3.0, lip_ext_f: 3.0, l: 3.0 };
        let nu = lyapunov_decay_rate(&c, 6.5, 2.0, 2).unwrap();
        // A = [[0.5, −3/√2], [−3/√2, 10]]: λ_min = (10.5 − √(9.5² + 18))/2
        let expect = 10.5 - (9.5f64 * 9.5 + 18.0).sqrt();
        assert_relative_eq!(nu, expect, epsilon = 1e-12);
        assert_relative_eq!(nu / 2.0, 0.047837, epsilon = 1e-6);

        let big = lyapunov_decay_rate(&c, 1e9, 2.0, 2).unwrap();
        assert_relative_eq!(big, 2.0 * 0.5, epsilon = 1e-6);

        assert!(matches!(lyapunov_decay_rate(&c, 6.0, 2.0, 2), Err(DynamicsError::GainTooSmall { .. })));
    }

    #[test]
    fn initial_states() {
        let s = initial_state(3, None, true);
        assert_eq!(s.xi, Some(DMatrix::identity(3, 3)));
        assert_relative_eq!(s.z.row(0).into_owned(), nalgebra::RowDVector::from_element(3, 1.0 / 3.0));
        assert_eq!(s.z.row(2).into_owned(), DMatrix::from_element(1, 3, 1.0));
        let z0 = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(initial_state(2, Some(z0.clone()), false).z, z0);
        assert_eq!(initial_state(2, None, true).xi, Some(dmatrix![1.0, 0.0; 0.0, 1.0]));

        let a = InitialZ::Seeded(7).build(4).unwrap();
        assert_eq!(a, InitialZ::Seeded(7).build(4).unwrap());
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
