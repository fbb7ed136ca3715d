//! N-player games with scalar decisions, their pseudogradients, and the
//! regularity constants that enter the gain thresholds.
//!
//! Every agent keeps an estimate of the whole profile, so the *extended*
//! pseudogradient evaluates player `i`'s partial gradient at agent `i`'s own
//! estimate (row `i` of the estimate matrix) rather than at a common profile.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::digraph::symmetric_part;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("game needs at least 2 players, got {0}")]
    TooFewPlayers(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cost matrix of player {player} is not symmetric")]
    NotSymmetric { player: usize },
    #[error("player {player} has non-positive curvature {curvature} in its own decision")]
    NotStrictlyConvex { player: usize, curvature: f64 },
    #[error("pseudogradient is not strongly monotone (smallest eigenvalue of its symmetric part is {0})")]
    NotStronglyMonotone(f64),
    #[error("pseudogradient Jacobian is singular")]
    Singular,
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid game constants: {0}")]
    InvalidConstants(String),
}

/// What the dynamics need from a game: costs and own-decision partials.
pub trait Game: Send + Sync {
    fn players(&self) -> usize;

    /// `J_i(z)`.
    fn cost(&self, player: usize, z: &[f64]) -> f64;

    /// `∂J_i/∂z_i` at the full profile `z`.
    fn partial_gradient(&self, player: usize, z: &[f64]) -> f64;
}

/// Strong monotonicity and Lipschitz constants of a game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConstants {
    /// Strong-monotonicity modulus of the pseudogradient.
    pub mono_lower: f64,
    /// Lipschitz constant of the pseudogradient.
    pub lip_f: f64,
    /// Lipschitz constant of the extended pseudogradient.
    pub lip_ext_f: f64,
    /// `max(lip_f, lip_ext_f)`.
    pub l: f64,
}

impl GameConstants {
    /// For games whose constants are known analytically; not verified
    /// against the game itself.
    pub fn new(mono_lower: f64, lip_f: f64, lip_ext_f: f64) -> Result<Self, GameError> {
        if !(mono_lower > 0.0) || !(lip_f >= mono_lower) || !(lip_ext_f > 0.0) {
            return Err(GameError::InvalidConstants(format!(
                "need 0 < mono_lower <= lip_f and lip_ext_f > 0, got {mono_lower}, {lip_f}, {lip_ext_f}"
            )));
        }
        Ok(Self { mono_lower, lip_f, lip_ext_f, l: lip_f.max(lip_ext_f) })
    }
}

/// `J_i(z) = ½ zᵀ Q_i z + b_iᵀ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    q: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl QuadraticGame {
    /// Validates symmetry, own-decision convexity and strong monotonicity.
    pub fn new(q: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self, GameError> {
        let n = q.len();
        if n < 2 {
            return Err(GameError::TooFewPlayers(n));
        }
        if b.len() != n {
            return Err(GameError::Dimension { expected: n, got: b.len() });
        }
        for (player, (qi, bi)) in q.iter().zip(&b).enumerate() {
            if qi.shape() != (n, n) {
                return Err(GameError::Dimension { expected: n, got: qi.nrows().max(qi.ncols()) });
            }
            if bi.len() != n {
                return Err(GameError::Dimension { expected: n, got: bi.len() });
            }
            if qi.iter().chain(bi.iter()).any(|v| !v.is_finite()) {
                return Err(GameError::NonFinite);
            }
            if (qi - qi.transpose()).amax() > SYMMETRY_TOL {
                return Err(GameError::NotSymmetric { player });
            }
            let curvature = qi[(player, player)];
            if curvature <= 0.0 {
                return Err(GameError::NotStrictlyConvex { player, curvature });
            }
        }
        let game = Self { q, b };
        let lo = smallest_sym_eigenvalue(&game.jacobian());
        if lo <= 0.0 {
            return Err(GameError::NotStronglyMonotone(lo));
        }
        Ok(game)
    }

    /// The game whose pseudogradient is `jacobian·z + offset`, with
    /// `Q_i = e_i g_iᵀ + g_i e_iᵀ − g_ii e_i e_iᵀ` (`g_i` = row `i`) and
    /// `b_i = offset_i e_i`. Player `i`'s cost is then
    /// `z_i·(g_iᵀ z) − ½ g_ii z_i² + offset_i z_i`.
    pub fn from_pseudogradient(jacobian: &DMatrix<f64>, offset: &DVector<f64>) -> Result<Self, GameError> {
        let n = jacobian.nrows();
        if jacobian.ncols() != n {
            return Err(GameError::Dimension { expected: n, got: jacobian.ncols() });
        }
        if offset.len() != n {
            return Err(GameError::Dimension { expected: n, got: offset.len() });
        }
        let mut q = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let mut qi = DMatrix::zeros(n, n);
            for j in 0..n {
                qi[(i, j)] = jacobian[(i, j)];
                qi[(j, i)] = jacobian[(i, j)];
            }
            q.push(qi);
            let mut bi = DVector::zeros(n);
            bi[i] = offset[i];
            b.push(bi);
        }
        Self::new(q, b)
    }

    /// Two-player example with pseudogradient `[[2,1],[1,2]]z + (−2,−4)`;
    /// its equilibrium is `(0, 2)`.
    pub fn two_player_example() -> Self {
        Self::from_pseudogradient(
            &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            &DVector::from_vec(vec![-2.0, -4.0]),
        )
        .expect("example game is valid")
    }

    /// Cournot competition with linear inverse demand `p(Q) = a − Q` and
    /// constant marginal costs: profit-maximising firms minimise
    /// `J_i = z_i·Σ_j z_j − (a − c_i) z_i`. `margins[i] = a − c_i`.
    pub fn cournot(margins: &[f64]) -> Result<Self, GameError> {
        let n = margins.len();
        let jacobian = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 1.0 });
        let offset = DVector::from_iterator(n, margins.iter().map(|m| -m));
        Self::from_pseudogradient(&jacobian, &offset)
    }

    /// Players with independent costs `(z_i − c_i)²`.
    pub fn decoupled(targets: &[f64]) -> Result<Self, GameError> {
        let n = targets.len();
        let jacobian = DMatrix::from_diagonal_element(n, n, 2.0);
        let offset = DVector::from_iterator(n, targets.iter().map(|c| -2.0 * c));
        Self::from_pseudogradient(&jacobian, &offset)
    }

    pub fn q(&self, player: usize) -> &DMatrix<f64> {
        &self.q[player]
    }

    pub fn b(&self, player: usize) -> &DVector<f64> {
        &self.b[player]
    }

    /// Row `i` is row `i` of `Q_i`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.players();
        DMatrix::from_fn(n, n, |i, j| self.q[i][(i, j)])
    }

    /// Component `i` is `(b_i)_i`.
    pub fn offset(&self) -> DVector<f64> {
        DVector::from_fn(self.players(), |i, _| self.b[i][i])
    }

    pub fn constants(&self) -> Result<GameConstants, GameError> {
        let jac = self.jacobian();
        let mono_lower = smallest_sym_eigenvalue(&jac);
        if mono_lower <= 0.0 {
            return Err(GameError::NotStronglyMonotone(mono_lower));
        }
        let lip_f = jac.clone().svd(false, false).singular_values.max();
        // Component i of the extended map only reads row i of Z, so the
        // exact Lipschitz constant is the largest per-player gradient norm.
        let lip_ext_f = (0..self.players()).map(|i| jac.row(i).norm()).fold(0.0, f64::max);
        Ok(GameConstants { mono_lower, lip_f, lip_ext_f, l: lip_f.max(lip_ext_f) })
    }

    /// Solves `Ĝ z* = −ĝ`.
    pub fn nash_equilibrium(&self) -> Result<DVector<f64>, GameError> {
        let rhs = -self.offset();
        self.jacobian().lu().solve(&rhs).ok_or(GameError::Singular)
    }
}

impl Game for QuadraticGame {
    fn players(&self) -> usize {
        self.q.len()
    }

    fn cost(&self, player: usize, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        0.5 * z.dot(&(&self.q[player] * &z)) + self.b[player].dot(&z)
    }

    fn partial_gradient(&self, player: usize, z: &[f64]) -> f64 {
        let q = &self.q[player];
        let lin: f64 = z.iter().enumerate().map(|(j, zj)| q[(player, j)] * zj).sum();
        lin + self.b[player][player]
    }
}

fn smallest_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetric_part(m)).eigenvalues.min()
}

/// `F(z)_i = ∇_i J_i(z)`.
pub fn pseudogradient<G: Game + ?Sized>(game: &G, z: &DVector<f64>) -> Result<DVector<f64>, GameError> {
    let n = game.players();
    if z.len() != n {
        return Err(GameError::Dimension { expected: n, got: z.len() });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GameError::NonFinite);
    }
    Ok(DVector::from_fn(n, |i, _| game.partial_gradient(i, z.as_slice())))
}

/// Component `i` is `∇_i J_i` at row `i` of `estimates`.
pub fn extended_pseudogradient<G: Game + ?Sized>(
    game: &G,
    estimates: &DMatrix<f64>,
) -> Result<DVector<f64>, GameError> {
    let n = game.players();
    if estimates.shape() != (n, n) {
        return Err(GameError::Dimension { expected: n, got: estimates.nrows() });
    }
    let mut row = vec![0.0; n];
    let mut out = DVector::zeros(n);
    for i in 0..n {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = estimates[(i, j)];
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GameError::NonFinite);
        }
        out[i] = game.partial_gradient(i, &row);
    }
    Ok(out)
}

/// Worst error of the analytic partials against central differences of the
/// costs. Errors are relative to `max(|∇_i J_i|, 1)`, which makes the check
/// absolute near an equilibrium where the gradients vanish.
pub fn finite_difference_check<G: Game + ?Sized>(game: &G, z: &[f64], h: f64) -> f64 {
    let n = game.players();
    let mut worst = 0.0f64;
    let mut probe = z.to_vec();
    for i in 0..n {
        let analytic = game.partial_gradient(i, z);
        probe[i] = z[i] + h;
        let up = game.cost(i, &probe);
        probe[i] = z[i] - h;
        let down = game.cost(i, &probe);
        probe[i] = z[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
    }
    worst
}
