//! Weighted directed communication graphs and the spectral quantities the
//! gain conditions are stated in.
//!
//! Conventions: `weights[(i, j)] = a_ij > 0` means node `i` *receives*
//! information from node `j`. The Laplacian uses in-degrees,
//! `L = D_in - A`, so `L·1 = 0` for every graph while `1ᵀL = 0` only when
//! the graph is weight-balanced.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

/// Absolute tolerance used by every structural check in this module.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("self-loop at node {0} (a_ii must be zero)")]
    SelfLoop(usize),
    #[error("invalid weight {weight} on edge {from} -> {to}")]
    InvalidWeight { from: usize, to: usize, weight: f64 },
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("graph is not weight-balanced")]
    NotBalanced,
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("left eigenvector entry {index} is {value}, expected positive")]
    NonPositiveEigenvector { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// How the left eigenvector rescales the Laplacian rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalingMode {
    /// `diag(ξ)·L`. Column sums vanish because `ξᵀL = 0`, so the scaled
    /// graph is weight-balanced.
    #[default]
    BalanceCorrected,
    /// `diag(1/ξ)·L`. Kept to document that this scaling does not
    /// balance a generic digraph.
    Inverse,
}

impl ScalingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingMode::BalanceCorrected => "balance-corrected",
            ScalingMode::Inverse => "inverse",
        }
    }
}

impl std::str::FromStr for ScalingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "balance-corrected" | "balance_corrected" | "corrected" => Ok(ScalingMode::BalanceCorrected),
            "inverse" => Ok(ScalingMode::Inverse),
            other => Err(format!("unknown scaling mode `{other}`")),
        }
    }
}

/// A weighted digraph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    weights: DMatrix<f64>,
}

impl DiGraph {
    /// Builds a graph from its adjacency matrix (`a_ij`: `i` hears `j`).
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows < 2 {
            return Err(GraphError::TooSmall(rows));
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::InvalidWeight { from: j, to: i, weight: w });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop(i));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from `(from, to, weight)` triples, 0-based. Each edge
    /// sets `a_{to,from} = weight`; repeated edges overwrite.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooSmall(n));
        }
        let mut weights = DMatrix::zeros(n, n);
        for &(from, to, w) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(GraphError::NodeOutOfRange { index, n });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            weights[(to, from)] = w;
        }
        Self::from_weights(weights)
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0` with a common weight.
    pub fn directed_ring(n: usize, weight: f64) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|k| (k, (k + 1) % n, weight)).collect();
        Self::from_edges(n, &edges)
    }

    /// Complete graph with every off-diagonal weight equal to `weight`.
    pub fn complete(n: usize, weight: f64) -> Result<Self, GraphError> {
        let mut w = DMatrix::from_element(n, n, weight);
        w.fill_diagonal(0.0);
        Self::from_weights(w)
    }

    /// Star with hub 0: spokes hub -> leaf with weight `out`, return edges
    /// leaf -> hub with weight `back`.
    pub fn star_with_returns(n: usize, out: f64, back: f64) -> Result<Self, GraphError> {
        let mut edges = Vec::with_capacity(2 * n);
        for leaf in 1..n {
            edges.push((0, leaf, out));
            edges.push((leaf, 0, back));
        }
        Self::from_edges(n, &edges)
    }

    /// Random strongly connected digraph: a Hamiltonian cycle through a
    /// random permutation, plus every other ordered pair independently with
    /// probability `density`. Weights are uniform on `[0.5, 1.5]`.
    pub fn random_strongly_connected<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooSmall(n));
        }
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        let mut w = DMatrix::zeros(n, n);
        for k in 0..n {
            let from = order[k];
            let to = order[(k + 1) % n];
            w[(to, from)] = rng.gen_range(0.5..1.5);
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && w[(i, j)] == 0.0 && rng.gen_bool(density) {
                    w[(i, j)] = rng.gen_range(0.5..1.5);
                }
            }
        }
        Self::from_weights(w)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn out_degree(&self, i: usize) -> f64 {
        self.weights.column(i).sum()
    }

    /// Nodes whose information reaches `i` directly (`a_ij > 0`).
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n()).filter_map(move |j| {
            let w = self.weights[(i, j)];
            (w > 0.0).then_some((j, w))
        })
    }

    /// `L = D_in - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut lap = -self.weights.clone();
        for i in 0..n {
            // Diagonal from the off-diagonal row entries so that the row
            // sums are exactly zero in floating point.
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| lap[(i, j)]).sum();
            lap[(i, i)] = -off;
        }
        lap
    }

    /// Every node reaches every other node along edges `j -> i` (`a_ij > 0`).
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n();
        // Forward reachability from node 0 along j -> i, then backward.
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for (v, seen_v) in seen.iter_mut().enumerate() {
                    let w = if forward { self.weights[(v, u)] } else { self.weights[(u, v)] };
                    if w > 0.0 && !*seen_v {
                        *seen_v = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// In-degree equals out-degree at every node, within `tol`.
    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        (0..self.n()).all(|i| (self.in_degree(i) - self.out_degree(i)).abs() <= tol)
    }
}

/// `Sym(M) = (M + Mᵀ)/2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Orthonormal split of `R^n` into the consensus direction and its
/// complement.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalSplit {
    /// `1/√n`.
    pub m1: DVector<f64>,
    /// `n × (n-1)`, orthonormal columns, each orthogonal to `m1`.
    pub m2: DMatrix<f64>,
}

/// Householder reflector `H` with `H e₁ = 1/√n`; `m2` is columns `2..n` of `H`.
pub fn orthogonal_split(n: usize) -> OrthogonalSplit {
    assert!(n >= 2, "orthogonal split needs n >= 2");
    let m1 = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut v = -m1.clone();
    v[0] += 1.0;
    let vv = v.dot(&v);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
    let m2 = h.columns(1, n - 1).into_owned();
    OrthogonalSplit { m1, m2 }
}

/// Smallest nonzero and largest eigenvalue of `Sym(L)` for a weight-balanced,
/// strongly connected Laplacian, computed on `M₂ᵀ Sym(L) M₂` so that the
/// zero mode along `1` is removed exactly.
pub fn connectivity_eigenvalues(lap: &DMatrix<f64>) -> Result<(f64, f64), GraphError> {
    connectivity_eigenvalues_tol(lap, DEFAULT_TOL)
}

pub fn connectivity_eigenvalues_tol(lap: &DMatrix<f64>, tol: f64) -> Result<(f64, f64), GraphError> {
    let n = lap.nrows();
    if n < 2 || lap.ncols() != n {
        return Err(GraphError::Dimension { expected: n.max(2), got: lap.ncols() });
    }
    let sym = symmetric_part(lap);
    // A balanced Laplacian has 1 in the kernel of both L and Lᵀ.
    let ones = DVector::from_element(n, 1.0);
    if (&sym * &ones).amax() > tol {
        return Err(GraphError::NotBalanced);
    }
    let split = orthogonal_split(n);
    let reduced = split.m2.transpose() * &sym * &split.m2;
    let eig = SymmetricEigen::new(symmetric_part(&reduced)).eigenvalues;
    let lo = eig.min();
    let hi = eig.max();
    if lo < -tol {
        return Err(GraphError::NotBalanced);
    }
    if lo <= tol {
        return Err(GraphError::NotStronglyConnected);
    }
    Ok((lo, hi))
}

/// The left null vector of `L`: `ξᵀL = 0`, `ξᵀ1 = 1`, `ξ > 0`.
///
/// Uses the SVD of `Lᵀ`, which reveals the rank: the smallest singular
/// value must be (numerically) zero and the next one must not be.
pub fn left_eigenvector(lap: &DMatrix<f64>) -> Result<DVector<f64>, GraphError> {
    left_eigenvector_tol(lap, DEFAULT_TOL)
}

pub fn left_eigenvector_tol(lap: &DMatrix<f64>, tol: f64) -> Result<DVector<f64>, GraphError> {
    let n = lap.nrows();
    if n < 2 || lap.ncols() != n {
        return Err(GraphError::Dimension { expected: n.max(2), got: lap.ncols() });
    }
    let svd = lap.transpose().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let scale = svd.singular_values.max().max(1.0);
    if svd.singular_values[order[1]] <= tol * scale {
        return Err(GraphError::NotStronglyConnected);
    }
    let mut xi: DVector<f64> = v_t.row(order[0]).transpose();
    let total = xi.sum();
    if total.abs() <= tol {
        return Err(GraphError::NotStronglyConnected);
    }
    xi /= total;
    // Renormalise once more so the sum is exact to rounding.
    xi /= xi.sum();
    for (index, &value) in xi.iter().enumerate() {
        if value <= 0.0 {
            return Err(GraphError::NonPositiveEigenvector { index, value });
        }
    }
    Ok(xi)
}

/// Row-scales the Laplacian by `ξ` (or `1/ξ`) according to `mode`.
pub fn scaled_laplacian(lap: &DMatrix<f64>, xi: &DVector<f64>, mode: ScalingMode) -> Result<DMatrix<f64>, GraphError> {
    let n = lap.nrows();
    if xi.len() != n {
        return Err(GraphError::Dimension { expected: n, got: xi.len() });
    }
    for (index, &value) in xi.iter().enumerate() {
        if !(value > 0.0) {
            return Err(GraphError::NonPositiveEigenvector { index, value });
        }
    }
    let mut scaled = lap.clone();
    for i in 0..n {
        let factor = match mode {
            ScalingMode::BalanceCorrected => xi[i],
            ScalingMode::Inverse => 1.0 / xi[i],
        };
        scaled.row_mut(i).scale_mut(factor);
    }
    Ok(scaled)
}

/// All spectral quantities of a strongly connected digraph.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub laplacian: DMatrix<f64>,
    pub balanced: bool,
    /// Defined only when the graph is weight-balanced.
    pub lambda2: Option<f64>,
    pub lambda_n: Option<f64>,
    pub xi: DVector<f64>,
    /// Smallest positive eigenvalue of `Sym(diag(ξ)L)`.
    pub lambda2_scaled: f64,
    pub lambda_n_scaled: f64,
}

impl SpectralData {
    pub fn of(graph: &DiGraph) -> Result<Self, GraphError> {
        if !graph.is_strongly_connected() {
            return Err(GraphError::NotStronglyConnected);
        }
        let laplacian = graph.laplacian();
        let balanced = graph.is_weight_balanced(DEFAULT_TOL);
        let (lambda2, lambda_n) = if balanced {
            let (lo, hi) = connectivity_eigenvalues(&laplacian)?;
            (Some(lo), Some(hi))
        } else {
            (None, None)
        };
        let xi = left_eigenvector(&laplacian)?;
        let scaled = scaled_laplacian(&laplacian, &xi, ScalingMode::BalanceCorrected)?;
        let (lambda2_scaled, lambda_n_scaled) = connectivity_eigenvalues(&scaled)?;
        Ok(Self { laplacian, balanced, lambda2, lambda_n, xi, lambda2_scaled, lambda_n_scaled })
    }
}
