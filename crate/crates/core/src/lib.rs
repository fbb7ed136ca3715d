//! Distributed Nash equilibrium seeking over directed communication graphs.
//!
//! Each agent keeps an estimate of every player's decision, mixes it with
//! its in-neighbours' estimates through a gain-amplified consensus term, and
//! descends its own cost's partial gradient at its own estimate. The crate
//! provides:
//!
//! - [`digraph`]: Laplacians, balance and connectivity checks, the
//!   connectivity eigenvalues and the left null eigenvector `ξ`;
//! - [`game`]: games, pseudogradients, regularity constants and the
//!   closed-form equilibrium of quadratic games;
//! - [`dynamics`]: the balanced, eigenvector-scaled and adaptive seeking
//!   rules, the `ξ` estimator, and gain thresholds;
//! - [`integrator`]: fixed-step RK4 with snapshot recording;
//! - [`analysis`]: error metrics, rate fits and the Lyapunov envelope;
//! - [`experiment`]: config files, runs, sweeps and CSV output.
//!
//! ```
//! use nashflow::digraph::DiGraph;
//! use nashflow::dynamics::{initial_state, AlgorithmSpec, SeekingDynamics};
//! use nashflow::game::QuadraticGame;
//! use nashflow::integrator::{integrate, IntegrationConfig};
//! use nashflow::analysis::ne_error_of;
//!
//! let graph = DiGraph::directed_ring(3, 1.0).unwrap();
//! let game = QuadraticGame::cournot(&[6.0, 8.0, 10.0]).unwrap();
//! let z_star = game.nash_equilibrium().unwrap();
//!
//! let dynamics = SeekingDynamics::new(&graph, &game, AlgorithmSpec::balanced(15.0)).unwrap();
//! let cfg = IntegrationConfig::new(1e-3, 40.0, 100);
//! let traj = integrate(&dynamics, initial_state(3, None, false), &cfg).unwrap();
//! assert!(ne_error_of(&traj.last().z, &z_star) < 1e-4);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod digraph;
pub mod dynamics;
pub mod experiment;
pub mod formats;
pub mod game;
pub mod integrator;

// Book chapters are compiled as doctests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/graphs.md")]
    pub struct Graphs;
    #[doc = include_str!("../../../book/src/games.md")]
    pub struct Games;
    #[doc = include_str!("../../../book/src/dynamics.md")]
    pub struct Dynamics;
    #[doc = include_str!("../../../book/src/scaling.md")]
    pub struct Scaling;
    #[doc = include_str!("../../../book/src/certificates.md")]
    pub struct Certificates;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
