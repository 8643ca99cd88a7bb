//! Monte-Carlo machinery: counter-based noise, horizontal SDEs on the frame
//! bundle, backward-equation solvers and the stochastic Navier–Stokes
//! fixed-point iteration.

pub mod fbsde;
pub mod ns_solver;
pub mod rng;
pub mod sde_engine;

use fbsde_geom::GeometryError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },
    #[error("non-finite estimate at grid point {point}, time node {node}")]
    NonFiniteEstimate { point: usize, node: usize },
    #[error("Picard iteration does not contract; distance ratios {ratios:?}")]
    NonContraction {
        ratios: Vec<f64>,
        distances: Vec<f64>,
    },
    #[error(
        "Picard iteration did not reach tol {tol} in {iters} iterations; distances {distances:?}"
    )]
    NoConvergence {
        tol: f64,
        iters: usize,
        distances: Vec<f64>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
