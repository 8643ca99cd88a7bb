//! Independent oracles: closed-form Navier–Stokes and heat solutions, and a
//! classical pseudo-spectral vorticity solver on the flat torus.
//!
//! Nothing here touches the stochastic machinery; only geometric and
//! spectral primitives are shared with the main solver.

mod exact;
mod spectral_ns;

pub use exact::{sphere_killing, taylor_green, ExactSolution, Family, KillingMode};
pub use spectral_ns::{torus_spectral_ns, torus_spectral_ns_at, SpectralSettings};

use fbsde_geom::{GeometryError, ManifoldKind};

#[derive(Debug, thiserror::Error)]
pub enum ReferenceError {
    #[error("expected a point on {expected}, got {got}")]
    WrongManifold {
        expected: ManifoldKind,
        got: ManifoldKind,
    },
    #[error("CFL number {cfl:.3} exceeds 1 at s = {time:.4}")]
    Cfl { cfl: f64, time: f64 },
    #[error("non-finite vorticity at s = {time:.4}")]
    NonFinite { time: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
