//! Geometry, orthonormal frames and spectral fields on the flat 2-torus and
//! the unit 2-sphere.

pub mod fields;
pub mod frame_bundle;
pub mod geometry;

pub use frame_bundle::{Frame, RealizedTensor, TensorCoords};
pub use geometry::{ManifoldKind, Point, TangentVector, TimeVectorField, VectorField};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unknown manifold `{0}` (expected torus2 or sphere2)")]
    UnknownManifold(String),
    #[error("point is off the unit sphere by {residual:e}")]
    NotOnSphere { residual: f64 },
    #[error("vector is not tangent (normal residual {residual:e})")]
    NotTangent { residual: f64 },
    #[error("tangent vector is based at a different point")]
    BaseMismatch,
    #[error("operands live on different manifolds")]
    ManifoldMismatch,
    #[error("operation not available on {0}")]
    WrongManifold(ManifoldKind),
    #[error("matrix is not orthogonal (residual {residual:e})")]
    NonOrthogonal { residual: f64 },
    #[error("frame is not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("tensor rank mismatch: expected ({expected_m},{expected_n}), got ({m},{n})")]
    RankMismatch {
        expected_m: usize,
        expected_n: usize,
        m: usize,
        n: usize,
    },
    #[error("coefficient array has length {got}, expected {expected}")]
    CoeffLength { expected: usize, got: usize },
    #[error("samples do not match the collocation grid: {0}")]
    GridMismatch(String),
    #[error("field is not divergence-free (‖div‖₂ = {norm:e})")]
    NotDivergenceFree { norm: f64 },
    #[error("time grid must be strictly increasing")]
    TimeGrid,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for GeometryError {
    fn from(e: std::io::Error) -> Self {
        GeometryError::Io(e.to_string())
    }
}
