use alloc::string::String;

use crate::domain::{FaceId, Side};

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate interval [{a}, {b}]: need a < b")]
    DegenerateInterval { a: f64, b: f64 },
    #[error("grid needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("initial packet leaks {mass:e} probability outside the domain (limit 1e-8)")]
    PacketOverlapsBoundary { mass: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative kappa {kappa} on static face {face}")]
    NegativeKappa { face: FaceId, kappa: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular linear system")]
    SingularSystem,
    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("initial state not normalized: norm^2 = {norm_squared}")]
    NotNormalized { norm_squared: f64 },
    #[error("unknown particle label {0}")]
    UnknownLabel(String),
    #[error("duplicate particle label {0}")]
    DuplicateLabel(String),
    #[error("position {x} is not a boundary point of particle {label}")]
    NotOnBoundary { label: String, x: f64 },
    #[error("conditioning on a null event: boundary slice norm^2 = {norm_squared:e}")]
    ZeroNormSlice { norm_squared: f64 },
    #[error(
        "admissibility violated at t = {time} on {face}: kappa = {kappa_t}, hbar*kappa/m = {speed} < v_n = {v_n}"
    )]
    Admissibility { time: f64, face: FaceId, kappa_t: f64, speed: f64, v_n: f64 },
    #[error("domain collapsed at t = {time}: a = {a} >= b = {b}")]
    DomainCollapsed { time: f64, a: f64, b: f64 },
    #[error("negative detection integrand {value:e} at t = {time} on {side:?} face")]
    NegativeIntegrand { time: f64, side: Side, value: f64 },
    #[error("contraction violated: norm^2 grew from {before} to {after}")]
    ContractionViolated { before: f64, after: f64 },
    #[error("Bohmian trajectory hit a node at t = {time}, x = {x}")]
    NodeEncountered { time: f64, x: f64 },
    #[error("time window not covered by the wave-function series: t = {0}")]
    OutsideSeries(f64),
}
