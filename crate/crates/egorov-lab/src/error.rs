//! Error taxonomy. Configuration errors and numerical-guard aborts are kept
//! distinct so the CLI can map them to exit codes 2 and 3.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum LabError {
    #[error("derivative order {requested} exceeds the spectral cap {cap}")]
    DerivativeCap { requested: usize, cap: usize },

    #[error("grid or dimension mismatch: {0}")]
    GridMismatch(String),

    #[error("hbar = {hbar:.3e} below aliasing floor 2·dx·dxi/pi = {floor:.3e}")]
    Aliasing { hbar: f64, floor: f64 },

    #[error("trajectory left the safety margin: node {node}, t = {t:.4}, |z| = {r:.4} vs limit {limit:.4}")]
    BoundaryProximity { node: usize, t: f64, r: f64, limit: f64 },

    #[error("eigenvalue gap violation: measured {measured:.3e} < rho*g = {required:.3e} at node {node}")]
    GapViolation { measured: f64, required: f64, node: usize },

    #[error("unitarity defect {defect:.3e} above tolerance {tol:.3e}")]
    Unitarity { defect: f64, tol: f64 },

    #[error("quadrature/PDE residual {residual:.3e} above tolerance {tol:.3e}")]
    QuadratureResidual { residual: f64, tol: f64 },

    #[error("Moyal-bracket precondition violated: max-node ||[P0,Q0]|| = {residual:.3e}")]
    NoncommutingPrincipal { residual: f64 },

    #[error("contour quadrature not converged: doubling K changed the result by {delta:.3e}")]
    ContourConvergence { delta: f64 },

    #[error("contour too close to spectrum: resolvent norm {norm:.3e} exceeds {limit:.3e}")]
    ContourResolvent { norm: f64, limit: f64 },

    #[error("spectrum of the almost-projection not clustered near {{0,1}}: worst distance {worst:.3}")]
    SpectralClustering { worst: f64 },

    #[error("the two Htilde_nu1 forms disagree: {delta:.3e} (projection-order bug)")]
    FormDisagreement { delta: f64 },

    #[error("block-sandwich identity violated: residual {residual:.3e}")]
    SandwichViolation { residual: f64 },

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// CLI exit code class: 2 = configuration, 3 = numerical guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Io(_) | LabError::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
