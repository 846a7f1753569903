use serde::{Deserialize, Serialize};

/// Central tolerance configuration. Every module reads its thresholds
/// from here so acceptance runs have a single tuning surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max deviation from Hermitian symmetry accepted at construction.
    pub hermitian_tol: f64,
    /// Strict-positivity floor for density matrices.
    pub pd_floor: f64,
    /// Log-gap below which the Kubo divided difference switches to its
    /// analytic limit.
    pub kubo_degeneracy_tol: f64,
    /// Spectral-gap guard for anchoring an eigenbasis without a
    /// continuation context.
    pub degeneracy_guard: f64,
    /// Metric-degeneracy floor; below it index raising is refused.
    pub g_floor: f64,
    /// Residual threshold under which an operator field counts as
    /// autoparallel.
    pub autoparallel_tol: f64,
    /// Default central-difference step.
    pub fd_step: f64,
    /// Scale factor for geodesic diagnostic tolerances.
    pub diag_tol_scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian_tol: 1e-12,
            pd_floor: 1e-12,
            kubo_degeneracy_tol: 1e-9,
            degeneracy_guard: 1e-8,
            g_floor: 1e-10,
            autoparallel_tol: 1e-7,
            fd_step: 1e-4,
            diag_tol_scale: 1e-4,
        }
    }
}

impl Tolerances {
    /// Base tolerance for finite-difference residuals,
    /// max(1e-6, C * fd_step^2) with the calibration constant C = 100
    /// absorbing operator norms at desk scale.
    pub fn fd_tol(&self) -> f64 {
        (100.0 * self.fd_step * self.fd_step).max(1e-6)
    }
}
