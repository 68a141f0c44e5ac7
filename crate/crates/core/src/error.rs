//! Error type shared by all modules.

use thiserror::Error;

/// Failure modes of the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    /// A sign change of the mode equation could not be localized inside a pole-free interval.
    #[error("root bracketing failed near k*l = {kl:.6}")]
    RootBracketingFailed { kl: f64 },
    /// Consecutive mode spacings deviate from the median spacing by more than 50%.
    #[error("missed mode: spacing {spacing:.6e} rad/ns after mode {index} vs median {median:.6e}")]
    MissedMode { index: usize, spacing: f64, median: f64 },
    /// Least-squares fit stopped improving.
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    /// No driven resonance was found in the search window.
    #[error("no resonance within window [{lo:.9}, {hi:.9}] rad/ns")]
    NoResonanceInWindow { lo: f64, hi: f64 },
    /// Two bus modes are separated by an integer multiple of the modulation frequency.
    #[error("bus modes {a:.9} and {b:.9} rad/ns collide through sideband order {order}")]
    DegenerateSidebandCollision { a: f64, b: f64, order: i64 },
    /// The null space at the resonance is not one-dimensional.
    #[error("null space degenerate: singular value gap {gap:.3e}")]
    NullSpaceDegenerate { gap: f64 },
    /// A perturbative denominator is too small relative to the coupling.
    #[error("resonant denominator: {what} = {value:.6e} rad/ns (margin {margin:.6e})")]
    ResonantDenominator { what: String, value: f64, margin: f64 },
    /// sin(theta) vanishes in the multimode coupling model.
    #[error("sin(theta) singular for qubit {qubit}: theta = {theta:.9}")]
    SinThetaSingular { qubit: usize, theta: f64 },
    /// Norm or trace drift exceeded its bound, or the step violates the sampling bound.
    #[error("step too large: {0}")]
    StepTooLarge(String),
    /// Sinusoid fit quality below threshold.
    #[error("fit poor: R^2 = {r2:.4}")]
    FitPoor { r2: f64 },
    /// Reconstructed process is not completely positive.
    #[error("non-physical process: minimum Choi eigenvalue {min_eig:.3e}")]
    NonPhysicalProcess { min_eig: f64 },
    /// Calibration oscillation too weak to extract a phase.
    #[error("calibration ambiguous: oscillation amplitude {amplitude:.4}")]
    CalibrationAmbiguous { amplitude: f64 },
    /// Confusion matrix is singular or badly conditioned.
    #[error("singular confusion matrix: condition number {cond:.3e}")]
    SingularConfusion { cond: f64 },
    /// Allocation constraints admit no solution.
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    /// Invalid input parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Result alias for the crate.
pub type Result<T> = std::result::Result<T, BusError>;
