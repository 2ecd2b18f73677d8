use alloc::string::String;

use thiserror::Error;

/// Errors raised by model construction, dynamics and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("subsystem dimension {0} is invalid (must be at least 2)")]
    InvalidSubsystem(usize),
    #[error("site {site} out of range for a space with {sites} subsystems")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("battery count {n} outside supported range {min}..={max}")]
    BatteryCount { n: usize, min: usize, max: usize },
    #[error("Hilbert-space dimension {dim} exceeds the dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("excitation number {m} out of range for N = {n}")]
    ExcitationOutOfRange { m: usize, n: usize },
    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no population inversion: beta_e * omega_0 = {0} is not negative")]
    NoInversion(f64),
    #[error("individual charging needs one engine per battery (engines = {engines}, batteries = {batteries})")]
    SchemeMismatch { engines: usize, batteries: usize },
    #[error("expectation value has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudget { steps: usize, t: f64 },
    #[error("trace drift {drift:e} at t = {t} exceeds abort threshold")]
    TraceDrift { t: f64, drift: f64 },
    #[error("degenerate null space: {dim} near-zero singular values (gap ratio {gap_ratio:e})")]
    DegenerateNullSpace { dim: usize, gap_ratio: f64 },
    #[error("steady state residual {residual:e} above tolerance")]
    SteadyStateResidual { residual: f64 },
    #[error("charging did not reach the deficit threshold within t_max = {t_max}")]
    NotConverged { t_max: f64 },
    #[error("charging time {tau} still changes by {change:e} after refining the recording grid")]
    RefinementFailed { tau: f64, change: f64 },
    #[error("grid too coarse: {points} points, need at least {min}")]
    GridTooCoarse { points: usize, min: usize },
    #[error("trajectory has no observable named `{0}`")]
    MissingObservable(String),
}

pub type Result<T> = core::result::Result<T, Error>;
