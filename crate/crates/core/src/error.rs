use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which of the two mechanical response denominators vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denominator {
    F1,
    F2,
}

impl std::fmt::Display for Denominator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Denominator::F1 => write!(f, "f1"),
            Denominator::F2 => write!(f, "f2"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mechanical denominator is singular (|d| = {magnitude:e} rad^2/s^2)")]
    MechanicalSingularity { magnitude: f64 },

    #[error("no admissible positive steady-state root: {0}")]
    Infeasible(String),

    #[error("response denominator {which} vanishes at omega = {omega:e} rad/s")]
    ResponseSingularity { which: Denominator, omega: f64 },

    #[error("transmission pole at omega = {omega:e} rad/s")]
    Pole { omega: f64 },

    #[error("group-delay stencil too coarse at omega = {omega:e} rad/s (phase step {jump:.3} rad)")]
    StencilTooCoarse { omega: f64, jump: f64 },

    #[error("at grid index {index}: {source}")]
    AtGridPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("eigenvalue solver did not converge")]
    EigenNonConvergence,

    #[error("system is unstable: max real part {margin:e} rad/s at eigenvalue {eigenvalue}")]
    Unstable { margin: f64, eigenvalue: Complex64 },

    #[error("unstable at phi2 = {phi2} rad: max real part {margin:e} rad/s")]
    UnstableAt { phi2: f64, margin: f64 },

    #[error("expected two mechanical eigenvalues in the window, found {found}; spectrum: {spectrum:?}")]
    Selection {
        found: usize,
        spectrum: Vec<Complex64>,
    },

    #[error("no interior minimum in bracket [{lo:e}, {hi:e}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("peak sits on the band boundary at omega = {omega:e} rad/s; widen the grid")]
    PeakOnBoundary { omega: f64 },

    #[error("band has {points} grid points, need at least {required}")]
    BandTooSparse { points: usize, required: usize },

    #[error("bandwidth undefined: {0}")]
    BandwidthUndefined(String),

    #[error("transient not decayed at horizon: drift {drift:e} exceeds {threshold:e}")]
    Inconclusive { drift: f64, threshold: f64 },

    #[error("integrator step size underflow at t = {time:e}")]
    StepUnderflow { time: f64 },
}

impl Error {
    pub(crate) fn at(index: usize, err: Error) -> Error {
        Error::AtGridPoint {
            index,
            source: Box::new(err),
        }
    }

    /// Physics failures (as opposed to bad input): instability, infeasibility,
    /// singular responses and similar.
    pub fn is_physics(&self) -> bool {
        match self {
            Error::InvalidParam { .. } | Error::Config(_) | Error::InvalidArgument(_) => false,
            Error::AtGridPoint { source, .. } => source.is_physics(),
            _ => true,
        }
    }
}
