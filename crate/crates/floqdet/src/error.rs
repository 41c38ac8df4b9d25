use num_complex::Complex64;
use thiserror::Error;

/// Errors surfaced by the numerical pipelines.
///
/// Variants that indicate a numerical degeneracy (resonances, spectrum
/// collisions, log singularities) are distinguished from configuration
/// errors so callers can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lambda = {lambda} is within {dist:.3e} of a truncated Laplacian eigenvalue (threshold {threshold:.1e})")]
    SpectrumCollision {
        lambda: Complex64,
        dist: f64,
        threshold: f64,
    },

    #[error("(p, d) = ({p}, {d}) violates the admissible integrability range")]
    ConditionVViolated { p: f64, d: usize },

    #[error("Floquet resonance: |1 - z*a| = {min_gap:.3e} below threshold {threshold:.1e} at z = {z}")]
    FloquetResonance {
        z: Complex64,
        min_gap: f64,
        threshold: f64,
    },

    #[error("I + F1 is numerically singular (condition estimate {cond:.3e})")]
    SingularF1 { cond: f64 },

    #[error("I + A is numerically singular")]
    SingularIplusA,

    #[error("trace series diverges: ||R0 V||_HS = {norm:.3} >= 0.9")]
    SeriesDiverges { norm: f64 },

    #[error("no circle with |psi - 1| < 1/2 found at radius >= {r_min}")]
    RadiusTooSmall { r_min: f64 },

    #[error("argument-principle phase step exceeds pi/2 after max refinement near z = {z}")]
    WindingAmbiguous { z: Complex64 },

    #[error("zero z_j = {z} too close to the unit circle (1 - |z| = {gap:.3e})")]
    ZeroOnBoundary { z: Complex64, gap: f64 },

    #[error("|psi| = {value:.3e} below 1e-12 on the boundary grid even after jitter")]
    LogSingularity { value: f64 },

    #[error("gamma estimate {gamma:.3e} below -10*tol = {floor:.3e}: eigenvalue extraction inconsistent with boundary data")]
    NegativeGamma { gamma: f64, floor: f64 },

    #[error("eigenvalue lambda = {lambda} violates the strip bound: nu(1-e^(-tau nu)) = {lhs:.6} > {rhs:.6}")]
    BoundViolated {
        lambda: Complex64,
        lhs: f64,
        rhs: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear algebra backend failure: {0}")]
    Linalg(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by numerical degeneracy rather than bad input.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::SpectrumCollision { .. }
                | Error::FloquetResonance { .. }
                | Error::SingularF1 { .. }
                | Error::SingularIplusA
                | Error::SeriesDiverges { .. }
                | Error::RadiusTooSmall { .. }
                | Error::WindingAmbiguous { .. }
                | Error::ZeroOnBoundary { .. }
                | Error::LogSingularity { .. }
        )
    }
}
