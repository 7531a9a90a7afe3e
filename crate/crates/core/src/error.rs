use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Bose occupation has a pole at zero frequency; use the J·n product limit")]
    BosePole,

    #[error("quadrature did not converge: estimated relative error {rel_error:e} for {what}")]
    QuadratureNonConvergence { what: &'static str, rel_error: f64 },

    #[error("zero operator where a nonzero one is required ({0})")]
    ZeroOperator(&'static str),

    #[error("no finite optimum: |sin φ| = {sin_phi} (coupling density purely imaginary on the support of S)")]
    BoundaryPhase { sin_phi: f64 },

    #[error("Cauchy-Schwarz violated: |Im tr(𝕊S)| = {im} exceeds ‖𝕊‖‖S‖ = {bound}")]
    CauchySchwarz { im: f64, bound: f64 },

    #[error("mean real coupling density ⟨G′⟩ = {0} is not positive")]
    NonPositiveDensity(f64),

    #[error("steady state is not unique: null-space dimension {0}")]
    DegenerateSteadyState(usize),

    #[error("trace drifted to {trace} at t = {t}")]
    TraceDrift { t: f64, trace: f64 },

    #[error("negative rate {value:e} at ({row}, {col})")]
    NegativeRate { row: usize, col: usize, value: f64 },

    #[error("jump probability per step {prob} exceeds 0.1; reduce dt to at most {suggested_dt:e}")]
    StepTooLarge { prob: f64, suggested_dt: f64 },
}
