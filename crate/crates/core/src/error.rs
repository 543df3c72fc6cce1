use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("activation parameter out of range: {0}")]
    BadActivationParameter(String),

    #[error("quadrature order {0} outside [2, 512]")]
    QuadratureOrder(usize),

    #[error("empty sample set")]
    EmptyMeasure,

    #[error("measure has dimension {got}, expected {want}")]
    Dimension { want: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(&'static str),

    #[error("alpha must exceed 1 (got {0})")]
    AlphaRange(f64),

    #[error("z must lie in the open upper half-plane")]
    UpperHalfPlane,

    #[error("Stieltjes iteration stalled at residual {residual:.3e} after {iterations} iterations; z may sit too close to a spectral edge")]
    StieltjesNonConvergence { residual: f64, iterations: usize },

    #[error("branch cut contact: alpha + w*g reached the negative real axis")]
    BranchCut,

    #[error("log-potential extrapolation did not settle at t = {t} (spread {spread:.3e}); t may sit on an atom")]
    SingularPoint { t: f64, spread: f64 },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("homotopy step fell below 1e-6 while tracking the loss constraint")]
    HomotopyStall,

    #[error("imaginary leak {0:.3e} exceeds 1e-4; xi quadrature too coarse or invalid parameters")]
    ImaginaryLeak(f64),

    #[error("no feasible overlap q in the requested interval")]
    Infeasible,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
