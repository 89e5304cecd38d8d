use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("eigensolver did not converge")]
    EigenFailure,
    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("converged to constant state")]
    ConstantState,
    #[error("singular newton matrix (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("continuation step failed at step size floor {step:.3e}")]
    StepFailure { step: f64 },
    #[error("fold detected near member {member}")]
    Fold { member: usize },
    #[error("zero cluster not separable: radius {radius:.3e}, separation {separation:.3e}")]
    ClusterNotSeparable { radius: f64, separation: f64 },
    #[error("kernel dimension ambiguous: candidates {0} and {1}")]
    KernelAmbiguous(usize, usize),
    #[error("cluster dimension {found} != {expected} at xi = {xi:.3e}")]
    ClusterDimension { found: usize, expected: usize, xi: f64 },
    #[error("fit residual {0:.3e} exceeds tolerance")]
    FitResidual(f64),
    #[error("extrapolation did not converge (successive estimates differ by {0:.3e})")]
    Extrapolation(f64),
    #[error("ill-conditioned change of variables (condition {0:.3e})")]
    IllConditioned(f64),
    #[error("phase wrap detected at t = {0}")]
    PhaseWrap(f64),
    #[error("blow-up detected at t = {0}")]
    BlowUp(f64),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
