use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {what}")]
    NonFiniteInput { what: &'static str },

    #[error("kernel row {state} is not a probability vector (sum = {sum}, min entry = {min:e})")]
    MalformedKernelRow { state: usize, sum: f64, min: f64 },

    #[error(
        "transition matrix is reducible: states {unreachable:?} cannot be reached from state 0, \
         states {dead:?} cannot reach state 0"
    )]
    ReducibleKernel {
        unreachable: Vec<usize>,
        dead: Vec<usize>,
    },

    #[error("step schedule fails `{flag}`: {detail}")]
    InvalidSchedule { flag: &'static str, detail: String },

    #[error("iterates diverged at step {step}: non-finite state")]
    Diverged { step: usize },

    #[error("stability budget exceeded at step {step}: sup-norm {observed} > budget {budget}")]
    StabilityViolation {
        step: usize,
        observed: f64,
        budget: f64,
    },

    #[error("time {t} outside the {scale} clock range [{lo}, {hi}]")]
    TimeOutOfRange {
        scale: &'static str,
        t: f64,
        lo: f64,
        hi: f64,
    },

    #[error("window starting at iterate {start} is empty or runs past the recorded horizon")]
    BadWindow { start: usize },

    #[error("atom weights must sum to 1 within {tol:e} (got {sum})")]
    UnnormalizedWeights { sum: f64, tol: f64 },

    #[error("unknown scenario `{0}` (expected one of S1, S1b, S2, S3)")]
    UnknownScenario(String),

    #[error("{0}")]
    Unsupported(&'static str),

    #[error(
        "invariant-measure program infeasible at tolerance {tol:e} for slow point {slow:?}: \
         refine the grid or relax the tolerance"
    )]
    InfeasibleInvariantProgram { slow: Vec<f64>, tol: f64 },

    #[error("ODE state became non-finite at t = {t}")]
    OdeBlowUp { t: f64 },

    #[error("tail window holds {have} samples, need at least {need}")]
    InsufficientTail { have: usize, need: usize },

    #[error("linear solve hit a singular pivot at column {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("corrupt trajectory cache: {0}")]
    CorruptCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
