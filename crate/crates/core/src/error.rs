use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("component mismatch: expected {expected}, found {found}")]
    ComponentMismatch { expected: usize, found: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("time grids are not aligned: {0}")]
    TimeMisalignment(String),

    #[error("nonlinearity degree p = {0} must be an odd integer >= 3")]
    EvenPower(u32),

    #[error("multilinear index j = {j} outside 1..={p}")]
    IndexOutOfRange { j: usize, p: u32 },

    #[error("empty time interval [{start}, {end}]")]
    EmptyInterval { start: f64, end: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("evolution diverged after t = {t_last}")]
    Diverged { t_last: f64 },

    #[error(
        "tainted result: boundary mass fraction {boundary_mass:.3e} exceeds {threshold:.3e} \
         (final Cauchy tail {final_tail:.3e})"
    )]
    Tainted {
        boundary_mass: f64,
        threshold: f64,
        final_tail: f64,
    },

    #[error("background scattering solution has not converged (final tail {final_tail:.3e})")]
    NotConverged { final_tail: f64 },

    #[error(
        "interval partition infeasible: a single step at t = {t} violates the contraction bound"
    )]
    PartitionInfeasible { t: f64 },

    #[error("epsilon {epsilon} lies outside the estimated radius {radius}")]
    OutsideRadius { epsilon: f64, radius: f64 },

    #[error("inconclusive fit: {0}")]
    Inconclusive(String),

    #[error("remainder vanishes identically (linear flow); no order to fit")]
    TrivialRemainder,

    #[error("hierarchy bookkeeping violated: {0}")]
    Bookkeeping(String),

    #[error("memory budget exceeded: {requested} bytes requested, budget {budget}")]
    MemoryBudget { requested: u64, budget: u64 },
}
