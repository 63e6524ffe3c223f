use thiserror::Error;

/// Errors raised by the library. Each variant maps to one error class in the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("divergent moment: {0}")]
    DivergentMoment(String),

    #[error("series shape mismatch: ({0} vars, cap {1}) vs ({2} vars, cap {3})")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("square root of a series with nonpositive constant term {0}")]
    NonpositiveConstantTerm(f64),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("conditioning event has zero probability at t = {0}")]
    ZeroConditioningEvent(u64),

    #[error("series cap too large: {0}")]
    CapTooLarge(String),

    #[error("population overflow: {0}")]
    PopulationOverflow(String),

    #[error("attempt budget exhausted after {attempts} attempts with {survivors} survivors")]
    BudgetExhausted { attempts: u64, survivors: u64 },

    #[error("oracle tree exceeded node budget of {0}")]
    OracleBlowup(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
