use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports. The CLI maps these onto exit codes via
/// [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid scenario tree: {0}")]
    Tree(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("unknown scenario {0}")]
    UnknownScenario(usize),

    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    #[error("missing intervention multiplier for {intervention} in region {region}")]
    MissingMultiplier { region: String, intervention: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("horizon mismatch: {0}")]
    Horizon(String),

    #[error("asymptomatic proportion {0} must be below 1")]
    ProportionTooLarge(f64),

    #[error("invalid allocation: {0}")]
    Allocation(String),

    #[error("budget exceeded: allocation costs {cost} but the budget is {budget}")]
    Budget { cost: f64, budget: f64 },

    #[error("invalid risk configuration: {0}")]
    Risk(String),

    #[error("invalid big-M bound {value} for {what}")]
    BigM { what: String, value: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("assignment infeasible: constraint `{constraint}` violated by {violation:e}")]
    InfeasibleAssignment { constraint: String, violation: f64 },

    #[error("problem is infeasible")]
    Infeasible,

    #[error("problem is unbounded")]
    Unbounded,

    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("solve did not reach optimality: {0}")]
    NotOptimal(String),

    #[error("model with {rows} rows exceeds the embedded solver limit of {limit}; export it instead")]
    TooLarge { rows: usize, limit: usize },

    #[error("degenerate t-test: {0}")]
    DegenerateTest(String),

    #[error("config error at {pointer}: {reason}")]
    Config { pointer: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Infeasible,
    Other,
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter { field: field.into(), reason: reason.into() }
    }

    pub fn config(pointer: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { pointer: pointer.into(), reason: reason.into() }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Infeasible | Error::InfeasibleAssignment { .. } => Category::Infeasible,
            Error::Distribution(_)
            | Error::Tree(_)
            | Error::Parameter { .. }
            | Error::MissingMultiplier { .. }
            | Error::Dimension(_)
            | Error::Horizon(_)
            | Error::ProportionTooLarge(_)
            | Error::Allocation(_)
            | Error::Budget { .. }
            | Error::Risk(_)
            | Error::BigM { .. }
            | Error::Config { .. }
            | Error::Json(_) => Category::Config,
            _ => Category::Other,
        }
    }
}
