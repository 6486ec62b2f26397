use crate::validate::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dangling reference: {0}")]
    Reference(String),

    #[error("invalid instance: {0}")]
    Invalid(String),

    #[error("base timetable is infeasible ({} violation(s)), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    BaseInfeasible(Vec<Violation>),

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schedule is incomplete: {0} train(s) unscheduled")]
    IncompleteSchedule(usize),

    #[error("schedule is infeasible ({} violation(s)), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InfeasibleSchedule(Vec<Violation>),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("no feasible schedule exists within the horizon")]
    NoFeasibleSchedule,

    #[error("path error: {0}")]
    Path(String),

    #[error("generator failed: {0}")]
    Generator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
