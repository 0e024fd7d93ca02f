use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One offending clause found while parsing a model response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffendingClause {
    pub configuration: usize,
    pub clause: String,
    pub reason: String,
}

impl std::fmt::Display for OffendingClause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "configuration {}: {:?} ({})",
            self.configuration, self.clause, self.reason
        )
    }
}

#[derive(Debug, Clone, Error)]
#[error("could not parse response: {}", format_clauses(.offending))]
pub struct ParseError {
    pub offending: Vec<OffendingClause>,
}

fn format_clauses(clauses: &[OffendingClause]) -> String {
    if clauses.is_empty() {
        return "no parseable configurations".to_string();
    }
    clauses
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid solution: {0}")]
    InvalidSolution(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no best-solution statistics for parameter `{0}`")]
    NoStatistics(String),

    #[error("value {value} outside the range of parameter `{parameter}`")]
    OutOfRange { parameter: String, value: f64 },

    #[error("unknown level label `{0}`")]
    UnknownLevel(String),

    #[error("parameter `{0}` is not part of the solution space")]
    UnknownParameter(String),

    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),

    #[error("incompatible embeddings: {0}")]
    IncompatibleEmbeddings(String),

    #[error(
        "budget exhausted: prompt needs {needed} tokens without demonstrations, budget is {budget}"
    )]
    BudgetExhausted { needed: usize, budget: usize },

    #[error("off-grid categorical for task `{task_id}`: no table entry matches {detail}")]
    OffGridCategorical { task_id: String, detail: String },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("replay miss: no cassette entry for prompt sha256 {0}")]
    ReplayMiss(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("elicitation failed on every round ({} rounds traced)", .trace.len())]
    ElicitationFailed {
        trace: Vec<crate::elicitation::RoundTrace>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(_) | Error::ReplayMiss(_) | Error::ElicitationFailed { .. } => 3,
            Error::Parse(_) => 4,
            _ => 2,
        }
    }
}
