//! The crate-wide error type.

use crate::facts::Fact;
use crate::pop::StepId;

/// Errors raised while parsing, transforming or encoding plans.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A SAS+ task or plan file is malformed.
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },

    /// The input uses a feature this crate deliberately does not model.
    #[error("unsupported feature: {0}")]
    Unsupported(&'static str),

    /// A plan file names an operator the task does not define.
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    /// An operator was applied in a state that violates its precondition.
    #[error("operator `{op}` is not applicable: requires {fact}")]
    NotApplicable { op: String, fact: Fact },

    /// A structurally well-formed input violates a semantic requirement.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An ordering constraint would close a cycle; the witness lists the steps involved.
    #[error("ordering cycle through steps {0:?}")]
    CycleDetected(Vec<StepId>),

    /// An instance exceeds the size an exact procedure accepts.
    #[error("instance too large: {size} steps exceeds the limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    /// A propositional model violates a hard clause of its encoding.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An internal consistency check failed.
    #[error("internal error: {0}")]
    Internal(String),

    /// The external planner could not be run.
    #[error("external planner: {0}")]
    Planner(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shorthand for results carrying [`Error`].
pub type Result<T, E = Error> = std::result::Result<T, E>;
