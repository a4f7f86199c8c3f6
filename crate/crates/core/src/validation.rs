//! Validation reports shared by the sequential, partial-order and block checkers.

use std::fmt;

use serde::Serialize;

use crate::bdpo::BlockId;
use crate::facts::Fact;
use crate::pop::StepId;

/// A single reason why a plan is invalid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A step of a sequential plan is not applicable (zero-based position).
    NotApplicable { position: usize, op: String, fact: Fact },
    /// The final state misses a goal fact.
    GoalUnsatisfied { fact: Fact },
    /// The ordering constraints contain a cycle.
    Cycle { steps: Vec<StepId> },
    /// A precondition has no causal link.
    UnsupportedPrecondition { consumer: StepId, fact: Fact },
    /// A precondition is supported by more than one causal link.
    AmbiguousSupport { consumer: StepId, fact: Fact, producers: Vec<StepId> },
    /// A causal link is malformed: the producer does not achieve the fact, the
    /// consumer does not need it, it lacks its ordering, or a step is missing.
    BadLink { producer: StepId, fact: Fact, consumer: StepId, problem: &'static str },
    /// A step deleting a linked fact may be ordered inside the link.
    Threat { deleter: StepId, producer: StepId, fact: Fact, consumer: StepId },
    /// A lifted causal link between blocks (or the boundary of the enclosing
    /// block, shown as `None`) is not justified by the block semantics.
    BadBlockLink { producer: Option<BlockId>, fact: Fact, consumer: Option<BlockId>, problem: &'static str },
    /// A block deleting a linked fact may be ordered inside a lifted link.
    BlockThreat { deleter: BlockId, producer: Option<BlockId>, fact: Fact, consumer: Option<BlockId> },
    /// A step outside a block is ordered between two of its members.
    NotContiguous { block: BlockId, intruder: StepId },
    /// The synthetic initial or goal step does not match the task.
    TaskMismatch { detail: String },
    /// Any other structural defect.
    Structure { detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |b: &Option<BlockId>| b.map_or_else(|| "boundary".to_string(), |b| b.to_string());
        match self {
            Violation::NotApplicable { position, op, fact } => {
                write!(f, "step {position} ({op}) is not applicable: {fact} does not hold")
            }
            Violation::GoalUnsatisfied { fact } => write!(f, "goal fact {fact} does not hold at the end"),
            Violation::Cycle { steps } => write!(f, "ordering cycle through {steps:?}"),
            Violation::UnsupportedPrecondition { consumer, fact } => {
                write!(f, "precondition {fact} of {consumer} has no causal link")
            }
            Violation::AmbiguousSupport { consumer, fact, producers } => {
                write!(f, "precondition {fact} of {consumer} has several producers {producers:?}")
            }
            Violation::BadLink { producer, fact, consumer, problem } => {
                write!(f, "causal link {producer} -{fact}-> {consumer}: {problem}")
            }
            Violation::Threat { deleter, producer, fact, consumer } => {
                write!(f, "{deleter} threatens causal link {producer} -{fact}-> {consumer}")
            }
            Violation::BadBlockLink { producer, fact, consumer, problem } => {
                write!(f, "block link {} -{fact}-> {}: {problem}", side(producer), side(consumer))
            }
            Violation::BlockThreat { deleter, producer, fact, consumer } => {
                write!(f, "{deleter} threatens block link {} -{fact}-> {}", side(producer), side(consumer))
            }
            Violation::NotContiguous { block, intruder } => {
                write!(f, "{intruder} is ordered between members of {block}")
            }
            Violation::TaskMismatch { detail } | Violation::Structure { detail } => f.write_str(detail),
        }
    }
}

/// The outcome of a validity check: valid iff there are no violations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn valid() -> Self {
        Self::default()
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// The first violation found, if any.
    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

impl From<Violation> for ValidationReport {
    fn from(v: Violation) -> Self {
        ValidationReport { violations: vec![v] }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violations.as_slice() {
            [] => f.write_str("valid"),
            [v, rest @ ..] if rest.is_empty() => write!(f, "invalid: {v}"),
            [v, rest @ ..] => write!(f, "invalid: {v} (and {} more)", rest.len()),
        }
    }
}
