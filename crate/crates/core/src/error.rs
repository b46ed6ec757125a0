use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Action;

/// One failed invariant found while validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `"params"`, `"weights"`, `"units"` or `"city 'Name'"`.
    pub subject: String,
    pub field: String,
    pub message: String,
}

/// Every violation found, not just the first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn push(&mut self, subject: impl Into<String>, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.into(),
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result<T>(self, value: T) -> Result<T, ValidationReport> {
        if self.is_empty() {
            Ok(value)
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {}: {}: {}", v.subject, v.field, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Validation(#[from] ValidationReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible action {action}: {reason}")]
    Infeasible { action: Action, reason: String },

    #[error("supply {field} at city {city} would become negative ({value})")]
    NegativeSupply { city: usize, field: &'static str, value: f64 },

    #[error("policy '{policy}' chose infeasible action {action} at step {step}")]
    PolicyInfeasible { policy: String, step: usize, action: Action },

    #[error(
        "discretized state space has {states} states, above the cap of {cap} ({spec}); \
         restrict the value-iteration city subset or use fewer bins"
    )]
    StateCapExceeded { states: u128, cap: usize, spec: String },

    #[error("non-finite value at state {state} during {phase}")]
    NonFinite { state: usize, phase: &'static str },

    #[error("malformed MDP: {0}")]
    MalformedMdp(String),

    #[error("aggregation needs at least 2 records, got {0}")]
    TooFewRecords(usize),

    #[error("failed to parse scenario {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
