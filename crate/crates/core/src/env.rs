//! The abstract proof-environment contract.
//!
//! A handle owns one interactive proof session: initialize it with a
//! theorem, execute tactics against the focused goal, undo, and query
//! the current state. The toy kernel implements it in-process; the wire
//! client implements it against a remote peer. Protocol-level failures
//! are [`EnvError`]s, distinct from a tactic that merely fails.

use thiserror::Error;

use crate::term::{ProofState, Term};

/// Result of executing one tactic.
#[derive(Clone, Debug, PartialEq)]
pub enum ExecOutcome {
    /// The focused goal was discharged with no new subgoals; the state
    /// carries the remaining goals.
    Solved(ProofState),
    /// The state changed: new subgoals, or a transformed context. A
    /// change that leaves the canonical state serialization identical
    /// is reported as `NoChange` instead.
    Progress(ProofState),
    /// The tactic applied but left the state exactly as it was.
    NoChange,
    /// The tactic does not apply; the state is unchanged.
    Failure(String),
}

impl ExecOutcome {
    /// The state after a successful execution.
    pub fn state(&self) -> Option<&ProofState> {
        match self {
            ExecOutcome::Solved(s) | ExecOutcome::Progress(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.state().is_some()
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment not initialized")]
    NotInitialized,
    #[error("undo with empty history")]
    EmptyHistory,
    #[error("invalid theorem: {0}")]
    InvalidTheorem(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("connection error: {0}")]
    Connection(#[from] std::io::Error),
}

/// One interactive proof session.
///
/// Contract: `execute` followed by `undo` restores the exact prior
/// state, whatever the outcome was; `undo` with no history is an error.
pub trait EnvironmentHandle {
    fn init(&mut self, theorem: &Term) -> Result<ProofState, EnvError>;
    fn execute(&mut self, tactic: &str) -> Result<ExecOutcome, EnvError>;
    fn undo(&mut self) -> Result<ProofState, EnvError>;
    fn state(&mut self) -> Result<ProofState, EnvError>;
}
