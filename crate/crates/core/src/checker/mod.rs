//! Proof obligations discharged by exhaustive bounded exploration.

mod explore;
mod obligations;
mod refinement;
pub mod report;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub use explore::{check, annotate_circular, check_enabledness, check_machine_model, explore_states, replay, Exploration};
pub use obligations::{generate_obligations, machine_obligations, refinement_obligations};
pub use refinement::check_refinement;

use crate::ast::Expr;
use crate::engine::{EngineError, Scope, Value};

pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ObligationKind {
    INV,
    GRD,
    SIM,
    GLU,
    FEAS,
    /// Well-definedness (partial function application); only reported when
    /// violated.
    WD,
}

impl fmt::Display for ObligationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofObligation {
    pub kind: ObligationKind,
    pub machine: String,
    /// Set for GRD/SIM/GLU.
    pub abstract_machine: Option<String>,
    pub event: Option<String>,
    pub invariant_label: Option<String>,
    pub predicate: Expr,
}

impl ProofObligation {
    pub fn id(&self) -> String {
        let mut s = format!("{} {}", self.kind, self.machine);
        if let Some(e) = &self.event {
            s.push('/');
            s.push_str(e);
        }
        if let Some(l) = &self.invariant_label {
            s.push('/');
            s.push_str(l);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Violated,
    ScopeExhausted,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::ScopeExhausted => "scope-exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub event: String,
    /// Parameter values, ordered by parameter name.
    pub binding: Vec<(String, Value)>,
    /// Variable values after the step.
    pub post: Vec<(String, Value)>,
    /// Abstract variable values after the step (refinement checks only).
    pub abstract_post: Option<Vec<(String, Value)>>,
}

/// Steps from the all-empty initial state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub carriers: Arc<Vec<String>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn show(&self, v: &Value) -> String {
        crate::engine::value::Display {
            value: v,
            carriers: &self.carriers,
        }
        .to_string()
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub obligation: ProofObligation,
    pub verdict: Verdict,
    pub counterexample: Option<Trace>,
    pub states_explored: usize,
    pub elapsed: Duration,
    pub scope: String,
    pub note: Option<String>,
}

impl CheckReport {
    /// Equality ignoring timing.
    pub fn same_outcome(&self, other: &CheckReport) -> bool {
        self.obligation == other.obligation
            && self.verdict == other.verdict
            && self.counterexample == other.counterexample
            && self.states_explored == other.states_explored
            && self.note == other.note
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub scope: Scope,
    pub budget: usize,
    /// Identify states equal up to renaming of interchangeable atoms.
    pub symmetry: bool,
}

impl CheckOptions {
    pub fn new(scope: Scope) -> Self {
        CheckOptions {
            scope,
            budget: DEFAULT_BUDGET,
            symmetry: true,
        }
    }

    pub fn budget(mut self, n: usize) -> Self {
        self.budget = n.max(1);
        self
    }

    pub fn symmetry(mut self, on: bool) -> Self {
        self.symmetry = on;
        self
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("unknown machine '{0}'")]
    UnknownMachine(String),
    #[error("machine '{concrete}' does not directly refine '{abstract_}'")]
    NotARefinement { abstract_: String, concrete: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("counterexample replay failed for {obligation}: {reason}")]
    ReplayMismatch { obligation: String, reason: String },
}
