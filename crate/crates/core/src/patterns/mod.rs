//! Methodology checks over resolved chains, and the association-splitting
//! transformer.
//!
//! Lint rule identifiers are stable:
//!
//! | rule | severity | fires when |
//! |---|---|---|
//! | `secondary-structure` | warning | a secondary class has fewer than two functions to primary classes |
//! | `attribute-source` | warning | an attribute class is the source of an association to a primary or secondary class |
//! | `historical-write` | error | an event that moves nothing out of a live class writes a historical class or its attributes |
//! | `non-atomic-move` | error | an event inserts into a historical class without removing the same instances from a live class |
//! | `historical-attribute` | error | a move event leaves a total attribute of the historical class unassigned |
//! | `constructor-freshness` | warning | a constructor has no `p /: C` guard for the instance it creates |
//! | `query-layer` | warning | a query event is introduced before the `queries` layer |
//! | `layer-order` | warning | a class is introduced in a layer earlier than its kind belongs to |
//! | `layer-regression` | warning | layer labels go backwards along the chain |
//! | `mixed-layer` | info | attributes are introduced in the `structure` layer |
//! | `layer-sequence` | info | summary of the detected layer sequence |

mod classify;
mod historical;
mod layering;
mod split;

use std::fmt::Write;

use serde::Serialize;

pub use classify::{check_constructor_freshness, classify_classes};
pub use historical::check_historical_pattern;
pub use layering::lint_layering;
pub use split::{split_association, split_bisimulation, Bisimulation, SplitError, SplitSpec};

use crate::ast::{Expr, Logic};
use crate::resolve::ResolvedChain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LintFinding {
    pub rule: &'static str,
    pub severity: Severity,
    /// The class, event or machine the finding is about.
    pub subject: String,
    pub message: String,
}

impl LintFinding {
    fn new(rule: &'static str, severity: Severity, subject: impl Into<String>, message: impl Into<String>) -> Self {
        LintFinding {
            rule,
            severity,
            subject: subject.into(),
            message: message.into(),
        }
    }
}

/// Every lint, in a fixed order: class kinds, constructors, historical data,
/// layering.
pub fn lint(chain: &ResolvedChain) -> Vec<LintFinding> {
    let mut out = classify_classes(chain);
    out.extend(check_constructor_freshness(chain));
    out.extend(check_historical_pattern(chain));
    out.extend(lint_layering(chain));
    out
}

pub fn has_errors(findings: &[LintFinding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

#[derive(Serialize, Default)]
pub struct LintSummary {
    pub errors: usize,
    pub warnings: usize,
    pub infos: usize,
}

pub fn summarize(findings: &[LintFinding]) -> LintSummary {
    let mut s = LintSummary::default();
    for f in findings {
        match f.severity {
            Severity::Error => s.errors += 1,
            Severity::Warning => s.warnings += 1,
            Severity::Info => s.infos += 1,
        }
    }
    s
}

pub fn to_json(findings: &[LintFinding]) -> serde_json::Value {
    serde_json::json!({ "findings": findings, "summary": summarize(findings) })
}

pub fn to_text(findings: &[LintFinding], color: bool) -> String {
    let mut out = String::new();
    for f in findings {
        let sev = match (f.severity, color) {
            (Severity::Error, true) => "\x1b[31;1merror\x1b[0m".to_string(),
            (Severity::Warning, true) => "\x1b[33mwarning\x1b[0m".to_string(),
            (s, _) => s.as_str().to_string(),
        };
        let _ = writeln!(out, "{sev}[{}] {}: {}", f.rule, f.subject, f.message);
    }
    let s = summarize(findings);
    let _ = writeln!(out, "{} errors, {} warnings, {} infos", s.errors, s.warnings, s.infos);
    out
}

/// Top-level conjuncts of a predicate.
pub(crate) fn conjuncts(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::Logic(Logic::And, a, b) => {
            let mut v = conjuncts(a);
            v.extend(conjuncts(b));
            v
        }
        _ => vec![e],
    }
}
