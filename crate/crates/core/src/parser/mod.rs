//! The `.ubdb` text format: lexer, recursive-descent parser and canonical
//! pretty printer.

mod lexer;
mod parse;
mod pretty;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::ast::{RefinementChain, Span};

pub use pretty::{pretty_expr, pretty_print};

/// Every word the grammar uses. Identifiers may not collide with these.
pub const KEYWORDS: &[&str] = &[
    "context",
    "sets",
    "constants",
    "axioms",
    "machine",
    "refines",
    "sees",
    "class",
    "kind",
    "attribute",
    "association",
    "invariant",
    "event",
    "constructor",
    "destructor",
    "normal",
    "query",
    "extends",
    "any",
    "where",
    "then",
    "end",
    "of",
    "layer",
    "removes",
    "primary",
    "secondary",
    "historical",
    "injective",
    "or",
    "not",
    "true",
    "false",
    "dom",
    "ran",
    "POW",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub span: Span,
    pub severity: Severity,
    pub message: String,
}

impl ParseDiagnostic {
    pub fn error(span: Span, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            span,
            severity: Severity::Error,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}: {}", self.span, self.message)
    }
}

/// Parse one source text. On failure the diagnostics contain at least one
/// error and no chain is returned.
pub fn parse_chain(src: &str) -> Result<RefinementChain, Vec<ParseDiagnostic>> {
    parse_source(src, None)
}

fn parse_source(src: &str, file: Option<&Path>) -> Result<RefinementChain, Vec<ParseDiagnostic>> {
    let file = file.map(|p| Arc::new(p.to_path_buf()));
    let stamp = |mut d: ParseDiagnostic| {
        d.span.file = file.clone();
        d
    };
    let tokens = lexer::lex(src).map_err(|d| vec![stamp(d)])?;
    let tokens = tokens
        .into_iter()
        .map(|mut t| {
            t.span.file = file.clone();
            t
        })
        .collect();
    parse::Parser::new(tokens).chain().map_err(|d| vec![stamp(d)])
}

/// Parse raw bytes, reporting invalid UTF-8 as a diagnostic.
pub fn parse_bytes(bytes: &[u8], file: Option<&Path>) -> Result<RefinementChain, Vec<ParseDiagnostic>> {
    match std::str::from_utf8(bytes) {
        Ok(src) => parse_source(src, file),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
            let column = prefix.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
            let mut span = Span::new(line, column, 1);
            span.file = file.map(|p| Arc::new(p.to_path_buf()));
            Err(vec![ParseDiagnostic::error(span, "input is not valid UTF-8")])
        }
    }
}

/// Parse several files and concatenate them into one chain, in argument
/// order. Names resolve across the whole file set.
pub fn parse_files(paths: &[PathBuf]) -> Result<RefinementChain, Vec<ParseDiagnostic>> {
    let mut chain = RefinementChain::default();
    let mut diags = Vec::new();
    for path in paths {
        match std::fs::read(path) {
            Ok(bytes) => match parse_bytes(&bytes, Some(path)) {
                Ok(c) => {
                    chain.contexts.extend(c.contexts);
                    chain.machines.extend(c.machines);
                }
                Err(d) => diags.extend(d),
            },
            Err(e) => {
                let mut span = Span::new(1, 1, 0);
                span.file = Some(Arc::new(path.clone()));
                diags.push(ParseDiagnostic::error(span, format!("cannot read file: {e}")));
            }
        }
    }
    if diags.is_empty() {
        Ok(chain)
    } else {
        Err(diags)
    }
}

/// Parse a standalone predicate or expression (used by tests and tools).
pub fn parse_expr(src: &str) -> Result<crate::ast::Expr, ParseDiagnostic> {
    let tokens = lexer::lex(src)?;
    let mut p = parse::Parser::new(tokens);
    let e = p.predicate()?;
    p.expect_eof()?;
    Ok(e)
}
