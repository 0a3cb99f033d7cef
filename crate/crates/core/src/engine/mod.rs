//! Exact finite-model semantics of expressions, predicates and events.

pub mod compile;
pub mod eval;
pub mod events;
pub mod scope;
pub mod symmetry;
pub mod value;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub use eval::EvalError;
pub use events::{Binding, CompiledEvent, Enumeration, MachineModel, State};
pub use scope::{Scope, Universe};
pub use symmetry::{FreshAtoms, Symmetry};
pub use value::{Atom, Value};

use crate::ast::Expr;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown carrier set '{0}'")]
    UnknownCarrier(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("scope: {0}")]
    Scope(String),
    #[error("event '{event}' assigns '{variable}' more than once")]
    ConflictingAssignment { event: String, variable: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Evaluate an AST expression against named variable values and bindings.
/// Convenience entry point; the checker uses compiled forms directly.
pub fn eval_expr(
    expr: &Expr,
    universe: &Universe,
    state: &BTreeMap<String, Value>,
    binding: &BTreeMap<String, Value>,
) -> Result<Value, EngineError> {
    let names: Vec<&String> = state.keys().collect();
    let vars: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| ((*n).clone(), i)).collect();
    let values: Vec<Value> = state.values().cloned().collect();
    let mut c = compile::Compiler::new(universe, vars);
    let mut locals = Vec::new();
    for (k, v) in binding {
        c.push_local(k);
        locals.push(v.clone());
    }
    let ce = c.compile(expr)?;
    Ok(eval::eval(&ce, &values, &mut locals)?)
}

pub fn eval_predicate(
    pred: &Expr,
    universe: &Universe,
    state: &BTreeMap<String, Value>,
    binding: &BTreeMap<String, Value>,
) -> Result<bool, EngineError> {
    match eval_expr(pred, universe, state, binding)? {
        Value::Bool(b) => Ok(b),
        _ => Err(EvalError::IllTyped("a predicate").into()),
    }
}
