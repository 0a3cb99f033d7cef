//! SQL generation from the most concrete machine of a chain: tables with
//! their constraints, and one stored procedure (or read-only function) per
//! event.
//!
//! Mapping summary:
//! - a class becomes a table with primary key `<class>_id`; a subclass
//!   table's key is also a foreign key to its superclass table;
//! - a function from a class becomes a column of that class's table:
//!   `<name>_id` with a foreign key when the target is a class, `<name>`
//!   otherwise. Total gives NOT NULL, injective gives UNIQUE;
//! - a many-to-many relation becomes a join table with a composite UNIQUE;
//! - composite uniqueness invariants over two functions of one class become
//!   a composite UNIQUE; row-level quantified invariants become CHECKs; any
//!   other invariant is left to the procedures' guards and noted in the
//!   manifest;
//! - guards become checks that signal before any modification, actions
//!   become INSERT/UPDATE/DELETE statements in dependency order inside one
//!   atomic block.

pub mod differential;
pub mod probes;
mod procedures;
mod render;
pub mod runtime;
mod schema;
mod translate;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use render::{render_manifest, render_script, signature};
pub use schema::{generate_ddl, CarrierKind, Schema, Target, VarMap};
pub use translate::{date_of, index_of_date};
pub use procedures::generate_procedures;
pub use probes::{constraint_probes, run_probes, Constraint, Probe, ProbeOutcome};

use crate::ast::EventKind;
use crate::resolve::{ResolvedChain, ResolvedMachine};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlGenError {
    #[error("unknown machine '{0}'")]
    UnknownMachine(String),
    #[error("class '{0}' has no kind annotation")]
    UnannotatedClass(String),
    #[error("event '{event}': guard @{label} is outside the translatable fragment: {detail}")]
    UnsupportedGuard { event: String, label: String, detail: String },
    #[error("event '{event}': action @{label} cannot be translated: {detail}")]
    UnsupportedAction { event: String, label: String, detail: String },
    #[error("{0}")]
    Unsupported(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ColumnDef {
    pub name: String,
    pub sql_type: String,
    pub nullable: bool,
    pub unique: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub primary_key: Option<String>,
    /// (column, referenced table, referenced column)
    pub foreign_keys: Vec<(String, String, String)>,
    pub unique_constraints: Vec<Vec<String>>,
    pub checks: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcKind {
    Constructor,
    Destructor,
    Normal,
    Query,
}

impl From<EventKind> for ProcKind {
    fn from(k: EventKind) -> Self {
        match k {
            EventKind::Constructor => ProcKind::Constructor,
            EventKind::Destructor => ProcKind::Destructor,
            EventKind::Normal => ProcKind::Normal,
            EventKind::Query => ProcKind::Query,
        }
    }
}

/// One step of a procedure body. Checks always precede modifications.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "step", rename_all = "lowercase")]
pub enum Step {
    /// Signal `<procedure>: <label>` unless `condition` is true.
    Check { label: String, condition: String },
    /// A data-modifying statement.
    Modify { sql: String },
    /// The result set of a query function.
    Return { sql: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProcParam {
    /// Model parameter name.
    pub name: String,
    /// SQL parameter name.
    pub sql_name: String,
    pub sql_type: String,
    /// Carrier set of the parameter's values.
    pub carrier: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProcedureDef {
    pub name: String,
    pub kind: ProcKind,
    pub params: Vec<ProcParam>,
    /// Result columns of a query function: (model parameter, SQL type,
    /// carrier, whether the parameter is a set).
    pub outputs: Vec<(String, String, String, bool)>,
    pub steps: Vec<Step>,
    /// The event moves instances from live to historical classes.
    pub historical_move: bool,
}

impl ProcedureDef {
    pub fn body(&self) -> String {
        render::render_body(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SqlScript {
    pub dialect: &'static str,
    pub machine: String,
    pub tables: Vec<TableDef>,
    pub procedures: Vec<ProcedureDef>,
    pub manifest: Manifest,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CarrierPolicy {
    pub representation: &'static str,
    pub sql_type: String,
    pub encoding: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub machine: String,
    pub dialect: &'static str,
    /// Generation was forced past failing verification.
    pub forced: bool,
    pub variables: BTreeMap<String, VarMap>,
    pub procedures: BTreeMap<String, String>,
    pub carriers: BTreeMap<String, CarrierPolicy>,
    pub notes: Vec<String>,
}

pub const DIALECT: &str = "ansi-portable";

/// The machine code is generated from: the named one, or the last. Resolved
/// machines already carry inherited variables (minus data-refined ones) and
/// fully extended events.
pub fn flatten<'a>(chain: &'a ResolvedChain, machine: Option<&str>) -> Result<&'a ResolvedMachine, SqlGenError> {
    match machine {
        Some(n) => chain.machine(n).ok_or_else(|| SqlGenError::UnknownMachine(n.to_string())),
        None => chain
            .machines
            .last()
            .ok_or_else(|| SqlGenError::UnknownMachine("(empty chain)".into())),
    }
}

/// Tables, procedures and manifest for one machine.
pub fn generate(chain: &ResolvedChain, machine: Option<&str>) -> Result<SqlScript, SqlGenError> {
    let m = flatten(chain, machine)?;
    let schema = Schema::build(chain, m)?;
    let tables = generate_ddl(&schema, m);
    let procedures = generate_procedures(chain, m, &schema)?;
    let mut manifest = Manifest {
        machine: m.name.clone(),
        dialect: DIALECT,
        forced: false,
        variables: schema.vars.clone(),
        procedures: procedures.iter().map(|p| (p.name.clone(), render::signature(p))).collect(),
        carriers: schema.carrier_policies(),
        notes: schema.notes.clone(),
    };
    manifest.notes.sort();
    Ok(SqlScript {
        dialect: DIALECT,
        machine: m.name.clone(),
        tables,
        procedures,
        manifest,
    })
}

/// Write `<stem>.sql` and `<stem>.manifest.json` next to each other.
pub fn emit(script: &SqlScript, sql_path: &Path) -> Result<std::path::PathBuf, SqlGenError> {
    let io = |p: &Path, e: std::io::Error| SqlGenError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    std::fs::write(sql_path, render_script(script)).map_err(|e| io(sql_path, e))?;
    let manifest_path = sql_path.with_extension("manifest.json");
    std::fs::write(&manifest_path, render_manifest(&script.manifest)).map_err(|e| io(&manifest_path, e))?;
    Ok(manifest_path)
}
