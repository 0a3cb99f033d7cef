//! Runs a generated script against an in-memory SQLite database.
//!
//! SQLite executes the DDL and every query and data-modifying statement
//! verbatim; only the procedural shell is interpreted here: `BEGIN ATOMIC`
//! becomes a savepoint, each `IF (c) IS NOT TRUE THEN SIGNAL` evaluates `c`
//! and rolls back with the signalled label when it does not hold.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rusqlite::types::Value as SqlValue;
use rusqlite::Connection;
use thiserror::Error;

use super::schema::{CarrierKind, Target, VarMap};
use super::translate::{date_of, index_of_date};
use super::CarrierPolicy;
use crate::engine::value::{Atom, Value};
use crate::engine::Universe;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("malformed script: {0}")]
    Parse(String),
    #[error("SQL error: {0}")]
    Sql(String),
    #[error("no procedure named '{0}'")]
    UnknownProcedure(String),
    #[error("'{name}' takes {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("injected failure after {0} statements")]
    Injected(usize),
    #[error("cannot decode {0}")]
    Decode(String),
}

impl From<rusqlite::Error> for RuntimeError {
    fn from(e: rusqlite::Error) -> Self {
        RuntimeError::Sql(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum RtStep {
    Check { label: String, condition: String },
    Modify(String),
    Return(String),
}

#[derive(Clone, Debug)]
struct RtProc {
    params: Vec<String>,
    steps: Vec<RtStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CallOutcome {
    Done,
    Rows(Vec<Vec<SqlValue>>),
    /// A check failed; nothing was changed.
    Rejected { label: String },
}

pub struct Database {
    conn: Connection,
    procs: BTreeMap<String, RtProc>,
    vars: BTreeMap<String, VarMap>,
}

/// SQLite spells typed date literals as plain strings.
fn sqlite_dialect(sql: &str) -> String {
    sql.replace("DATE '", "'")
}

/// Replace parameter names by positional placeholders, outside literals.
fn bind_params(sql: &str, params: &[String]) -> String {
    let mut out = String::with_capacity(sql.len());
    let mut chars = sql.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '\'' || c == '"' {
            out.push(c);
            for (_, d) in chars.by_ref() {
                out.push(d);
                if d == c {
                    break;
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let word = &sql[i..end];
            // A qualified column (`x1.p_x`) is never a parameter.
            let qualified = out.ends_with('.');
            match params.iter().position(|p| p == word) {
                Some(k) if !qualified => out.push_str(&format!("?{}", k + 1)),
                _ => out.push_str(word),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn parse_header(line: &str) -> Result<(String, Vec<String>), RuntimeError> {
    let rest = line
        .strip_prefix("CREATE PROCEDURE ")
        .or_else(|| line.strip_prefix("CREATE FUNCTION "))
        .ok_or_else(|| RuntimeError::Parse(line.to_string()))?;
    let (name, params) = rest
        .split_once(" (")
        .ok_or_else(|| RuntimeError::Parse(line.to_string()))?;
    let params = params.strip_suffix(')').ok_or_else(|| RuntimeError::Parse(line.to_string()))?;
    let names = params
        .split(", ")
        .filter(|p| !p.is_empty())
        .map(|p| {
            let p = p.strip_prefix("IN ").unwrap_or(p);
            p.split_whitespace().next().unwrap_or_default().to_string()
        })
        .collect();
    Ok((name.to_string(), names))
}

fn parse_procedures(lines: &[&str]) -> Result<BTreeMap<String, RtProc>, RuntimeError> {
    let mut procs = BTreeMap::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if !(line.starts_with("CREATE PROCEDURE ") || line.starts_with("CREATE FUNCTION ")) {
            i += 1;
            continue;
        }
        let (name, params) = parse_header(line)?;
        i += 1;
        while i < lines.len() && lines[i] != "BEGIN ATOMIC" {
            i += 1;
        }
        i += 1;
        let mut steps = Vec::new();
        while i < lines.len() && lines[i] != "END;" {
            let l = lines[i].trim();
            i += 1;
            if l.is_empty() || l.starts_with("--") || l == "END IF;" {
                continue;
            }
            if let Some(c) = l.strip_prefix("IF (").and_then(|c| c.strip_suffix(") IS NOT TRUE THEN")) {
                let signal = lines.get(i).map(|s| s.trim()).unwrap_or_default();
                let label = signal
                    .split_once("MESSAGE_TEXT = '")
                    .and_then(|(_, m)| m.strip_suffix("';"))
                    .and_then(|m| m.split_once(": "))
                    .map(|(_, label)| label.to_string())
                    .ok_or_else(|| RuntimeError::Parse(signal.to_string()))?;
                i += 1;
                steps.push(RtStep::Check {
                    label,
                    condition: c.to_string(),
                });
            } else if let Some(q) = l.strip_prefix("RETURN TABLE (").and_then(|q| q.strip_suffix(");")) {
                steps.push(RtStep::Return(q.to_string()));
            } else if let Some(s) = l.strip_suffix(';') {
                steps.push(RtStep::Modify(s.to_string()));
            } else {
                return Err(RuntimeError::Parse(l.to_string()));
            }
        }
        i += 1;
        procs.insert(name, RtProc { params, steps });
    }
    Ok(procs)
}

impl Database {
    /// Create the tables of `script` and load its procedures.
    pub fn open(script: &str, vars: &BTreeMap<String, VarMap>) -> Result<Database, RuntimeError> {
        let conn = Connection::open_in_memory()?;
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        let lines: Vec<&str> = script.lines().collect();
        let ddl_end = lines
            .iter()
            .position(|l| l.starts_with("CREATE PROCEDURE ") || l.starts_with("CREATE FUNCTION "))
            .unwrap_or(lines.len());
        conn.execute_batch(&sqlite_dialect(&lines[..ddl_end].join("\n")))?;
        let procs = parse_procedures(&lines[ddl_end..])?;
        Ok(Database {
            conn,
            procs,
            vars: vars.clone(),
        })
    }

    pub fn procedures(&self) -> impl Iterator<Item = &str> {
        self.procs.keys().map(|s| s.as_str())
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    pub fn call(&mut self, name: &str, args: &[SqlValue]) -> Result<CallOutcome, RuntimeError> {
        self.call_inner(name, args, None)
    }

    /// Like `call`, but fail after `after` modifying statements have run.
    pub fn call_failing(&mut self, name: &str, args: &[SqlValue], after: usize) -> Result<CallOutcome, RuntimeError> {
        self.call_inner(name, args, Some(after))
    }

    /// Number of modifying statements a procedure runs when it succeeds.
    pub fn modify_count(&self, name: &str) -> Option<usize> {
        self.procs
            .get(name)
            .map(|p| p.steps.iter().filter(|s| matches!(s, RtStep::Modify(_))).count())
    }

    fn call_inner(&mut self, name: &str, args: &[SqlValue], fail_after: Option<usize>) -> Result<CallOutcome, RuntimeError> {
        let proc = self
            .procs
            .get(name)
            .ok_or_else(|| RuntimeError::UnknownProcedure(name.to_string()))?
            .clone();
        if proc.params.len() != args.len() {
            return Err(RuntimeError::Arity {
                name: name.to_string(),
                expected: proc.params.len(),
                got: args.len(),
            });
        }
        self.conn.execute_batch("SAVEPOINT ubdb_call")?;
        let result = self.run_steps(&proc, args, fail_after);
        match &result {
            Ok(CallOutcome::Rejected { .. }) | Err(_) => {
                self.conn.execute_batch("ROLLBACK TO ubdb_call; RELEASE ubdb_call")?;
            }
            Ok(_) => self.conn.execute_batch("RELEASE ubdb_call")?,
        }
        result
    }

    fn prepare_bound<'c>(&'c self, sql: &str, proc: &RtProc, args: &[SqlValue]) -> Result<rusqlite::Statement<'c>, RuntimeError> {
        let sql = sqlite_dialect(&bind_params(sql, &proc.params));
        let mut stmt = self.conn.prepare(&sql)?;
        let n = stmt.parameter_count();
        for (k, a) in args.iter().enumerate().take(n) {
            stmt.raw_bind_parameter(k + 1, a)?;
        }
        Ok(stmt)
    }

    fn run_steps(&self, proc: &RtProc, args: &[SqlValue], fail_after: Option<usize>) -> Result<CallOutcome, RuntimeError> {
        let mut done = 0;
        let mut rows_out = None;
        for step in &proc.steps {
            match step {
                RtStep::Check { label, condition } => {
                    let sql = format!("SELECT CASE WHEN ({condition}) THEN 1 ELSE 0 END");
                    let mut stmt = self.prepare_bound(&sql, proc, args)?;
                    let mut rows = stmt.raw_query();
                    let ok: i64 = rows.next()?.map(|r| r.get(0)).transpose()?.unwrap_or(0);
                    if ok != 1 {
                        return Ok(CallOutcome::Rejected { label: label.clone() });
                    }
                }
                RtStep::Modify(sql) => {
                    if fail_after == Some(done) {
                        return Err(RuntimeError::Injected(done));
                    }
                    let mut stmt = self.prepare_bound(sql, proc, args)?;
                    stmt.raw_execute()?;
                    done += 1;
                }
                RtStep::Return(sql) => {
                    let mut stmt = self.prepare_bound(sql, proc, args)?;
                    let width = stmt.column_count();
                    let mut rows = stmt.raw_query();
                    let mut out = Vec::new();
                    while let Some(r) = rows.next()? {
                        out.push((0..width).map(|i| r.get::<_, SqlValue>(i)).collect::<Result<Vec<_>, _>>()?);
                    }
                    rows_out = Some(out);
                }
            }
        }
        if fail_after == Some(done) && done > 0 {
            return Err(RuntimeError::Injected(done));
        }
        Ok(rows_out.map(CallOutcome::Rows).unwrap_or(CallOutcome::Done))
    }

    fn rows(&self, sql: &str, width: usize) -> Result<Vec<Vec<SqlValue>>, RuntimeError> {
        let mut stmt = self.conn.prepare(sql)?;
        let mut rows = stmt.raw_query();
        let mut out = Vec::new();
        while let Some(r) = rows.next()? {
            out.push((0..width).map(|i| r.get::<_, SqlValue>(i)).collect::<Result<Vec<_>, _>>()?);
        }
        Ok(out)
    }

    fn class_carrier(&self, class: &str) -> Result<&str, RuntimeError> {
        match self.vars.get(class) {
            Some(VarMap::Class { carrier, .. }) => Ok(carrier),
            _ => Err(RuntimeError::Decode(format!("class {class}"))),
        }
    }

    fn end_carrier<'a>(&'a self, t: &'a Target) -> Result<&'a str, RuntimeError> {
        match t {
            Target::Class(c) => self.class_carrier(c),
            Target::Value(c) => Ok(c),
        }
    }

    /// Every model variable read back from the tables, decoded to values.
    pub fn state(&self, codec: &AtomCodec) -> Result<BTreeMap<String, Value>, RuntimeError> {
        use super::schema::q;
        let mut out = BTreeMap::new();
        for (name, map) in &self.vars {
            let v = match map {
                VarMap::Class { table, key, carrier, .. } => {
                    let rows = self.rows(&format!("SELECT {} FROM {}", q(key), q(table)), 1)?;
                    Value::set_from(
                        rows.iter()
                            .map(|r| codec.decode(carrier, &r[0]))
                            .collect::<Result<_, _>>()?,
                    )
                }
                VarMap::Column {
                    table, key, column, target, ..
                } => {
                    let src = self.class_carrier(table)?;
                    let tgt = self.end_carrier(target)?;
                    let rows = self.rows(
                        &format!(
                            "SELECT {}, {} FROM {} WHERE {} IS NOT NULL",
                            q(key),
                            q(column),
                            q(table),
                            q(column)
                        ),
                        2,
                    )?;
                    pairs(codec, src, tgt, &rows)?
                }
                VarMap::Join {
                    table,
                    left,
                    right,
                    source,
                    target,
                } => {
                    let rows = self.rows(&format!("SELECT {}, {} FROM {}", q(left), q(right), q(table)), 2)?;
                    pairs(codec, self.end_carrier(source)?, self.end_carrier(target)?, &rows)?
                }
            };
            out.insert(name.clone(), v);
        }
        Ok(out)
    }
}

fn pairs(codec: &AtomCodec, src: &str, tgt: &str, rows: &[Vec<SqlValue>]) -> Result<Value, RuntimeError> {
    Ok(Value::set_from(
        rows.iter()
            .map(|r| Ok(Value::pair(codec.decode(src, &r[0])?, codec.decode(tgt, &r[1])?)))
            .collect::<Result<_, RuntimeError>>()?,
    ))
}

/// Maps model atoms to column values: class carriers get surrogate ids in
/// order of first use, other carriers the encodings in the manifest.
pub struct AtomCodec {
    universe: Arc<Universe>,
    kinds: Vec<CarrierKind>,
    ids: HashMap<Atom, i64>,
    back: HashMap<(u16, i64), Atom>,
    next: HashMap<u16, i64>,
}

impl AtomCodec {
    pub fn new(universe: Arc<Universe>, carriers: &BTreeMap<String, CarrierPolicy>) -> AtomCodec {
        let kinds = universe
            .carriers
            .iter()
            .map(|c| match carriers.get(c).map(|p| p.representation) {
                Some("surrogate-id") => CarrierKind::Ids,
                Some("date") => CarrierKind::Date,
                _ => CarrierKind::Text,
            })
            .collect();
        let mut codec = AtomCodec {
            universe,
            kinds,
            ids: HashMap::new(),
            back: HashMap::new(),
            next: HashMap::new(),
        };
        // Constants are written into the script as literals 1, 2, ...
        let mut pinned: Vec<Atom> = codec
            .universe
            .constants
            .values()
            .filter_map(|v| match v {
                Value::Atom(a) if codec.kinds[a.set as usize] == CarrierKind::Ids => Some(*a),
                _ => None,
            })
            .collect();
        pinned.sort();
        for a in pinned {
            let id = a.index as i64 + 1;
            codec.ids.insert(a, id);
            codec.back.insert((a.set, id), a);
            let n = codec.next.entry(a.set).or_insert(0);
            *n = (*n).max(id);
        }
        codec
    }

    pub fn encode(&mut self, v: &Value) -> Result<SqlValue, RuntimeError> {
        match v {
            Value::Bool(b) => Ok(SqlValue::Integer(*b as i64)),
            Value::Atom(a) => Ok(match self.kinds[a.set as usize] {
                CarrierKind::Ids => {
                    if let Some(id) = self.ids.get(a) {
                        return Ok(SqlValue::Integer(*id));
                    }
                    let n = self.next.entry(a.set).or_insert(0);
                    *n += 1;
                    let id = *n;
                    self.ids.insert(*a, id);
                    self.back.insert((a.set, id), *a);
                    SqlValue::Integer(id)
                }
                CarrierKind::Text => SqlValue::Text(self.universe.display(v).to_string()),
                CarrierKind::Date => SqlValue::Text(date_of(a.index as usize)),
            }),
            _ => Err(RuntimeError::Decode(format!(
                "{} is not a single value",
                self.universe.display(v)
            ))),
        }
    }

    pub fn decode(&self, carrier: &str, v: &SqlValue) -> Result<Value, RuntimeError> {
        let set = self
            .universe
            .id(carrier)
            .ok_or_else(|| RuntimeError::Decode(format!("carrier {carrier}")))?;
        let bad = || RuntimeError::Decode(format!("{v:?} as {carrier}"));
        match (self.kinds[set as usize], v) {
            (CarrierKind::Ids, SqlValue::Integer(id)) => {
                self.back.get(&(set, *id)).map(|a| Value::Atom(*a)).ok_or_else(bad)
            }
            (CarrierKind::Text, SqlValue::Text(s)) => match self.universe.parse_atom(s) {
                Some(a @ Value::Atom(Atom { set: s2, .. })) if s2 == set => Ok(a),
                _ => Err(bad()),
            },
            (CarrierKind::Date, SqlValue::Text(s)) => {
                let i = index_of_date(s).ok_or_else(bad)?;
                (i < self.universe.bounds[set as usize] as usize)
                    .then(|| Value::atom(set, i as u16))
                    .ok_or_else(bad)
            }
            _ => Err(bad()),
        }
    }
}
