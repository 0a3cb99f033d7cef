//! Negative tests derived from the generated tables: every NOT NULL column,
//! UNIQUE column and composite UNIQUE gets an insert that must be refused,
//! paired with a control insert that differs only in not violating it.
//!
//! Probes exercise one table at a time, so they run with foreign keys off;
//! referential integrity is covered by the differential walks instead.

use serde::Serialize;

use super::runtime::{Database, RuntimeError};
use super::schema::q;
use super::{render_script, SqlScript, TableDef};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Constraint {
    NotNull { column: String },
    Unique { column: String },
    CompositeUnique { columns: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Probe {
    pub table: String,
    pub constraint: Constraint,
    /// Rows inserted first; all must succeed.
    pub setup: Vec<String>,
    /// Must succeed after `setup`.
    pub control: String,
    /// Must fail after `setup`.
    pub violation: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeOutcome {
    pub probe: Probe,
    pub control_ok: bool,
    pub violation_refused: bool,
    /// Why the violating insert was refused, or why the control failed.
    pub detail: String,
}

impl ProbeOutcome {
    pub fn passed(&self) -> bool {
        self.control_ok && self.violation_refused
    }
}

/// A literal of `sql_type` that differs for every `n`.
fn literal(sql_type: &str, n: usize) -> String {
    match sql_type {
        "INTEGER" => n.to_string(),
        "DATE" => format!("DATE '{}'", super::date_of(n)),
        "BOOLEAN" => (if n.is_multiple_of(2) { "FALSE" } else { "TRUE" }).into(),
        _ => format!("'v{n}'"),
    }
}

fn insert(t: &TableDef, row: &[String]) -> String {
    let cols: Vec<String> = t.columns.iter().map(|c| q(&c.name)).collect();
    format!("INSERT INTO {} ({}) VALUES ({})", q(&t.name), cols.join(", "), row.join(", "))
}

fn row(t: &TableDef, n: usize) -> Vec<String> {
    t.columns.iter().map(|c| literal(&c.sql_type, n)).collect()
}

/// Row `n` with the columns in `same` copied from row `m`.
fn row_sharing(t: &TableDef, n: usize, m: usize, same: &[String]) -> Vec<String> {
    t.columns
        .iter()
        .map(|c| literal(&c.sql_type, if same.contains(&c.name) { m } else { n }))
        .collect()
}

pub fn constraint_probes(script: &SqlScript) -> Vec<Probe> {
    let mut out = Vec::new();
    for t in &script.tables {
        for (k, c) in t.columns.iter().enumerate() {
            // Keys are never model attributes (and SQLite fills a NULL
            // INTEGER PRIMARY KEY with a fresh rowid instead of refusing it).
            let is_key = t.primary_key.as_deref() == Some(c.name.as_str());
            if !c.nullable && !is_key {
                let mut bad = row(t, 1);
                bad[k] = "NULL".into();
                out.push(Probe {
                    table: t.name.clone(),
                    constraint: Constraint::NotNull { column: c.name.clone() },
                    setup: vec![],
                    control: insert(t, &row(t, 1)),
                    violation: insert(t, &bad),
                });
            }
            if c.unique && !is_key {
                out.push(unique_probe(t, Constraint::Unique { column: c.name.clone() }, std::slice::from_ref(&c.name)));
            }
        }
        for cols in &t.unique_constraints {
            out.push(unique_probe(t, Constraint::CompositeUnique { columns: cols.clone() }, cols));
        }
    }
    out
}

fn unique_probe(t: &TableDef, constraint: Constraint, cols: &[String]) -> Probe {
    // The control shares all but the last constrained column, so it also
    // shows that a partial match is accepted.
    let partial = &cols[..cols.len() - 1];
    Probe {
        table: t.name.clone(),
        constraint,
        setup: vec![insert(t, &row(t, 1))],
        control: insert(t, &row_sharing(t, 2, 1, partial)),
        violation: insert(t, &row_sharing(t, 3, 1, cols)),
    }
}

/// Run each probe in isolation against a fresh load of the script.
pub fn run_probes(script: &SqlScript, probes: &[Probe]) -> Result<Vec<ProbeOutcome>, RuntimeError> {
    let db = Database::open(&render_script(script), &script.manifest.variables)?;
    let conn = db.connection();
    conn.execute_batch("PRAGMA foreign_keys = OFF;")?;
    let exec = |sql: &str| conn.execute_batch(&sql.replace("DATE '", "'"));
    let mut out = Vec::new();
    for p in probes {
        conn.execute_batch("SAVEPOINT probe")?;
        let mut detail = String::new();
        let setup_ok = p.setup.iter().all(|s| match exec(s) {
            Ok(()) => true,
            Err(e) => {
                detail = format!("setup failed: {e}");
                false
            }
        });
        let control_ok = setup_ok
            && match exec(&p.control) {
                Ok(()) => true,
                Err(e) => {
                    detail = format!("control failed: {e}");
                    false
                }
            };
        // The control row is removed again so only the constraint under test
        // can refuse the violation.
        conn.execute_batch("ROLLBACK TO probe")?;
        for s in &p.setup {
            let _ = exec(s);
        }
        let violation_refused = match exec(&p.violation) {
            Ok(()) => false,
            Err(e) => {
                if control_ok {
                    detail = e.to_string();
                }
                true
            }
        };
        conn.execute_batch("ROLLBACK TO probe; RELEASE probe")?;
        out.push(ProbeOutcome {
            probe: p.clone(),
            control_ok,
            violation_refused,
            detail,
        });
    }
    Ok(out)
}
