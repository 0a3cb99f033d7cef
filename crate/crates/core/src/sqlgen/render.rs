use std::fmt::Write;

use super::schema::q;
use super::{Manifest, ProcKind, ProcedureDef, SqlScript, Step, TableDef};

fn render_table(t: &TableDef) -> String {
    let mut lines = Vec::new();
    for c in &t.columns {
        let mut line = format!("  {} {}", q(&c.name), c.sql_type);
        if !c.nullable {
            line.push_str(" NOT NULL");
        }
        if c.unique && t.primary_key.as_deref() != Some(c.name.as_str()) {
            line.push_str(" UNIQUE");
        }
        lines.push(line);
    }
    if let Some(pk) = &t.primary_key {
        lines.push(format!("  PRIMARY KEY ({})", q(pk)));
    }
    for (col, table, refcol) in &t.foreign_keys {
        lines.push(format!("  FOREIGN KEY ({}) REFERENCES {} ({})", q(col), q(table), q(refcol)));
    }
    for u in &t.unique_constraints {
        let cols: Vec<String> = u.iter().map(|c| q(c)).collect();
        lines.push(format!("  UNIQUE ({})", cols.join(", ")));
    }
    for c in &t.checks {
        lines.push(format!("  CHECK ({c})"));
    }
    format!("CREATE TABLE {} (\n{}\n);\n", q(&t.name), lines.join(",\n"))
}

/// `kind name(param CARRIER, ...) -> outputs` as recorded in the manifest.
pub fn signature(p: &ProcedureDef) -> String {
    let kind = match p.kind {
        ProcKind::Constructor => "constructor",
        ProcKind::Destructor => "destructor",
        ProcKind::Normal => "normal",
        ProcKind::Query => "query",
    };
    let params: Vec<String> = p.params.iter().map(|x| format!("{} {}", x.name, x.carrier)).collect();
    let mut s = format!("{kind} {}({})", p.name, params.join(", "));
    if !p.outputs.is_empty() {
        let outs: Vec<String> = p
            .outputs
            .iter()
            .map(|(n, _, c, set)| if *set { format!("{n} POW({c})") } else { format!("{n} {c}") })
            .collect();
        let _ = write!(s, " -> {}", outs.join(", "));
    }
    if p.historical_move {
        s.push_str(" [historical move]");
    }
    s
}

/// One statement per line; the checks come first.
pub fn render_body(p: &ProcedureDef) -> String {
    let mut out = String::new();
    let params: Vec<String> = p.params.iter().map(|x| format!("{}{} {}", if p.outputs.is_empty() { "IN " } else { "" }, x.sql_name, x.sql_type)).collect();
    let modifies = p.steps.iter().any(|s| matches!(s, Step::Modify { .. }));
    if p.outputs.is_empty() {
        let _ = writeln!(out, "CREATE PROCEDURE {} ({})", p.name, params.join(", "));
    } else {
        let cols: Vec<String> = p.outputs.iter().map(|(n, t, ..)| format!("{} {t}", q(n))).collect();
        let _ = writeln!(out, "CREATE FUNCTION {} ({})", p.name, params.join(", "));
        let _ = writeln!(out, "RETURNS TABLE ({})", cols.join(", "));
    }
    out.push_str(if modifies { "MODIFIES SQL DATA\n" } else { "READS SQL DATA\n" });
    out.push_str("BEGIN ATOMIC\n");
    for s in &p.steps {
        match s {
            Step::Check { label, condition } => {
                let _ = writeln!(out, "  -- {label}");
                let _ = writeln!(out, "  IF ({condition}) IS NOT TRUE THEN");
                let _ = writeln!(
                    out,
                    "    SIGNAL SQLSTATE '45000' SET MESSAGE_TEXT = '{}: {label}';",
                    p.name
                );
                out.push_str("  END IF;\n");
            }
            Step::Modify { sql } => {
                let _ = writeln!(out, "  {sql};");
            }
            Step::Return { sql } => {
                let _ = writeln!(out, "  RETURN TABLE ({sql});");
            }
        }
    }
    out.push_str("END;\n");
    out
}

pub fn render_script(s: &SqlScript) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "-- Schema and procedures for machine {} ({})", s.machine, s.dialect);
    out.push_str("-- Atom encodings and variable mapping: see the accompanying manifest.\n\n");
    for t in &s.tables {
        out.push_str(&render_table(t));
        out.push('\n');
    }
    for p in &s.procedures {
        out.push_str(&render_body(p));
        out.push('\n');
    }
    out
}

pub fn render_manifest(m: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}
