use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{translate, CarrierPolicy, ColumnDef, SqlGenError, TableDef};
use crate::ast::{Expr, FunctionKind, Logic, Quantifier, RelOp, VarTyping};
use crate::resolve::{ResolvedChain, ResolvedMachine};

/// What a relation end refers to: a class table, or values of a carrier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum Target {
    Class(String),
    Value(String),
}

/// Where a model variable lives in the database.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VarMap {
    Class {
        table: String,
        key: String,
        parent: Option<String>,
        carrier: String,
    },
    Column {
        table: String,
        key: String,
        column: String,
        target: Target,
        total: bool,
        injective: bool,
    },
    Join {
        table: String,
        left: String,
        right: String,
        source: Target,
        target: Target,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarrierKind {
    /// Class instances: surrogate integer ids.
    Ids,
    Text,
    Date,
}

const RESERVED: &[&str] = &[
    "ALL", "ALTER", "AND", "ANY", "AS", "ASC", "BEGIN", "BETWEEN", "BY", "CASE", "CHECK", "COLUMN", "CONSTRAINT",
    "CREATE", "CROSS", "CURRENT", "DATE", "DEFAULT", "DELETE", "DESC", "DISTINCT", "DROP", "ELSE", "END", "EXCEPT",
    "EXISTS", "FALSE", "FOR", "FOREIGN", "FROM", "FULL", "FUNCTION", "GROUP", "HAVING", "IF", "IN", "INDEX", "INNER",
    "INSERT", "INTERSECT", "INTO", "IS", "JOIN", "KEY", "LEFT", "LIKE", "LIMIT", "NATURAL", "NOT", "NULL", "OF",
    "ON", "OR", "ORDER", "OUTER", "PRIMARY", "PROCEDURE", "REFERENCES", "RETURN", "RIGHT", "ROW", "SELECT", "SET",
    "TABLE", "THEN", "TO", "TRUE", "UNION", "UNIQUE", "UPDATE", "USER", "USING", "VALUE", "VALUES", "WHEN", "WHERE",
    "WITH",
];

/// An identifier, double-quoted when it is a reserved word.
pub fn q(name: &str) -> String {
    if RESERVED.iter().any(|r| r.eq_ignore_ascii_case(name)) {
        format!("\"{name}\"")
    } else {
        name.to_string()
    }
}

pub fn key_of(class: &str) -> String {
    format!("{class}_id")
}

#[derive(Clone, Debug)]
pub struct Schema {
    pub vars: BTreeMap<String, VarMap>,
    pub carriers: BTreeMap<String, CarrierKind>,
    /// Tables in creation order: referenced before referencing.
    pub table_order: Vec<String>,
    pub composite_uniques: BTreeMap<String, Vec<Vec<String>>>,
    pub checks: BTreeMap<String, Vec<String>>,
    pub notes: Vec<String>,
    pub param_prefix: String,
    /// Model variable each table comes from, in declaration order.
    pub table_vars: Vec<(String, String)>,
}

impl Schema {
    pub fn build(chain: &ResolvedChain, m: &ResolvedMachine) -> Result<Schema, SqlGenError> {
        let class_carriers = chain.class_carriers();
        let carriers: BTreeMap<String, CarrierKind> = m
            .carriers
            .iter()
            .map(|c| {
                let k = if class_carriers.contains(c) {
                    CarrierKind::Ids
                } else if c.to_ascii_uppercase().contains("DATE") {
                    CarrierKind::Date
                } else {
                    CarrierKind::Text
                };
                (c.clone(), k)
            })
            .collect();

        let target = |t: &str| -> Target {
            if m.is_class(t) {
                Target::Class(t.to_string())
            } else {
                Target::Value(t.to_string())
            }
        };
        let mut vars = BTreeMap::new();
        let mut table_vars = Vec::new();
        for v in &m.variables {
            let map = match &v.typing {
                VarTyping::Class { parent, kind: _ } => {
                    table_vars.push((v.name.clone(), v.name.clone()));
                    VarMap::Class {
                        table: v.name.clone(),
                        key: key_of(&v.name),
                        parent: m.is_class(parent).then(|| parent.clone()),
                        carrier: m
                            .carrier_of(&v.name)
                            .ok_or_else(|| SqlGenError::UnannotatedClass(v.name.clone()))?,
                    }
                }
                VarTyping::Relation { source, target: t, kind } => {
                    let (src, tgt) = (target(source), target(t));
                    match (kind.kind, &src) {
                        (FunctionKind::Total | FunctionKind::Partial, Target::Class(c)) => VarMap::Column {
                            table: c.clone(),
                            key: key_of(c),
                            column: match &tgt {
                                Target::Class(_) => key_of(&v.name),
                                Target::Value(_) => v.name.clone(),
                            },
                            target: tgt,
                            total: kind.kind == FunctionKind::Total,
                            injective: kind.injective,
                        },
                        _ => {
                            let end = |t: &Target| match t {
                                Target::Class(c) => key_of(c),
                                Target::Value(c) => c.to_ascii_lowercase(),
                            };
                            let (mut left, mut right) = (end(&src), end(&tgt));
                            if left == right {
                                left = format!("source_{left}");
                                right = format!("target_{right}");
                            }
                            table_vars.push((v.name.clone(), v.name.clone()));
                            VarMap::Join {
                                table: v.name.clone(),
                                left,
                                right,
                                source: src,
                                target: tgt,
                            }
                        }
                    }
                }
            };
            vars.insert(v.name.clone(), map);
        }

        let mut names: BTreeSet<String> = BTreeSet::new();
        for map in vars.values() {
            match map {
                VarMap::Class { table, key, .. } => {
                    names.insert(table.clone());
                    names.insert(key.clone());
                }
                VarMap::Column { column, .. } => {
                    names.insert(column.clone());
                }
                VarMap::Join { table, left, right, .. } => {
                    names.extend([table.clone(), left.clone(), right.clone()]);
                }
            }
        }
        let param_prefix = ["p_", "arg_", "in_", "prm_"]
            .into_iter()
            .find(|p| !names.iter().any(|n| n.starts_with(p)))
            .unwrap_or("ubdb_arg_")
            .to_string();

        let mut schema = Schema {
            vars,
            carriers,
            table_order: Vec::new(),
            composite_uniques: BTreeMap::new(),
            checks: BTreeMap::new(),
            notes: Vec::new(),
            param_prefix,
            table_vars,
        };
        schema.table_order = schema.topological_order();

        for inv in m.invariants.iter().filter(|i| !i.implicit && !i.gluing) {
            if let Some((table, cols)) = schema.composite_unique(&inv.pred) {
                schema.composite_uniques.entry(table).or_default().push(cols);
                continue;
            }
            if let Some((table, check)) = translate::row_check(m, &schema, &inv.pred) {
                schema.checks.entry(table).or_default().push(check);
                continue;
            }
            schema.notes.push(format!(
                "invariant @{} ({}) is not expressible as a column or table constraint; it is maintained by procedure guards",
                inv.label, inv.origin
            ));
        }
        Ok(schema)
    }

    pub fn class(&self, name: &str) -> Option<(&str, &str)> {
        match self.vars.get(name) {
            Some(VarMap::Class { table, key, .. }) => Some((table, key)),
            _ => None,
        }
    }

    pub fn carrier_kind(&self, carrier: &str) -> CarrierKind {
        self.carriers.get(carrier).copied().unwrap_or(CarrierKind::Text)
    }

    pub fn sql_type(&self, carrier: &str) -> &'static str {
        match self.carrier_kind(carrier) {
            CarrierKind::Ids => "INTEGER",
            CarrierKind::Text => "VARCHAR(255)",
            CarrierKind::Date => "DATE",
        }
    }

    pub fn target_sql_type(&self, t: &Target) -> &'static str {
        match t {
            Target::Class(_) => "INTEGER",
            Target::Value(c) => self.sql_type(c),
        }
    }

    pub fn carrier_policies(&self) -> BTreeMap<String, CarrierPolicy> {
        self.carriers
            .iter()
            .map(|(c, k)| {
                let p = match k {
                    CarrierKind::Ids => CarrierPolicy {
                        representation: "surrogate-id",
                        sql_type: "INTEGER".into(),
                        encoding: "atoms take integer ids 1, 2, ... in order of first use".into(),
                    },
                    CarrierKind::Text => CarrierPolicy {
                        representation: "text",
                        sql_type: "VARCHAR(255)".into(),
                        encoding: format!("atom k is the string '{c}.k'"),
                    },
                    CarrierKind::Date => CarrierPolicy {
                        representation: "date",
                        sql_type: "DATE".into(),
                        encoding: "atom k is the date 2000-01-01 plus k-1 days".into(),
                    },
                };
                (c.clone(), p)
            })
            .collect()
    }

    /// Tables a table references, with whether the reference may be NULL.
    fn references(&self, table: &str) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        for map in self.vars.values() {
            match map {
                VarMap::Class { table: t, parent: Some(p), .. } if t == table => out.push((p.clone(), false)),
                VarMap::Column {
                    table: t,
                    target: Target::Class(c),
                    total,
                    ..
                } if t == table => out.push((c.clone(), !total)),
                VarMap::Join { table: t, source, target, .. } if t == table => {
                    for end in [source, target] {
                        if let Target::Class(c) = end {
                            out.push((c.clone(), false));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Declaration order, adjusted so referenced tables come first. Cycles
    /// are broken at nullable references (a feasible model has one).
    fn topological_order(&self) -> Vec<String> {
        let tables: Vec<String> = self.table_vars.iter().map(|(t, _)| t.clone()).collect();
        let refs: BTreeMap<&String, Vec<(String, bool)>> =
            tables.iter().map(|t| (t, self.references(t))).collect();
        let mut placed: Vec<String> = Vec::new();
        let mut ignore_nullable = false;
        while placed.len() < tables.len() {
            let ready = tables.iter().find(|t| {
                !placed.contains(t)
                    && refs[t].iter().all(|(r, nullable)| {
                        r == *t || placed.contains(r) || (ignore_nullable && *nullable)
                    })
            });
            match ready {
                Some(t) => {
                    placed.push(t.clone());
                    ignore_nullable = false;
                }
                None if !ignore_nullable => ignore_nullable = true,
                None => {
                    let t = tables.iter().find(|t| !placed.contains(t)).expect("unplaced table");
                    placed.push(t.clone());
                }
            }
        }
        placed
    }

    pub fn rank(&self, table: &str) -> usize {
        self.table_order.iter().position(|t| t == table).unwrap_or(usize::MAX)
    }

    /// `!a, b, c1, c2 . c1|->a : F1 & c2|->a : F1 & c1|->b : F2 & c2|->b : F2 => c1 = c2`
    /// over two function columns of one table.
    fn composite_unique(&self, pred: &Expr) -> Option<(String, Vec<String>)> {
        let Expr::Quant(Quantifier::ForAll, _, body) = pred else { return None };
        let Expr::Logic(Logic::Implies, lhs, rhs) = &**body else { return None };
        let Expr::Rel(RelOp::Eq, c1, c2) = &**rhs else { return None };
        let (Expr::Ident(c1), Expr::Ident(c2)) = (&**c1, &**c2) else { return None };
        let mut funcs: Vec<(String, String, String)> = Vec::new();
        for c in crate::patterns::conjuncts(lhs) {
            let Expr::Rel(RelOp::In, pair, f) = c else { return None };
            let (Expr::Maplet(x, y), Expr::Ident(f)) = (&**pair, &**f) else { return None };
            let (Expr::Ident(x), Expr::Ident(y)) = (&**x, &**y) else { return None };
            funcs.push((x.clone(), y.clone(), f.clone()));
        }
        let distinct: BTreeSet<&String> = funcs.iter().map(|(_, _, f)| f).collect();
        if funcs.len() != 4 || distinct.len() != 2 {
            return None;
        }
        for (x, _, _) in &funcs {
            if x != c1 && x != c2 {
                return None;
            }
        }
        let mut table = None;
        let mut cols = Vec::new();
        for f in distinct {
            let VarMap::Column { table: t, column, .. } = self.vars.get(f)? else { return None };
            if table.get_or_insert(t.clone()) != t {
                return None;
            }
            // Both instances must share the value of each function.
            let ys: BTreeSet<&String> = funcs.iter().filter(|(_, _, g)| g == f).map(|(_, y, _)| y).collect();
            if ys.len() != 1 {
                return None;
            }
            cols.push(column.clone());
        }
        Some((table?, cols))
    }
}

pub fn generate_ddl(schema: &Schema, m: &ResolvedMachine) -> Vec<TableDef> {
    let _ = m;
    let mut out = Vec::new();
    for table in &schema.table_order {
        let var = &schema
            .table_vars
            .iter()
            .find(|(t, _)| t == table)
            .expect("table variable")
            .1;
        let mut t = TableDef {
            name: table.clone(),
            columns: Vec::new(),
            primary_key: None,
            foreign_keys: Vec::new(),
            unique_constraints: Vec::new(),
            checks: schema.checks.get(table).cloned().unwrap_or_default(),
        };
        match &schema.vars[var] {
            VarMap::Class { key, parent, .. } => {
                t.columns.push(ColumnDef {
                    name: key.clone(),
                    sql_type: "INTEGER".into(),
                    nullable: false,
                    unique: true,
                });
                t.primary_key = Some(key.clone());
                if let Some(p) = parent {
                    t.foreign_keys.push((key.clone(), p.clone(), key_of(p)));
                }
                // Columns in variable declaration order.
                for v in &m.variables {
                    if let Some(VarMap::Column {
                        table: ct,
                        column,
                        target,
                        total,
                        injective,
                        ..
                    }) = schema.vars.get(&v.name)
                    {
                        if ct != table {
                            continue;
                        }
                        t.columns.push(ColumnDef {
                            name: column.clone(),
                            sql_type: schema.target_sql_type(target).into(),
                            nullable: !total,
                            unique: *injective,
                        });
                        if let Target::Class(c) = target {
                            t.foreign_keys.push((column.clone(), c.clone(), key_of(c)));
                        }
                    }
                }
                if let Some(u) = schema.composite_uniques.get(table) {
                    t.unique_constraints.extend(u.iter().cloned());
                }
            }
            VarMap::Join {
                left, right, source, target, ..
            } => {
                for (col, end) in [(left, source), (right, target)] {
                    t.columns.push(ColumnDef {
                        name: col.clone(),
                        sql_type: schema.target_sql_type(end).into(),
                        nullable: false,
                        unique: false,
                    });
                    if let Target::Class(c) = end {
                        t.foreign_keys.push((col.clone(), c.clone(), key_of(c)));
                    }
                }
                t.unique_constraints.push(vec![left.clone(), right.clone()]);
            }
            VarMap::Column { .. } => unreachable!("columns are not tables"),
        }
        out.push(t);
    }
    out
}
