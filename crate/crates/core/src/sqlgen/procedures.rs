use std::cell::Cell;
use std::collections::BTreeSet;

use super::schema::{q, Schema, VarMap};
use super::translate::{SetSql, Tr};
use super::{ProcParam, ProcedureDef, SqlGenError, Step};
use crate::ast::{BinOp, ClassKind, EventKind, Expr, RelOp};
use crate::resolve::{ResolvedChain, ResolvedEvent, ResolvedMachine};

pub fn generate_procedures(
    chain: &ResolvedChain,
    m: &ResolvedMachine,
    schema: &Schema,
) -> Result<Vec<ProcedureDef>, SqlGenError> {
    m.events.iter().map(|ev| procedure(chain, m, schema, ev)).collect()
}

/// Carrier of a parameter's values and whether the parameter is a set.
fn param_carrier(m: &ResolvedMachine, typing: &Expr) -> Option<(String, bool)> {
    match typing {
        Expr::Ident(n) if m.carriers.contains(n) => Some((n.clone(), false)),
        Expr::Ident(n) => m.carrier_of(n).map(|c| (c, false)),
        Expr::Pow(inner) => match param_carrier(m, inner)? {
            (c, false) => Some((c, true)),
            _ => None,
        },
        _ => None,
    }
}

/// Query outputs: parameters defined by a guard conjunct `p = E`. Returns
/// the definitions and the guards with those conjuncts removed.
type Labelled = Vec<(String, Expr)>;

fn split_outputs(ev: &ResolvedEvent) -> (Labelled, Labelled) {
    let mut defs: Vec<(String, Expr)> = Vec::new();
    let mut guards = Vec::new();
    for g in &ev.guards {
        let mut rest = Vec::new();
        for c in crate::patterns::conjuncts(&g.pred) {
            let def = match c {
                Expr::Rel(RelOp::Eq, a, b) if ev.kind == EventKind::Query => match (&**a, &**b) {
                    (Expr::Ident(p), e) | (e, Expr::Ident(p))
                        if ev.params.iter().any(|x| &x.name == p)
                            && !e.mentions(p)
                            && !defs.iter().any(|(d, _)| d == p || e.mentions(d)) =>
                    {
                        Some((p.clone(), e.clone()))
                    }
                    _ => None,
                },
                _ => None,
            };
            match def {
                Some(d) => defs.push(d),
                None => rest.push(c.clone()),
            }
        }
        if !rest.is_empty() {
            guards.push((g.label.clone(), Expr::conjoin(rest)));
        }
    }
    (defs, guards)
}

struct Insert {
    table: String,
    key: String,
    /// The inserted set as written in the model.
    set: Expr,
    rows: SetSql,
    columns: Vec<(String, Expr)>,
    label: String,
}

struct Statement {
    sql: String,
    writes: String,
    reads: BTreeSet<String>,
}

fn procedure(
    chain: &ResolvedChain,
    m: &ResolvedMachine,
    schema: &Schema,
    ev: &ResolvedEvent,
) -> Result<ProcedureDef, SqlGenError> {
    let guard_err = |label: &str, detail: String| SqlGenError::UnsupportedGuard {
        event: ev.name.clone(),
        label: label.to_string(),
        detail,
    };
    let action_err = |label: &str, detail: String| SqlGenError::UnsupportedAction {
        event: ev.name.clone(),
        label: label.to_string(),
        detail,
    };

    let (outputs_def, guards) = split_outputs(ev);
    let alias = Cell::new(0);
    let tr = Tr::new(chain, m, schema, &alias);

    let mut params = Vec::new();
    let mut outputs = Vec::new();
    for p in &ev.params {
        let (carrier, is_set) = param_carrier(m, &p.typing)
            .ok_or_else(|| guard_err("params", format!("parameter '{}' is not typed by a carrier or class", p.name)))?;
        let sql_type = schema.sql_type(&carrier).to_string();
        if outputs_def.iter().any(|(o, _)| o == &p.name) {
            outputs.push((p.name.clone(), sql_type, carrier, is_set));
            continue;
        }
        if is_set {
            return Err(guard_err("params", format!("set-valued input parameter '{}'", p.name)));
        }
        let sql_name = format!("{}{}", schema.param_prefix, p.name);
        tr.bind(&p.name, sql_name.clone());
        params.push(ProcParam {
            name: p.name.clone(),
            sql_name,
            sql_type,
            carrier,
        });
    }

    let mut steps = Vec::new();
    // Parameters typed by a class rather than a carrier are checked first.
    for p in &ev.params {
        if let Expr::Ident(c) = &p.typing {
            if m.is_class(c) && !outputs_def.iter().any(|(o, _)| o == &p.name) {
                let pred = Expr::rel(RelOp::In, Expr::ident(p.name.clone()), p.typing.clone());
                let label = format!("{}_typing", p.name);
                let condition = tr.pred(&pred).map_err(|d| guard_err(&label, d))?;
                steps.push(Step::Check { label, condition });
            }
        }
    }
    for (label, pred) in &guards {
        let mut pred = pred.clone();
        for (o, def) in &outputs_def {
            pred = pred.substitute(o, def);
        }
        let condition = tr.pred(&pred).map_err(|d| guard_err(label, d))?;
        steps.push(Step::Check {
            label: label.clone(),
            condition,
        });
    }

    if ev.kind == EventKind::Query && !outputs.is_empty() {
        if !ev.actions.is_empty() {
            return Err(action_err(&ev.actions[0].label, "query events cannot modify state".into()));
        }
        let sql = query_result(&tr, &outputs_def, &outputs).map_err(|d| guard_err("result", d))?;
        steps.push(Step::Return { sql });
        return Ok(ProcedureDef {
            name: ev.name.clone(),
            kind: ev.kind.into(),
            params,
            outputs,
            steps,
            historical_move: false,
        });
    }

    // Class membership changes first: column assignments may fold into them.
    let mut inserts: Vec<Insert> = Vec::new();
    let mut deletes: Vec<(String, String, Expr, String)> = Vec::new();
    let mut rest = Vec::new();
    for a in &ev.actions {
        let Some(VarMap::Class { table, key, .. }) = schema.vars.get(&a.target) else {
            rest.push(a);
            continue;
        };
        match &a.expr {
            Expr::Bin(op @ (BinOp::Union | BinOp::Minus), l, x) if **l == Expr::Ident(a.target.clone()) => {
                if *op == BinOp::Union {
                    let rows = tr.set(x).map_err(|d| action_err(&a.label, d))?;
                    inserts.push(Insert {
                        table: table.clone(),
                        key: key.clone(),
                        set: (**x).clone(),
                        rows,
                        columns: Vec::new(),
                        label: a.label.clone(),
                    });
                } else {
                    deletes.push((table.clone(), key.clone(), (**x).clone(), a.label.clone()));
                }
            }
            _ => {
                return Err(action_err(
                    &a.label,
                    format!("class '{}' may only gain or lose instances", a.target),
                ))
            }
        }
    }

    let mut updates: Vec<Statement> = Vec::new();
    let mut join_inserts: Vec<Statement> = Vec::new();
    let mut join_deletes: Vec<Statement> = Vec::new();
    for a in rest {
        let err = |d: String| action_err(&a.label, d);
        let own = |e: &Expr| *e == Expr::Ident(a.target.clone());
        tr.reads.borrow_mut().clear();
        match schema.vars.get(&a.target) {
            Some(VarMap::Column {
                table, key, column, ..
            }) => match &a.expr {
                Expr::Bin(op @ (BinOp::Union | BinOp::Override), l, e) if own(l) => {
                    if *op == BinOp::Union {
                        if let Some(ins) = inserts
                            .iter_mut()
                            .find(|i| &i.table == table && covers_insert(&i.set, e))
                        {
                            ins.columns.push((column.clone(), (**e).clone()));
                            continue;
                        }
                    }
                    let sqls = update_values(&tr, table, key, column, e).map_err(err)?;
                    for sql in sqls {
                        updates.push(Statement {
                            sql,
                            writes: table.clone(),
                            reads: tr.reads.borrow().clone(),
                        });
                    }
                }
                Expr::Bin(BinOp::DomSub, s, l) if own(l) => {
                    let deleted: Vec<&Expr> = deletes.iter().filter(|d| &d.0 == table).map(|d| &d.2).collect();
                    if deleted.contains(&&**s) {
                        continue;
                    }
                    let set = tr.set(s).map_err(err)?;
                    let target = format!("{}.{}", q(table), q(key));
                    let mut conds = vec![tr.membership(&target, &set).map_err(err)?];
                    for d in deleted {
                        let ds = tr.set(d).map_err(err)?;
                        conds.push(format!("NOT ({})", tr.membership(&target, &ds).map_err(err)?));
                    }
                    updates.push(Statement {
                        sql: format!("UPDATE {} SET {} = NULL WHERE {}", q(table), q(column), conds.join(" AND ")),
                        writes: table.clone(),
                        reads: tr.reads.borrow().clone(),
                    });
                }
                Expr::Bin(BinOp::Minus, l, e) if own(l) => {
                    let rel = tr.rel(e).map_err(err)?;
                    let cond = tr.pair_membership(
                        &format!("{}.{}", q(table), q(key)),
                        &format!("{}.{}", q(table), q(column)),
                        &rel,
                    );
                    updates.push(Statement {
                        sql: format!("UPDATE {} SET {} = NULL WHERE {cond}", q(table), q(column)),
                        writes: table.clone(),
                        reads: tr.reads.borrow().clone(),
                    });
                }
                _ => return Err(err(format!("unsupported assignment to attribute '{}'", a.target))),
            },
            Some(VarMap::Join { table, left, right, .. }) => {
                let (tl, tr_) = (format!("{}.{}", q(table), q(left)), format!("{}.{}", q(table), q(right)));
                match &a.expr {
                    Expr::Bin(BinOp::Union, l, e) if own(l) => {
                        let sql = if let Expr::Enum(xs) = &**e {
                            let mut out = Vec::new();
                            for x in xs {
                                let Expr::Maplet(x, y) = x else {
                                    return Err(err("expected pairs".into()));
                                };
                                let (x, y) = (tr.scalar(x).map_err(err)?, tr.scalar(y).map_err(err)?);
                                let al = tr.fresh_alias();
                                out.push(format!(
                                    "INSERT INTO {t} ({lc}, {rc}) SELECT {x}, {y} WHERE NOT EXISTS (SELECT 1 FROM {t} {al} WHERE {al}.{lc} = {x} AND {al}.{rc} = {y})",
                                    t = q(table),
                                    lc = q(left),
                                    rc = q(right)
                                ));
                            }
                            out
                        } else {
                            let rel = tr.rel(e).map_err(err)?;
                            let al = tr.fresh_alias();
                            let mut conds = rel.conds.clone();
                            conds.push(format!(
                                "NOT EXISTS (SELECT 1 FROM {t} {al} WHERE {al}.{lc} = {} AND {al}.{rc} = {})",
                                rel.l,
                                rel.r,
                                t = q(table),
                                lc = q(left),
                                rc = q(right)
                            ));
                            vec![format!(
                                "INSERT INTO {} ({}, {}) SELECT DISTINCT {}, {} FROM {} WHERE {}",
                                q(table),
                                q(left),
                                q(right),
                                rel.l,
                                rel.r,
                                rel.from.join(", "),
                                conds.join(" AND ")
                            )]
                        };
                        for sql in sql {
                            join_inserts.push(Statement {
                                sql,
                                writes: table.clone(),
                                reads: tr.reads.borrow().clone(),
                            });
                        }
                    }
                    Expr::Bin(BinOp::Minus, l, e) if own(l) => {
                        let conds = if let Expr::Enum(xs) = &**e {
                            let mut out = Vec::new();
                            for x in xs {
                                let Expr::Maplet(x, y) = x else {
                                    return Err(err("expected pairs".into()));
                                };
                                out.push(format!(
                                    "({tl} = {} AND {tr_} = {})",
                                    tr.scalar(x).map_err(err)?,
                                    tr.scalar(y).map_err(err)?
                                ));
                            }
                            if out.is_empty() {
                                continue;
                            }
                            out.join(" OR ")
                        } else {
                            let rel = tr.rel(e).map_err(err)?;
                            tr.pair_membership(&tl, &tr_, &rel)
                        };
                        join_deletes.push(Statement {
                            sql: format!("DELETE FROM {} WHERE {conds}", q(table)),
                            writes: table.clone(),
                            reads: tr.reads.borrow().clone(),
                        });
                    }
                    Expr::Bin(BinOp::DomSub, s, l) if own(l) => {
                        let set = tr.set(s).map_err(err)?;
                        join_deletes.push(Statement {
                            sql: format!("DELETE FROM {} WHERE {}", q(table), tr.membership(&tl, &set).map_err(err)?),
                            writes: table.clone(),
                            reads: tr.reads.borrow().clone(),
                        });
                    }
                    _ => return Err(err(format!("unsupported assignment to relation '{}'", a.target))),
                }
            }
            _ => return Err(err(format!("'{}' is not a state variable", a.target))),
        }
    }

    // Inserts in dependency order, then updates, then deletes in reverse.
    inserts.sort_by_key(|i| schema.rank(&i.table));
    let mut ordered: Vec<(usize, Statement)> = Vec::new();
    for ins in &inserts {
        tr.reads.borrow_mut().clear();
        let sql = insert_sql(&tr, ins).map_err(|d| action_err(&ins.label, d))?;
        ordered.push((
            0,
            Statement {
                sql,
                writes: ins.table.clone(),
                reads: tr.reads.borrow().clone(),
            },
        ));
    }
    let mut join_inserts: Vec<(usize, Statement)> =
        join_inserts.into_iter().map(|s| (schema.rank(&s.writes), s)).collect();
    join_inserts.sort_by_key(|(r, _)| *r);
    ordered.extend(join_inserts);
    ordered.extend(updates.into_iter().map(|s| (0, s)));
    let mut dels: Vec<(usize, Statement)> = join_deletes.into_iter().map(|s| (schema.rank(&s.writes), s)).collect();
    for (table, key, set, label) in &deletes {
        tr.reads.borrow_mut().clear();
        let rows = tr.set(set).map_err(|d| action_err(label, d))?;
        let cond = tr
            .membership(&format!("{}.{}", q(table), q(key)), &rows)
            .map_err(|d| action_err(label, d))?;
        dels.push((
            schema.rank(table),
            Statement {
                sql: format!("DELETE FROM {} WHERE {cond}", q(table)),
                writes: table.clone(),
                reads: tr.reads.borrow().clone(),
            },
        ));
    }
    dels.sort_by_key(|(r, _)| std::cmp::Reverse(*r));
    ordered.extend(dels);

    // Statements run one after another, but actions see the state before
    // the event: no statement may read a table an earlier one changed.
    for (i, (_, s)) in ordered.iter().enumerate() {
        for (_, earlier) in &ordered[..i] {
            if earlier.writes != s.writes && s.reads.contains(&earlier.writes) {
                return Err(SqlGenError::UnsupportedAction {
                    event: ev.name.clone(),
                    label: "ordering".into(),
                    detail: format!(
                        "a statement on {} reads {}, which an earlier statement of the same event modifies",
                        s.writes, earlier.writes
                    ),
                });
            }
        }
    }
    steps.extend(ordered.into_iter().map(|(_, s)| Step::Modify { sql: s.sql }));

    let is_hist = |t: &str| m.variable(t).and_then(|v| v.class_kind()) == Some(ClassKind::Historical);
    let historical_move = inserts.iter().any(|i| is_hist(&i.table)) && deletes.iter().any(|d| !is_hist(&d.0));
    Ok(ProcedureDef {
        name: ev.name.clone(),
        kind: ev.kind.into(),
        params,
        outputs,
        steps,
        historical_move,
    })
}

/// Whether a function union `f \/ e` only describes rows inserted by `set`.
fn covers_insert(set: &Expr, e: &Expr) -> bool {
    match e {
        Expr::Enum(pairs) => {
            let Expr::Enum(keys) = set else { return false };
            !pairs.is_empty()
                && pairs
                    .iter()
                    .all(|p| matches!(p, Expr::Maplet(k, _) if keys.contains(k)))
        }
        Expr::Bin(BinOp::DomRes, s, _) => **s == *set,
        Expr::Bin(BinOp::Product, s, v) => **s == *set && matches!(&**v, Expr::Enum(xs) if xs.len() == 1),
        _ => false,
    }
}

/// Value of a folded column for the inserted row with key `row`.
fn column_value(tr: &Tr, e: &Expr, row_key: &Expr, row: &str) -> Result<String, String> {
    match e {
        Expr::Enum(pairs) => {
            for p in pairs {
                if let Expr::Maplet(k, v) = p {
                    if **k == *row_key {
                        return tr.scalar(v);
                    }
                }
            }
            Ok("NULL".into())
        }
        Expr::Bin(BinOp::DomRes, _, g) => {
            tr.bind("$row", row);
            let r = tr.scalar(&Expr::Apply(g.clone(), Box::new(Expr::ident("$row"))));
            tr.unbind_one();
            r
        }
        Expr::Bin(BinOp::Product, _, v) => match &**v {
            Expr::Enum(xs) => tr.scalar(&xs[0]),
            _ => Err("unexpected product".into()),
        },
        _ => Err("column value cannot be folded".into()),
    }
}

fn insert_sql(tr: &Tr, ins: &Insert) -> Result<String, String> {
    let mut cols = vec![q(&ins.key)];
    cols.extend(ins.columns.iter().map(|(c, _)| q(c)));
    let head = format!("INSERT INTO {} ({})", q(&ins.table), cols.join(", "));
    match (&ins.rows, &ins.set) {
        (SetSql::List(keys), Expr::Enum(key_exprs)) => {
            let mut rows = Vec::new();
            for (k, ke) in keys.iter().zip(key_exprs) {
                let mut vals = vec![k.clone()];
                for (_, e) in &ins.columns {
                    vals.push(column_value(tr, e, ke, k)?);
                }
                rows.push(format!("({})", vals.join(", ")));
            }
            if rows.is_empty() {
                return Err("empty insertion".into());
            }
            Ok(format!("{head} VALUES {}", rows.join(", ")))
        }
        (rows, _) => {
            let (from, conds, v) = tr.set_source(rows)?;
            let mut vals = vec![v.clone()];
            for (_, e) in &ins.columns {
                vals.push(column_value(tr, e, &Expr::ident("$row"), &v)?);
            }
            let where_ = if conds.is_empty() {
                String::new()
            } else {
                format!(" WHERE {}", conds.join(" AND "))
            };
            Ok(format!("{head} SELECT DISTINCT {} FROM {}{where_}", vals.join(", "), from.join(", ")))
        }
    }
}

/// `UPDATE` statements setting `column` from the pairs of `e`.
fn update_values(tr: &Tr, table: &str, key: &str, column: &str, e: &Expr) -> Result<Vec<String>, String> {
    if let Expr::Enum(pairs) = e {
        let mut out = Vec::new();
        for p in pairs {
            let Expr::Maplet(k, v) = p else { return Err("expected pairs".into()) };
            out.push(format!(
                "UPDATE {} SET {} = {} WHERE {} = {}",
                q(table),
                q(column),
                tr.scalar(v)?,
                q(key),
                tr.scalar(k)?
            ));
        }
        return Ok(out);
    }
    let rel = tr.rel(e)?;
    let target = format!("{}.{}", q(table), q(key));
    let mut conds = rel.conds.clone();
    conds.push(format!("{} = {target}", rel.l));
    let value = format!("(SELECT {} FROM {} WHERE {})", rel.r, rel.from.join(", "), conds.join(" AND "));
    let dom = SetSql::Src {
        from: rel.from.clone(),
        conds: rel.conds.clone(),
        v: rel.l.clone(),
    };
    Ok(vec![format!(
        "UPDATE {} SET {} = {value} WHERE {}",
        q(table),
        q(column),
        tr.membership(&target, &dom)?
    )])
}

fn query_result(tr: &Tr, defs: &[(String, Expr)], outputs: &[(String, String, String, bool)]) -> Result<String, String> {
    let def = |n: &str| &defs.iter().find(|(d, _)| d == n).expect("output definition").1;
    let sets: Vec<_> = outputs.iter().filter(|o| o.3).collect();
    match sets.as_slice() {
        [] => {
            let cols = outputs
                .iter()
                .map(|(n, ..)| Ok(format!("{} AS {}", tr.scalar(def(n))?, q(n))))
                .collect::<Result<Vec<_>, String>>()?;
            Ok(format!("SELECT {}", cols.join(", ")))
        }
        [(n, ..)] if outputs.len() == 1 => {
            let set = tr.set(def(n))?;
            let (from, conds, v) = tr.set_source(&set)?;
            let where_ = if conds.is_empty() {
                String::new()
            } else {
                format!(" WHERE {}", conds.join(" AND "))
            };
            Ok(format!("SELECT DISTINCT {v} AS {} FROM {}{where_}", q(n), from.join(", ")))
        }
        _ => Err("a query may return one set or several single values".into()),
    }
}
