//! Expressions and predicates to SQL.
//!
//! Sets translate to single-column queries (`v`), relations to two-column
//! ones (`l`, `r`), both kept as FROM items plus conditions so they can be
//! joined without nesting. Every table occurrence gets its own alias.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};

use super::schema::{q, CarrierKind, Schema, VarMap};
use crate::ast::{BinOp, ConstantDef, Expr, Logic, Quantifier, RelOp};
use crate::resolve::{ResolvedChain, ResolvedMachine};

pub(crate) type TrResult<T> = Result<T, String>;

#[derive(Clone, Debug)]
pub(crate) enum SetSql {
    /// Explicit elements.
    List(Vec<String>),
    /// `{ v | FROM from WHERE conds }`
    Src { from: Vec<String>, conds: Vec<String>, v: String },
    /// A whole carrier set: only membership is meaningful.
    Universe(String),
}

#[derive(Clone, Debug)]
pub(crate) struct RelSql {
    pub from: Vec<String>,
    pub conds: Vec<String>,
    pub l: String,
    pub r: String,
}

#[derive(Clone, Debug)]
pub(crate) enum Sql {
    Scalar(String),
    Set(SetSql),
    Rel(RelSql),
}

fn where_clause(conds: &[String]) -> String {
    if conds.is_empty() {
        String::new()
    } else {
        format!(" WHERE {}", conds.join(" AND "))
    }
}

fn and_all(conds: &[String]) -> String {
    if conds.is_empty() {
        "TRUE".into()
    } else {
        conds.join(" AND ")
    }
}

/// Encoded literal for atom `index` (0-based) of a carrier.
pub(crate) fn atom_literal(kind: CarrierKind, carrier: &str, index: usize) -> String {
    match kind {
        CarrierKind::Ids => (index + 1).to_string(),
        CarrierKind::Text => format!("'{carrier}.{}'", index + 1),
        CarrierKind::Date => format!("DATE '{}'", date_of(index)),
    }
}

/// Atom `index` (0-based) of a date carrier.
pub fn date_of(index: usize) -> String {
    let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    base.checked_add_days(Days::new(index as u64))
        .expect("date in range")
        .format("%Y-%m-%d")
        .to_string()
}

pub fn index_of_date(s: &str) -> Option<usize> {
    let base = NaiveDate::from_ymd_opt(2000, 1, 1)?;
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    usize::try_from((d - base).num_days()).ok()
}

pub(crate) struct Tr<'a> {
    pub m: &'a ResolvedMachine,
    pub schema: &'a Schema,
    env: RefCell<Vec<(String, String)>>,
    consts: BTreeMap<String, Sql>,
    alias: &'a Cell<usize>,
    pub reads: RefCell<BTreeSet<String>>,
    /// Row mode for CHECK constraints: the bound instance and its table.
    row: Option<(String, String)>,
}

impl<'a> Tr<'a> {
    pub fn new(chain: &ResolvedChain, m: &'a ResolvedMachine, schema: &'a Schema, alias: &'a Cell<usize>) -> Tr<'a> {
        let mut consts = BTreeMap::new();
        let mut next: BTreeMap<String, usize> = BTreeMap::new();
        for k in chain.constants() {
            match &k.def {
                ConstantDef::Atom(set) => {
                    let n = next.entry(set.clone()).or_insert(0);
                    consts.insert(
                        k.name.clone(),
                        Sql::Scalar(atom_literal(schema.carrier_kind(set), set, *n)),
                    );
                    *n += 1;
                }
                ConstantDef::Set(e) => {
                    let elems = match e {
                        Expr::Enum(xs) => xs
                            .iter()
                            .map(|x| match x {
                                Expr::Ident(n) => match consts.get(n) {
                                    Some(Sql::Scalar(s)) => Some(s.clone()),
                                    _ => None,
                                },
                                _ => None,
                            })
                            .collect::<Option<Vec<_>>>(),
                        _ => None,
                    };
                    if let Some(elems) = elems {
                        consts.insert(k.name.clone(), Sql::Set(SetSql::List(elems)));
                    }
                }
            }
        }
        Tr {
            m,
            schema,
            env: RefCell::new(Vec::new()),
            consts,
            alias,
            reads: RefCell::new(BTreeSet::new()),
            row: None,
        }
    }

    pub fn bind(&self, name: &str, sql: impl Into<String>) {
        self.env.borrow_mut().push((name.to_string(), sql.into()));
    }

    fn unbind(&self, n: usize) {
        let mut env = self.env.borrow_mut();
        let keep = env.len() - n;
        env.truncate(keep);
    }

    pub fn unbind_one(&self) {
        self.unbind(1);
    }

    fn lookup(&self, name: &str) -> Option<String> {
        self.env.borrow().iter().rev().find(|(n, _)| n == name).map(|(_, s)| s.clone())
    }

    pub fn fresh_alias(&self) -> String {
        let n = self.alias.get() + 1;
        self.alias.set(n);
        format!("x{n}")
    }

    fn table(&self, table: &str) -> (String, String) {
        self.reads.borrow_mut().insert(table.to_string());
        let a = self.fresh_alias();
        (format!("{} {a}", q(table)), a)
    }

    // ---- expressions ----

    pub fn expr(&self, e: &Expr) -> TrResult<Sql> {
        match e {
            Expr::Ident(n) => self.ident(n),
            Expr::Enum(xs) => {
                if xs.first().is_some_and(|x| matches!(x, Expr::Maplet(..))) {
                    Ok(Sql::Rel(self.rel(e)?))
                } else {
                    Ok(Sql::Set(SetSql::List(
                        xs.iter().map(|x| self.scalar(x)).collect::<TrResult<_>>()?,
                    )))
                }
            }
            Expr::Apply(..) => Ok(Sql::Scalar(self.scalar(e)?)),
            Expr::Image(..) | Expr::Dom(_) | Expr::Ran(_) => Ok(Sql::Set(self.set(e)?)),
            Expr::Inverse(_) => Ok(Sql::Rel(self.rel(e)?)),
            Expr::Bin(op, l, _) => match op {
                BinOp::Union | BinOp::Minus | BinOp::Inter => match self.expr(l)? {
                    Sql::Set(_) => Ok(Sql::Set(self.set(e)?)),
                    Sql::Rel(_) => Ok(Sql::Rel(self.rel(e)?)),
                    Sql::Scalar(_) => Err(format!("set operator on a scalar in {}", pe(e))),
                },
                _ => Ok(Sql::Rel(self.rel(e)?)),
            },
            Expr::Maplet(..) => Err(format!("pair used as a value: {}", pe(e))),
            _ => Err(format!("unsupported expression {}", pe(e))),
        }
    }

    fn ident(&self, n: &str) -> TrResult<Sql> {
        if let Some(s) = self.lookup(n) {
            return Ok(Sql::Scalar(s));
        }
        if let Some(c) = self.consts.get(n) {
            return Ok(c.clone());
        }
        match self.schema.vars.get(n) {
            Some(VarMap::Class { table, key, .. }) => {
                let (from, a) = self.table(table);
                Ok(Sql::Set(SetSql::Src {
                    from: vec![from],
                    conds: vec![],
                    v: format!("{a}.{}", q(key)),
                }))
            }
            Some(VarMap::Column {
                table, key, column, total, ..
            }) => {
                let (from, a) = self.table(table);
                let r = format!("{a}.{}", q(column));
                Ok(Sql::Rel(RelSql {
                    from: vec![from],
                    conds: if *total { vec![] } else { vec![format!("{r} IS NOT NULL")] },
                    l: format!("{a}.{}", q(key)),
                    r,
                }))
            }
            Some(VarMap::Join { table, left, right, .. }) => {
                let (from, a) = self.table(table);
                Ok(Sql::Rel(RelSql {
                    from: vec![from],
                    conds: vec![],
                    l: format!("{a}.{}", q(left)),
                    r: format!("{a}.{}", q(right)),
                }))
            }
            None if self.m.carriers.iter().any(|c| c == n) => Ok(Sql::Set(SetSql::Universe(n.to_string()))),
            None => Err(format!("'{n}' has no SQL counterpart")),
        }
    }

    pub fn scalar(&self, e: &Expr) -> TrResult<String> {
        match e {
            Expr::Apply(f, x) => {
                let xs = self.scalar(x)?;
                if let (Some((var, table)), Expr::Ident(fname), Expr::Ident(xn)) = (&self.row, &**f, &**x) {
                    if xn == var {
                        if let Some(VarMap::Column { table: t, column, .. }) = self.schema.vars.get(fname) {
                            if t == table {
                                return Ok(q(column));
                            }
                        }
                    }
                }
                let r = self.rel(f)?;
                let mut conds = r.conds.clone();
                conds.push(format!("{} = {xs}", r.l));
                Ok(format!("(SELECT {} FROM {}{})", r.r, r.from.join(", "), where_clause(&conds)))
            }
            Expr::Bool(b) => Ok(if *b { "TRUE" } else { "FALSE" }.into()),
            _ => match self.expr(e)? {
                Sql::Scalar(s) => Ok(s),
                _ => Err(format!("expected a single value: {}", pe(e))),
            },
        }
    }

    pub fn set(&self, e: &Expr) -> TrResult<SetSql> {
        match e {
            Expr::Image(r, s) => {
                let r = self.rel(r)?;
                let s = self.set(s)?;
                let mut conds = r.conds;
                conds.push(self.membership(&r.l, &s)?);
                Ok(SetSql::Src {
                    from: r.from,
                    conds,
                    v: r.r,
                })
            }
            Expr::Dom(r) | Expr::Ran(r) => {
                let rel = self.rel(r)?;
                let v = if matches!(e, Expr::Dom(_)) { rel.l } else { rel.r };
                Ok(SetSql::Src {
                    from: rel.from,
                    conds: rel.conds,
                    v,
                })
            }
            Expr::Bin(op @ (BinOp::Union | BinOp::Minus | BinOp::Inter), l, r) => {
                let (l, r) = (self.set(l)?, self.set(r)?);
                match (op, &l, &r) {
                    (BinOp::Union, SetSql::List(a), SetSql::List(b)) => {
                        let mut out = a.clone();
                        for x in b {
                            if !out.contains(x) {
                                out.push(x.clone());
                            }
                        }
                        return Ok(SetSql::List(out));
                    }
                    (BinOp::Minus | BinOp::Inter, SetSql::Src { from, conds, v }, _) => {
                        let m = self.membership(v, &r)?;
                        let mut conds = conds.clone();
                        conds.push(if *op == BinOp::Minus { format!("NOT ({m})") } else { m });
                        return Ok(SetSql::Src {
                            from: from.clone(),
                            conds,
                            v: v.clone(),
                        });
                    }
                    _ => {}
                }
                let kw = match op {
                    BinOp::Union => "UNION",
                    BinOp::Minus => "EXCEPT",
                    _ => "INTERSECT",
                };
                let a = self.fresh_alias();
                Ok(SetSql::Src {
                    from: vec![format!("({} {kw} {}) {a}", self.set_query(&l)?, self.set_query(&r)?)],
                    conds: vec![],
                    v: format!("{a}.v"),
                })
            }
            _ => match self.expr(e)? {
                Sql::Set(s) => Ok(s),
                Sql::Scalar(_) => Err(format!("expected a set: {}", pe(e))),
                Sql::Rel(_) => Err(format!("expected a set of single values: {}", pe(e))),
            },
        }
    }

    pub fn set_query(&self, s: &SetSql) -> TrResult<String> {
        match s {
            SetSql::List(xs) if xs.is_empty() => Ok("SELECT NULL AS v WHERE FALSE".into()),
            SetSql::List(xs) => Ok(xs
                .iter()
                .map(|x| format!("SELECT {x} AS v"))
                .collect::<Vec<_>>()
                .join(" UNION ")),
            SetSql::Src { from, conds, v } => Ok(format!("SELECT {v} AS v FROM {}{}", from.join(", "), where_clause(conds))),
            SetSql::Universe(c) => Err(format!("carrier set {c} cannot be enumerated")),
        }
    }

    /// A set as FROM items with a value expression.
    pub fn set_source(&self, s: &SetSql) -> TrResult<(Vec<String>, Vec<String>, String)> {
        match s {
            SetSql::Src { from, conds, v } => Ok((from.clone(), conds.clone(), v.clone())),
            _ => {
                let a = self.fresh_alias();
                Ok((vec![format!("({}) {a}", self.set_query(s)?)], vec![], format!("{a}.v")))
            }
        }
    }

    pub fn rel_query(&self, r: &RelSql) -> String {
        format!(
            "SELECT {} AS l, {} AS r FROM {}{}",
            r.l,
            r.r,
            r.from.join(", "),
            where_clause(&r.conds)
        )
    }

    fn derived_rel(&self, query: String) -> RelSql {
        let a = self.fresh_alias();
        RelSql {
            from: vec![format!("({query}) {a}")],
            conds: vec![],
            l: format!("{a}.l"),
            r: format!("{a}.r"),
        }
    }

    pub fn rel(&self, e: &Expr) -> TrResult<RelSql> {
        match e {
            Expr::Inverse(r) => {
                let r = self.rel(r)?;
                Ok(RelSql { l: r.r, r: r.l, ..r })
            }
            Expr::Enum(xs) if xs.is_empty() => Ok(self.derived_rel("SELECT NULL AS l, NULL AS r WHERE FALSE".into())),
            Expr::Enum(xs) => {
                let mut rows = Vec::new();
                for x in xs {
                    let Expr::Maplet(a, b) = x else {
                        return Err(format!("expected pairs in {}", pe(e)));
                    };
                    rows.push(format!("SELECT {} AS l, {} AS r", self.scalar(a)?, self.scalar(b)?));
                }
                Ok(self.derived_rel(rows.join(" UNION ")))
            }
            Expr::Bin(op, l, r) => match op {
                BinOp::Compose => {
                    let (p, q2) = (self.rel(l)?, self.rel(r)?);
                    let mut from = p.from;
                    from.extend(q2.from);
                    let mut conds = p.conds;
                    conds.extend(q2.conds);
                    conds.push(format!("{} = {}", p.r, q2.l));
                    Ok(RelSql {
                        from,
                        conds,
                        l: p.l,
                        r: q2.r,
                    })
                }
                BinOp::DomRes | BinOp::DomSub => {
                    let s = self.set(l)?;
                    let mut rel = self.rel(r)?;
                    let m = self.membership(&rel.l, &s)?;
                    rel.conds.push(if *op == BinOp::DomSub { format!("NOT ({m})") } else { m });
                    Ok(rel)
                }
                BinOp::Product => {
                    let (a, b) = (self.set(l)?, self.set(r)?);
                    let (mut from, mut conds, lv) = self.set_source(&a)?;
                    let rv = match &b {
                        SetSql::List(xs) if xs.len() == 1 => xs[0].clone(),
                        _ => {
                            let (f2, c2, v2) = self.set_source(&b)?;
                            from.extend(f2);
                            conds.extend(c2);
                            v2
                        }
                    };
                    Ok(RelSql { from, conds, l: lv, r: rv })
                }
                BinOp::Override => {
                    let (f, g) = (self.rel(l)?, self.rel(r)?);
                    let mut conds = f.conds.clone();
                    conds.push(format!(
                        "NOT ({} IN (SELECT {} FROM {}{}))",
                        f.l,
                        g.l,
                        g.from.join(", "),
                        where_clause(&g.conds)
                    ));
                    let kept = RelSql { conds, ..f };
                    Ok(self.derived_rel(format!("{} UNION {}", self.rel_query(&kept), self.rel_query(&g))))
                }
                BinOp::Union | BinOp::Minus | BinOp::Inter => {
                    let (a, b) = (self.rel(l)?, self.rel(r)?);
                    if *op != BinOp::Union {
                        let m = self.pair_membership(&a.l, &a.r, &b);
                        let mut conds = a.conds.clone();
                        conds.push(if *op == BinOp::Minus { format!("NOT ({m})") } else { m });
                        return Ok(RelSql { conds, ..a });
                    }
                    Ok(self.derived_rel(format!("{} UNION {}", self.rel_query(&a), self.rel_query(&b))))
                }
            },
            _ => match self.expr(e)? {
                Sql::Rel(r) => Ok(r),
                _ => Err(format!("expected a relation: {}", pe(e))),
            },
        }
    }

    // ---- predicates ----

    pub fn membership(&self, x: &str, s: &SetSql) -> TrResult<String> {
        Ok(match s {
            SetSql::List(xs) if xs.is_empty() => "FALSE".into(),
            SetSql::List(xs) if xs.len() == 1 => format!("{x} = {}", xs[0]),
            SetSql::List(xs) => format!("{x} IN ({})", xs.join(", ")),
            SetSql::Universe(_) => "TRUE".into(),
            SetSql::Src { from, conds, v } => {
                format!("{x} IN (SELECT {v} FROM {}{})", from.join(", "), where_clause(conds))
            }
        })
    }

    pub fn pair_membership(&self, a: &str, b: &str, r: &RelSql) -> String {
        let mut conds = r.conds.clone();
        conds.push(format!("{} = {a}", r.l));
        conds.push(format!("{} = {b}", r.r));
        format!("EXISTS (SELECT 1 FROM {}{})", r.from.join(", "), where_clause(&conds))
    }

    fn subset(&self, a: &Expr, b: &Expr) -> TrResult<String> {
        match self.expr(a)? {
            Sql::Set(sa) => {
                let sb = self.set(b)?;
                match sa {
                    SetSql::List(xs) => {
                        let parts = xs.iter().map(|x| self.membership(x, &sb)).collect::<TrResult<Vec<_>>>()?;
                        Ok(and_all(&parts))
                    }
                    SetSql::Universe(_) => match sb {
                        SetSql::Universe(_) => Ok("TRUE".into()),
                        _ => Err(format!("carrier set is not a subset of {}", pe(b))),
                    },
                    SetSql::Src { from, mut conds, v } => {
                        conds.push(format!("NOT ({})", self.membership(&v, &sb)?));
                        Ok(format!("NOT EXISTS (SELECT 1 FROM {}{})", from.join(", "), where_clause(&conds)))
                    }
                }
            }
            Sql::Rel(ra) => {
                let rb = self.rel(b)?;
                let mut conds = ra.conds.clone();
                conds.push(format!("NOT ({})", self.pair_membership(&ra.l, &ra.r, &rb)));
                Ok(format!("NOT EXISTS (SELECT 1 FROM {}{})", ra.from.join(", "), where_clause(&conds)))
            }
            Sql::Scalar(_) => Err(format!("subset of a single value: {}", pe(a))),
        }
    }

    pub fn pred(&self, e: &Expr) -> TrResult<String> {
        match e {
            Expr::Bool(b) => Ok(if *b { "TRUE" } else { "FALSE" }.into()),
            Expr::Not(p) => Ok(format!("NOT ({})", self.pred(p)?)),
            Expr::Logic(op, a, b) => {
                let (a, b) = (self.pred(a)?, self.pred(b)?);
                Ok(match op {
                    Logic::And => format!("({a}) AND ({b})"),
                    Logic::Or => format!("({a}) OR ({b})"),
                    Logic::Implies => format!("NOT ({a}) OR ({b})"),
                })
            }
            Expr::Rel(RelOp::NotIn, x, s) => Ok(format!("NOT ({})", self.pred(&Expr::rel(RelOp::In, (**x).clone(), (**s).clone()))?)),
            Expr::Rel(RelOp::In, x, s) => {
                if let Expr::Pow(t) = &**s {
                    return self.subset(x, t);
                }
                if let Expr::Maplet(a, b) = &**x {
                    let rel = self.rel(s)?;
                    return Ok(self.pair_membership(&self.scalar(a)?, &self.scalar(b)?, &rel));
                }
                let xs = self.scalar(x)?;
                let set = self.set(s)?;
                self.membership(&xs, &set)
            }
            Expr::Rel(RelOp::Subset, a, b) => self.subset(a, b),
            Expr::Rel(RelOp::Eq, a, b) => match self.expr(a)? {
                Sql::Scalar(sa) => Ok(format!("{sa} = {}", self.scalar(b)?)),
                _ => Ok(format!("({}) AND ({})", self.subset(a, b)?, self.subset(b, a)?)),
            },
            Expr::Quant(qn, vars, body) => self.quant(*qn, vars, body),
            _ => Err(format!("unsupported predicate {}", pe(e))),
        }
    }

    fn quant(&self, qn: Quantifier, vars: &[crate::ast::Param], body: &Expr) -> TrResult<String> {
        let mut from = Vec::new();
        let mut conds = Vec::new();
        let mut bound = 0;
        let result = (|| {
            for p in vars {
                let mut typing = self.set(&p.typing)?;
                if let SetSql::Universe(_) = typing {
                    // Range over a membership stated in the body instead.
                    let hyp = match (qn, body) {
                        (Quantifier::ForAll, Expr::Logic(Logic::Implies, h, _)) => &**h,
                        (Quantifier::Exists, b) => b,
                        _ => return Err(format!("'{}' ranges over a whole carrier set", p.name)),
                    };
                    let narrower = crate::patterns::conjuncts(hyp).into_iter().find_map(|c| match c {
                        Expr::Rel(RelOp::In, x, s) if **x == Expr::Ident(p.name.clone()) => self.set(s).ok(),
                        _ => None,
                    });
                    typing = match narrower {
                        Some(s) if !matches!(s, SetSql::Universe(_)) => s,
                        _ => return Err(format!("'{}' ranges over a whole carrier set", p.name)),
                    };
                }
                let (f, c, v) = self.set_source(&typing)?;
                from.extend(f);
                conds.extend(c);
                self.bind(&p.name, v);
                bound += 1;
            }
            self.pred(body)
        })();
        self.unbind(bound);
        let body = result?;
        Ok(match qn {
            Quantifier::Exists => {
                conds.push(format!("({body})"));
                format!("EXISTS (SELECT 1 FROM {}{})", from.join(", "), where_clause(&conds))
            }
            Quantifier::ForAll => {
                conds.push(format!("NOT ({body})"));
                format!("NOT EXISTS (SELECT 1 FROM {}{})", from.join(", "), where_clause(&conds))
            }
        })
    }
}

fn pe(e: &Expr) -> String {
    crate::parser::pretty_expr(e)
}

/// A CHECK constraint for `!x : C . P` when P only reads x's own columns.
pub(crate) fn row_check(m: &ResolvedMachine, schema: &Schema, pred: &Expr) -> Option<(String, String)> {
    let Expr::Quant(Quantifier::ForAll, vars, body) = pred else { return None };
    let [var] = vars.as_slice() else { return None };
    let Expr::Ident(class) = &var.typing else { return None };
    let (table, key) = schema.class(class)?;
    let alias = Cell::new(0);
    let tr = Tr {
        m,
        schema,
        env: RefCell::new(vec![(var.name.clone(), q(key))]),
        consts: BTreeMap::new(),
        alias: &alias,
        reads: RefCell::new(BTreeSet::new()),
        row: Some((var.name.clone(), table.to_string())),
    };
    let sql = tr.pred(body).ok()?;
    if !tr.reads.borrow().is_empty() || sql.contains("SELECT") {
        return None;
    }
    Some((table.to_string(), sql))
}
