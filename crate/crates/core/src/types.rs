//! Static typing of expressions over carrier sets, pairs and powersets.

use std::collections::HashMap;
use std::fmt;

use crate::ast::*;
use crate::parser::pretty_expr;
use crate::resolve::{ResolvedChain, ResolvedMachine};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Atom(String),
    Bool,
    Set(Box<Type>),
    Pair(Box<Type>, Box<Type>),
    /// Element type of `{}` before unification.
    Unknown,
}

impl Type {
    pub fn set(t: Type) -> Type {
        Type::Set(Box::new(t))
    }

    pub fn pair(a: Type, b: Type) -> Type {
        Type::Pair(Box::new(a), Box::new(b))
    }

    pub fn element(&self) -> Option<&Type> {
        match self {
            Type::Set(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Atom(s) => write!(f, "{s}"),
            Type::Bool => write!(f, "BOOL"),
            Type::Set(t) => write!(f, "POW({t})"),
            Type::Pair(a, b) => write!(f, "{a} ** {b}"),
            Type::Unknown => write!(f, "?"),
        }
    }
}

/// Most specific common type, if the two are compatible.
pub fn unify(a: &Type, b: &Type) -> Option<Type> {
    match (a, b) {
        (Type::Unknown, t) | (t, Type::Unknown) => Some(t.clone()),
        (Type::Atom(x), Type::Atom(y)) if x == y => Some(a.clone()),
        (Type::Bool, Type::Bool) => Some(Type::Bool),
        (Type::Set(x), Type::Set(y)) => unify(x, y).map(Type::set),
        (Type::Pair(a1, b1), Type::Pair(a2, b2)) => Some(Type::pair(unify(a1, a2)?, unify(b1, b2)?)),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDiagnostic {
    pub machine: String,
    pub location: String,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for TypeDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({}): {}", self.span, self.machine, self.location, self.message)
    }
}

/// Typing environment for one machine.
#[derive(Clone, Debug)]
pub struct TypeEnv {
    vars: HashMap<String, Type>,
}

impl TypeEnv {
    pub fn for_machine(chain: &ResolvedChain, m: &ResolvedMachine) -> TypeEnv {
        let mut vars = HashMap::new();
        for c in &m.carriers {
            vars.insert(c.clone(), Type::set(Type::Atom(c.clone())));
        }
        let mut env = TypeEnv { vars };
        for k in &m.constants {
            let t = match &k.def {
                ConstantDef::Atom(s) => Type::Atom(s.clone()),
                ConstantDef::Set(e) => env.infer(e).unwrap_or(Type::Unknown),
            };
            env.vars.insert(k.name.clone(), t);
        }
        let mut decls: Vec<&VariableDecl> = m.variables.iter().collect();
        decls.extend(m.removed.iter());
        // Removed variables keep the typing their abstraction gave them.
        let abs = chain.abstraction_of(m);
        for v in decls {
            let owner = if m.variable(&v.name).is_some() { m } else { abs.unwrap_or(m) };
            if let Some(t) = variable_type(owner, v) {
                env.vars.insert(v.name.clone(), t);
            }
        }
        env
    }

    pub fn bind(&mut self, name: &str, t: Type) -> Option<Type> {
        self.vars.insert(name.to_string(), t)
    }

    pub fn unbind(&mut self, name: &str, prev: Option<Type>) {
        match prev {
            Some(t) => self.vars.insert(name.to_string(), t),
            None => self.vars.remove(name),
        };
    }

    pub fn lookup(&self, name: &str) -> Option<&Type> {
        self.vars.get(name)
    }

    pub fn infer(&mut self, e: &Expr) -> Result<Type, String> {
        let show = pretty_expr;
        let set_of = |t: &Type, e: &Expr| -> Result<Type, String> {
            t.element()
                .cloned()
                .ok_or_else(|| format!("expected a set, found {t} in `{}`", show(e)))
        };
        let rel_of = |t: &Type, e: &Expr| -> Result<(Type, Type), String> {
            match t {
                Type::Set(inner) => match inner.as_ref() {
                    Type::Pair(a, b) => Ok((*a.clone(), *b.clone())),
                    Type::Unknown => Ok((Type::Unknown, Type::Unknown)),
                    _ => Err(format!("expected a relation, found {t} in `{}`", show(e))),
                },
                _ => Err(format!("expected a relation, found {t} in `{}`", show(e))),
            }
        };
        let mismatch = |a: &Type, b: &Type, e: &Expr| {
            format!("type mismatch: {a} vs {b} in `{}`", show(e))
        };
        match e {
            Expr::Ident(n) => self
                .vars
                .get(n)
                .cloned()
                .ok_or_else(|| format!("unknown identifier '{n}'")),
            Expr::Enum(items) => {
                let mut t = Type::Unknown;
                for it in items {
                    let ti = self.infer(it)?;
                    t = unify(&t, &ti).ok_or_else(|| mismatch(&t, &ti, e))?;
                }
                Ok(Type::set(t))
            }
            Expr::Maplet(a, b) => Ok(Type::pair(self.infer(a)?, self.infer(b)?)),
            Expr::Bin(op, a, b) => {
                let ta = self.infer(a)?;
                let tb = self.infer(b)?;
                match op {
                    BinOp::Union | BinOp::Minus | BinOp::Inter => {
                        set_of(&ta, a)?;
                        set_of(&tb, b)?;
                        unify(&ta, &tb).ok_or_else(|| mismatch(&ta, &tb, e))
                    }
                    BinOp::Product => Ok(Type::set(Type::pair(set_of(&ta, a)?, set_of(&tb, b)?))),
                    BinOp::DomSub | BinOp::DomRes => {
                        let s = set_of(&ta, a)?;
                        let (x, _) = rel_of(&tb, b)?;
                        unify(&s, &x).ok_or_else(|| mismatch(&s, &x, e))?;
                        Ok(tb)
                    }
                    BinOp::Override => {
                        rel_of(&ta, a)?;
                        rel_of(&tb, b)?;
                        unify(&ta, &tb).ok_or_else(|| mismatch(&ta, &tb, e))
                    }
                    BinOp::Compose => {
                        let (x, y) = rel_of(&ta, a)?;
                        let (y2, z) = rel_of(&tb, b)?;
                        unify(&y, &y2).ok_or_else(|| mismatch(&y, &y2, e))?;
                        Ok(Type::set(Type::pair(x, z)))
                    }
                }
            }
            Expr::Inverse(a) => {
                let (x, y) = rel_of(&self.infer(a)?, a)?;
                Ok(Type::set(Type::pair(y, x)))
            }
            Expr::Image(r, s) => {
                let (x, y) = rel_of(&self.infer(r)?, r)?;
                let ts = self.infer(s)?;
                let el = set_of(&ts, s)?;
                unify(&x, &el).ok_or_else(|| mismatch(&x, &el, e))?;
                Ok(Type::set(y))
            }
            Expr::Apply(f, x) => {
                let (d, r) = rel_of(&self.infer(f)?, f)?;
                let tx = self.infer(x)?;
                unify(&d, &tx).ok_or_else(|| mismatch(&d, &tx, e))?;
                Ok(r)
            }
            Expr::Dom(a) => Ok(Type::set(rel_of(&self.infer(a)?, a)?.0)),
            Expr::Ran(a) => Ok(Type::set(rel_of(&self.infer(a)?, a)?.1)),
            Expr::Pow(a) => {
                let t = self.infer(a)?;
                set_of(&t, a)?;
                Ok(Type::set(t))
            }
            Expr::Bool(_) => Ok(Type::Bool),
            Expr::Rel(op, a, b) => {
                let ta = self.infer(a)?;
                let tb = self.infer(b)?;
                match op {
                    RelOp::In | RelOp::NotIn => {
                        let el = set_of(&tb, b)?;
                        unify(&ta, &el).ok_or_else(|| mismatch(&ta, &el, e))?;
                    }
                    RelOp::Subset => {
                        set_of(&ta, a)?;
                        unify(&ta, &tb).ok_or_else(|| mismatch(&ta, &tb, e))?;
                    }
                    RelOp::Eq => {
                        unify(&ta, &tb).ok_or_else(|| mismatch(&ta, &tb, e))?;
                    }
                }
                Ok(Type::Bool)
            }
            Expr::Logic(_, a, b) => {
                self.expect_bool(a)?;
                self.expect_bool(b)?;
                Ok(Type::Bool)
            }
            Expr::Not(a) => {
                self.expect_bool(a)?;
                Ok(Type::Bool)
            }
            Expr::Quant(_, vars, body) => {
                let mut saved = Vec::new();
                let mut result = Ok(Type::Bool);
                for v in vars {
                    match self.infer(&v.typing).and_then(|t| set_of(&t, &v.typing)) {
                        Ok(el) => saved.push((v.name.clone(), self.bind(&v.name, el))),
                        Err(err) => {
                            result = Err(err);
                            break;
                        }
                    }
                }
                if result.is_ok() {
                    result = self.expect_bool(body).map(|_| Type::Bool);
                }
                for (n, prev) in saved.into_iter().rev() {
                    self.unbind(&n, prev);
                }
                result
            }
            Expr::FnClass { func, dom, ran, .. } => {
                let (x, y) = rel_of(&self.infer(func)?, func)?;
                let td = set_of(&self.infer(dom)?, dom)?;
                let tr = set_of(&self.infer(ran)?, ran)?;
                unify(&x, &td).ok_or_else(|| mismatch(&x, &td, e))?;
                unify(&y, &tr).ok_or_else(|| mismatch(&y, &tr, e))?;
                Ok(Type::Bool)
            }
        }
    }

    fn expect_bool(&mut self, e: &Expr) -> Result<(), String> {
        match self.infer(e)? {
            Type::Bool => Ok(()),
            t => Err(format!("expected a predicate, found {t} in `{}`", pretty_expr(e))),
        }
    }
}

/// Element type of instances of a class or values of a carrier set.
pub fn element_type(m: &ResolvedMachine, name: &str) -> Option<Type> {
    if m.carriers.iter().any(|c| c == name) {
        return Some(Type::Atom(name.to_string()));
    }
    m.carrier_of(name).map(Type::Atom)
}

pub fn variable_type(m: &ResolvedMachine, v: &VariableDecl) -> Option<Type> {
    match &v.typing {
        VarTyping::Class { .. } => m.carrier_of(&v.name).map(|c| Type::set(Type::Atom(c))),
        VarTyping::Relation { source, target, .. } => Some(Type::set(Type::pair(
            element_type(m, source)?,
            element_type(m, target)?,
        ))),
    }
}

/// Type every invariant, guard, parameter and action of every machine.
/// An empty result means the chain is well typed.
pub fn typecheck(chain: &ResolvedChain) -> Vec<TypeDiagnostic> {
    let mut out = Vec::new();
    for m in &chain.machines {
        let mut env = TypeEnv::for_machine(chain, m);
        let mut diag = |location: String, span: &Span, message: String| {
            out.push(TypeDiagnostic {
                machine: m.name.clone(),
                location,
                span: span.clone(),
                message,
            })
        };
        for v in &m.variables {
            if variable_type(m, v).is_none() {
                diag(format!("variable {}", v.name), &v.span, "cannot determine type".into());
            }
        }
        for inv in &m.invariants {
            match env.infer(&inv.pred) {
                Ok(Type::Bool) => {}
                Ok(t) => diag(format!("invariant @{}", inv.label), &inv.span, format!("expected a predicate, found {t}")),
                Err(e) => diag(format!("invariant @{}", inv.label), &inv.span, e),
            }
        }
        for ev in &m.events {
            let mut saved = Vec::new();
            for p in &ev.params {
                match env.infer(&p.typing) {
                    Ok(Type::Set(el)) => saved.push((p.name.clone(), env.bind(&p.name, *el))),
                    Ok(t) => {
                        diag(format!("event {} parameter {}", ev.name, p.name), &ev.span, format!("typing must be a set, found {t}"));
                        saved.push((p.name.clone(), env.bind(&p.name, Type::Unknown)));
                    }
                    Err(e) => {
                        diag(format!("event {} parameter {}", ev.name, p.name), &ev.span, e);
                        saved.push((p.name.clone(), env.bind(&p.name, Type::Unknown)));
                    }
                }
            }
            for g in &ev.guards {
                match env.infer(&g.pred) {
                    Ok(Type::Bool) => {}
                    Ok(t) => diag(format!("event {} guard @{}", ev.name, g.label), &g.span, format!("expected a predicate, found {t}")),
                    Err(e) => diag(format!("event {} guard @{}", ev.name, g.label), &g.span, e),
                }
            }
            let mut targets: Vec<&str> = Vec::new();
            for a in &ev.actions {
                let loc = format!("event {} action @{}", ev.name, a.label);
                if targets.contains(&a.target.as_str()) {
                    diag(loc.clone(), &a.span, format!("variable {} is assigned twice", a.target));
                }
                targets.push(&a.target);
                let Some(vt) = env.lookup(&a.target).cloned() else { continue };
                match env.infer(&a.expr) {
                    Ok(t) => {
                        if unify(&vt, &t).is_none() {
                            diag(loc, &a.span, format!("type mismatch: {} has type {vt} but is assigned {t}", a.target));
                        }
                    }
                    Err(e) => diag(loc, &a.span, e),
                }
            }
            for (n, prev) in saved.into_iter().rev() {
                env.unbind(&n, prev);
            }
        }
    }
    out
}
