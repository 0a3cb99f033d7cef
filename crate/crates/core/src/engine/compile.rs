//! Lowering of AST expressions to a slot-addressed form: state variables
//! become indices, parameters and quantified variables become local slots,
//! carriers and constants become literal values.

use std::collections::HashMap;
use std::sync::Arc;

use super::scope::Universe;
use super::value::Value;
use super::EngineError;
use crate::ast::*;
use crate::parser::pretty_expr;

#[derive(Clone, Debug)]
pub enum CExpr {
    Const(Value),
    Var(usize),
    Local(usize),
    Enum(Vec<CExpr>),
    Maplet(Box<CExpr>, Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Inverse(Box<CExpr>),
    Image(Box<CExpr>, Box<CExpr>),
    /// Source text is kept for well-definedness messages.
    Apply(Box<CExpr>, Box<CExpr>, Arc<str>),
    Dom(Box<CExpr>),
    Ran(Box<CExpr>),
    Pow(Box<CExpr>),
    Rel(RelOp, Box<CExpr>, Box<CExpr>),
    Logic(Logic, Box<CExpr>, Box<CExpr>),
    Not(Box<CExpr>),
    Quant(Quantifier, Vec<(usize, CExpr)>, Box<CExpr>),
    FnClass {
        func: Box<CExpr>,
        dom: Box<CExpr>,
        ran: Box<CExpr>,
        kind: RelationKind,
    },
}

impl CExpr {
    /// Highest local slot read, plus one (0 if none).
    pub fn locals_needed(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if let CExpr::Local(i) = e {
                n = n.max(i + 1);
            }
        });
        n
    }

    /// Largest local slot read that is not bound inside the expression, plus one.
    pub fn free_locals_needed(&self) -> usize {
        fn go(e: &CExpr, bound: &mut Vec<usize>, n: &mut usize) {
            match e {
                CExpr::Local(i) if !bound.contains(i) => *n = (*n).max(i + 1),
                CExpr::Quant(_, vars, body) => {
                    let depth = bound.len();
                    for (slot, ty) in vars {
                        go(ty, bound, n);
                        bound.push(*slot);
                    }
                    go(body, bound, n);
                    bound.truncate(depth);
                }
                _ => e.children().into_iter().for_each(|c| go(c, bound, n)),
            }
        }
        let mut n = 0;
        go(self, &mut Vec::new(), &mut n);
        n
    }

    pub fn reads_var(&self, v: usize) -> bool {
        let mut hit = false;
        self.visit(&mut |e| hit |= matches!(e, CExpr::Var(i) if *i == v));
        hit
    }

    fn children(&self) -> Vec<&CExpr> {
        match self {
            CExpr::Const(_) | CExpr::Var(_) | CExpr::Local(_) => vec![],
            CExpr::Enum(xs) => xs.iter().collect(),
            CExpr::Maplet(a, b)
            | CExpr::Bin(_, a, b)
            | CExpr::Image(a, b)
            | CExpr::Apply(a, b, _)
            | CExpr::Rel(_, a, b)
            | CExpr::Logic(_, a, b) => vec![a, b],
            CExpr::Inverse(a) | CExpr::Dom(a) | CExpr::Ran(a) | CExpr::Pow(a) | CExpr::Not(a) => vec![a],
            CExpr::Quant(_, vars, body) => {
                let mut v: Vec<&CExpr> = vars.iter().map(|(_, t)| t).collect();
                v.push(body);
                v
            }
            CExpr::FnClass { func, dom, ran, .. } => vec![func, dom, ran],
        }
    }

    fn visit(&self, f: &mut impl FnMut(&CExpr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }
}

/// Name environment for compilation.
pub struct Compiler<'a> {
    universe: &'a Universe,
    vars: HashMap<String, usize>,
    locals: Vec<String>,
}

impl<'a> Compiler<'a> {
    pub fn new(universe: &'a Universe, vars: HashMap<String, usize>) -> Self {
        Compiler {
            universe,
            vars,
            locals: Vec::new(),
        }
    }

    /// Declare the next local slot (parameters, in order).
    pub fn push_local(&mut self, name: &str) -> usize {
        self.locals.push(name.to_string());
        self.locals.len() - 1
    }

    pub fn local_count(&self) -> usize {
        self.locals.len()
    }

    fn lookup(&self, name: &str) -> Result<CExpr, EngineError> {
        if let Some(i) = self.locals.iter().rposition(|l| l == name) {
            return Ok(CExpr::Local(i));
        }
        if let Some(&i) = self.vars.get(name) {
            return Ok(CExpr::Var(i));
        }
        if let Some(v) = self.universe.constants.get(name) {
            return Ok(CExpr::Const(v.clone()));
        }
        if let Some(id) = self.universe.id(name) {
            return Ok(CExpr::Const(self.universe.carrier_value(id)));
        }
        Err(EngineError::UnknownIdent(name.to_string()))
    }

    pub fn compile(&mut self, e: &Expr) -> Result<CExpr, EngineError> {
        let b = |c: CExpr| Box::new(c);
        Ok(match e {
            Expr::Ident(n) => self.lookup(n)?,
            Expr::Enum(xs) => {
                let items = xs.iter().map(|x| self.compile(x)).collect::<Result<Vec<_>, _>>()?;
                // Literal sets fold to constants.
                if items.iter().all(|i| matches!(i, CExpr::Const(_))) {
                    let vals = items
                        .into_iter()
                        .map(|i| match i {
                            CExpr::Const(v) => v,
                            _ => unreachable!(),
                        })
                        .collect();
                    CExpr::Const(Value::set_from(vals))
                } else {
                    CExpr::Enum(items)
                }
            }
            Expr::Maplet(x, y) => CExpr::Maplet(b(self.compile(x)?), b(self.compile(y)?)),
            Expr::Bin(op, x, y) => CExpr::Bin(*op, b(self.compile(x)?), b(self.compile(y)?)),
            Expr::Inverse(x) => CExpr::Inverse(b(self.compile(x)?)),
            Expr::Image(x, y) => CExpr::Image(b(self.compile(x)?), b(self.compile(y)?)),
            Expr::Apply(x, y) => CExpr::Apply(
                b(self.compile(x)?),
                b(self.compile(y)?),
                Arc::from(pretty_expr(e).as_str()),
            ),
            Expr::Dom(x) => CExpr::Dom(b(self.compile(x)?)),
            Expr::Ran(x) => CExpr::Ran(b(self.compile(x)?)),
            Expr::Pow(x) => CExpr::Pow(b(self.compile(x)?)),
            Expr::Bool(v) => CExpr::Const(Value::Bool(*v)),
            Expr::Rel(op, x, y) => CExpr::Rel(*op, b(self.compile(x)?), b(self.compile(y)?)),
            Expr::Logic(op, x, y) => CExpr::Logic(*op, b(self.compile(x)?), b(self.compile(y)?)),
            Expr::Not(x) => CExpr::Not(b(self.compile(x)?)),
            Expr::Quant(q, vars, body) => {
                let depth = self.locals.len();
                let mut cv = Vec::new();
                for v in vars {
                    let ty = self.compile(&v.typing);
                    let ty = match ty {
                        Ok(t) => t,
                        Err(err) => {
                            self.locals.truncate(depth);
                            return Err(err);
                        }
                    };
                    cv.push((self.push_local(&v.name), ty));
                }
                let body = self.compile(body);
                self.locals.truncate(depth);
                CExpr::Quant(*q, cv, b(body?))
            }
            Expr::FnClass { func, dom, ran, kind } => CExpr::FnClass {
                func: b(self.compile(func)?),
                dom: b(self.compile(dom)?),
                ran: b(self.compile(ran)?),
                kind: *kind,
            },
        })
    }
}

/// Compile an expression that may mention only carriers and constants.
pub fn compile_static(e: &Expr, u: &Universe) -> Result<CExpr, EngineError> {
    Compiler::new(u, HashMap::new()).compile(e)
}
