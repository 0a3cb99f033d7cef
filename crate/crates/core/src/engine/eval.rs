use thiserror::Error;

use super::compile::CExpr;
use super::value::{self as v, Value};
use crate::ast::{BinOp, FunctionKind, Logic, Quantifier, RelOp};

/// Largest set whose powerset is materialised.
const MAX_POW: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("function application outside domain: {0}")]
    FunctionApplicationOutsideDomain(String),
    #[error("application of a non-functional relation: {0}")]
    NotAFunction(String),
    #[error("powerset of a {0}-element set is too large")]
    PowersetTooLarge(usize),
    #[error("ill-typed value: expected {0}")]
    IllTyped(&'static str),
}

fn set(v: &Value) -> Result<&[Value], EvalError> {
    v.as_set().ok_or(EvalError::IllTyped("a set"))
}

fn boolean(v: &Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or(EvalError::IllTyped("a predicate"))
}

pub fn holds(e: &CExpr, state: &[Value], locals: &mut Vec<Value>) -> Result<bool, EvalError> {
    boolean(&eval(e, state, locals)?)
}

fn bind(locals: &mut Vec<Value>, slot: usize, val: Value) {
    if locals.len() <= slot {
        locals.resize(slot + 1, Value::Bool(false));
    }
    locals[slot] = val;
}

pub fn eval(e: &CExpr, state: &[Value], locals: &mut Vec<Value>) -> Result<Value, EvalError> {
    Ok(match e {
        CExpr::Const(c) => c.clone(),
        CExpr::Var(i) => state[*i].clone(),
        CExpr::Local(i) => locals[*i].clone(),
        CExpr::Enum(xs) => {
            let mut items = Vec::with_capacity(xs.len());
            for x in xs {
                items.push(eval(x, state, locals)?);
            }
            Value::set_from(items)
        }
        CExpr::Maplet(a, b) => Value::pair(eval(a, state, locals)?, eval(b, state, locals)?),
        CExpr::Bin(op, a, b) => {
            let x = eval(a, state, locals)?;
            let y = eval(b, state, locals)?;
            let (x, y) = (set(&x)?, set(&y)?);
            let out = match op {
                BinOp::Union => v::union(x, y),
                BinOp::Minus => v::minus(x, y),
                BinOp::Inter => v::inter(x, y),
                BinOp::Product => v::product(x, y),
                BinOp::DomSub => v::dom_sub(x, y),
                BinOp::DomRes => v::dom_res(x, y),
                BinOp::Override => v::override_(x, y),
                BinOp::Compose => v::compose(x, y),
            };
            Value::set_sorted(out)
        }
        CExpr::Inverse(a) => Value::set_sorted(v::inverse(set(&eval(a, state, locals)?)?)),
        CExpr::Image(a, b) => {
            let r = eval(a, state, locals)?;
            let s = eval(b, state, locals)?;
            Value::set_sorted(v::image(set(&r)?, set(&s)?))
        }
        CExpr::Apply(f, x, src) => {
            let f = eval(f, state, locals)?;
            let x = eval(x, state, locals)?;
            let mut it = v::lookup(set(&f)?, &x);
            match (it.next(), it.next()) {
                (Some(y), None) => y.clone(),
                (None, _) => return Err(EvalError::FunctionApplicationOutsideDomain(src.to_string())),
                (Some(_), Some(_)) => return Err(EvalError::NotAFunction(src.to_string())),
            }
        }
        CExpr::Dom(a) => Value::set_sorted(v::dom(set(&eval(a, state, locals)?)?)),
        CExpr::Ran(a) => Value::set_sorted(v::ran(set(&eval(a, state, locals)?)?)),
        CExpr::Pow(a) => {
            let s = eval(a, state, locals)?;
            let s = set(&s)?;
            if s.len() > MAX_POW {
                return Err(EvalError::PowersetTooLarge(s.len()));
            }
            let subsets = (0u32..1 << s.len())
                .map(|mask| {
                    Value::set_sorted(
                        s.iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, x)| x.clone())
                            .collect(),
                    )
                })
                .collect();
            Value::set_from(subsets)
        }
        CExpr::Rel(op, a, b) => {
            let x = eval(a, state, locals)?;
            let y = eval(b, state, locals)?;
            Value::Bool(match op {
                RelOp::In => set(&y)?.binary_search(&x).is_ok(),
                RelOp::NotIn => set(&y)?.binary_search(&x).is_err(),
                RelOp::Subset => v::is_subset(set(&x)?, set(&y)?),
                RelOp::Eq => x == y,
            })
        }
        CExpr::Logic(op, a, b) => {
            let l = holds(a, state, locals)?;
            Value::Bool(match (op, l) {
                (Logic::And, false) => false,
                (Logic::Or, true) => true,
                (Logic::Implies, false) => true,
                _ => holds(b, state, locals)?,
            })
        }
        CExpr::Not(a) => Value::Bool(!holds(a, state, locals)?),
        CExpr::Quant(q, vars, body) => {
            // Bound slots sit above every parameter, so a guard evaluated
            // before all parameters are bound must not leave them behind.
            let depth = locals.len();
            let r = quant(*q, vars, body, state, locals);
            locals.truncate(depth);
            Value::Bool(r?)
        }
        CExpr::FnClass { func, dom, ran, kind } => {
            let f = eval(func, state, locals)?;
            let d = eval(dom, state, locals)?;
            let r = eval(ran, state, locals)?;
            let (f, d, r) = (set(&f)?, set(&d)?, set(&r)?);
            let typed = f.iter().all(|p| match p.as_pair() {
                Some((x, y)) => d.binary_search(x).is_ok() && r.binary_search(y).is_ok(),
                None => false,
            });
            let ok = typed
                && match kind.kind {
                    FunctionKind::Relation => true,
                    FunctionKind::Partial => v::is_function(f),
                    FunctionKind::Total => v::is_function(f) && v::dom(f).len() == d.len(),
                }
                && (!kind.injective || v::is_injective(f));
            Value::Bool(ok)
        }
    })
}

fn quant(
    q: Quantifier,
    vars: &[(usize, CExpr)],
    body: &CExpr,
    state: &[Value],
    locals: &mut Vec<Value>,
) -> Result<bool, EvalError> {
    let Some(((slot, ty), rest)) = vars.split_first() else {
        return holds(body, state, locals);
    };
    // Typings may depend on earlier bound variables, so evaluate per level.
    let dom = eval(ty, state, locals)?;
    for x in set(&dom)? {
        bind(locals, *slot, x.clone());
        let r = quant(q, rest, body, state, locals)?;
        match q {
            Quantifier::ForAll if !r => return Ok(false),
            Quantifier::Exists if r => return Ok(true),
            _ => {}
        }
    }
    Ok(q == Quantifier::ForAll)
}
