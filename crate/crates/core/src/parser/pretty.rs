use std::fmt::Write;

use crate::ast::*;

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Top,
    Maplet,
    Operand,
    Postfix,
}

/// Render an expression or predicate in canonical concrete syntax.
pub fn pretty_expr(e: &Expr) -> String {
    let mut s = String::new();
    pred(e, false, &mut s);
    s
}

fn expr(e: &Expr, slot: Slot, out: &mut String) {
    match e {
        Expr::Ident(n) => out.push_str(n),
        Expr::Enum(items) => {
            out.push('{');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(it, Slot::Top, out);
            }
            out.push('}');
        }
        Expr::Maplet(a, b) => {
            let paren = slot != Slot::Top;
            if paren {
                out.push('(');
            }
            expr(a, Slot::Maplet, out);
            out.push_str(" |-> ");
            expr(b, Slot::Maplet, out);
            if paren {
                out.push(')');
            }
        }
        Expr::Bin(op, a, b) => {
            let paren = matches!(slot, Slot::Operand | Slot::Postfix);
            if paren {
                out.push('(');
            }
            // Left-nested chains of one operator read back identically.
            match a.as_ref() {
                Expr::Bin(inner, ..) if inner == op => expr(a, Slot::Maplet, out),
                _ => expr(a, Slot::Operand, out),
            }
            let _ = write!(out, " {} ", op.token());
            expr(b, Slot::Operand, out);
            if paren {
                out.push(')');
            }
        }
        Expr::Inverse(a) => {
            expr(a, Slot::Postfix, out);
            out.push('~');
        }
        Expr::Image(a, b) => {
            expr(a, Slot::Postfix, out);
            out.push('[');
            expr(b, Slot::Top, out);
            out.push(']');
        }
        Expr::Apply(a, b) => {
            expr(a, Slot::Postfix, out);
            out.push('(');
            expr(b, Slot::Top, out);
            out.push(')');
        }
        Expr::Dom(a) | Expr::Ran(a) | Expr::Pow(a) => {
            out.push_str(match e {
                Expr::Dom(_) => "dom(",
                Expr::Ran(_) => "ran(",
                _ => "POW(",
            });
            expr(a, Slot::Top, out);
            out.push(')');
        }
        _ => {
            out.push('(');
            pred(e, false, out);
            out.push(')');
        }
    }
}

fn pred(e: &Expr, operand: bool, out: &mut String) {
    match e {
        Expr::Bool(true) => out.push_str("true"),
        Expr::Bool(false) => out.push_str("false"),
        Expr::Rel(op, a, b) => {
            expr(a, Slot::Top, out);
            let _ = write!(out, " {} ", op.token());
            expr(b, Slot::Top, out);
        }
        Expr::FnClass {
            func,
            dom,
            ran,
            kind,
        } => {
            expr(func, Slot::Top, out);
            out.push_str(" : ");
            expr(dom, Slot::Top, out);
            let _ = write!(out, " {} ", kind.arrow());
            expr(ran, Slot::Top, out);
            if kind.injective {
                out.push_str(" injective");
            }
        }
        Expr::Not(a) => {
            out.push_str("not ");
            pred(a, true, out);
        }
        Expr::Logic(op, a, b) => {
            if operand {
                out.push('(');
            }
            let left_flat =
                matches!(a.as_ref(), Expr::Logic(inner, ..) if inner == op && *op != Logic::Implies);
            pred(a, !left_flat, out);
            let _ = write!(out, " {} ", op.token());
            pred(b, true, out);
            if operand {
                out.push(')');
            }
        }
        Expr::Quant(q, vars, body) => {
            if operand {
                out.push('(');
            }
            out.push(match q {
                Quantifier::ForAll => '!',
                Quantifier::Exists => '#',
            });
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{} : ", v.name);
                expr(&v.typing, Slot::Top, out);
            }
            out.push_str(" . ");
            pred(body, false, out);
            if operand {
                out.push(')');
            }
        }
        _ => expr(e, Slot::Top, out),
    }
}

fn labeled(out: &mut String, indent: &str, l: &Labeled) {
    let _ = writeln!(out, "{indent}@{} {}", l.label, pretty_expr(&l.pred));
}

/// Canonical text form: LF line endings, two-space indentation, contexts and
/// machines in chain order.
pub fn pretty_print(chain: &RefinementChain) -> String {
    let mut blocks = Vec::new();
    for c in &chain.contexts {
        blocks.push(context(c));
    }
    for m in &chain.machines {
        blocks.push(machine(m));
    }
    blocks.join("\n")
}

fn context(c: &Context) -> String {
    let mut out = format!("context {}", c.name);
    if let Some(e) = &c.extends {
        let _ = write!(out, " extends {e}");
    }
    out.push('\n');
    if !c.carrier_sets.is_empty() {
        let _ = writeln!(out, "  sets {}", c.carrier_sets.join(", "));
    }
    if !c.constants.is_empty() {
        out.push_str("  constants\n");
        for k in &c.constants {
            match &k.def {
                ConstantDef::Atom(set) => {
                    let _ = writeln!(out, "    {} : {set}", k.name);
                }
                ConstantDef::Set(e) => {
                    let mut s = String::new();
                    expr(e, Slot::Top, &mut s);
                    let _ = writeln!(out, "    {} = {s}", k.name);
                }
            }
        }
    }
    if !c.axioms.is_empty() {
        out.push_str("  axioms\n");
        for a in &c.axioms {
            labeled(&mut out, "    ", a);
        }
    }
    out.push_str("end\n");
    out
}

fn machine(m: &Machine) -> String {
    let mut out = format!("machine {}", m.name);
    if let Some(r) = &m.refines {
        let _ = write!(out, " refines {r}");
    }
    if !m.sees.is_empty() {
        let _ = write!(out, " sees {}", m.sees.join(", "));
    }
    out.push('\n');
    if let Some(l) = m.layer {
        let _ = writeln!(out, "  layer {}", l.as_str());
    }
    if !m.removes.is_empty() {
        let _ = writeln!(out, "  removes {}", m.removes.join(", "));
    }
    for v in &m.variables {
        match &v.typing {
            VarTyping::Class { parent, kind } => {
                let _ = writeln!(out, "  class {} : {parent} kind {}", v.name, kind.as_str());
            }
            VarTyping::Relation {
                source,
                target,
                kind,
            } => {
                let role = if v.role == VarRole::Attribute {
                    "attribute"
                } else {
                    "association"
                };
                let _ = write!(out, "  {role} {} : {source} {} {target}", v.name, kind.arrow());
                if kind.injective {
                    out.push_str(" injective");
                }
                out.push('\n');
            }
        }
    }
    for inv in &m.invariants {
        let _ = writeln!(out, "  invariant @{} {}", inv.label, pretty_expr(&inv.pred));
    }
    for e in &m.events {
        out.push('\n');
        event(&mut out, e);
    }
    out.push_str("end\n");
    out
}

fn event(out: &mut String, e: &Event) {
    let _ = write!(out, "  event {} {}", e.name, e.kind.as_str());
    if let Some(o) = &e.class_owner {
        let _ = write!(out, " of {o}");
    }
    match &e.link {
        Some(EventLink::Extends(x)) => {
            let _ = write!(out, " extends {x}");
        }
        Some(EventLink::Refines(x)) => {
            let _ = write!(out, " refines {x}");
        }
        None => {}
    }
    out.push('\n');
    if !e.parameters.is_empty() {
        let params: Vec<String> = e
            .parameters
            .iter()
            .map(|p| {
                let mut s = String::new();
                expr(&p.typing, Slot::Top, &mut s);
                format!("{} : {s}", p.name)
            })
            .collect();
        let _ = writeln!(out, "    any {}", params.join(", "));
    }
    if !e.guards.is_empty() {
        out.push_str("    where\n");
        for g in &e.guards {
            labeled(out, "      ", g);
        }
    }
    if !e.actions.is_empty() {
        out.push_str("    then\n");
        for a in &e.actions {
            let mut s = String::new();
            expr(&a.expr, Slot::Top, &mut s);
            let _ = writeln!(out, "      @{} {} := {s}", a.label, a.target);
        }
    }
    out.push_str("  end\n");
}
