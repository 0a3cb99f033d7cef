use std::collections::BTreeSet;

use super::{conjuncts, LintFinding, Severity};
use crate::ast::{BinOp, ClassKind, EventKind, Expr, FunctionKind, RelOp};
use crate::resolve::{ResolvedChain, ResolvedEvent, ResolvedMachine};

/// Each class is judged in the last machine that still has it, so that
/// associations added by later refinements count.
fn class_homes(chain: &ResolvedChain) -> Vec<(String, ClassKind, &ResolvedMachine)> {
    let mut out: Vec<(String, ClassKind, &ResolvedMachine)> = Vec::new();
    for m in &chain.machines {
        for c in m.classes() {
            let kind = c.class_kind().expect("class typing");
            match out.iter_mut().find(|(n, ..)| *n == c.name) {
                Some(slot) => slot.2 = m,
                None => out.push((c.name.clone(), kind, m)),
            }
        }
    }
    out
}

fn kind_of(m: &ResolvedMachine, class: &str) -> Option<ClassKind> {
    m.variable(class).and_then(|v| v.class_kind())
}

pub(crate) fn is_historical(m: &ResolvedMachine, var: &str) -> bool {
    kind_of(m, var) == Some(ClassKind::Historical)
}

/// Live classes the event removes instances from: `L := L \ X`.
pub(crate) fn live_removals<'a>(m: &ResolvedMachine, ev: &'a ResolvedEvent) -> Vec<(&'a str, &'a Expr)> {
    ev.actions
        .iter()
        .filter_map(|a| match &a.expr {
            Expr::Bin(BinOp::Minus, l, x)
                if **l == Expr::Ident(a.target.clone())
                    && m.is_class(&a.target)
                    && !is_historical(m, &a.target) =>
            {
                Some((a.target.as_str(), &**x))
            }
            _ => None,
        })
        .collect()
}

/// The historical class a write to `var` belongs to: the class itself, or the
/// source class of an attribute or association.
pub(crate) fn historical_owner<'a>(m: &'a ResolvedMachine, var: &'a str) -> Option<&'a str> {
    if is_historical(m, var) {
        return Some(var);
    }
    let (source, _, _) = m.variable(var)?.relation()?;
    is_historical(m, source).then_some(source)
}

/// Structural consistency of declared class kinds.
pub fn classify_classes(chain: &ResolvedChain) -> Vec<LintFinding> {
    let mut out = Vec::new();
    for (class, kind, m) in class_homes(chain) {
        let outgoing: Vec<(&str, &str, FunctionKind)> = m
            .variables
            .iter()
            .filter_map(|v| v.relation().map(|(s, t, k)| (v.name.as_str(), s, t, k)))
            .filter(|(_, s, _, _)| *s == class)
            .map(|(n, _, t, k)| (n, t, k.kind))
            .collect();
        match kind {
            ClassKind::Secondary => {
                let to_primary = outgoing
                    .iter()
                    .filter(|(_, t, k)| *k != FunctionKind::Relation && kind_of(m, t) == Some(ClassKind::Primary))
                    .count();
                if to_primary < 2 {
                    out.push(LintFinding::new(
                        "secondary-structure",
                        Severity::Warning,
                        &class,
                        format!(
                            "secondary class relates {to_primary} primary class(es) by functions; a secondary class relates at least two"
                        ),
                    ));
                }
            }
            ClassKind::Attribute => {
                for (name, t, _) in &outgoing {
                    if matches!(kind_of(m, t), Some(ClassKind::Primary | ClassKind::Secondary)) {
                        out.push(LintFinding::new(
                            "attribute-source",
                            Severity::Warning,
                            &class,
                            format!("attribute class is the source of '{name}' to {t}; associate from {t} to the attribute class instead"),
                        ));
                    }
                }
            }
            ClassKind::Primary | ClassKind::Historical => {}
        }
    }

    let mut seen = BTreeSet::new();
    for m in &chain.machines {
        for ev in m.events.iter().filter(|e| e.declared_here) {
            if !live_removals(m, ev).is_empty() {
                continue;
            }
            for a in &ev.actions {
                if let Some(h) = historical_owner(m, &a.target) {
                    if seen.insert((h.to_string(), ev.name.clone(), a.target.clone())) {
                        out.push(LintFinding::new(
                            "historical-write",
                            Severity::Error,
                            h,
                            format!(
                                "event '{}' writes '{}' without moving anything out of a live class",
                                ev.name, a.target
                            ),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Constructors must guard the instance they create with `p /: C`, where C
/// is the owning class or one of its superclasses.
pub fn check_constructor_freshness(chain: &ResolvedChain) -> Vec<LintFinding> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for m in &chain.machines {
        for ev in m.events.iter().filter(|e| e.declared_here && e.kind == EventKind::Constructor) {
            let Some(owner) = &ev.class_owner else { continue };
            let mut lineage = vec![owner.as_str()];
            while let Some(p) = m.supertype_of(lineage[lineage.len() - 1]) {
                if lineage.contains(&p) {
                    break;
                }
                lineage.push(p);
            }
            let fresh = ev.guards.iter().flat_map(|g| conjuncts(&g.pred)).any(|c| match c {
                Expr::Rel(RelOp::NotIn, p, s) => match (&**p, &**s) {
                    (Expr::Ident(p), Expr::Ident(s)) => {
                        ev.params.iter().any(|q| &q.name == p) && lineage.contains(&s.as_str())
                    }
                    _ => false,
                },
                _ => false,
            });
            if !fresh && seen.insert(ev.name.clone()) {
                out.push(LintFinding::new(
                    "constructor-freshness",
                    Severity::Warning,
                    &ev.name,
                    format!("constructor of {owner} has no guard 'p /: {owner}' for the new instance"),
                ));
            }
        }
    }
    out
}
