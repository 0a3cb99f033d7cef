use std::collections::BTreeSet;

use super::classify::{is_historical, live_removals};
use super::{LintFinding, Severity};
use crate::ast::{BinOp, Expr, FunctionKind};
use crate::resolve::ResolvedChain;

/// Every insertion `H := H \/ X` into a historical class H must be paired in
/// the same event with a removal `L := L \ X` from a live class, and the
/// event must assign every total attribute whose source is H.
pub fn check_historical_pattern(chain: &ResolvedChain) -> Vec<LintFinding> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for m in &chain.machines {
        for ev in m.events.iter().filter(|e| e.declared_here) {
            let removals = live_removals(m, ev);
            let assigned = ev.assigned_vars();
            for a in &ev.actions {
                if !is_historical(m, &a.target) {
                    continue;
                }
                let inserted = match &a.expr {
                    Expr::Bin(BinOp::Union, l, x) if **l == Expr::Ident(a.target.clone()) => &**x,
                    _ => continue,
                };
                if !seen.insert((ev.name.clone(), a.target.clone())) {
                    continue;
                }
                if !removals.iter().any(|(_, x)| *x == inserted) {
                    out.push(LintFinding::new(
                        "non-atomic-move",
                        Severity::Error,
                        &ev.name,
                        format!(
                            "inserts into historical class {} without removing the same instances from a live class",
                            a.target
                        ),
                    ));
                    continue;
                }
                for v in &m.variables {
                    let Some((source, _, kind)) = v.relation() else { continue };
                    if source == a.target && kind.kind == FunctionKind::Total && !assigned.contains(&v.name.as_str()) {
                        out.push(LintFinding::new(
                            "historical-attribute",
                            Severity::Error,
                            &ev.name,
                            format!("moves instances into {} but does not assign '{}'", a.target, v.name),
                        ));
                    }
                }
            }
        }
    }
    out
}
