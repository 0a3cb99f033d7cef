use super::{ObligationKind, ProofObligation};
use crate::ast::{Expr, RelOp};
use crate::resolve::{Invariant, ResolvedChain, ResolvedEvent, ResolvedMachine};

/// INV per (event, invariant) and FEAS per event, in event order.
pub fn machine_obligations(m: &ResolvedMachine) -> Vec<ProofObligation> {
    let mut out = Vec::new();
    for ev in &m.events {
        for inv in m.state_invariants() {
            out.push(ProofObligation {
                kind: ObligationKind::INV,
                machine: m.name.clone(),
                abstract_machine: None,
                event: Some(ev.name.clone()),
                invariant_label: Some(inv.label.clone()),
                predicate: inv.pred.clone(),
            });
        }
        out.push(ProofObligation {
            kind: ObligationKind::FEAS,
            machine: m.name.clone(),
            abstract_machine: None,
            event: Some(ev.name.clone()),
            invariant_label: None,
            predicate: Expr::conjoin(ev.guards.iter().map(|g| g.pred.clone()).collect()),
        });
    }
    out
}

/// Invariants checked across a refinement step: the gluing invariants
/// proper, plus invariants introduced alongside them that constrain the
/// same concrete variables (such as the composite uniqueness that
/// accompanies a split association).
pub(crate) fn glue_invariants<'a>(abs: &ResolvedMachine, conc: &'a ResolvedMachine) -> Vec<&'a Invariant> {
    let gluing: Vec<&Invariant> = conc.invariants.iter().filter(|i| i.gluing).collect();
    let glued_vars: Vec<String> = gluing
        .iter()
        .flat_map(|i| i.pred.free_idents())
        .filter(|n| conc.variable(n).is_some() && abs.variable(n).is_none())
        .collect();
    conc.invariants
        .iter()
        .filter(|i| {
            i.gluing
                || (!i.implicit
                    && i.origin == conc.name
                    && i.pred.free_idents().iter().any(|n| glued_vars.contains(n)))
        })
        .collect()
}

/// Variables an event (or the abstract event it refines) may change.
pub(crate) fn touched_vars(ev: &ResolvedEvent, abs: &ResolvedMachine) -> Vec<String> {
    let mut out: Vec<String> = ev.assigned_vars().iter().map(|s| s.to_string()).collect();
    if let Some(a) = ev.abstract_event.as_deref().and_then(|n| abs.event(n)) {
        out.extend(a.assigned_vars().iter().map(|s| s.to_string()));
    }
    out
}

pub(crate) fn touches(ev: &ResolvedEvent, abs: &ResolvedMachine, inv: &Invariant) -> bool {
    let vars = touched_vars(ev, abs);
    inv.pred.free_idents().iter().any(|n| vars.contains(n))
}

/// GRD and SIM per refined event, SIM per new event, GLU per (event, gluing
/// invariant) for events that touch the invariant's variables.
pub fn refinement_obligations(abs: &ResolvedMachine, conc: &ResolvedMachine) -> Vec<ProofObligation> {
    let glue = glue_invariants(abs, conc);
    let mut out = Vec::new();
    let mk = |kind, event: &str, label: Option<&str>, predicate| ProofObligation {
        kind,
        machine: conc.name.clone(),
        abstract_machine: Some(abs.name.clone()),
        event: Some(event.to_string()),
        invariant_label: label.map(str::to_string),
        predicate,
    };
    for ev in &conc.events {
        let abs_ev = ev.abstract_event.as_deref().and_then(|n| abs.event(n));
        if let Some(a) = abs_ev {
            out.push(mk(
                ObligationKind::GRD,
                &ev.name,
                None,
                Expr::conjoin(a.guards.iter().map(|g| g.pred.clone()).collect()),
            ));
        }
        let sim = match abs_ev {
            Some(a) => Expr::conjoin(
                a.actions
                    .iter()
                    .map(|act| Expr::rel(RelOp::Eq, Expr::ident(&act.target), act.expr.clone()))
                    .collect(),
            ),
            None => Expr::Bool(true),
        };
        out.push(mk(ObligationKind::SIM, &ev.name, None, sim));
        for inv in &glue {
            if touches(ev, abs, inv) {
                out.push(mk(ObligationKind::GLU, &ev.name, Some(&inv.label), inv.pred.clone()));
            }
        }
    }
    out
}

/// Every obligation of every machine and every refinement step.
pub fn generate_obligations(chain: &ResolvedChain) -> Vec<ProofObligation> {
    let mut out = Vec::new();
    for m in &chain.machines {
        out.extend(machine_obligations(m));
    }
    for m in &chain.machines {
        if let Some(a) = chain.abstraction_of(m) {
            out.extend(refinement_obligations(a, m));
        }
    }
    out
}
