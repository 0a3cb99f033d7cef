//! Name resolution across a refinement chain.
//!
//! Each machine's effective vocabulary is its own declarations plus whatever
//! it inherits from the machine it refines (minus variables it `removes`).
//! Extending events are expanded into the union of their own and the
//! abstract event's parameters, guards and actions.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::ast::*;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("{span}: unresolved name '{name}' in {location}")]
    UnresolvedName {
        name: String,
        location: String,
        span: Span,
    },
    #[error("{span}: duplicate name '{name}' ({what})")]
    DuplicateName {
        name: String,
        what: String,
        span: Span,
    },
    #[error("cyclic refinement: {cycle}")]
    CyclicRefinement { cycle: String },
    #[error("{span}: machine '{machine}' must refine the machine immediately before it ({message})")]
    RefinementOrder {
        machine: String,
        message: String,
        span: Span,
    },
    #[error("{span}: event '{event}' cannot refine '{target}': {reason}")]
    ExtendMismatch {
        event: String,
        target: String,
        reason: String,
        span: Span,
    },
    #[error("{span}: {message}")]
    InvalidDeclaration { message: String, span: Span },
}

/// An invariant in a machine's effective list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invariant {
    pub label: String,
    pub pred: Expr,
    /// Machine that introduced the invariant.
    pub origin: String,
    /// Generated from a variable declaration rather than written by hand.
    pub implicit: bool,
    /// Mentions an abstract variable removed by this machine.
    pub gluing: bool,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedEvent {
    pub name: String,
    pub kind: EventKind,
    pub class_owner: Option<String>,
    pub params: Vec<Param>,
    pub guards: Vec<Labeled>,
    pub actions: Vec<Action>,
    /// The abstract event this one refines; `None` for new events, which
    /// refine `skip`.
    pub abstract_event: Option<String>,
    /// Guards and actions of the abstract event are included verbatim.
    pub extended: bool,
    /// Declared in this machine (as opposed to inherited unchanged).
    pub declared_here: bool,
    pub span: Span,
}

impl ResolvedEvent {
    pub fn assigned_vars(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.target.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedMachine {
    pub name: String,
    pub abstraction: Option<usize>,
    pub layer: Option<LayerLabel>,
    pub carriers: Vec<String>,
    pub constants: Vec<Constant>,
    pub axioms: Vec<Labeled>,
    pub variables: Vec<VariableDecl>,
    /// Variables of the abstraction dropped by this machine.
    pub removed: Vec<VariableDecl>,
    pub invariants: Vec<Invariant>,
    pub events: Vec<ResolvedEvent>,
    pub span: Span,
}

impl ResolvedMachine {
    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn event(&self, name: &str) -> Option<&ResolvedEvent> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn classes(&self) -> impl Iterator<Item = &VariableDecl> {
        self.variables
            .iter()
            .filter(|v| v.role == VarRole::ClassInstanceSet)
    }

    pub fn is_class(&self, name: &str) -> bool {
        self.variable(name)
            .is_some_and(|v| v.role == VarRole::ClassInstanceSet)
    }

    /// Carrier set a class draws its instances from, following superclasses.
    pub fn carrier_of(&self, class: &str) -> Option<String> {
        let mut cur = class.to_string();
        for _ in 0..=self.variables.len() {
            match self.variable(&cur).map(|v| &v.typing) {
                Some(VarTyping::Class { parent, .. }) => {
                    if self.carriers.contains(parent) {
                        return Some(parent.clone());
                    }
                    cur = parent.clone();
                }
                _ => return None,
            }
        }
        None
    }

    pub fn supertype_of(&self, class: &str) -> Option<&str> {
        match self.variable(class).map(|v| &v.typing) {
            Some(VarTyping::Class { parent, .. }) if self.is_class(parent) => Some(parent),
            _ => None,
        }
    }

    /// Invariants checkable on this machine's own state.
    pub fn state_invariants(&self) -> impl Iterator<Item = &Invariant> {
        self.invariants.iter().filter(|i| !i.gluing)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedChain {
    pub source: RefinementChain,
    pub machines: Vec<ResolvedMachine>,
}

impl ResolvedChain {
    pub fn machine(&self, name: &str) -> Option<&ResolvedMachine> {
        self.machines.iter().find(|m| m.name == name)
    }

    pub fn machine_index(&self, name: &str) -> Option<usize> {
        self.machines.iter().position(|m| m.name == name)
    }

    pub fn abstraction_of(&self, m: &ResolvedMachine) -> Option<&ResolvedMachine> {
        m.abstraction.map(|i| &self.machines[i])
    }

    /// All carrier sets declared in the chain, in declaration order.
    pub fn carriers(&self) -> Vec<String> {
        self.source
            .contexts
            .iter()
            .flat_map(|c| c.carrier_sets.iter().cloned())
            .collect()
    }

    /// Carrier sets that supply class instances in some machine.
    pub fn class_carriers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for m in &self.machines {
            for c in m.classes() {
                if let Some(k) = m.carrier_of(&c.name) {
                    out.insert(k);
                }
            }
        }
        out
    }

    pub fn constants(&self) -> Vec<Constant> {
        self.source
            .contexts
            .iter()
            .flat_map(|c| c.constants.iter().cloned())
            .collect()
    }

    pub fn axioms(&self) -> Vec<Labeled> {
        self.source
            .contexts
            .iter()
            .flat_map(|c| c.axioms.iter().cloned())
            .collect()
    }
}

/// Implicit typing invariant for a declaration, if it carries information
/// beyond membership in a carrier set.
pub fn typing_invariant(v: &VariableDecl, classes: &HashSet<String>) -> Option<Expr> {
    match &v.typing {
        VarTyping::Class { parent, .. } => classes
            .contains(parent)
            .then(|| Expr::rel(RelOp::Subset, Expr::ident(&v.name), Expr::ident(parent))),
        VarTyping::Relation {
            source,
            target,
            kind,
        } => Some(Expr::FnClass {
            func: Box::new(Expr::ident(&v.name)),
            dom: Box::new(Expr::ident(source)),
            ran: Box::new(Expr::ident(target)),
            kind: *kind,
        }),
    }
}

pub fn typing_label(var: &str) -> String {
    format!("{var}_typing")
}

pub fn resolve(chain: &RefinementChain) -> Result<ResolvedChain, Vec<ResolveError>> {
    let mut errors = Vec::new();

    // Contexts: unique names, `extends` points backwards.
    let mut ctx_index: HashMap<&str, usize> = HashMap::new();
    for (i, c) in chain.contexts.iter().enumerate() {
        if ctx_index.insert(&c.name, i).is_some() {
            errors.push(ResolveError::DuplicateName {
                name: c.name.clone(),
                what: "context".into(),
                span: c.span.clone(),
            });
        }
        if let Some(parent) = &c.extends {
            match ctx_index.get(parent.as_str()) {
                Some(&j) if j < i => {}
                _ => errors.push(ResolveError::UnresolvedName {
                    name: parent.clone(),
                    location: format!("context {} extends", c.name),
                    span: c.span.clone(),
                }),
            }
        }
    }

    // Carriers, constants and variables are pairwise distinct chain-wide.
    let mut global: HashMap<String, &'static str> = HashMap::new();
    let mut claim = |name: &str, what: &'static str, span: &Span, errors: &mut Vec<ResolveError>| {
        if let Some(prev) = global.insert(name.to_string(), what) {
            errors.push(ResolveError::DuplicateName {
                name: name.to_string(),
                what: format!("{what} clashes with {prev}"),
                span: span.clone(),
            });
        }
    };
    for c in &chain.contexts {
        for s in &c.carrier_sets {
            claim(s, "carrier set", &c.span, &mut errors);
        }
        for k in &c.constants {
            claim(&k.name, "constant", &k.span, &mut errors);
        }
    }
    for m in &chain.machines {
        for v in &m.variables {
            claim(&v.name, "variable", &v.span, &mut errors);
        }
    }

    // Refinement graph: no cycles, each machine refines its predecessor.
    let names: Vec<&str> = chain.machines.iter().map(|m| m.name.as_str()).collect();
    let mut seen_m = HashSet::new();
    for m in &chain.machines {
        if !seen_m.insert(m.name.as_str()) {
            errors.push(ResolveError::DuplicateName {
                name: m.name.clone(),
                what: "machine".into(),
                span: m.span.clone(),
            });
        }
    }
    for m in &chain.machines {
        let mut path = vec![m.name.as_str()];
        let mut cur = m;
        while let Some(next) = &cur.refines {
            if path.contains(&next.as_str()) {
                path.push(next);
                let cycle = path.join(" -> ");
                if !errors
                    .iter()
                    .any(|e| matches!(e, ResolveError::CyclicRefinement { .. }))
                {
                    errors.push(ResolveError::CyclicRefinement { cycle });
                }
                break;
            }
            path.push(next);
            match chain.machine(next) {
                Some(n) => cur = n,
                None => break,
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    for (i, m) in chain.machines.iter().enumerate() {
        if let Some(r) = &m.refines {
            if !names.contains(&r.as_str()) {
                errors.push(ResolveError::UnresolvedName {
                    name: r.clone(),
                    location: format!("machine {} refines", m.name),
                    span: m.span.clone(),
                });
            } else if i == 0 || names[i - 1] != r {
                errors.push(ResolveError::RefinementOrder {
                    machine: m.name.clone(),
                    message: format!("it refines '{r}'"),
                    span: m.span.clone(),
                });
            }
        }
        for s in &m.sees {
            if !ctx_index.contains_key(s.as_str()) {
                errors.push(ResolveError::UnresolvedName {
                    name: s.clone(),
                    location: format!("machine {} sees", m.name),
                    span: m.span.clone(),
                });
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut resolved: Vec<ResolvedMachine> = Vec::new();
    for (i, m) in chain.machines.iter().enumerate() {
        let abs = m.refines.as_ref().map(|_| i - 1);
        let rm = resolve_machine(chain, &ctx_index, m, abs.map(|j| &resolved[j]), abs, &mut errors);
        resolved.push(rm);
    }
    if errors.is_empty() {
        Ok(ResolvedChain {
            source: chain.clone(),
            machines: resolved,
        })
    } else {
        Err(errors)
    }
}

fn visible_contexts(chain: &RefinementChain, ctx_index: &HashMap<&str, usize>, roots: &[String]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = roots
        .iter()
        .filter_map(|r| ctx_index.get(r.as_str()).copied())
        .collect();
    while let Some(i) = stack.pop() {
        if out.insert(i) {
            if let Some(p) = &chain.contexts[i].extends {
                if let Some(&j) = ctx_index.get(p.as_str()) {
                    stack.push(j);
                }
            }
        }
    }
    out
}

fn resolve_machine(
    chain: &RefinementChain,
    ctx_index: &HashMap<&str, usize>,
    m: &Machine,
    abs: Option<&ResolvedMachine>,
    abs_index: Option<usize>,
    errors: &mut Vec<ResolveError>,
) -> ResolvedMachine {
    let mut ctxs = visible_contexts(chain, ctx_index, &m.sees);
    if let Some(a) = abs {
        // Inherit the abstraction's view of the static part.
        for c in &chain.contexts {
            if c.carrier_sets.iter().any(|s| a.carriers.contains(s))
                || c.constants.iter().any(|k| a.constants.iter().any(|ak| ak.name == k.name))
            {
                ctxs.insert(ctx_index[c.name.as_str()]);
            }
        }
    }
    let mut carriers = Vec::new();
    let mut constants = Vec::new();
    let mut axioms = Vec::new();
    for &i in &ctxs {
        let c = &chain.contexts[i];
        carriers.extend(c.carrier_sets.iter().cloned());
        constants.extend(c.constants.iter().cloned());
        axioms.extend(c.axioms.iter().cloned());
    }

    // Variables: inherited minus removed, then own.
    let mut removed = Vec::new();
    let mut variables: Vec<VariableDecl> = abs.map(|a| a.variables.clone()).unwrap_or_default();
    for r in &m.removes {
        match variables.iter().position(|v| &v.name == r) {
            Some(p) => removed.push(variables.remove(p)),
            None => errors.push(ResolveError::UnresolvedName {
                name: r.clone(),
                location: format!("machine {} removes", m.name),
                span: m.span.clone(),
            }),
        }
    }
    variables.extend(m.variables.iter().cloned());
    let class_names: HashSet<String> = variables
        .iter()
        .filter(|v| v.role == VarRole::ClassInstanceSet)
        .map(|v| v.name.clone())
        .collect();
    for v in &m.variables {
        match &v.typing {
            VarTyping::Class { parent, .. } => {
                if !carriers.contains(parent) && !class_names.contains(parent) {
                    errors.push(ResolveError::UnresolvedName {
                        name: parent.clone(),
                        location: format!("class {}", v.name),
                        span: v.span.clone(),
                    });
                }
                if parent == &v.name {
                    errors.push(ResolveError::InvalidDeclaration {
                        message: format!("class {} cannot be its own supertype", v.name),
                        span: v.span.clone(),
                    });
                }
            }
            VarTyping::Relation { source, target, .. } => {
                if !class_names.contains(source) {
                    errors.push(ResolveError::UnresolvedName {
                        name: source.clone(),
                        location: format!("source class of {}", v.name),
                        span: v.span.clone(),
                    });
                }
                if !class_names.contains(target) && !carriers.contains(target) {
                    errors.push(ResolveError::UnresolvedName {
                        name: target.clone(),
                        location: format!("target of {}", v.name),
                        span: v.span.clone(),
                    });
                }
            }
        }
    }

    let mut globals: HashSet<String> = carriers.iter().cloned().collect();
    globals.extend(constants.iter().map(|k| k.name.clone()));
    globals.extend(variables.iter().map(|v| v.name.clone()));
    let removed_names: HashSet<String> = removed.iter().map(|v| v.name.clone()).collect();

    // Invariants.
    let mut invariants: Vec<Invariant> = abs
        .map(|a| {
            a.invariants
                .iter()
                .filter(|inv| !inv.gluing && !inv.pred.free_idents().iter().any(|n| removed_names.contains(n)))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    for v in &m.variables {
        if let Some(pred) = typing_invariant(v, &class_names) {
            invariants.push(Invariant {
                label: typing_label(&v.name),
                pred,
                origin: m.name.clone(),
                implicit: true,
                gluing: false,
                span: v.span.clone(),
            });
        }
    }
    for inv in &m.invariants {
        let free = inv.pred.free_idents();
        let gluing = free.iter().any(|n| removed_names.contains(n));
        for n in &free {
            if !globals.contains(n) && !removed_names.contains(n) {
                errors.push(ResolveError::UnresolvedName {
                    name: n.clone(),
                    location: format!("invariant @{} of {}", inv.label, m.name),
                    span: inv.span.clone(),
                });
            }
        }
        invariants.push(Invariant {
            label: inv.label.clone(),
            pred: inv.pred.clone(),
            origin: m.name.clone(),
            implicit: false,
            gluing,
            span: inv.span.clone(),
        });
    }
    let mut labels = HashSet::new();
    for inv in &invariants {
        if !labels.insert(inv.label.clone()) {
            errors.push(ResolveError::DuplicateName {
                name: inv.label.clone(),
                what: format!("invariant label in {}", m.name),
                span: inv.span.clone(),
            });
        }
    }

    // Events.
    let mut events: Vec<ResolvedEvent> = Vec::new();
    let own_names: HashSet<&str> = m.events.iter().map(|e| e.name.as_str()).collect();
    let mut consumed: HashSet<String> = HashSet::new();
    let mut dup = HashSet::new();
    for e in &m.events {
        if !dup.insert(e.name.as_str()) {
            errors.push(ResolveError::DuplicateName {
                name: e.name.clone(),
                what: format!("event in {}", m.name),
                span: e.span.clone(),
            });
        }
    }
    let resolve_own = |e: &Event, errors: &mut Vec<ResolveError>| -> ResolvedEvent {
        let mut ev = ResolvedEvent {
            name: e.name.clone(),
            kind: e.kind,
            class_owner: e.class_owner.clone(),
            params: e.parameters.clone(),
            guards: e.guards.clone(),
            actions: e.actions.clone(),
            abstract_event: None,
            extended: false,
            declared_here: true,
            span: e.span.clone(),
        };
        let Some(link) = &e.link else { return ev };
        let target = link.target();
        let Some(ae) = abs.and_then(|a| a.event(target)) else {
            errors.push(ResolveError::ExtendMismatch {
                event: e.name.clone(),
                target: target.to_string(),
                reason: if abs.is_none() {
                    "the machine refines nothing".into()
                } else {
                    "no such abstract event".into()
                },
                span: e.span.clone(),
            });
            return ev;
        };
        ev.abstract_event = Some(ae.name.clone());
        match link {
            EventLink::Extends(_) => {
                ev.extended = true;
                ev.params = ae.params.iter().chain(&e.parameters).cloned().collect();
                ev.guards = ae.guards.iter().chain(&e.guards).cloned().collect();
                ev.actions = ae.actions.iter().chain(&e.actions).cloned().collect();
                if ev.class_owner.is_none() {
                    ev.class_owner = ae.class_owner.clone();
                }
            }
            EventLink::Refines(_) => {
                for p in &ae.params {
                    if !e.parameters.iter().any(|q| q.name == p.name) {
                        errors.push(ResolveError::ExtendMismatch {
                            event: e.name.clone(),
                            target: target.to_string(),
                            reason: format!("abstract parameter '{}' is not kept", p.name),
                            span: e.span.clone(),
                        });
                    }
                }
            }
        }
        ev
    };
    if let Some(a) = abs {
        for ae in &a.events {
            // A concrete event linked to this abstract one replaces it in place.
            let linked: Vec<&Event> = m
                .events
                .iter()
                .filter(|e| e.link.as_ref().is_some_and(|l| l.target() == ae.name))
                .collect();
            if linked.is_empty() {
                if own_names.contains(ae.name.as_str()) {
                    let e = m.events.iter().find(|e| e.name == ae.name).unwrap();
                    errors.push(ResolveError::ExtendMismatch {
                        event: e.name.clone(),
                        target: ae.name.clone(),
                        reason: "redeclares an abstract event without 'extends' or 'refines'".into(),
                        span: e.span.clone(),
                    });
                    continue;
                }
                let mut inherited = ae.clone();
                inherited.abstract_event = Some(ae.name.clone());
                inherited.extended = true;
                inherited.declared_here = false;
                events.push(inherited);
            } else {
                for e in linked {
                    consumed.insert(e.name.clone());
                    events.push(resolve_own(e, errors));
                }
            }
        }
    }
    for e in &m.events {
        if !consumed.contains(&e.name) && !(e.link.is_none() && abs.is_some_and(|a| a.event(&e.name).is_some())) {
            events.push(resolve_own(e, errors));
        }
    }

    for ev in &events {
        check_event_names(m, ev, &globals, &variables, errors);
    }

    ResolvedMachine {
        name: m.name.clone(),
        abstraction: abs_index,
        layer: m.layer,
        carriers,
        constants,
        axioms,
        variables,
        removed,
        invariants,
        events,
        span: m.span.clone(),
    }
}

fn check_event_names(
    m: &Machine,
    ev: &ResolvedEvent,
    globals: &HashSet<String>,
    variables: &[VariableDecl],
    errors: &mut Vec<ResolveError>,
) {
    let loc = |what: &str| format!("{what} of event {} in {}", ev.name, m.name);
    let mut scope = globals.clone();
    for p in &ev.params {
        for n in p.typing.free_idents() {
            if !scope.contains(&n) {
                errors.push(ResolveError::UnresolvedName {
                    name: n,
                    location: loc(&format!("typing of parameter {}", p.name)),
                    span: ev.span.clone(),
                });
            }
        }
        if !scope.insert(p.name.clone()) {
            errors.push(ResolveError::DuplicateName {
                name: p.name.clone(),
                what: loc("parameter"),
                span: ev.span.clone(),
            });
        }
    }
    let mut labels = HashSet::new();
    for g in &ev.guards {
        if !labels.insert(g.label.clone()) {
            errors.push(ResolveError::DuplicateName {
                name: g.label.clone(),
                what: loc("guard label"),
                span: g.span.clone(),
            });
        }
        for n in g.pred.free_idents() {
            if !scope.contains(&n) {
                errors.push(ResolveError::UnresolvedName {
                    name: n,
                    location: loc(&format!("guard @{}", g.label)),
                    span: g.span.clone(),
                });
            }
        }
    }
    let mut alabels = HashSet::new();
    for a in &ev.actions {
        if !alabels.insert(a.label.clone()) {
            errors.push(ResolveError::DuplicateName {
                name: a.label.clone(),
                what: loc("action label"),
                span: a.span.clone(),
            });
        }
        if !variables.iter().any(|v| v.name == a.target) {
            errors.push(ResolveError::UnresolvedName {
                name: a.target.clone(),
                location: loc(&format!("target of action @{}", a.label)),
                span: a.span.clone(),
            });
        }
        for n in a.expr.free_idents() {
            if !scope.contains(&n) {
                errors.push(ResolveError::UnresolvedName {
                    name: n,
                    location: loc(&format!("action @{}", a.label)),
                    span: a.span.clone(),
                });
            }
        }
    }
    if ev.kind == EventKind::Query && !ev.actions.is_empty() {
        errors.push(ResolveError::InvalidDeclaration {
            message: format!("query event {} must not have actions", ev.name),
            span: ev.span.clone(),
        });
    }
    if let Some(owner) = &ev.class_owner {
        if !variables
            .iter()
            .any(|v| &v.name == owner && v.role == VarRole::ClassInstanceSet)
        {
            errors.push(ResolveError::UnresolvedName {
                name: owner.clone(),
                location: loc("owner class"),
                span: ev.span.clone(),
            });
        }
    }
}
