//! Refining a many-to-many association `R : A <-> B` into an intermediate
//! class `C` with total functions `R1 : C --> A` and `R2 : C --> B`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{
    Action, BinOp, ClassKind, Context, EventKind, EventLink, Expr, FunctionKind, Labeled, Machine, Param, Quantifier,
    RefinementChain, RelOp, RelationKind, Span, VarRole, VarTyping, VariableDecl,
};
use crate::ast::{Event, Logic};
use crate::checker::{explore_states, CheckError, CheckOptions};
use crate::engine::{value, MachineModel, Scope, Universe, Value};
use crate::parser::KEYWORDS;
use crate::resolve::{resolve, ResolvedChain, ResolvedEvent};
use crate::types::typecheck;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub relation: String,
    pub new_class: String,
    pub fn1_name: String,
    pub fn2_name: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("the model does not resolve: {0}")]
    Resolve(String),
    #[error("the chain has no machine")]
    EmptyChain,
    #[error("'{0}' is not a variable of the last machine")]
    UnknownRelation(String),
    #[error("'{name}' is {kind}, not a many-to-many relation")]
    NotARelation { name: String, kind: String },
    #[error("name '{0}' is already used in the chain")]
    NameClash(String),
    #[error("event '{event}': cannot rewrite {detail}")]
    Unsupported { event: String, detail: String },
    #[error("the split machine does not typecheck: {0}")]
    Invalid(String),
}

struct Names {
    rel: String,
    class: String,
    f1: String,
    f2: String,
    carrier: String,
}

impl Names {
    fn r1_inv_r2(&self) -> Expr {
        Expr::bin(
            BinOp::Compose,
            Expr::Inverse(Box::new(Expr::ident(&self.f1))),
            Expr::ident(&self.f2),
        )
    }

    /// `c |-> x : R1 & c |-> y : R2`
    fn links(&self, c: &Expr, x: &Expr, y: &Expr) -> Expr {
        Expr::and(
            Expr::rel(RelOp::In, Expr::maplet(c.clone(), x.clone()), Expr::ident(&self.f1)),
            Expr::rel(RelOp::In, Expr::maplet(c.clone(), y.clone()), Expr::ident(&self.f2)),
        )
    }
}

fn collect_idents(e: &Expr, out: &mut BTreeSet<String>) {
    out.extend(e.free_idents());
    if let Expr::Quant(_, vars, body) = e {
        for v in vars {
            out.insert(v.name.clone());
            collect_idents(&v.typing, out);
        }
        collect_idents(body, out);
        return;
    }
    match e {
        Expr::Enum(items) => items.iter().for_each(|i| collect_idents(i, out)),
        Expr::Maplet(a, b)
        | Expr::Bin(_, a, b)
        | Expr::Image(a, b)
        | Expr::Apply(a, b)
        | Expr::Rel(_, a, b)
        | Expr::Logic(_, a, b) => {
            collect_idents(a, out);
            collect_idents(b, out);
        }
        Expr::Inverse(a) | Expr::Dom(a) | Expr::Ran(a) | Expr::Pow(a) | Expr::Not(a) => collect_idents(a, out),
        Expr::FnClass { func, dom, ran, .. } => {
            collect_idents(func, out);
            collect_idents(dom, out);
            collect_idents(ran, out);
        }
        Expr::Ident(_) | Expr::Bool(_) | Expr::Quant(..) => {}
    }
}

/// Every name the chain uses anywhere, bound or free.
fn used_names(chain: &RefinementChain) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for c in &chain.contexts {
        out.insert(c.name.clone());
        out.extend(c.carrier_sets.iter().cloned());
        out.extend(c.constants.iter().map(|k| k.name.clone()));
        for a in &c.axioms {
            collect_idents(&a.pred, &mut out);
        }
    }
    for m in &chain.machines {
        out.insert(m.name.clone());
        out.extend(m.variables.iter().map(|v| v.name.clone()));
        for i in &m.invariants {
            collect_idents(&i.pred, &mut out);
        }
        for e in &m.events {
            out.insert(e.name.clone());
            for p in &e.parameters {
                out.insert(p.name.clone());
                collect_idents(&p.typing, &mut out);
            }
            for g in &e.guards {
                collect_idents(&g.pred, &mut out);
            }
            for a in &e.actions {
                out.insert(a.target.clone());
                collect_idents(&a.expr, &mut out);
            }
        }
    }
    out
}

fn fresh(base: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..).map(|i| format!("{base}_{i}")).find(|n| !taken.contains(n)).expect("unbounded")
}

fn fresh_label(prefix: &str, taken: &mut BTreeSet<String>) -> String {
    let l = (1..).map(|i| format!("{prefix}{i}")).find(|n| !taken.contains(n)).expect("unbounded");
    taken.insert(l.clone());
    l
}

fn next_machine_name(last: &str, taken: &BTreeSet<String>) -> String {
    let digits = last.len() - last.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let (stem, num) = last.split_at(last.len() - digits);
        if let Ok(n) = num.parse::<u64>() {
            let mut k = n + 1;
            loop {
                let cand = format!("{stem}{k}");
                if !taken.contains(&cand) {
                    return cand;
                }
                k += 1;
            }
        }
    }
    fresh(&format!("{last}_split"), taken)
}

/// Replace reads of R: pair membership becomes an existential over C,
/// anything else becomes `R1~ ; R2`.
fn rewrite(e: &Expr, n: &Names, taken: &BTreeSet<String>) -> Expr {
    let rw = |x: &Expr| Box::new(rewrite(x, n, taken));
    match e {
        Expr::Rel(op @ (RelOp::In | RelOp::NotIn), lhs, rhs) if **rhs == Expr::Ident(n.rel.clone()) => {
            if let Expr::Maplet(x, y) = &**lhs {
                let (x, y) = (rewrite(x, n, taken), rewrite(y, n, taken));
                let mut avoid = taken.clone();
                avoid.extend(x.free_idents());
                avoid.extend(y.free_idents());
                let c = fresh("c", &avoid);
                let exists = Expr::Quant(
                    Quantifier::Exists,
                    vec![Param {
                        name: c.clone(),
                        typing: Expr::ident(&n.class),
                    }],
                    Box::new(n.links(&Expr::ident(c), &x, &y)),
                );
                return match op {
                    RelOp::In => exists,
                    _ => Expr::Not(Box::new(exists)),
                };
            }
            Expr::Rel(*op, rw(lhs), Box::new(n.r1_inv_r2()))
        }
        Expr::Ident(name) if *name == n.rel => n.r1_inv_r2(),
        Expr::Ident(_) | Expr::Bool(_) => e.clone(),
        Expr::Enum(items) => Expr::Enum(items.iter().map(|i| rewrite(i, n, taken)).collect()),
        Expr::Maplet(a, b) => Expr::Maplet(rw(a), rw(b)),
        Expr::Bin(op, a, b) => Expr::Bin(*op, rw(a), rw(b)),
        Expr::Image(a, b) => Expr::Image(rw(a), rw(b)),
        Expr::Apply(a, b) => Expr::Apply(rw(a), rw(b)),
        Expr::Rel(op, a, b) => Expr::Rel(*op, rw(a), rw(b)),
        Expr::Logic(op, a, b) => Expr::Logic(*op, rw(a), rw(b)),
        Expr::Inverse(a) => Expr::Inverse(rw(a)),
        Expr::Dom(a) => Expr::Dom(rw(a)),
        Expr::Ran(a) => Expr::Ran(rw(a)),
        Expr::Pow(a) => Expr::Pow(rw(a)),
        Expr::Not(a) => Expr::Not(rw(a)),
        Expr::Quant(q, vars, body) => {
            let vars: Vec<Param> = vars
                .iter()
                .map(|v| Param {
                    name: v.name.clone(),
                    typing: rewrite(&v.typing, n, taken),
                })
                .collect();
            let body = if vars.iter().any(|v| v.name == n.rel) {
                body.clone()
            } else {
                rw(body)
            };
            Expr::Quant(*q, vars, body)
        }
        Expr::FnClass { func, dom, ran, kind } => Expr::FnClass {
            func: rw(func),
            dom: rw(dom),
            ran: rw(ran),
            kind: *kind,
        },
    }
}

enum RelUpdate {
    Insert(Expr, Expr),
    Remove(Expr, Expr),
    DomSub(Expr),
    Clear,
}

fn classify_update(target: &str, e: &Expr) -> Option<RelUpdate> {
    let is_r = |x: &Expr| *x == Expr::Ident(target.to_string());
    let single_pair = |x: &Expr| match x {
        Expr::Enum(items) if items.len() == 1 => match &items[0] {
            Expr::Maplet(a, b) => Some(((**a).clone(), (**b).clone())),
            _ => None,
        },
        _ => None,
    };
    match e {
        Expr::Bin(BinOp::Union, l, r) if is_r(l) => single_pair(r).map(|(a, b)| RelUpdate::Insert(a, b)),
        Expr::Bin(BinOp::Union, l, r) if is_r(r) => single_pair(l).map(|(a, b)| RelUpdate::Insert(a, b)),
        Expr::Bin(BinOp::Minus, l, r) if is_r(l) => single_pair(r).map(|(a, b)| RelUpdate::Remove(a, b)),
        Expr::Bin(BinOp::DomSub, s, r) if is_r(r) && !s.mentions(target) => Some(RelUpdate::DomSub((**s).clone())),
        Expr::Enum(items) if items.is_empty() => Some(RelUpdate::Clear),
        _ => None,
    }
}

fn mentions_rel(ev: &ResolvedEvent, rel: &str) -> bool {
    ev.params.iter().any(|p| p.typing.mentions(rel))
        || ev.guards.iter().any(|g| g.pred.mentions(rel))
        || ev.actions.iter().any(|a| a.target == rel || a.expr.mentions(rel))
}

fn rewrite_event(ev: &ResolvedEvent, n: &Names, taken: &BTreeSet<String>) -> Result<Event, SplitError> {
    let mut local = taken.clone();
    local.extend(ev.params.iter().map(|p| p.name.clone()));
    let mut guard_labels: BTreeSet<String> = ev.guards.iter().map(|g| g.label.clone()).collect();
    let mut action_labels: BTreeSet<String> = ev.actions.iter().map(|a| a.label.clone()).collect();

    let mut params: Vec<Param> = ev
        .params
        .iter()
        .map(|p| Param {
            name: p.name.clone(),
            typing: rewrite(&p.typing, n, taken),
        })
        .collect();
    let mut guards: Vec<Labeled> = ev
        .guards
        .iter()
        .map(|g| Labeled {
            label: g.label.clone(),
            pred: rewrite(&g.pred, n, &local),
            span: Span::default(),
        })
        .collect();
    let mut actions = Vec::new();
    let (mut kind, mut owner) = (ev.kind, ev.class_owner.clone());
    let id = |s: &str| Expr::ident(s);
    let act = |label: String, target: &str, expr: Expr| Action {
        label,
        target: target.to_string(),
        expr,
        span: Span::default(),
    };

    for a in &ev.actions {
        if a.target != n.rel {
            actions.push(act(a.label.clone(), &a.target, rewrite(&a.expr, n, &local)));
            continue;
        }
        let update = classify_update(&n.rel, &a.expr).ok_or_else(|| SplitError::Unsupported {
            event: ev.name.clone(),
            detail: format!("the update of {} in @{}", n.rel, a.label),
        })?;
        let mut instance = || {
            let p = fresh(&format!("this_{}", n.class), &local);
            local.insert(p.clone());
            params.push(Param {
                name: p.clone(),
                typing: id(&n.carrier),
            });
            p
        };
        match update {
            RelUpdate::Insert(x, y) => {
                let c = instance();
                let (x, y) = (rewrite(&x, n, &local), rewrite(&y, n, &local));
                guards.push(Labeled {
                    label: fresh_label("grd", &mut guard_labels),
                    pred: Expr::rel(RelOp::NotIn, id(&c), id(&n.class)),
                    span: Span::default(),
                });
                let add = |v: &str, e: Expr| Expr::bin(BinOp::Union, id(v), Expr::singleton(e));
                actions.push(act(a.label.clone(), &n.class, add(&n.class, id(&c))));
                actions.push(act(fresh_label("act", &mut action_labels), &n.f1, add(&n.f1, Expr::maplet(id(&c), x))));
                actions.push(act(fresh_label("act", &mut action_labels), &n.f2, add(&n.f2, Expr::maplet(id(&c), y))));
                if kind == EventKind::Normal {
                    (kind, owner) = (EventKind::Constructor, Some(n.class.clone()));
                }
            }
            RelUpdate::Remove(x, y) => {
                let c = instance();
                let (x, y) = (rewrite(&x, n, &local), rewrite(&y, n, &local));
                guards.push(Labeled {
                    label: fresh_label("grd", &mut guard_labels),
                    pred: n.links(&id(&c), &x, &y),
                    span: Span::default(),
                });
                let single = Expr::singleton(id(&c));
                actions.push(act(a.label.clone(), &n.class, Expr::bin(BinOp::Minus, id(&n.class), single.clone())));
                for f in [&n.f1, &n.f2] {
                    let e = Expr::bin(BinOp::DomSub, single.clone(), id(f));
                    actions.push(act(fresh_label("act", &mut action_labels), f, e));
                }
                if kind == EventKind::Normal {
                    (kind, owner) = (EventKind::Destructor, Some(n.class.clone()));
                }
            }
            RelUpdate::DomSub(s) => {
                let s = rewrite(&s, n, &local);
                let gone = Expr::Image(Box::new(Expr::Inverse(Box::new(id(&n.f1)))), Box::new(s));
                actions.push(act(a.label.clone(), &n.class, Expr::bin(BinOp::Minus, id(&n.class), gone.clone())));
                for f in [&n.f1, &n.f2] {
                    let e = Expr::bin(BinOp::DomSub, gone.clone(), id(f));
                    actions.push(act(fresh_label("act", &mut action_labels), f, e));
                }
            }
            RelUpdate::Clear => {
                for v in [&n.class, &n.f1, &n.f2] {
                    let label = if *v == n.class {
                        a.label.clone()
                    } else {
                        fresh_label("act", &mut action_labels)
                    };
                    actions.push(act(label, v, Expr::Enum(Vec::new())));
                }
            }
        }
    }
    Ok(Event {
        name: ev.name.clone(),
        kind,
        class_owner: owner,
        link: Some(EventLink::Refines(ev.name.clone())),
        parameters: params,
        guards,
        actions,
        span: Span::default(),
    })
}

/// Append a machine that refines the last one by replacing relation R with
/// class C and functions R1, R2, glued by `R = R1~ ; R2` and the composite
/// uniqueness of (R1, R2).
pub fn split_association(chain: &RefinementChain, spec: &SplitSpec) -> Result<RefinementChain, SplitError> {
    let resolved = resolve(chain).map_err(|es| {
        SplitError::Resolve(es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let last = resolved.machines.last().ok_or(SplitError::EmptyChain)?;
    let var = last
        .variable(&spec.relation)
        .ok_or_else(|| SplitError::UnknownRelation(spec.relation.clone()))?;
    let (source, target, rk) = match &var.typing {
        VarTyping::Relation { source, target, kind } => (source.clone(), target.clone(), *kind),
        VarTyping::Class { .. } => {
            return Err(SplitError::NotARelation {
                name: spec.relation.clone(),
                kind: "a class".into(),
            })
        }
    };
    if rk.kind != FunctionKind::Relation {
        return Err(SplitError::NotARelation {
            name: spec.relation.clone(),
            kind: format!("a function ({})", rk.arrow()),
        });
    }

    let mut taken = used_names(chain);
    let new_names = [&spec.new_class, &spec.fn1_name, &spec.fn2_name];
    for (i, name) in new_names.iter().enumerate() {
        if taken.contains(*name) || KEYWORDS.contains(&name.as_str()) || new_names[..i].contains(name) {
            return Err(SplitError::NameClash((*name).clone()));
        }
    }
    taken.extend(new_names.iter().map(|s| (*s).clone()));

    let carrier_base = if spec.new_class.to_uppercase() == spec.new_class {
        format!("{}_SET", spec.new_class)
    } else {
        spec.new_class.to_uppercase()
    };
    let carrier = fresh(&carrier_base, &taken);
    taken.insert(carrier.clone());
    let machine_name = next_machine_name(&last.name, &taken);
    taken.insert(machine_name.clone());
    let ctx_name = fresh(&format!("{machine_name}_ctx"), &taken);
    taken.insert(ctx_name.clone());

    let n = Names {
        rel: spec.relation.clone(),
        class: spec.new_class.clone(),
        f1: spec.fn1_name.clone(),
        f2: spec.fn2_name.clone(),
        carrier: carrier.clone(),
    };

    let role_to = |t: &str| {
        if last.is_class(t) {
            VarRole::Association
        } else {
            VarRole::Attribute
        }
    };
    let decl = |name: &str, role, typing| VariableDecl {
        name: name.to_string(),
        role,
        typing,
        span: Span::default(),
    };
    let variables = vec![
        decl(
            &n.class,
            VarRole::ClassInstanceSet,
            VarTyping::Class {
                parent: carrier.clone(),
                kind: ClassKind::Secondary,
            },
        ),
        decl(
            &n.f1,
            role_to(&source),
            VarTyping::Relation {
                source: n.class.clone(),
                target: source.clone(),
                kind: RelationKind::TOTAL,
            },
        ),
        decl(
            &n.f2,
            role_to(&target),
            VarTyping::Relation {
                source: n.class.clone(),
                target: target.clone(),
                kind: RelationKind::TOTAL,
            },
        ),
    ];

    let mut inv_labels: BTreeSet<String> = last.invariants.iter().map(|i| i.label.clone()).collect();
    let mut inv_label = |base: &str| {
        let l = if inv_labels.contains(base) {
            fresh(&format!("{base}_{}", n.rel), &inv_labels)
        } else {
            base.to_string()
        };
        inv_labels.insert(l.clone());
        l
    };
    let inv1 = Labeled {
        label: inv_label("inv1"),
        pred: Expr::rel(RelOp::Eq, Expr::ident(&n.rel), n.r1_inv_r2()),
        span: Span::default(),
    };
    let [a, b, c1, c2] = ["a", "b", "c1", "c2"].map(|s| fresh(s, &taken));
    let id = |s: &str| Expr::ident(s);
    let uniqueness = Expr::Logic(
        Logic::Implies,
        Box::new(Expr::conjoin(vec![
            Expr::rel(RelOp::In, Expr::maplet(id(&c1), id(&a)), id(&n.f1)),
            Expr::rel(RelOp::In, Expr::maplet(id(&c2), id(&a)), id(&n.f1)),
            Expr::rel(RelOp::In, Expr::maplet(id(&c1), id(&b)), id(&n.f2)),
            Expr::rel(RelOp::In, Expr::maplet(id(&c2), id(&b)), id(&n.f2)),
        ])),
        Box::new(Expr::rel(RelOp::Eq, id(&c1), id(&c2))),
    );
    let param = |name: &str, typing: Expr| Param {
        name: name.to_string(),
        typing,
    };
    let inv2 = Labeled {
        label: inv_label("inv2"),
        pred: Expr::Quant(
            Quantifier::ForAll,
            vec![
                param(&a, Expr::Ran(Box::new(id(&n.f1)))),
                param(&b, Expr::Ran(Box::new(id(&n.f2)))),
                param(&c1, id(&n.class)),
                param(&c2, id(&n.class)),
            ],
            Box::new(uniqueness),
        ),
        span: Span::default(),
    };

    let mut events = Vec::new();
    for ev in last.events.iter().filter(|e| mentions_rel(e, &n.rel)) {
        events.push(rewrite_event(ev, &n, &taken)?);
    }

    let source_last = chain.machines.last().ok_or(SplitError::EmptyChain)?;
    let mut sees = source_last.sees.clone();
    sees.push(ctx_name.clone());
    let mut out = chain.clone();
    out.contexts.push(Context {
        name: ctx_name,
        extends: None,
        carrier_sets: vec![carrier],
        constants: Vec::new(),
        axioms: Vec::new(),
        span: Span::default(),
    });
    out.machines.push(Machine {
        name: machine_name,
        refines: Some(last.name.clone()),
        sees,
        layer: None,
        removes: vec![n.rel.clone()],
        variables,
        invariants: vec![inv1, inv2],
        events,
        span: Span::default(),
    });

    let checked = resolve(&out).map_err(|es| {
        SplitError::Invalid(es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let diags = typecheck(&checked);
    if !diags.is_empty() {
        return Err(SplitError::Invalid(
            diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(out)
}

/// Reachable states of the original last machine compared with the image of
/// the split machine's reachable states under `R = R1~ ; R2`.
#[derive(Clone, Debug)]
pub struct Bisimulation {
    pub original_states: usize,
    pub split_states: usize,
    pub image_states: usize,
    /// Original states with no split counterpart, among those whose R fits
    /// in the bound of C's carrier.
    pub missing: Vec<String>,
    /// Original states whose R has more pairs than C has atoms; these are
    /// out of the split machine's reach at this scope.
    pub truncated: usize,
    /// Images that the original cannot reach.
    pub extra: Vec<String>,
    pub exhausted: bool,
}

impl Bisimulation {
    pub fn holds(&self) -> bool {
        !self.exhausted && self.missing.is_empty() && self.extra.is_empty()
    }
}

/// Carrier numbering may differ between the two universes, so states are
/// compared through a rendering with sorted set elements.
fn canon(v: &Value, u: &Universe) -> String {
    match v {
        Value::Set(items) => {
            let mut parts: Vec<String> = items.iter().map(|i| canon(i, u)).collect();
            parts.sort();
            format!("{{{}}}", parts.join(", "))
        }
        Value::Pair(p) => format!("({} |-> {})", canon(&p.0, u), canon(&p.1, u)),
        _ => u.display(v).to_string(),
    }
}

/// Exhaustive comparison at `scope` (bounds for the split chain's carriers;
/// the original chain uses the same bounds for the carriers it shares).
pub fn split_bisimulation(
    original: &ResolvedChain,
    split: &ResolvedChain,
    spec: &SplitSpec,
    scope: &Scope,
) -> Result<Bisimulation, CheckError> {
    let abs = original.machines.last().ok_or_else(|| CheckError::UnknownMachine("(empty chain)".into()))?;
    let conc = split.machines.last().ok_or_else(|| CheckError::UnknownMachine("(empty chain)".into()))?;
    let abs_scope = Scope {
        bounds: original
            .carriers()
            .into_iter()
            .map(|c| {
                let b = scope.bounds.get(&c).copied().unwrap_or(crate::engine::scope::DEFAULT_CLASS_BOUND);
                (c, b)
            })
            .collect(),
    };

    let abs_u = Arc::new(Universe::new(original, &abs_scope)?);
    let abs_model = MachineModel::new(abs, abs_u.clone())?;
    let abs_run = explore_states(&abs_model, &CheckOptions::new(abs_scope).symmetry(false));
    let rel_at = abs_model
        .var_index(&spec.relation)
        .ok_or_else(|| CheckError::UnknownMachine(format!("{}: no variable {}", abs.name, spec.relation)))?;
    let abs_set: BTreeMap<Vec<String>, usize> = abs_run
        .states
        .iter()
        .map(|s| (s.iter().map(|v| canon(v, &abs_u)).collect(), s[rel_at].len()))
        .collect();

    let conc_u = Arc::new(Universe::new(split, scope)?);
    let conc_model = MachineModel::new(conc, conc_u.clone())?;
    let capacity = conc
        .carrier_of(&spec.new_class)
        .map(|c| scope.bound(&c))
        .ok_or_else(|| CheckError::UnknownMachine(format!("{}: no class {}", conc.name, spec.new_class)))?;
    let conc_run = explore_states(&conc_model, &CheckOptions::new(scope.clone()).symmetry(false));
    let idx = |name: &str| {
        conc_model
            .var_index(name)
            .ok_or_else(|| CheckError::UnknownMachine(format!("{}: no variable {name}", conc.name)))
    };
    let (f1, f2) = (idx(&spec.fn1_name)?, idx(&spec.fn2_name)?);
    let mut sources: Vec<Option<usize>> = Vec::new();
    for name in &abs_model.var_names {
        sources.push(if *name == spec.relation { None } else { Some(idx(name)?) });
    }
    let mut image: BTreeSet<Vec<String>> = BTreeSet::new();
    for s in &conc_run.states {
        let empty = Value::empty();
        let set = |i: usize| s[i].as_set().unwrap_or(empty.as_set().expect("set")).to_vec();
        let rel = Value::set_from(value::compose(&value::inverse(&set(f1)), &set(f2)));
        image.insert(
            sources
                .iter()
                .map(|src| match src {
                    Some(i) => canon(&s[*i], &conc_u),
                    None => canon(&rel, &conc_u),
                })
                .collect(),
        );
    }
    let show = |st: &Vec<String>| {
        let parts: BTreeMap<&String, &String> = abs_model.var_names.iter().zip(st).collect();
        format!("{parts:?}")
    };
    let (mut missing, mut truncated) = (Vec::new(), 0);
    for (st, pairs) in &abs_set {
        if !image.contains(st) {
            if *pairs > capacity {
                truncated += 1;
            } else {
                missing.push(show(st));
            }
        }
    }
    Ok(Bisimulation {
        original_states: abs_run.states.len(),
        split_states: conc_run.states.len(),
        image_states: image.len(),
        missing,
        truncated,
        extra: image.iter().filter(|st| !abs_set.contains_key(*st)).map(show).collect(),
        exhausted: abs_run.exhausted || conc_run.exhausted,
    })
}
