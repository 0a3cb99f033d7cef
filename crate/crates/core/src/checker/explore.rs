//! Breadth-first exploration of one machine from the all-empty state.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use super::obligations::machine_obligations;
use super::{CheckError, CheckOptions, CheckReport, ObligationKind, ProofObligation, Trace, TraceStep, Verdict};
use crate::ast::{EventKind, Expr, RelOp};
use crate::engine::{Binding, EvalError, FreshAtoms, MachineModel, State, Symmetry, Universe, Value};
use crate::resolve::{ResolvedChain, ResolvedMachine};
use rustc_hash::FxHashMap;

pub(crate) struct Node {
    pub state: State,
    pub parent: Option<(u32, u16, Binding)>,
    /// Indices of invariants violated in this state.
    pub violated: Vec<u16>,
}

/// Visited-state store keyed by canonical form. Raw states already seen are
/// cached separately so that repeated successors skip canonicalisation.
pub(crate) struct Graph {
    pub nodes: Vec<Node>,
    visited: FxHashMap<Vec<Value>, u32>,
    raw: FxHashMap<State, u32>,
    sym: Option<Symmetry>,
}

impl Graph {
    pub fn new(universe: &Universe, symmetry: bool) -> Graph {
        Graph {
            nodes: Vec::new(),
            visited: FxHashMap::default(),
            raw: FxHashMap::default(),
            sym: symmetry.then(|| Symmetry::new(universe)),
        }
    }

    /// Node already holding `s` (up to symmetry), or the key to add it under.
    pub fn find(&mut self, s: &State) -> (Option<u32>, Vec<Value>) {
        let Some(sym) = &self.sym else {
            return (self.visited.get(s).copied(), s.clone());
        };
        if let Some(&id) = self.raw.get(s) {
            return (Some(id), Vec::new());
        }
        let k = sym.canonical(s);
        let hit = self.visited.get(&k).copied();
        if let Some(id) = hit {
            self.raw.insert(s.clone(), id);
        }
        (hit, k)
    }

    /// Unused-atom filter for bindings taken in `s`, when symmetry is on.
    pub fn fresh(&self, s: &State) -> Option<FreshAtoms> {
        self.sym.as_ref().map(|sym| sym.fresh(s))
    }

    pub fn add(&mut self, key: Vec<Value>, node: Node) -> u32 {
        let id = self.nodes.len() as u32;
        if self.sym.is_some() {
            self.raw.insert(node.state.clone(), id);
        }
        self.nodes.push(node);
        self.visited.insert(key, id);
        id
    }

    /// (event, binding, post-state) from the initial state to `id`.
    pub fn path(&self, mut id: u32) -> Vec<(u16, Binding, &State)> {
        let mut out = Vec::new();
        while let Some((p, e, b)) = &self.nodes[id as usize].parent {
            out.push((*e, b.clone(), &self.nodes[id as usize].state));
            id = *p;
        }
        out.reverse();
        out
    }
}

pub(crate) fn named(names: &[String], vals: &[Value]) -> Vec<(String, Value)> {
    names.iter().cloned().zip(vals.iter().cloned()).collect()
}

pub(crate) fn make_trace(model: &MachineModel, steps: Vec<(u16, Binding, State)>) -> Trace {
    Trace {
        steps: steps
            .into_iter()
            .map(|(e, b, post)| {
                let ev = &model.events[e as usize];
                TraceStep {
                    event: ev.name.clone(),
                    binding: named(&ev.params, &b),
                    post: named(&model.var_names, &post),
                    abstract_post: None,
                }
            })
            .collect(),
        carriers: Arc::new(model.universe.carriers.clone()),
    }
}

/// Re-run a trace through the engine, checking each step is an enabled
/// transition producing the recorded state. Returns the final state.
pub fn replay(model: &MachineModel, trace: &Trace) -> Result<State, String> {
    let mut s = model.initial_state();
    for (i, step) in trace.steps.iter().enumerate() {
        let e = model
            .event_index(&step.event)
            .ok_or_else(|| format!("step {}: unknown event '{}'", i + 1, step.event))?;
        let ev = &model.events[e];
        let mut b = Vec::new();
        for p in &ev.params {
            let v = step
                .binding
                .iter()
                .find(|(n, _)| n == p)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| format!("step {}: parameter '{p}' missing", i + 1))?;
            b.push(v);
        }
        match ev.guards_hold(&b, &s) {
            Ok(true) => {}
            Ok(false) => {
                let g = ev.failing_guard(&b, &s).unwrap_or("typing");
                return Err(format!("step {}: {} is not enabled (guard @{g} fails)", i + 1, step.event));
            }
            Err(err) => return Err(format!("step {}: {err}", i + 1)),
        }
        s = ev.apply(&b, &s).map_err(|err| format!("step {}: {err}", i + 1))?;
        for (name, v) in &step.post {
            if let Some(k) = model.var_index(name) {
                if &s[k] != v {
                    return Err(format!("step {}: state of '{name}' differs from the trace", i + 1));
                }
            }
        }
    }
    Ok(s)
}

/// Reachable states of a machine. Like `check`, states that violate an
/// invariant are recorded but not expanded (the initial state always is).
pub struct Exploration {
    pub states: Vec<State>,
    pub exhausted: bool,
}

pub fn explore_states(model: &MachineModel, opts: &CheckOptions) -> Exploration {
    let run = run(model, opts);
    Exploration {
        states: run.graph.nodes.into_iter().map(|n| n.state).collect(),
        exhausted: run.exhausted,
    }
}

struct Run {
    graph: Graph,
    exhausted: bool,
    fired: Vec<bool>,
    no_fresh_atom: Vec<bool>,
    /// First violation per (event, invariant): (pre node, binding, post).
    inv_viol: HashMap<(u16, u16), (u32, Binding, State)>,
    wd: Vec<Option<(u32, Binding, EvalError)>>,
}

fn run(model: &MachineModel, opts: &CheckOptions) -> Run {
    let n_ev = model.events.len();
    let mut r = Run {
        graph: Graph::new(&model.universe, opts.symmetry),
        exhausted: false,
        fired: vec![false; n_ev],
        no_fresh_atom: vec![false; n_ev],
        inv_viol: HashMap::new(),
        wd: vec![None; n_ev],
    };
    let init = model.initial_state();
    let (_, key) = r.graph.find(&init);
    let violated = to_u16(model.violated_invariants(&init));
    r.graph.add(key, Node { state: init, parent: None, violated });

    let mut cursor = 0usize;
    'bfs: while cursor < r.graph.nodes.len() {
        let id = cursor as u32;
        cursor += 1;
        if id != 0 && !r.graph.nodes[id as usize].violated.is_empty() {
            continue;
        }
        let pre = r.graph.nodes[id as usize].state.clone();
        // The all-empty initial state is taken as consistent by assumption,
        // so an invariant it breaks is charged to the first event.
        let pre_bad = if id == 0 { Vec::new() } else { r.graph.nodes[id as usize].violated.clone() };
        let fresh = r.graph.fresh(&pre);
        for e in 0..n_ev {
            let en = model.enumerate(e, &pre);
            if en.scope_exhausted {
                r.no_fresh_atom[e] = true;
            }
            if let Some((b, err)) = en.wd_failures.into_iter().next() {
                if r.wd[e].is_none() {
                    r.wd[e] = Some((id, b, err));
                }
            }
            for b in en.enabled {
                r.fired[e] = true;
                if fresh.as_ref().is_some_and(|f| !f.keep(&b)) {
                    continue;
                }
                let post = match model.apply(e, &b, &pre) {
                    Ok(p) => p,
                    Err(err) => {
                        if r.wd[e].is_none() {
                            r.wd[e] = Some((id, b, err));
                        }
                        continue;
                    }
                };
                let (found, key) = r.graph.find(&post);
                let violated = match found {
                    Some(n) => r.graph.nodes[n as usize].violated.clone(),
                    None => to_u16(model.violated_invariants(&post)),
                };
                for &i in &violated {
                    if !pre_bad.contains(&i) {
                        r.inv_viol.entry((e as u16, i)).or_insert_with(|| (id, b.clone(), post.clone()));
                    }
                }
                if found.is_none() {
                    if r.graph.nodes.len() >= opts.budget {
                        r.exhausted = true;
                        break 'bfs;
                    }
                    r.graph.add(
                        key,
                        Node {
                            state: post,
                            parent: Some((id, e as u16, b)),
                            violated,
                        },
                    );
                }
            }
        }
    }
    r
}

fn to_u16(v: Vec<usize>) -> Vec<u16> {
    v.into_iter().map(|i| i as u16).collect()
}

fn trace_to(model: &MachineModel, g: &Graph, pre: u32, last: Option<(u16, Binding, State)>) -> Trace {
    let mut steps: Vec<(u16, Binding, State)> = g.path(pre).into_iter().map(|(e, b, s)| (e, b, s.clone())).collect();
    steps.extend(last);
    make_trace(model, steps)
}

/// Check every INV and FEAS obligation of a compiled machine.
pub fn check_machine_model(
    model: &MachineModel,
    rm: &ResolvedMachine,
    opts: &CheckOptions,
) -> Result<Vec<CheckReport>, CheckError> {
    let start = Instant::now();
    let r = run(model, opts);
    let elapsed = start.elapsed();
    let states = r.graph.nodes.len();
    let scope = opts.scope.to_string();
    let report = |obligation: ProofObligation, verdict, counterexample, note| CheckReport {
        obligation,
        verdict,
        counterexample,
        states_explored: states,
        elapsed,
        scope: scope.clone(),
        note,
    };
    let mut out = Vec::new();
    for ob in machine_obligations(rm) {
        let e = ob.event.as_deref().and_then(|n| model.event_index(n)).expect("event compiled");
        match ob.kind {
            ObligationKind::INV => {
                let label = ob.invariant_label.as_deref().unwrap_or_default();
                let i = model
                    .invariants
                    .iter()
                    .position(|inv| inv.label == label)
                    .expect("invariant compiled");
                match r.inv_viol.get(&(e as u16, i as u16)) {
                    Some((pre, b, post)) => {
                        let trace = trace_to(model, &r.graph, *pre, Some((e as u16, b.clone(), post.clone())));
                        let end = replay(model, &trace).map_err(|reason| CheckError::ReplayMismatch {
                            obligation: ob.id(),
                            reason,
                        })?;
                        if !model.violated_invariants(&end).contains(&i) {
                            return Err(CheckError::ReplayMismatch {
                                obligation: ob.id(),
                                reason: "replayed state satisfies the invariant".into(),
                            });
                        }
                        out.push(report(ob, Verdict::Violated, Some(trace), None));
                    }
                    None if r.exhausted => out.push(report(
                        ob,
                        Verdict::ScopeExhausted,
                        None,
                        Some(format!("state budget of {} exceeded", opts.budget)),
                    )),
                    None => out.push(report(ob, Verdict::Holds, None, None)),
                }
            }
            ObligationKind::FEAS => {
                if r.fired[e] {
                    out.push(report(ob, Verdict::Holds, None, None));
                } else if r.exhausted {
                    out.push(report(
                        ob,
                        Verdict::ScopeExhausted,
                        None,
                        Some(format!("state budget of {} exceeded", opts.budget)),
                    ));
                } else if r.no_fresh_atom[e] {
                    out.push(report(
                        ob,
                        Verdict::ScopeExhausted,
                        None,
                        Some("no fresh atom available for the new instance".into()),
                    ));
                } else {
                    let empty = make_trace(model, Vec::new());
                    out.push(report(
                        ob,
                        Verdict::Violated,
                        Some(empty),
                        Some("never enabled in any reachable state".into()),
                    ));
                }
            }
            _ => unreachable!("machine obligations are INV and FEAS"),
        }
    }
    for (e, wd) in r.wd.iter().enumerate() {
        if let Some((pre, b, err)) = wd {
            let trace = trace_to(model, &r.graph, *pre, None);
            replay(model, &trace).map_err(|reason| CheckError::ReplayMismatch {
                obligation: format!("WD {}/{}", model.name, model.events[e].name),
                reason,
            })?;
            let binding: Vec<String> = model
                .format_binding(e, b)
                .into_iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            out.push(report(
                ProofObligation {
                    kind: ObligationKind::WD,
                    machine: model.name.clone(),
                    abstract_machine: None,
                    event: Some(model.events[e].name.clone()),
                    invariant_label: None,
                    predicate: Expr::Bool(true),
                },
                Verdict::Violated,
                Some(trace),
                Some(format!("{err} with {}", binding.join(", "))),
            ));
        }
    }
    Ok(out)
}

pub(crate) fn universe(chain: &ResolvedChain, opts: &CheckOptions) -> Result<Arc<Universe>, CheckError> {
    Ok(Arc::new(Universe::new(chain, &opts.scope)?))
}

/// Explore `machine` and report every INV and FEAS obligation.
pub fn check(chain: &ResolvedChain, opts: &CheckOptions, machine: &str) -> Result<Vec<CheckReport>, CheckError> {
    let rm = chain
        .machine(machine)
        .ok_or_else(|| CheckError::UnknownMachine(machine.to_string()))?;
    let model = MachineModel::new(rm, universe(chain, opts)?)?;
    check_machine_model(&model, rm, opts)
}

/// FEAS for every event of every machine. Constructors that are never
/// enabled because each waits for an instance only another blocked
/// constructor could create are reported as a circular dependency.
pub fn check_enabledness(chain: &ResolvedChain, opts: &CheckOptions) -> Result<Vec<CheckReport>, CheckError> {
    let mut out = Vec::new();
    for m in &chain.machines {
        let mut feas: Vec<CheckReport> = check(chain, opts, &m.name)?
            .into_iter()
            .filter(|r| r.obligation.kind == ObligationKind::FEAS)
            .collect();
        annotate_circular(m, &mut feas);
        out.extend(feas);
    }
    Ok(out)
}

/// Attach a circular-dependency note to the violated FEAS reports of
/// constructors that block each other.
pub fn annotate_circular(m: &ResolvedMachine, reports: &mut [CheckReport]) {
    let blocked: Vec<String> = reports
        .iter()
        .filter(|r| r.obligation.kind == ObligationKind::FEAS && r.verdict == Verdict::Violated)
        .filter(|r| r.obligation.machine == m.name)
        .filter_map(|r| r.obligation.event.clone())
        .filter(|e| m.event(e).is_some_and(|ev| ev.kind == EventKind::Constructor))
        .collect();
    let blocked: Vec<&str> = blocked.iter().map(String::as_str).collect();
    let cycle: BTreeSet<String> = circular_constructors(m, &blocked).into_iter().map(str::to_string).collect();
    if cycle.is_empty() {
        return;
    }
    let names: Vec<&str> = cycle.iter().map(String::as_str).collect();
    let note = format!("circular dependency between constructors: {}", names.join(", "));
    for r in reports.iter_mut() {
        if r.obligation.kind == ObligationKind::FEAS
            && r.obligation.machine == m.name
            && r.obligation.event.as_deref().is_some_and(|e| cycle.contains(e))
        {
            r.note = Some(note.clone());
        }
    }
}

/// Blocked constructors lying on a cycle of "needs an instance of a class
/// created by" edges.
fn circular_constructors<'a>(m: &ResolvedMachine, blocked: &[&'a str]) -> BTreeSet<&'a str> {
    let needs = |e: &str| -> Vec<String> {
        let ev = m.event(e).expect("event exists");
        ev.guards
            .iter()
            .filter_map(|g| match &g.pred {
                Expr::Rel(RelOp::In, lhs, rhs) => match (lhs.as_ref(), rhs.as_ref()) {
                    (Expr::Ident(p), Expr::Ident(k))
                        if ev.params.iter().any(|x| &x.name == p)
                            && m.is_class(k)
                            && ev.class_owner.as_deref() != Some(k.as_str()) =>
                    {
                        Some(k.clone())
                    }
                    _ => None,
                },
                _ => None,
            })
            .collect()
    };
    let creates = |e: &str, class: &str| {
        let owner = m.event(e).and_then(|ev| ev.class_owner.clone());
        let mut cur = owner;
        // An instance of a subclass is also an instance of its superclasses.
        while let Some(c) = cur {
            if c == class {
                return true;
            }
            cur = m.supertype_of(&c).map(str::to_string);
        }
        false
    };
    let succ = |e: &str| -> Vec<&'a str> {
        let ks = needs(e);
        blocked
            .iter()
            .copied()
            .filter(|t| ks.iter().any(|k| creates(t, k)))
            .collect()
    };
    let mut out = BTreeSet::new();
    for &start in blocked {
        let mut seen = BTreeSet::new();
        let mut stack = succ(start);
        while let Some(x) = stack.pop() {
            if x == start {
                out.insert(start);
                break;
            }
            if seen.insert(x) {
                stack.extend(succ(x));
            }
        }
    }
    out
}
