//! Joint exploration of an abstract machine and its direct refinement.
//!
//! Joint states are the abstract variables followed by the concrete ones.
//! Every concrete transition is paired with the abstract event it refines
//! (or `skip` for new events), with abstract parameters taken from the
//! concrete binding by name.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use super::explore::{named, replay, universe, Graph, Node};
use super::obligations::{glue_invariants, refinement_obligations};
use super::{CheckError, CheckOptions, CheckReport, ObligationKind, ProofObligation, Trace, TraceStep, Verdict};
use crate::engine::compile::{CExpr, Compiler};
use crate::engine::eval::holds;
use crate::engine::{Binding, MachineModel, State};
use crate::resolve::{ResolvedChain, ResolvedMachine};

struct Joint<'a> {
    abs: MachineModel,
    conc: MachineModel,
    conc_rm: &'a ResolvedMachine,
    glue: Vec<(String, CExpr)>,
    /// (abstract index, concrete index) of variables present in both.
    shared: Vec<(usize, usize)>,
    /// Per concrete event: abstract event index, extended flag, and the
    /// concrete slot of each abstract parameter.
    links: Vec<Option<(usize, bool, Vec<usize>)>>,
}

impl Joint<'_> {
    fn split<'s>(&self, s: &'s State) -> (&'s [crate::engine::Value], &'s [crate::engine::Value]) {
        s.split_at(self.abs.var_names.len())
    }

    fn glue_violations(&self, s: &State) -> Vec<u16> {
        let mut locals = Vec::new();
        (0..self.glue.len())
            .filter(|&i| !matches!(holds(&self.glue[i].1, s, &mut locals), Ok(true)))
            .map(|i| i as u16)
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Key {
    Grd(u16),
    Sim(u16),
    Glu(u16, u16),
}

/// GRD, SIM and GLU obligations of `concrete` against `abstract_`.
pub fn check_refinement(
    chain: &ResolvedChain,
    opts: &CheckOptions,
    abstract_: &str,
    concrete: &str,
) -> Result<Vec<CheckReport>, CheckError> {
    let abs_rm = chain
        .machine(abstract_)
        .ok_or_else(|| CheckError::UnknownMachine(abstract_.to_string()))?;
    let conc_rm = chain
        .machine(concrete)
        .ok_or_else(|| CheckError::UnknownMachine(concrete.to_string()))?;
    if chain.abstraction_of(conc_rm).map(|m| m.name.as_str()) != Some(abstract_) {
        return Err(CheckError::NotARefinement {
            abstract_: abstract_.to_string(),
            concrete: concrete.to_string(),
        });
    }
    let u = universe(chain, opts)?;
    let abs = MachineModel::new(abs_rm, u.clone())?;
    let conc = MachineModel::new(conc_rm, u.clone())?;
    let na = abs.var_names.len();
    let mut vars: HashMap<String, usize> = abs.var_names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    for (j, n) in conc.var_names.iter().enumerate() {
        vars.insert(n.clone(), na + j);
    }
    let mut glue = Vec::new();
    for inv in glue_invariants(abs_rm, conc_rm) {
        glue.push((inv.label.clone(), Compiler::new(&u, vars.clone()).compile(&inv.pred)?));
    }
    let shared = abs
        .var_names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| conc.var_index(n).map(|j| (i, j)))
        .collect();
    let mut links = Vec::new();
    for (ce, ev) in conc_rm.events.iter().enumerate() {
        let link = match ev.abstract_event.as_deref() {
            Some(a) => {
                let fa = abs.event_index(a).expect("abstract event resolved");
                let slots = abs.events[fa]
                    .params
                    .iter()
                    .map(|p| conc.events[ce].params.iter().position(|q| q == p).expect("parameter kept"))
                    .collect();
                Some((fa, ev.extended, slots))
            }
            None => None,
        };
        links.push(link);
    }
    let j = Joint {
        abs,
        conc,
        conc_rm,
        glue,
        shared,
        links,
    };
    run(&j, abs_rm, opts)
}

struct Found {
    pre: u32,
    event: u16,
    binding: Binding,
    post: State,
    note: Option<String>,
}

fn run(j: &Joint, abs_rm: &ResolvedMachine, opts: &CheckOptions) -> Result<Vec<CheckReport>, CheckError> {
    let start = Instant::now();
    let na = j.abs.var_names.len();
    let mut g = Graph::new(&j.abs.universe, opts.symmetry);
    let mut init = j.abs.initial_state();
    init.extend(j.conc.initial_state());
    let (_, key) = g.find(&init);
    let v0 = j.glue_violations(&init);
    g.add(key, Node { state: init, parent: None, violated: v0 });
    let mut found: HashMap<Key, Found> = HashMap::new();
    let mut exhausted = false;

    let mut cursor = 0usize;
    'bfs: while cursor < g.nodes.len() {
        let id = cursor as u32;
        cursor += 1;
        if id != 0 && !g.nodes[id as usize].violated.is_empty() {
            continue;
        }
        let joint = g.nodes[id as usize].state.clone();
        // The all-empty initial state is taken as consistent by assumption.
        let pre_bad = if id == 0 { Vec::new() } else { g.nodes[id as usize].violated.clone() };
        let (a, c) = j.split(&joint);
        let c: State = c.to_vec();
        // Concrete states breaking the concrete machine's own invariants
        // are left to `check`.
        if id != 0 && !j.conc.violated_invariants(&c).is_empty() {
            continue;
        }
        let a: State = a.to_vec();
        let fresh = g.fresh(&joint);
        for ce in 0..j.conc.events.len() {
            let cev = &j.conc.events[ce];
            for b in cev.enumerate(&c).enabled {
                if fresh.as_ref().is_some_and(|f| !f.keep(&b)) {
                    continue;
                }
                let Ok(c2) = cev.apply(&b, &c) else { continue };
                let mut record = |k: Key, note: Option<String>, post: State| {
                    found.entry(k).or_insert_with(|| Found {
                        pre: id,
                        event: ce as u16,
                        binding: b.clone(),
                        post,
                        note,
                    });
                };
                let joint_of = |a2: &State| {
                    let mut s = a2.clone();
                    s.extend(c2.iter().cloned());
                    s
                };
                let a2 = match &j.links[ce] {
                    Some((fa, extended, slots)) => {
                        let aev = &j.abs.events[*fa];
                        let ab: Binding = slots.iter().map(|&k| b[k].clone()).collect();
                        match aev.guards_hold(&ab, &a) {
                            Ok(true) => match aev.apply(&ab, &a) {
                                Ok(s) => s,
                                Err(err) => {
                                    record(Key::Sim(ce as u16), Some(format!("abstract action: {err}")), joint_of(&a));
                                    continue;
                                }
                            },
                            _ => {
                                let guard = aev.failing_guard(&ab, &a).unwrap_or("typing").to_string();
                                let key = if *extended { Key::Sim(ce as u16) } else { Key::Grd(ce as u16) };
                                record(
                                    key,
                                    Some(format!("abstract guard @{guard} of {} fails", aev.name)),
                                    joint_of(&a),
                                );
                                continue;
                            }
                        }
                    }
                    None => a.clone(),
                };
                if let Some(&(ai, _)) = j.shared.iter().find(|&&(ai, cj)| a2[ai] != c2[cj]) {
                    record(
                        Key::Sim(ce as u16),
                        Some(format!("abstract and concrete values of '{}' diverge", j.abs.var_names[ai])),
                        joint_of(&a2),
                    );
                    continue;
                }
                let post = joint_of(&a2);
                let (hit, key) = g.find(&post);
                let violated = match hit {
                    Some(n) => g.nodes[n as usize].violated.clone(),
                    None => j.glue_violations(&post),
                };
                for &i in &violated {
                    if !pre_bad.contains(&i) {
                        record(Key::Glu(ce as u16, i), None, post.clone());
                    }
                }
                if hit.is_none() {
                    if g.nodes.len() >= opts.budget {
                        exhausted = true;
                        break 'bfs;
                    }
                    g.add(
                        key,
                        Node {
                            state: post,
                            parent: Some((id, ce as u16, b)),
                            violated,
                        },
                    );
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let states = g.nodes.len();

    let trace_of = |f: &Found| -> Trace {
        let mut steps: Vec<(u16, Binding, State)> =
            g.path(f.pre).into_iter().map(|(e, b, s)| (e, b, s.clone())).collect();
        steps.push((f.event, f.binding.clone(), f.post.clone()));
        Trace {
            steps: steps
                .into_iter()
                .map(|(e, b, s)| {
                    let ev = &j.conc.events[e as usize];
                    TraceStep {
                        event: ev.name.clone(),
                        binding: named(&ev.params, &b),
                        post: named(&j.conc.var_names, &s[na..]),
                        abstract_post: Some(named(&j.abs.var_names, &s[..na])),
                    }
                })
                .collect(),
            carriers: Arc::new(j.abs.universe.carriers.clone()),
        }
    };

    let mut out = Vec::new();
    let obligations = refinement_obligations(abs_rm, j.conc_rm);
    let key_of = |ob: &ProofObligation| -> Key {
        let e = ob.event.as_deref().and_then(|n| j.conc.event_index(n)).expect("event") as u16;
        match ob.kind {
            ObligationKind::GRD => Key::Grd(e),
            ObligationKind::SIM => Key::Sim(e),
            _ => {
                let l = ob.invariant_label.as_deref().unwrap_or_default();
                Key::Glu(e, j.glue.iter().position(|(x, _)| x == l).expect("glue invariant") as u16)
            }
        }
    };
    let mut extra: Vec<(Key, ProofObligation)> = Vec::new();
    let mut keys: Vec<&Key> = found.keys().collect();
    keys.sort();
    for k in keys {
        if !obligations.iter().any(|ob| key_of(ob) == *k) {
            // Violation attributed to an event that was not expected to
            // touch the invariant; report it rather than drop it.
            if let Key::Glu(e, i) = *k {
                extra.push((
                    *k,
                    ProofObligation {
                        kind: ObligationKind::GLU,
                        machine: j.conc.name.clone(),
                        abstract_machine: Some(j.abs.name.clone()),
                        event: Some(j.conc.events[e as usize].name.clone()),
                        invariant_label: Some(j.glue[i as usize].0.clone()),
                        predicate: j
                            .conc_rm
                            .invariants
                            .iter()
                            .find(|x| x.label == j.glue[i as usize].0)
                            .map(|x| x.pred.clone())
                            .unwrap_or(crate::ast::Expr::Bool(true)),
                    },
                ));
            }
        }
    }
    let all: Vec<(Key, ProofObligation)> = obligations
        .into_iter()
        .map(|ob| (key_of(&ob), ob))
        .chain(extra)
        .collect();
    for (k, ob) in all {
        let ext = matches!(&j.links[match k {
            Key::Grd(e) | Key::Sim(e) | Key::Glu(e, _) => e as usize,
        }], Some((_, true, _)));
        let (verdict, trace, note) = match found.get(&k) {
            Some(f) => {
                let t = trace_of(f);
                replay(&j.conc, &t).map_err(|reason| CheckError::ReplayMismatch {
                    obligation: ob.id(),
                    reason,
                })?;
                if let Key::Glu(_, i) = k {
                    let mut locals = Vec::new();
                    if matches!(holds(&j.glue[i as usize].1, &f.post, &mut locals), Ok(true)) {
                        return Err(CheckError::ReplayMismatch {
                            obligation: ob.id(),
                            reason: "gluing invariant holds in the final state".into(),
                        });
                    }
                }
                (Verdict::Violated, Some(t), f.note.clone())
            }
            None if matches!(k, Key::Grd(_)) && ext => {
                (Verdict::Holds, None, Some("holds by construction (extended event)".into()))
            }
            None if exhausted => (
                Verdict::ScopeExhausted,
                None,
                Some(format!("state budget of {} exceeded", opts.budget)),
            ),
            None => (Verdict::Holds, None, None),
        };
        out.push(CheckReport {
            obligation: ob,
            verdict,
            counterexample: trace,
            states_explored: states,
            elapsed,
            scope: opts.scope.to_string(),
            note,
        });
    }
    Ok(out)
}
