//! Compiled machines: invariants, guard-directed binding enumeration and
//! simultaneous-assignment event application.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::compile::{CExpr, Compiler};
use super::eval::{eval, holds, EvalError};
use super::scope::Universe;
use super::value::Value;
use super::EngineError;
use crate::ast::{EventKind, Expr, RelOp, VarTyping};
use crate::resolve::{ResolvedEvent, ResolvedMachine};

/// Variable values, indexed like `MachineModel::var_names`.
pub type State = Vec<Value>;

/// Parameter values in slot order (parameters sorted by name).
pub type Binding = Vec<Value>;

#[derive(Clone, Debug)]
pub struct CompiledInvariant {
    pub label: String,
    pub source: Expr,
    pub expr: CExpr,
    pub implicit: bool,
}

#[derive(Clone, Debug)]
pub struct CompiledGuard {
    pub label: String,
    pub expr: CExpr,
    /// Number of leading parameter slots that must be bound to evaluate it.
    ready: usize,
}

#[derive(Clone, Debug)]
enum Narrow {
    Equal(CExpr),
    Member(CExpr),
}

#[derive(Clone, Debug)]
pub struct CompiledEvent {
    pub name: String,
    pub kind: EventKind,
    pub params: Vec<String>,
    param_types: Vec<CExpr>,
    narrowing: Vec<Vec<Narrow>>,
    pub guards: Vec<CompiledGuard>,
    /// (variable index, label, expression)
    pub actions: Vec<(usize, String, CExpr)>,
    /// Class sets drawing from the constructor's carrier, for exhaustion.
    fresh_pool: Option<(usize, Vec<usize>)>,
}

/// Outcome of enumerating one event's bindings in one state.
#[derive(Clone, Debug, Default)]
pub struct Enumeration {
    pub enabled: Vec<Binding>,
    /// Bindings whose guard evaluation was ill-defined.
    pub wd_failures: Vec<(Binding, EvalError)>,
    /// A constructor had no fresh atom left.
    pub scope_exhausted: bool,
}

#[derive(Clone, Debug)]
pub struct MachineModel {
    pub name: String,
    pub universe: Arc<Universe>,
    pub var_names: Vec<String>,
    pub invariants: Vec<CompiledInvariant>,
    pub events: Vec<CompiledEvent>,
}

impl MachineModel {
    pub fn new(m: &ResolvedMachine, universe: Arc<Universe>) -> Result<MachineModel, EngineError> {
        let var_names: Vec<String> = m.variables.iter().map(|v| v.name.clone()).collect();
        let vars: HashMap<String, usize> =
            var_names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut invariants = Vec::new();
        for inv in m.state_invariants() {
            let expr = Compiler::new(&universe, vars.clone()).compile(&inv.pred)?;
            invariants.push(CompiledInvariant {
                label: inv.label.clone(),
                source: inv.pred.clone(),
                expr,
                implicit: inv.implicit,
            });
        }
        let mut events = Vec::new();
        for ev in &m.events {
            events.push(compile_event(ev, m, &universe, &vars)?);
        }
        Ok(MachineModel {
            name: m.name.clone(),
            universe,
            var_names,
            invariants,
            events,
        })
    }

    /// All classes empty, all relations empty.
    pub fn initial_state(&self) -> State {
        vec![Value::empty(); self.var_names.len()]
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e.name == name)
    }

    pub fn state_map(&self, s: &State) -> BTreeMap<String, Value> {
        self.var_names.iter().cloned().zip(s.iter().cloned()).collect()
    }

    /// Labels of invariants violated in `s`; evaluation errors count as
    /// violations.
    pub fn violated_invariants(&self, s: &State) -> Vec<usize> {
        let mut locals = Vec::new();
        (0..self.invariants.len())
            .filter(|&i| !matches!(holds(&self.invariants[i].expr, s, &mut locals), Ok(true)))
            .collect()
    }

    pub fn enumerate(&self, event: usize, s: &State) -> Enumeration {
        self.events[event].enumerate(s)
    }

    pub fn apply(&self, event: usize, binding: &Binding, s: &State) -> Result<State, EvalError> {
        self.events[event].apply(binding, s)
    }

    pub fn format_binding(&self, event: usize, b: &Binding) -> Vec<(String, String)> {
        self.events[event]
            .params
            .iter()
            .zip(b)
            .map(|(p, v)| (p.clone(), self.universe.display(v).to_string()))
            .collect()
    }
}

pub(crate) fn compile_event(
    ev: &ResolvedEvent,
    m: &ResolvedMachine,
    universe: &Universe,
    vars: &HashMap<String, usize>,
) -> Result<CompiledEvent, EngineError> {
    let mut order: Vec<usize> = (0..ev.params.len()).collect();
    order.sort_by(|&a, &b| ev.params[a].name.cmp(&ev.params[b].name));
    let mut c = Compiler::new(universe, vars.clone());
    let mut params = Vec::new();
    for &i in &order {
        params.push(ev.params[i].name.clone());
        c.push_local(&ev.params[i].name);
    }
    let mut param_types = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        let t = c.compile(&ev.params[i].typing)?;
        if t.free_locals_needed() > slot {
            return Err(EngineError::Unsupported(format!(
                "event {}: typing of parameter {} refers to a later parameter",
                ev.name, ev.params[i].name
            )));
        }
        param_types.push(t);
    }
    let mut guards = Vec::new();
    let mut narrowing = vec![Vec::new(); params.len()];
    for g in &ev.guards {
        let expr = c.compile(&g.pred)?;
        let ready = expr.free_locals_needed();
        if let CExpr::Rel(op @ (RelOp::Eq | RelOp::In), lhs, rhs) = &expr {
            let pick = |a: &CExpr, b: &CExpr| match a {
                CExpr::Local(k) if b.free_locals_needed() <= *k => Some((*k, b.clone())),
                _ => None,
            };
            let found = match op {
                RelOp::Eq => pick(lhs, rhs).or_else(|| pick(rhs, lhs)),
                _ => pick(lhs, rhs),
            };
            if let Some((k, e)) = found {
                narrowing[k].push(match op {
                    RelOp::Eq => Narrow::Equal(e),
                    _ => Narrow::Member(e),
                });
            }
        }
        guards.push(CompiledGuard {
            label: g.label.clone(),
            expr,
            ready,
        });
    }
    let mut actions = Vec::new();
    for a in &ev.actions {
        let Some(&idx) = vars.get(&a.target) else {
            return Err(EngineError::UnknownIdent(a.target.clone()));
        };
        if actions.iter().any(|(i, _, _)| *i == idx) {
            return Err(EngineError::ConflictingAssignment {
                event: ev.name.clone(),
                variable: a.target.clone(),
            });
        }
        actions.push((idx, a.label.clone(), c.compile(&a.expr)?));
    }
    let fresh_pool = match (ev.kind, &ev.class_owner) {
        (EventKind::Constructor, Some(owner)) => m.carrier_of(owner).and_then(|carrier| {
            let id = universe.id(&carrier)?;
            let pool = m
                .variables
                .iter()
                .filter(|v| matches!(v.typing, VarTyping::Class { .. }))
                .filter(|v| m.carrier_of(&v.name).as_deref() == Some(carrier.as_str()))
                .filter_map(|v| vars.get(&v.name).copied())
                .collect();
            Some((universe.bounds[id as usize] as usize, pool))
        }),
        _ => None,
    };
    Ok(CompiledEvent {
        name: ev.name.clone(),
        kind: ev.kind,
        params,
        param_types,
        narrowing,
        guards,
        actions,
        fresh_pool,
    })
}

impl CompiledEvent {
    /// Every binding satisfying all guards, ordered by parameter name then
    /// atom index. Guards are tried as soon as their parameters are bound;
    /// a binding is accepted only after all guards are evaluated in
    /// declaration order, so earlier guards protect later ones.
    pub fn enumerate(&self, s: &State) -> Enumeration {
        let mut out = Enumeration::default();
        let mut locals = Vec::with_capacity(self.params.len());
        self.search(0, s, &mut locals, &mut out);
        if out.enabled.is_empty() {
            if let Some((size, pool)) = &self.fresh_pool {
                let mut used: Vec<&Value> = pool.iter().flat_map(|&i| s[i].as_set().unwrap_or(&[])).collect();
                used.sort();
                used.dedup();
                if used.len() >= *size {
                    out.scope_exhausted = true;
                }
            }
        }
        out
    }

    fn search(&self, k: usize, s: &State, locals: &mut Vec<Value>, out: &mut Enumeration) {
        // Guards ready before any binding.
        if k == 0 && !self.early_guards_pass(0, s, locals) {
            return;
        }
        if k == self.params.len() {
            match self.check_all(s, locals) {
                Ok(true) => out.enabled.push(locals.clone()),
                Ok(false) => {}
                Err(e) => out.wd_failures.push((locals.clone(), e)),
            }
            return;
        }
        let Ok(candidates) = self.candidates(k, s, locals) else {
            out.wd_failures.push((locals.clone(), EvalError::IllTyped("a parameter typing set")));
            return;
        };
        for c in candidates {
            locals.push(c);
            if self.early_guards_pass(k + 1, s, locals) {
                self.search(k + 1, s, locals, out);
            }
            locals.pop();
        }
    }

    fn candidates(&self, k: usize, s: &State, locals: &mut Vec<Value>) -> Result<Vec<Value>, EvalError> {
        let ty = eval(&self.param_types[k], s, locals)?;
        let ty = ty.as_set().ok_or(EvalError::IllTyped("a set"))?;
        for n in &self.narrowing[k] {
            match n {
                Narrow::Equal(e) => {
                    // Undefined values fall through to full enumeration so
                    // the failure is attributed by `check_all`.
                    if let Ok(v) = eval(e, s, locals) {
                        return Ok(if ty.binary_search(&v).is_ok() { vec![v] } else { vec![] });
                    }
                }
                Narrow::Member(e) => {
                    if let Ok(Value::Set(m)) = eval(e, s, locals) {
                        return Ok(super::value::inter(ty, &m));
                    }
                }
            }
        }
        Ok(ty.to_vec())
    }

    /// Prune with guards that become evaluable once `bound` slots are set.
    /// Ill-defined guards do not prune here.
    fn early_guards_pass(&self, bound: usize, s: &State, locals: &mut Vec<Value>) -> bool {
        self.guards
            .iter()
            .filter(|g| g.ready == bound)
            .all(|g| !matches!(holds(&g.expr, s, locals), Ok(false)))
    }

    fn check_all(&self, s: &State, locals: &mut Vec<Value>) -> Result<bool, EvalError> {
        for g in &self.guards {
            if !holds(&g.expr, s, locals)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Label of the first guard that fails (or is ill-defined) for `b`.
    pub fn failing_guard(&self, b: &Binding, s: &State) -> Option<&str> {
        let mut locals = b.clone();
        self.guards
            .iter()
            .find(|g| !matches!(holds(&g.expr, s, &mut locals), Ok(true)))
            .map(|g| g.label.as_str())
    }

    pub fn guards_hold(&self, b: &Binding, s: &State) -> Result<bool, EvalError> {
        if b.len() != self.params.len() {
            return Ok(false);
        }
        let mut locals = b.clone();
        for (k, t) in self.param_types.iter().enumerate() {
            if !eval(t, s, &mut locals)?.contains(&b[k]) {
                return Ok(false);
            }
        }
        self.check_all(s, &mut locals)
    }

    /// All actions read the pre-state; assignments happen together.
    pub fn apply(&self, b: &Binding, s: &State) -> Result<State, EvalError> {
        let mut locals = b.clone();
        let mut updates = Vec::with_capacity(self.actions.len());
        for (idx, _, e) in &self.actions {
            updates.push((*idx, eval(e, s, &mut locals)?));
        }
        let mut next = s.clone();
        for (idx, v) in updates {
            next[idx] = v;
        }
        Ok(next)
    }

    pub fn assigns(&self, var: usize) -> bool {
        self.actions.iter().any(|(i, _, _)| *i == var)
    }
}
