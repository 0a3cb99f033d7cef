//! Random walks that drive the model and the generated database side by
//! side and compare them after every call.

use std::collections::BTreeMap;
use std::sync::Arc;

use rusqlite::types::Value as SqlValue;

use super::runtime::{AtomCodec, CallOutcome, Database, RuntimeError};
use super::{render_script, ProcKind, SqlScript};
use crate::engine::value::Value;
use crate::engine::{MachineModel, Scope, State, Universe};
use crate::resolve::ResolvedChain;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiffReport {
    pub calls: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub queries: usize,
    /// Calls aborted part-way through on purpose.
    pub injected: usize,
    pub mismatches: Vec<String>,
}

impl DiffReport {
    pub fn agrees(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct DiffOptions {
    pub steps: usize,
    /// Percentage of calls made with arbitrary rather than enabled arguments.
    pub arbitrary_percent: usize,
    /// Percentage of accepted modifying calls first run with an injected
    /// failure part-way through.
    pub inject_percent: usize,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            steps: 200,
            arbitrary_percent: 30,
            inject_percent: 20,
        }
    }
}

/// `choose(n)` must return an index below `n`; it is the only source of
/// randomness, so a seeded generator makes the walk reproducible.
pub fn run(
    chain: &ResolvedChain,
    script: &SqlScript,
    scope: &Scope,
    opts: &DiffOptions,
    choose: &mut dyn FnMut(usize) -> usize,
) -> Result<DiffReport, RuntimeError> {
    let m = chain
        .machine(&script.machine)
        .ok_or_else(|| RuntimeError::Parse(format!("machine {}", script.machine)))?;
    let universe = Arc::new(Universe::new(chain, scope).map_err(|e| RuntimeError::Parse(e.to_string()))?);
    let model = MachineModel::new(m, universe.clone()).map_err(|e| RuntimeError::Parse(e.to_string()))?;
    let mut db = Database::open(&render_script(script), &script.manifest.variables)?;
    let mut codec = AtomCodec::new(universe.clone(), &script.manifest.carriers);
    let mut state = model.initial_state();
    let mut report = DiffReport::default();

    let compare = |db: &Database, codec: &AtomCodec, state: &State, what: &str, report: &mut DiffReport| {
        match db.state(codec) {
            Ok(got) => {
                let want = model.state_map(state);
                for (var, w) in &want {
                    let g = got.get(var).cloned().unwrap_or_else(Value::empty);
                    if &g != w {
                        report.mismatches.push(format!(
                            "{what}: {var} is {} in the database but {} in the model",
                            universe.display(&g),
                            universe.display(w)
                        ));
                    }
                }
            }
            Err(e) => report.mismatches.push(format!("{what}: cannot read state back: {e}")),
        }
    };

    for step in 0..opts.steps {
        let ev_idx = choose(model.events.len());
        let ev = &model.events[ev_idx];
        let Some(proc) = script.procedures.iter().find(|p| p.name == ev.name) else {
            report.mismatches.push(format!("no procedure for event {}", ev.name));
            continue;
        };
        let slot = |name: &str| ev.params.iter().position(|p| p == name).expect("parameter slot");
        let enabled = model.enumerate(ev_idx, &state).enabled;
        let arbitrary = enabled.is_empty() || choose(100) < opts.arbitrary_percent;

        // Input values by name.
        let mut inputs: BTreeMap<&str, Value> = BTreeMap::new();
        if arbitrary {
            for p in &proc.params {
                let id = universe.id(&p.carrier).expect("parameter carrier");
                let n = universe.bounds[id as usize] as usize;
                if n == 0 {
                    continue;
                }
                inputs.insert(&p.name, Value::atom(id, choose(n) as u16));
            }
            if inputs.len() != proc.params.len() {
                continue;
            }
        } else {
            let b = &enabled[choose(enabled.len())];
            for p in &proc.params {
                inputs.insert(&p.name, b[slot(&p.name)].clone());
            }
        }
        let args: Vec<SqlValue> = proc
            .params
            .iter()
            .map(|p| codec.encode(&inputs[p.name.as_str()]))
            .collect::<Result<_, _>>()?;
        let what = format!("step {step}: {}({})", ev.name, {
            let shown: Vec<String> = proc
                .params
                .iter()
                .map(|p| universe.display(&inputs[p.name.as_str()]).to_string())
                .collect();
            shown.join(", ")
        });
        report.calls += 1;

        // What the model does with these inputs.
        let matching: Vec<&Vec<Value>> = enabled
            .iter()
            .filter(|b| inputs.iter().all(|(n, v)| &b[slot(n)] == v))
            .collect();

        if proc.kind == ProcKind::Query && !proc.outputs.is_empty() {
            report.queries += 1;
            let outcome = db.call(&ev.name, &args);
            match (outcome, matching.first()) {
                (Ok(CallOutcome::Rows(rows)), Some(b)) => {
                    report.accepted += 1;
                    let (name, _, carrier, is_set) = &proc.outputs[0];
                    let decoded: Result<Vec<Value>, _> = rows.iter().map(|r| codec.decode(carrier, &r[0])).collect();
                    let want = &b[slot(name)];
                    match decoded {
                        Ok(vals) => {
                            let got = if *is_set {
                                Value::set_from(vals)
                            } else {
                                vals.into_iter().next().unwrap_or_else(Value::empty)
                            };
                            if &got != want {
                                report.mismatches.push(format!(
                                    "{what}: returned {} but the model gives {}",
                                    universe.display(&got),
                                    universe.display(want)
                                ));
                            }
                        }
                        Err(e) => report.mismatches.push(format!("{what}: {e}")),
                    }
                }
                (Ok(CallOutcome::Rejected { .. }), None) => report.rejected += 1,
                (Ok(o), b) => report.mismatches.push(format!(
                    "{what}: database gave {o:?} but the model {}",
                    if b.is_some() { "answers" } else { "rejects" }
                )),
                (Err(e), _) => report.mismatches.push(format!("{what}: {e}")),
            }
            continue;
        }

        let binding: Vec<Value> = ev.params.iter().map(|p| inputs[p.as_str()].clone()).collect();
        let expected_ok = matches!(ev.guards_hold(&binding, &state), Ok(true));

        if expected_ok && choose(100) < opts.inject_percent {
            if let Some(n) = db.modify_count(&ev.name).filter(|n| *n >= 1) {
                let after = choose(n);
                report.injected += 1;
                match db.call_failing(&ev.name, &args, after) {
                    Err(RuntimeError::Injected(_)) => {}
                    other => report.mismatches.push(format!("{what}: injected failure gave {other:?}")),
                }
                compare(&db, &codec, &state, &format!("{what} after an injected failure"), &mut report);
            }
        }

        match db.call(&ev.name, &args) {
            Ok(CallOutcome::Done) | Ok(CallOutcome::Rows(_)) if expected_ok => {
                report.accepted += 1;
                match model.apply(ev_idx, &binding, &state) {
                    Ok(next) => state = next,
                    Err(e) => {
                        report.mismatches.push(format!("{what}: the model cannot apply the event: {e}"));
                        continue;
                    }
                }
                compare(&db, &codec, &state, &what, &mut report);
            }
            Ok(CallOutcome::Rejected { label }) if !expected_ok => {
                report.rejected += 1;
                let want = ev.failing_guard(&binding, &state);
                let agrees = match want {
                    Some(w) => w == label,
                    None => label.ends_with("_typing"),
                };
                if !agrees {
                    report.mismatches.push(format!(
                        "{what}: rejected by {label} but the model's first failing guard is {}",
                        want.unwrap_or("a parameter typing")
                    ));
                }
                compare(&db, &codec, &state, &what, &mut report);
            }
            Ok(o) => report.mismatches.push(format!(
                "{what}: database gave {o:?} but the model {}",
                if expected_ok { "accepts" } else { "rejects" }
            )),
            Err(e) => {
                report
                    .mismatches
                    .push(format!("{what}: {e} (model {})", if expected_ok { "accepts" } else { "rejects" }));
                compare(&db, &codec, &state, &what, &mut report);
            }
        }
    }
    Ok(report)
}
