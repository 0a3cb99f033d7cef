//! The nine acceptance criteria, run in order with one PASS/FAIL line each.
//! Criteria run sequentially so the timed ones are not competing for cores.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::types::Value as SqlValue;

use common::oracle::{Model, Oracle};
use common::*;
use ubdb::checker::{
    annotate_circular, check, check_enabledness, check_refinement, explore_states, replay, CheckOptions,
    ObligationKind, Verdict,
};
use ubdb::engine::{MachineModel, Scope, Universe};
use ubdb::parser::pretty_print;
use ubdb::patterns::{split_association, split_bisimulation, SplitSpec};
use ubdb::resolve::ResolvedChain;
use ubdb::sqlgen::differential::{self, DiffOptions};
use ubdb::sqlgen::runtime::{CallOutcome, Database, RuntimeError};
use ubdb::sqlgen::{constraint_probes, generate, render_manifest, render_script, run_probes, Constraint};

const CHECK_BUDGET: Duration = Duration::from_secs(60);
const SPLIT_BUDGET: Duration = Duration::from_secs(10);

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all_hold(reports: &[ubdb::checker::CheckReport]) -> Result<(), String> {
    ensure(reports.iter().all(|r| r.verdict == Verdict::Holds), || failures(reports))
}

/// Check plus refine-check of the whole registration chain at the default
/// scope (classes 2, value sets 3).
fn c1_registration_chain_verifies() -> Outcome {
    let chain = sres();
    let opts = default_opts(&chain);
    let start = Instant::now();
    let mut n = 0;
    for m in &chain.machines {
        let reports = check(&chain, &opts, &m.name).map_err(|e| e.to_string())?;
        all_hold(&reports)?;
        n += reports.len();
        if let Some(a) = chain.abstraction_of(m) {
            let reports = check_refinement(&chain, &opts, &a.name, &m.name).map_err(|e| e.to_string())?;
            all_hold(&reports)?;
            n += reports.len();
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= CHECK_BUDGET, || format!("took {elapsed:.1?}"))?;
    Ok(format!("{n} obligations hold in {elapsed:.1?} (budget {CHECK_BUDGET:?})"))
}

fn c2_violations_are_detected() -> Outcome {
    let src = without_line(&model_text("sres.ubdb"), "@grd2 runningModule(m) |-> enrolledIn(s) : offeredIn");
    let chain = load_str(&src);
    let opts = default_opts(&chain);
    let reports = check(&chain, &opts, "M2").map_err(|e| e.to_string())?;
    let r = find(&reports, "INV M2/addRegistration/inv1");
    ensure(r.verdict == Verdict::Violated, || "inv1 not violated".into())?;
    let trace = r.counterexample.as_ref().ok_or("no trace")?;
    ensure(trace.len() <= 6, || format!("trace of {} steps", trace.len()))?;
    let universe = Arc::new(Universe::new(&chain, &opts.scope).map_err(|e| e.to_string())?);
    let model = MachineModel::new(chain.machine("M2").unwrap(), universe).map_err(|e| e.to_string())?;
    let end = replay(&model, trace)?;
    let inv1 = model.invariants.iter().position(|i| i.label == "inv1").unwrap();
    ensure(model.violated_invariants(&end).contains(&inv1), || "replay does not reach the violation".into())?;
    let steps = trace.len();

    // Every constructor's freshness guard.
    let text = model_text("sres.ubdb");
    let guards = [
        ("addDepartment", "@grd1 this_Department /: Department", None),
        ("addStaff", "@grd1 this_Staff /: Person", None),
        ("addStudent", "@grd1 this_Student /: Person", None),
        ("addProgram", "@grd1 this_Program /: Program", None),
        ("addModule", "@grd1 this_Module /: Module", None),
        ("addModuleRun", "@grd1 this_Module_Runs /: Module_Runs", None),
        ("addRegistration", "this_Registration /: Registration & ", Some("")),
    ];
    let mut violations = vec![];
    for (event, guard, replacement) in guards {
        let mutant = match replacement {
            None => without_line(&text, guard),
            Some(r) => replace_once(&text, guard, r),
        };
        let chain = load_str(&mutant);
        // The first machine, from the one declaring the event on, where a
        // typing invariant of the class or its attributes breaks.
        let from = chain
            .machines
            .iter()
            .position(|m| m.events.iter().any(|e| e.name == event && e.declared_here))
            .unwrap();
        let mut hit = None;
        for m in &chain.machines[from..] {
            let reports = check(&chain, &default_opts(&chain), &m.name).map_err(|e| e.to_string())?;
            hit = reports
                .iter()
                .find(|r| {
                    r.obligation.kind == ObligationKind::INV
                        && r.obligation.event.as_deref() == Some(event)
                        && r.verdict == Verdict::Violated
                        && r.obligation.invariant_label.as_deref().is_some_and(|i| i.ends_with("_typing"))
                })
                .map(|r| r.obligation.id());
            if hit.is_some() {
                break;
            }
        }
        let hit = hit.ok_or_else(|| format!("no typing violation without the freshness guard of {event}"))?;
        violations.push(hit);
    }
    Ok(format!(
        "inv1 counterexample of {steps} steps replays; without freshness guards: {}",
        violations.join(", ")
    ))
}

fn c3_circular_constructors() -> Outcome {
    let chain = load("staff_department.ubdb");
    let mut reports = check_enabledness(&chain, &uniform_opts(&chain, 2)).map_err(|e| e.to_string())?;
    annotate_circular(&chain.machines[0], &mut reports);
    for ev in ["addStaff", "addDepartment"] {
        let r = find(&reports, &format!("FEAS M0/{ev}"));
        ensure(r.verdict == Verdict::Violated, || format!("{ev} is feasible"))?;
    }
    let chain = load("staff_department_partial.ubdb");
    all_hold(&check_enabledness(&chain, &uniform_opts(&chain, 2)).map_err(|e| e.to_string())?)?;
    Ok("total: both constructors infeasible; partial dean: both feasible".into())
}

fn relation_split() -> SplitSpec {
    SplitSpec {
        relation: "R".into(),
        new_class: "C".into(),
        fn1_name: "R1".into(),
        fn2_name: "R2".into(),
    }
}

fn c4_association_split() -> Outcome {
    let start = Instant::now();
    let original = parse(&model_text("relation.ubdb"));
    let split = split_association(&original, &relation_split()).map_err(|e| e.to_string())?;
    let chain = load_str(&pretty_print(&split));
    let concrete = chain.machines.last().unwrap().name.clone();
    let abstract_ = chain.abstraction_of(chain.machines.last().unwrap()).unwrap().name.clone();
    let reports = check_refinement(&chain, &uniform_opts(&chain, 2), &abstract_, &concrete).map_err(|e| e.to_string())?;
    all_hold(&reports)?;
    for inv in ["inv1", "inv2"] {
        ensure(
            reports
                .iter()
                .any(|r| r.obligation.kind == ObligationKind::GLU && r.obligation.invariant_label.as_deref() == Some(inv)),
            || format!("no GLU obligation for {inv}"),
        )?;
    }
    let r0 = load_str(&pretty_print(&original));
    let mut sizes = vec![];
    for k in 1..=3 {
        let b = split_bisimulation(&r0, &chain, &relation_split(), &Scope::uniform(&chain, k)).map_err(|e| e.to_string())?;
        ensure(b.holds(), || format!("scope {k}: missing {:?}, extra {:?}", b.missing, b.extra))?;
        sizes.push(format!("k={k}: {}", b.image_states));
    }
    let elapsed = start.elapsed();
    ensure(elapsed <= SPLIT_BUDGET, || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{} refinement obligations hold; bisimulation {} in {elapsed:.1?}",
        reports.len(),
        sizes.join(", ")
    ))
}

fn c5_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut total = 0;
    const MODELS: usize = 25;
    for i in 0..MODELS {
        let model = Model::random(&mut rng);
        let chain = load_str(&model.to_dsl());
        let scope = Scope::uniform(&chain, 2);
        let universe = Arc::new(Universe::new(&chain, &scope).map_err(|e| e.to_string())?);
        let mm = MachineModel::new(&chain.machines[0], universe).map_err(|e| e.to_string())?;
        let run = explore_states(&mm, &CheckOptions::new(scope).symmetry(false));
        let want = Oracle { model: &model, k: 2 }.reachable().len();
        ensure(!run.exhausted && run.states.len() == want, || {
            format!("model {i}: checker {} vs oracle {want}\n{}", run.states.len(), model.to_dsl())
        })?;
        total += want;
    }
    Ok(format!("{MODELS} random models, {total} reachable states, counts equal"))
}

fn c6_sql_differential() -> Outcome {
    let chain = sres();
    let script = generate(&chain, None).map_err(|e| e.to_string())?;
    let scope = Scope::uniform(&chain, 3);
    let opts = DiffOptions {
        steps: 10,
        ..DiffOptions::default()
    };
    let (mut accepted, mut rejected, mut queries) = (0, 0, 0);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = differential::run(&chain, &script, &scope, &opts, &mut |n| rng.gen_range(0..n)).map_err(|e| e.to_string())?;
        ensure(r.agrees(), || format!("trace {seed}: {:?}", r.mismatches))?;
        accepted += r.accepted;
        rejected += r.rejected;
        queries += r.queries;
    }
    ensure(accepted > 0 && rejected > 0, || "walks never exercised both outcomes".into())?;
    Ok(format!(
        "100 traces: {accepted} calls accepted, {rejected} rejected ({queries} queries), all states isomorphic"
    ))
}

fn c7_constraint_fidelity() -> Outcome {
    let chain = sres();
    let script = generate(&chain, None).map_err(|e| e.to_string())?;
    let split = load_str(&pretty_print(
        &split_association(&parse(&model_text("relation.ubdb")), &relation_split()).map_err(|e| e.to_string())?,
    ));
    let split_script = generate(&split, None).map_err(|e| e.to_string())?;
    let mut n = 0;
    for s in [&script, &split_script] {
        let probes = constraint_probes(s);
        for o in run_probes(s, &probes).map_err(|e| e.to_string())? {
            ensure(o.passed(), || format!("{:?}: {}", o.probe, o.detail))?;
            n += 1;
        }
    }
    let probes = constraint_probes(&script);
    let has = |c: Constraint| probes.iter().any(|p| p.table == "Program" && p.constraint == c);
    ensure(has(Constraint::NotNull { column: "program_code".into() }), || "no NOT NULL probe".into())?;
    ensure(has(Constraint::Unique { column: "program_code".into() }), || "no UNIQUE probe".into())?;
    let pair = |t: &str, cols: [&str; 2]| {
        constraint_probes(if t == "C" { &split_script } else { &script }).into_iter().any(|p| {
            p.table == t && p.constraint == Constraint::CompositeUnique { columns: cols.map(String::from).to_vec() }
        })
    };
    ensure(pair("offeredIn", ["Module_id", "Program_id"]), || "no join-table probe".into())?;
    ensure(pair("C", ["R1_id", "R2_id"]), || "no split-class probe".into())?;

    // The historical move under injected failures.
    let mut db = Database::open(&render_script(&script), &script.manifest.variables).map_err(|e| e.to_string())?;
    let int = SqlValue::Integer;
    let text = |s: &str| SqlValue::Text(s.into());
    let setup: [(&str, Vec<SqlValue>); 7] = [
        ("addDepartment", vec![int(1), text("DEPT_NAME.1")]),
        ("addProgram", vec![int(1), int(1), text("PROG_CODE.1"), text("PROG_NAME.1")]),
        ("addModule", vec![int(1), text("MOD_CODE.1")]),
        ("offerModule", vec![int(1), int(1)]),
        ("addModuleRun", vec![int(1), int(1)]),
        ("addStudent", vec![int(1), int(1)]),
        ("addRegistration", vec![int(1), int(1), int(1)]),
    ];
    for (p, args) in &setup {
        ensure(db.call(p, args) == Ok(CallOutcome::Done), || format!("setup {p} failed"))?;
    }
    let snapshot = |db: &Database| -> Vec<i64> {
        ["Student", "Registration", "Completed_Student", "Completed_Registration"]
            .iter()
            .map(|t| {
                db.connection()
                    .query_row(&format!("SELECT COUNT(*) FROM {t}"), [], |r| r.get(0))
                    .unwrap()
            })
            .collect()
    };
    let before = snapshot(&db);
    let args = [int(1), text("2000-01-01")];
    let statements = db.modify_count("completeStudent").unwrap();
    for after in 0..statements {
        ensure(db.call_failing("completeStudent", &args, after) == Err(RuntimeError::Injected(after)), || {
            format!("no injected failure after {after}")
        })?;
        ensure(snapshot(&db) == before, || format!("partial move after {after} statements"))?;
    }
    ensure(db.call("completeStudent", &args) == Ok(CallOutcome::Done), || "move failed".into())?;
    ensure(snapshot(&db) == [0, 0, 1, 1], || format!("after the move: {:?}", snapshot(&db)))?;
    Ok(format!(
        "{n} generated constraint probes refused; move rolled back at all {statements} failure points"
    ))
}

fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(model_path(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ubdb"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn c8_round_trip_and_determinism() -> Outcome {
    let files = corpus();
    for (name, text) in &files {
        let chain = parse(text);
        ensure(parse(&pretty_print(&chain)) == chain, || format!("{name} does not round-trip"))?;
    }
    let mut generated = 0;
    for (name, text) in &files {
        let chain: ResolvedChain = load_str(text);
        let a = generate(&chain, None).map_err(|e| e.to_string())?;
        let b = generate(&load_str(text), None).map_err(|e| e.to_string())?;
        ensure(render_script(&a) == render_script(&b), || format!("{name}: script differs"))?;
        ensure(render_manifest(&a.manifest) == render_manifest(&b.manifest), || format!("{name}: manifest differs"))?;
        generated += 1;
    }
    Ok(format!("{} corpus files round-trip; {generated} scripts byte-identical", files.len()))
}

fn c9_insertion_at_scale() -> Outcome {
    let chain = sres();
    let script = generate(&chain, None).map_err(|e| e.to_string())?;
    let mut db = Database::open(&render_script(&script), &script.manifest.variables).map_err(|e| e.to_string())?;
    const DEPARTMENTS: i64 = 100;
    const PROGRAMS: i64 = 10_000;
    // Every 100th program reuses an earlier code and must be refused.
    let duplicate = |i: i64| i % 100 == 99;
    let start = Instant::now();
    for d in 1..=DEPARTMENTS {
        let r = db
            .call("addDepartment", &[SqlValue::Integer(d), SqlValue::Text(format!("dept {d}"))])
            .map_err(|e| e.to_string())?;
        ensure(r == CallOutcome::Done, || format!("department {d}: {r:?}"))?;
    }
    let (mut done, mut refused) = (0, 0);
    for i in 0..PROGRAMS {
        let code = if duplicate(i) { i - 1 } else { i };
        let args = [
            SqlValue::Integer(i + 1),
            SqlValue::Integer(i % DEPARTMENTS + 1),
            SqlValue::Text(format!("P{code:05}")),
            SqlValue::Text(format!("Program {i}")),
        ];
        match db.call("addProgram", &args).map_err(|e| e.to_string())? {
            CallOutcome::Done => done += 1,
            CallOutcome::Rejected { label } if label == "grd3" && duplicate(i) => refused += 1,
            other => return Err(format!("program {i}: {other:?}")),
        }
    }
    let elapsed = start.elapsed();
    let count = |t: &str| -> i64 {
        db.connection()
            .query_row(&format!("SELECT COUNT(*) FROM {t}"), [], |r| r.get(0))
            .unwrap()
    };
    let expected_programs = (0..PROGRAMS).filter(|i| !duplicate(*i)).count() as i64;
    ensure(count("Department") == DEPARTMENTS, || format!("{} departments", count("Department")))?;
    ensure(count("Program") == expected_programs && done == expected_programs, || {
        format!("{} programs, expected {expected_programs}", count("Program"))
    })?;
    let rows = DEPARTMENTS + expected_programs;
    Ok(format!(
        "{} calls, {rows} rows inserted, {refused} duplicate codes refused, {elapsed:.2?} ({:.0} calls/s)",
        DEPARTMENTS + PROGRAMS,
        (DEPARTMENTS + PROGRAMS) as f64 / elapsed.as_secs_f64()
    ))
}

// Runs without the libtest harness so the criterion lines are always shown.
fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("registration chain verifies", c1_registration_chain_verifies),
        ("violations are detected", c2_violations_are_detected),
        ("circular constructors", c3_circular_constructors),
        ("association split", c4_association_split),
        ("oracle equivalence", c5_oracle_equivalence),
        ("SQL differential", c6_sql_differential),
        ("constraint fidelity", c7_constraint_fidelity),
        ("round trip and determinism", c8_round_trip_and_determinism),
        ("insertion at scale", c9_insertion_at_scale),
    ];
    let mut failed = vec![];
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
