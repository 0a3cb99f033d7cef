mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::types::Value as SqlValue;

use common::*;
use ubdb::engine::Scope;
use ubdb::parser::pretty_print;
use ubdb::patterns::{split_association, SplitSpec};
use ubdb::resolve::ResolvedChain;
use ubdb::sqlgen::differential::{self, DiffOptions, DiffReport};
use ubdb::sqlgen::runtime::{CallOutcome, Database, RuntimeError};
use ubdb::sqlgen::{
    constraint_probes, generate, render_manifest, render_script, run_probes, Constraint, SqlScript, Step, TableDef,
};

fn table<'a>(s: &'a SqlScript, name: &str) -> &'a TableDef {
    s.tables.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("no table {name}"))
}

fn sres_script() -> (ResolvedChain, SqlScript) {
    let chain = sres();
    let script = generate(&chain, None).unwrap();
    (chain, script)
}

fn split(src: &str, relation: &str, class: &str, f1: &str, f2: &str) -> ResolvedChain {
    let spec = SplitSpec {
        relation: relation.into(),
        new_class: class.into(),
        fn1_name: f1.into(),
        fn2_name: f2.into(),
    };
    load_str(&pretty_print(&split_association(&parse(src), &spec).unwrap()))
}

fn walk(chain: &ResolvedChain, script: &SqlScript, k: usize, seed: u64, steps: usize) -> DiffReport {
    let scope = Scope::uniform(chain, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = DiffOptions {
        steps,
        ..DiffOptions::default()
    };
    differential::run(chain, script, &scope, &opts, &mut |n| rng.gen_range(0..n)).unwrap()
}

fn walks(chain: &ResolvedChain, script: &SqlScript, k: usize, runs: u64) -> DiffReport {
    let mut total = DiffReport::default();
    for seed in 0..runs {
        let r = walk(chain, script, k, seed, 10);
        assert!(r.agrees(), "seed {seed}: {:#?}", r.mismatches);
        total.calls += r.calls;
        total.accepted += r.accepted;
        total.rejected += r.rejected;
        total.queries += r.queries;
        total.injected += r.injected;
    }
    total
}

#[test]
fn program_code_is_a_mandatory_unique_column() {
    let (_, s) = sres_script();
    let program = table(&s, "Program");
    let code = program.columns.iter().find(|c| c.name == "program_code").unwrap();
    assert!(!code.nullable && code.unique);
    let text = render_script(&s);
    assert!(text.contains("  program_code VARCHAR(255) NOT NULL UNIQUE,\n"));
}

#[test]
fn function_associations_become_foreign_key_columns() {
    let (_, s) = sres_script();
    let program = table(&s, "Program");
    let col = program.columns.iter().find(|c| c.name == "offeredBy_id").unwrap();
    assert!(!col.nullable);
    assert!(program
        .foreign_keys
        .contains(&("offeredBy_id".into(), "Department".into(), "Department_id".into())));
    let dept = table(&s, "Department");
    assert!(dept.columns.iter().find(|c| c.name == "hasDean_id").unwrap().nullable);
}

#[test]
fn subclass_tables_share_the_superclass_key() {
    let (_, s) = sres_script();
    for sub in ["Staff", "Student", "Completed_Student"] {
        let t = table(&s, sub);
        let key = format!("{sub}_id");
        assert_eq!(t.primary_key.as_deref(), Some(key.as_str()));
        assert!(t.foreign_keys.contains(&(key, "Person".into(), "Person_id".into())), "{sub}");
    }
}

#[test]
fn many_to_many_becomes_a_join_table_with_composite_unique() {
    let (_, s) = sres_script();
    let t = table(&s, "offeredIn");
    assert!(t.primary_key.is_none());
    assert_eq!(t.unique_constraints, [vec!["Module_id".to_string(), "Program_id".to_string()]]);
}

#[test]
fn referenced_tables_are_created_first() {
    let src = "
context C0
  sets P, Q
end

machine M0 sees C0
  class Qs : Q kind secondary
  class Ps : P kind primary
  association owner : Qs --> Ps
end
";
    let s = generate(&load_str(src), None).unwrap();
    let names: Vec<&str> = s.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["Ps", "Qs"]);
    let text = render_script(&s);
    assert!(text.find("CREATE TABLE Ps").unwrap() < text.find("CREATE TABLE Qs").unwrap());
}

#[test]
fn forward_references_only_close_cycles_through_nullable_columns() {
    let (_, s) = sres_script();
    let pos = |n: &str| s.tables.iter().position(|t| t.name == n).unwrap();
    let mut forward = vec![];
    for (i, t) in s.tables.iter().enumerate() {
        for (col, target, _) in &t.foreign_keys {
            if pos(target) > i {
                let c = t.columns.iter().find(|c| &c.name == col).unwrap();
                assert!(c.nullable, "{}.{col} references later table {target}", t.name);
                forward.push(format!("{}.{col}", t.name));
            }
        }
    }
    // Department.hasDean and Staff.worksIn form the only cycle.
    assert_eq!(forward, ["Department.hasDean_id"]);
}

#[test]
fn generation_is_deterministic() {
    let (chain, a) = sres_script();
    let b = generate(&chain, None).unwrap();
    assert_eq!(render_script(&a), render_script(&b));
    assert_eq!(render_manifest(&a.manifest), render_manifest(&b.manifest));
    // Re-parsing the printed model changes nothing either.
    let again = generate(&load_str(&pretty_print(&chain.source)), None).unwrap();
    assert_eq!(render_script(&a), render_script(&again));
}

#[test]
fn guards_come_before_modifications() {
    let (_, s) = sres_script();
    for p in &s.procedures {
        let first_modify = p.steps.iter().position(|s| matches!(s, Step::Modify { .. }));
        let last_check = p.steps.iter().rposition(|s| matches!(s, Step::Check { .. }));
        if let (Some(m), Some(c)) = (first_modify, last_check) {
            assert!(c < m, "{}", p.name);
        }
    }
}

#[test]
fn navigation_guard_becomes_an_exists_subquery() {
    let (_, s) = sres_script();
    let p = s.procedures.iter().find(|p| p.name == "addRegistration").unwrap();
    let grd2 = p
        .steps
        .iter()
        .find_map(|s| match s {
            Step::Check { label, condition } if label == "grd2" => Some(condition),
            _ => None,
        })
        .unwrap();
    assert!(grd2.contains("EXISTS (SELECT 1 FROM offeredIn"), "{grd2}");
}

#[test]
fn destructor_cascades_explicitly() {
    let (_, s) = sres_script();
    let text = render_script(&s);
    assert!(!text.contains("ON DELETE"));
    let p = s.procedures.iter().find(|p| p.name == "removeModule").unwrap();
    let mods: Vec<&str> = p
        .steps
        .iter()
        .filter_map(|s| match s {
            Step::Modify { sql } => Some(sql.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(mods.len(), 2);
    assert!(mods[0].starts_with("DELETE FROM offeredIn"));
    assert!(mods[1].starts_with("DELETE FROM Module"));
}

#[test]
fn historical_move_is_one_procedure() {
    let (_, s) = sres_script();
    let p = s.procedures.iter().find(|p| p.name == "completeStudent").unwrap();
    assert!(p.historical_move);
    assert!(s.manifest.procedures["completeStudent"].ends_with("[historical move]"));
    let body = p.body();
    assert!(body.contains("BEGIN ATOMIC"));
    for stmt in [
        "INSERT INTO Completed_Student",
        "INSERT INTO Completed_Registration",
        "DELETE FROM Registration",
        "DELETE FROM Student",
    ] {
        assert!(body.contains(stmt), "{stmt}");
    }
}

fn ids(db: &Database, sql: &str) -> Vec<i64> {
    let mut stmt = db.connection().prepare(sql).unwrap();
    stmt.query_map([], |r| r.get(0)).unwrap().map(Result::unwrap).collect()
}

fn int(n: i64) -> SqlValue {
    SqlValue::Integer(n)
}

fn text(s: &str) -> SqlValue {
    SqlValue::Text(s.into())
}

#[test]
fn department_staff_query_returns_the_joined_rows() {
    let (_, s) = sres_script();
    let mut db = Database::open(&render_script(&s), &s.manifest.variables).unwrap();
    assert_eq!(db.call("addDepartment", &[int(1), text("DEPT_NAME.1")]).unwrap(), CallOutcome::Done);
    assert_eq!(db.call("addDepartment", &[int(2), text("DEPT_NAME.2")]).unwrap(), CallOutcome::Done);
    for (staff, dept) in [(1, 1), (2, 2), (3, 1)] {
        assert_eq!(db.call("addStaff", &[int(staff), int(dept)]).unwrap(), CallOutcome::Done);
    }
    let CallOutcome::Rows(rows) = db.call("getDepartmentStaff", &[int(1)]).unwrap() else {
        panic!("expected rows")
    };
    let mut got: Vec<SqlValue> = rows.into_iter().map(|r| r[0].clone()).collect();
    got.sort_by_key(|v| match v {
        SqlValue::Integer(i) => *i,
        _ => -1,
    });
    assert_eq!(got, [int(1), int(3)]);
    assert_eq!(
        db.call("getDepartmentStaff", &[int(9)]).unwrap(),
        CallOutcome::Rejected { label: "grd1".into() }
    );
    // Guard failures leave no trace.
    assert_eq!(
        db.call("addStaff", &[int(4), int(9)]).unwrap(),
        CallOutcome::Rejected { label: "grd2".into() }
    );
    assert_eq!(ids(&db, "SELECT Person_id FROM Person ORDER BY 1"), [1, 2, 3]);
}

#[test]
fn historical_move_is_all_or_nothing() {
    let (_, s) = sres_script();
    let mut db = Database::open(&render_script(&s), &s.manifest.variables).unwrap();
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
        assert_eq!(db.call(p, args).unwrap(), CallOutcome::Done, "{p}");
    }
    let snapshot = |db: &Database| {
        [
            "SELECT Student_id FROM Student",
            "SELECT Registration_id FROM Registration",
            "SELECT Completed_Student_id FROM Completed_Student",
            "SELECT Completed_Registration_id FROM Completed_Registration",
        ]
        .map(|q| ids(db, q))
    };
    let before = snapshot(&db);
    let args = [int(1), text("2000-01-01")];
    let n = db.modify_count("completeStudent").unwrap();
    assert_eq!(n, 4);
    for after in 0..n {
        assert_eq!(
            db.call_failing("completeStudent", &args, after),
            Err(RuntimeError::Injected(after))
        );
        assert_eq!(snapshot(&db), before, "failure after {after} statements");
    }
    assert_eq!(db.call("completeStudent", &args).unwrap(), CallOutcome::Done);
    assert_eq!(snapshot(&db), [vec![], vec![], vec![1], vec![1]]);
}

#[test]
fn generated_constraint_probes_all_pass() {
    let (_, s) = sres_script();
    let probes = constraint_probes(&s);
    let outcomes = run_probes(&s, &probes).unwrap();
    for o in &outcomes {
        assert!(o.passed(), "{:?}: {}", o.probe, o.detail);
    }
    let has = |t: &str, c: Constraint| probes.iter().any(|p| p.table == t && p.constraint == c);
    assert!(has("Program", Constraint::NotNull { column: "program_code".into() }));
    assert!(has("Program", Constraint::Unique { column: "program_code".into() }));
    assert!(has(
        "offeredIn",
        Constraint::CompositeUnique {
            columns: vec!["Module_id".into(), "Program_id".into()]
        }
    ));
}

#[test]
fn probes_notice_a_missing_constraint() {
    let (_, mut s) = sres_script();
    let probes = constraint_probes(&s);
    let program = s.tables.iter_mut().find(|t| t.name == "Program").unwrap();
    for c in &mut program.columns {
        if c.name == "program_code" {
            c.nullable = true;
            c.unique = false;
        }
    }
    let failed: Vec<_> = run_probes(&s, &probes)
        .unwrap()
        .into_iter()
        .filter(|o| !o.passed())
        .map(|o| o.probe.constraint)
        .collect();
    assert_eq!(
        failed,
        [
            Constraint::NotNull { column: "program_code".into() },
            Constraint::Unique { column: "program_code".into() }
        ]
    );
}

#[test]
fn split_class_gets_composite_uniqueness() {
    let chain = split(&model_text("relation.ubdb"), "R", "C", "R1", "R2");
    let s = generate(&chain, None).unwrap();
    let c = table(&s, "C");
    assert_eq!(c.unique_constraints, [vec!["R1_id".to_string(), "R2_id".to_string()]]);
    assert!(s.tables.iter().all(|t| t.name != "R"));
    let outcomes = run_probes(&s, &constraint_probes(&s)).unwrap();
    assert!(outcomes.iter().all(|o| o.passed()), "{outcomes:#?}");
}

#[test]
fn registration_model_agrees_with_the_engine() {
    let (chain, s) = sres_script();
    let total = walks(&chain, &s, 3, 40);
    assert!(total.accepted > 40 && total.rejected > 40, "{total:?}");
    assert!(total.queries > 0 && total.injected > 0, "{total:?}");
}

#[test]
fn long_walks_agree() {
    let (chain, s) = sres_script();
    for seed in 0..3 {
        let r = walk(&chain, &s, 2, 100 + seed, 300);
        assert!(r.agrees(), "{:#?}", r.mismatches);
    }
}

#[test]
fn split_models_agree_with_the_engine() {
    let rel = split(&model_text("relation.ubdb"), "R", "C", "R1", "R2");
    walks(&rel, &generate(&rel, None).unwrap(), 3, 30);
    let plain = load("relation.ubdb");
    walks(&plain, &generate(&plain, None).unwrap(), 3, 30);
    let sres = split(&model_text("sres.ubdb"), "offeredIn", "Offering", "offeredModule", "offeringProgram");
    let s = generate(&sres, None).unwrap();
    assert!(s.tables.iter().any(|t| t.name == "Offering"));
    walks(&sres, &s, 3, 30);
}

fn tamper(s: &mut SqlScript, proc: &str, f: impl Fn(&mut Vec<Step>)) {
    let p = s.procedures.iter_mut().find(|p| p.name == proc).unwrap();
    f(&mut p.steps);
}

fn detected(chain: &ResolvedChain, s: &SqlScript) -> bool {
    (0..40).any(|seed| !walk(chain, s, 2, seed, 30).agrees())
}

#[test]
fn tampered_procedures_are_caught() {
    let (chain, clean) = sres_script();
    assert!(!detected(&chain, &clean));

    // Wrong update target.
    let mut s = clean.clone();
    tamper(&mut s, "setDean", |steps| {
        for st in steps {
            if let Step::Modify { sql } = st {
                *sql = sql.replace("hasDean_id = p_s", "hasDean_id = NULL");
            }
        }
    });
    assert!(detected(&chain, &s));

    // A dropped guard.
    let mut s = clean.clone();
    tamper(&mut s, "addModule", |steps| {
        steps.retain(|st| !matches!(st, Step::Check { label, .. } if label == "grd1"))
    });
    assert!(detected(&chain, &s));

    // A missing cascade.
    let mut s = clean;
    tamper(&mut s, "removeModule", |steps| {
        steps.retain(|st| !matches!(st, Step::Modify { sql } if sql.starts_with("DELETE FROM offeredIn")))
    });
    assert!(detected(&chain, &s));
}
