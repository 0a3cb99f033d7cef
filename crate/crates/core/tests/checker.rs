mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracle::{Model, Oracle};
use common::*;
use ubdb::checker::{
    self, check, check_enabledness, check_refinement, explore_states, generate_obligations, machine_obligations,
    replay, report, CheckOptions, ObligationKind, Verdict,
};
use ubdb::engine::{MachineModel, Scope, Universe};

const TINY: &str = "
context C0
  sets S
end

machine M0 sees C0
  class K : S kind primary
  invariant @never false

  event addK constructor of K
    any this_K : S
    where
      @grd1 this_K /: K
    then
      @act1 K := K \\/ {this_K}
  end

  event blocked normal of K
    any k : S
    where
      @grd1 k : K
      @grd2 false
    then
      @act1 K := K \\ {k}
  end
end
";

#[test]
fn false_invariant_is_violated_by_the_first_step() {
    let chain = load_str(TINY);
    let reports = check(&chain, &uniform_opts(&chain, 2), "M0").unwrap();
    let r = find(&reports, "INV M0/addK/never");
    assert_eq!(r.verdict, Verdict::Violated);
    assert_eq!(r.counterexample.as_ref().unwrap().len(), 1);
}

#[test]
fn false_guard_is_never_feasible() {
    let chain = load_str(TINY);
    let reports = check_enabledness(&chain, &uniform_opts(&chain, 2)).unwrap();
    let blocked = find(&reports, "FEAS M0/blocked");
    assert_eq!(blocked.verdict, Verdict::Violated);
    assert_eq!(find(&reports, "FEAS M0/addK").verdict, Verdict::Holds);
}

#[test]
fn machine_without_events_has_no_obligations() {
    let chain = load_str("context C0\n  sets S\nend\n\nmachine M0 sees C0\n  class K : S kind primary\nend\n");
    assert!(machine_obligations(&chain.machines[0]).is_empty());
    assert!(check(&chain, &uniform_opts(&chain, 2), "M0").unwrap().is_empty());
}

#[test]
fn obligation_matrix_for_the_structure_layer() {
    let chain = sres();
    let m0 = chain.machine("M0").unwrap();
    let obs = machine_obligations(m0);
    let n_inv = m0.state_invariants().count();
    let n_ev = m0.events.len();
    let count = |k| obs.iter().filter(|o| o.kind == k).count();
    assert_eq!(count(ObligationKind::FEAS), n_ev);
    assert_eq!(count(ObligationKind::INV), n_ev * n_inv);
    assert!(n_ev >= 8 && n_inv >= 5, "{n_ev} events, {n_inv} invariants");
    assert!(obs
        .iter()
        .filter(|o| o.kind == ObligationKind::INV)
        .all(|o| o.event.is_some() && o.invariant_label.is_some()));
    assert!(obs
        .iter()
        .filter(|o| o.kind == ObligationKind::FEAS)
        .all(|o| o.event.is_some() && o.invariant_label.is_none()));
    let all = generate_obligations(&chain);
    assert!(all.iter().any(|o| o.kind == ObligationKind::SIM));
}

#[test]
fn staff_and_department_block_each_other_when_both_total() {
    let chain = load("staff_department.ubdb");
    let reports = check_enabledness(&chain, &uniform_opts(&chain, 2)).unwrap();
    for ev in ["addStaff", "addDepartment"] {
        let r = find(&reports, &format!("FEAS M0/{ev}"));
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(r.note.as_deref().unwrap().contains("circular dependency"));
    }
    let chain = load("staff_department_partial.ubdb");
    let reports = check_enabledness(&chain, &uniform_opts(&chain, 2)).unwrap();
    assert!(reports.iter().all(|r| r.verdict == Verdict::Holds), "{}", failures(&reports));
}

#[test]
fn removing_the_offering_guard_breaks_registration_consistency() {
    let src = without_line(&model_text("sres.ubdb"), "@grd2 runningModule(m) |-> enrolledIn(s) : offeredIn");
    let chain = load_str(&src);
    let opts = default_opts(&chain);
    let reports = check(&chain, &opts, "M2").unwrap();
    let r = find(&reports, "INV M2/addRegistration/inv1");
    assert_eq!(r.verdict, Verdict::Violated);
    let trace = r.counterexample.as_ref().unwrap();
    assert!(trace.len() <= 6, "trace of {} steps", trace.len());
    assert_eq!(trace.steps.last().unwrap().event, "addRegistration");

    // Replay through the engine and confirm the invariant fails at the end.
    let universe = Arc::new(Universe::new(&chain, &opts.scope).unwrap());
    let model = MachineModel::new(chain.machine("M2").unwrap(), universe).unwrap();
    let end = replay(&model, trace).unwrap();
    let inv1 = model.invariants.iter().position(|i| i.label == "inv1").unwrap();
    assert!(model.violated_invariants(&end).contains(&inv1));
}

#[test]
fn counterexample_replay_rejects_a_tampered_trace() {
    let chain = load_str(TINY);
    let opts = uniform_opts(&chain, 2);
    let reports = check(&chain, &opts, "M0").unwrap();
    let mut trace = find(&reports, "INV M0/addK/never").counterexample.clone().unwrap();
    let universe = Arc::new(Universe::new(&chain, &opts.scope).unwrap());
    let model = MachineModel::new(&chain.machines[0], universe).unwrap();
    trace.steps[0].event = "blocked".into();
    assert!(replay(&model, &trace).is_err());
}

fn split_relation_model() -> String {
    let chain = parse(&model_text("relation.ubdb"));
    let spec = ubdb::patterns::SplitSpec {
        relation: "R".into(),
        new_class: "C".into(),
        fn1_name: "R1".into(),
        fn2_name: "R2".into(),
    };
    ubdb::parser::pretty_print(&ubdb::patterns::split_association(&chain, &spec).unwrap())
}

#[test]
fn split_refinement_discharges_the_gluing_invariants() {
    let chain = load_str(&split_relation_model());
    let reports = check_refinement(&chain, &uniform_opts(&chain, 2), "M1", "M2").unwrap();
    assert!(reports.iter().all(|r| r.verdict == Verdict::Holds), "{}", failures(&reports));
    let glu: Vec<_> = reports.iter().filter(|r| r.obligation.kind == ObligationKind::GLU).collect();
    for label in ["inv1", "inv2"] {
        assert!(glu.iter().any(|r| r.obligation.invariant_label.as_deref() == Some(label)));
    }
}

#[test]
fn forgetting_the_second_function_breaks_gluing_in_one_step() {
    let text = split_relation_model();
    let line = text
        .lines()
        .find(|l| l.contains("R2 := R2 \\/"))
        .expect("the link event adds to R2")
        .to_string();
    let chain = load_str(&without_line(&text, &line));
    let reports = check_refinement(&chain, &uniform_opts(&chain, 2), "M1", "M2").unwrap();
    let bad = reports
        .iter()
        .find(|r| r.obligation.kind == ObligationKind::GLU && r.obligation.invariant_label.as_deref() == Some("inv1") && r.verdict == Verdict::Violated)
        .unwrap_or_else(|| panic!("no inv1 GLU violation:\n{}", report::to_text(&reports, false)));
    let t = bad.counterexample.as_ref().unwrap();
    // The pair needs an A and a B first, then the broken link.
    assert_eq!(t.len(), 3, "{}", report::to_text(std::slice::from_ref(bad), false));
    assert_eq!(t.steps.last().unwrap().event, bad.obligation.event.clone().unwrap());
}

#[test]
fn identical_refinement_holds_reflexively() {
    let src = format!(
        "{}\nmachine M1 refines M0 sees C0\n  event addK extends addK\n  end\nend\n",
        TINY.replace("  invariant @never false\n", "").replace("@grd2 false", "@grd2 k : K")
    );
    let chain = load_str(&src);
    let reports = check_refinement(&chain, &uniform_opts(&chain, 2), "M0", "M1").unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r.verdict == Verdict::Holds), "{}", failures(&reports));
}

#[test]
fn reports_are_deterministic() {
    let src = without_line(&model_text("relation.ubdb"), "@grd2 a |-> b /: R");
    let chain = load_str(&src);
    let opts = uniform_opts(&chain, 2);
    let a = check(&chain, &opts, "M0").unwrap();
    let b = check(&chain, &opts, "M0").unwrap();
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)));
    let strip = |mut v: serde_json::Value| {
        for r in v["records"].as_array_mut().unwrap() {
            r["elapsed_ms"] = 0.into();
        }
        v
    };
    assert_eq!(strip(report::to_json(&a)), strip(report::to_json(&b)));
}

#[test]
fn structured_report_has_the_documented_fields() {
    let chain = load_str(TINY);
    let reports = check(&chain, &uniform_opts(&chain, 2), "M0").unwrap();
    let v = report::to_json(&reports);
    for key in ["holds", "violated", "scope_exhausted"] {
        assert!(v["summary"][key].is_u64());
    }
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), reports.len());
    for r in records {
        for key in ["kind", "machine", "abstract_machine", "event", "invariant", "verdict", "states", "scope", "elapsed_ms", "note", "trace"] {
            assert!(r.get(key).is_some(), "missing {key} in {r}");
        }
        let violated = r["verdict"] == "violated";
        assert_eq!(violated, r["trace"].is_array(), "{r}");
    }
    let bad = records.iter().find(|r| r["invariant"] == "never").unwrap();
    let step = &bad["trace"][0];
    assert_eq!(step["event"], "addK");
    assert!(step["binding"]["this_K"].as_str().unwrap().starts_with("S."));
    // The trace round-trips through the animator's parser.
    let universe = Universe::new(&chain, &Scope::uniform(&chain, 2)).unwrap();
    let steps = report::parse_trace(&v.to_string(), &universe).unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].0, "addK");
}

#[test]
fn budget_exhaustion_is_reported_not_fatal() {
    let chain = load("relation.ubdb");
    let opts = uniform_opts(&chain, 2).budget(3);
    let reports = check(&chain, &opts, "M0").unwrap();
    assert!(reports.iter().any(|r| r.verdict == Verdict::ScopeExhausted));
    assert!(reports.iter().all(|r| r.verdict != Verdict::Violated));
}

#[test]
fn symmetry_reduction_preserves_verdicts() {
    let src = without_line(&model_text("relation.ubdb"), "@grd2 a |-> b /: R");
    let chain = load_str(&src);
    for k in [2, 3] {
        let on = check(&chain, &uniform_opts(&chain, k), "M0").unwrap();
        let off = check(&chain, &uniform_opts(&chain, k).symmetry(false), "M0").unwrap();
        let verdicts = |v: &[checker::CheckReport]| v.iter().map(|r| (r.obligation.id(), r.verdict)).collect::<Vec<_>>();
        assert_eq!(verdicts(&on), verdicts(&off));
        assert!(on[0].states_explored < off[0].states_explored);
    }
}

fn state_count(chain: &ubdb::resolve::ResolvedChain, k: usize, symmetry: bool) -> usize {
    let scope = Scope::uniform(chain, k);
    let universe = Arc::new(Universe::new(chain, &scope).unwrap());
    let model = MachineModel::new(&chain.machines[0], universe).unwrap();
    let run = explore_states(&model, &CheckOptions::new(scope).symmetry(symmetry));
    assert!(!run.exhausted);
    run.states.len()
}

#[test]
fn reachable_states_match_the_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..40 {
        let model = Model::random(&mut rng);
        let chain = load_str(&model.to_dsl());
        for k in [1, 2, 3] {
            let oracle = Oracle { model: &model, k };
            let states = oracle.reachable();
            assert_eq!(state_count(&chain, k, false), states.len(), "k={k}\n{}", model.to_dsl());
            assert_eq!(state_count(&chain, k, true), oracle.orbits(&states), "k={k} (symmetry)\n{}", model.to_dsl());
        }
    }
}

#[test]
fn violations_persist_at_larger_scopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut seen = 0;
    for _ in 0..30 {
        let model = Model::random(&mut rng);
        let chain = load_str(&model.to_dsl());
        let at = |k| {
            let reports = check(&chain, &uniform_opts(&chain, k), "M0").unwrap();
            reports
                .into_iter()
                .filter(|r| r.obligation.kind == ObligationKind::INV && r.verdict == Verdict::Violated)
                .map(|r| r.obligation.id())
                .collect::<std::collections::BTreeSet<_>>()
        };
        let small = at(2);
        seen += small.len();
        assert!(small.is_subset(&at(3)), "{}", model.to_dsl());
    }
    assert!(seen > 0, "no model had a violation to carry over");
}
