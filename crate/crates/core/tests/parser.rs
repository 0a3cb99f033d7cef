mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracle::Model;
use common::*;
use ubdb::ast::{BinOp, EventKind, Expr, Logic, Param, Quantifier, RelOp, RelationKind};
use ubdb::parser::{parse_bytes, parse_chain, parse_expr, pretty_expr, pretty_print, KEYWORDS};
use ubdb::resolve::{resolve, ResolveError};
use ubdb::types::typecheck;

const ADD_PROGRAM: &str = "
context C0
  sets PROGRAM, DEPARTMENT
end

machine M0 sees C0
  class Department : DEPARTMENT kind primary
  class Program : PROGRAM kind primary
  association offeredBy : Program --> Department

  event addProgram constructor of Program
    any this_Program : PROGRAM, d : DEPARTMENT
    where
      @grd1 this_Program /: Program
      @grd2 d : Department
    then
      @act1 Program := Program \\/ {this_Program}
      @act2 offeredBy := offeredBy \\/ {this_Program |-> d}
  end
end
";

fn errors(src: &str) -> Vec<String> {
    match parse_chain(src) {
        Ok(_) => Vec::new(),
        Err(d) => d.iter().map(|d| d.to_string()).collect(),
    }
}

#[test]
fn constructor_event_parses_with_its_guards_and_actions() {
    let chain = parse(ADD_PROGRAM);
    let ev = &chain.machines[0].events[0];
    assert_eq!(ev.name, "addProgram");
    assert_eq!(ev.kind, EventKind::Constructor);
    assert_eq!(ev.class_owner.as_deref(), Some("Program"));
    assert_eq!(ev.guards.len(), 2);
    assert_eq!(ev.actions.len(), 2);
    assert_eq!(
        ev.guards[0].pred,
        Expr::rel(RelOp::NotIn, Expr::ident("this_Program"), Expr::ident("Program"))
    );
}

#[test]
fn empty_input_asks_for_a_context_or_machine() {
    let e = errors("");
    assert_eq!(e.len(), 1);
    assert!(e[0].contains("expected 'context' or 'machine'"), "{e:?}");
    assert!(errors("   // only a comment\n").iter().any(|m| m.contains("expected 'context' or 'machine'")));
}

#[test]
fn domain_subtraction_action_parses_as_domain_subtraction() {
    let e = parse_expr("{this_a} <-| x").unwrap();
    assert_eq!(
        e,
        Expr::bin(BinOp::DomSub, Expr::Enum(vec![Expr::ident("this_a")]), Expr::ident("x"))
    );
}

#[test]
fn pretty_print_keeps_the_event_header() {
    let text = pretty_print(&parse(ADD_PROGRAM));
    assert!(text.contains("event addProgram constructor of Program"), "{text}");
}

#[test]
fn contexts_only_chain_prints_without_machines() {
    let text = pretty_print(&parse("context C0\n  sets S\nend\n"));
    assert!(text.contains("context C0"));
    assert!(!text.contains("machine"));
    assert_eq!(pretty_print(&parse(&text)), text);
}

#[test]
fn registration_chain_prints_five_machines_in_order() {
    let text = pretty_print(&sres().source);
    let headers: Vec<&str> = text.lines().filter(|l| l.starts_with("machine ")).collect();
    assert_eq!(headers.len(), 5);
    for (i, h) in headers.iter().enumerate() {
        assert!(h.starts_with(&format!("machine M{i}")), "{h}");
    }
}

#[test]
fn keywords_cannot_be_identifiers() {
    for kw in ["event", "class", "dom", "injective"] {
        let src = ADD_PROGRAM.replace("d : DEPARTMENT", &format!("{kw} : DEPARTMENT"));
        let e = errors(&src);
        assert!(!e.is_empty(), "{kw} accepted as an identifier");
        assert!(e[0].contains(':'), "diagnostic without a span: {}", e[0]);
    }
    assert!(KEYWORDS.contains(&"removes"));
}

#[test]
fn unknown_keyword_and_syntax_errors_carry_spans() {
    let e = errors("context C0\n  sets S\nend\n\nmachinery M0\nend\n");
    assert!(e[0].starts_with("5:1"), "{e:?}");
    let e = errors("context C0\n  sets S,\nend\n");
    assert!(e[0].starts_with("3:"), "{e:?}");
}

#[test]
fn crlf_input_parses_like_lf() {
    let crlf = ADD_PROGRAM.replace('\n', "\r\n");
    assert_eq!(parse(&crlf), parse(ADD_PROGRAM));
}

#[test]
fn invalid_utf8_is_a_diagnostic() {
    let d = parse_bytes(b"context C0\n  sets \xff\nend\n", None).unwrap_err();
    assert!(d[0].message.contains("UTF-8"));
    assert_eq!(d[0].span.line, 2);
}

#[test]
fn bundled_models_round_trip_and_print_canonically() {
    for name in ["sres.ubdb", "relation.ubdb", "staff_department.ubdb", "staff_department_partial.ubdb"] {
        let chain = parse(&model_text(name));
        let text = pretty_print(&chain);
        assert_eq!(parse(&text), chain, "{name}");
        assert_eq!(pretty_print(&parse(&text)), text, "{name} is not a fixed point");
        assert!(text.ends_with('\n') && !text.contains('\r') && !text.contains('\t'));
    }
}

#[test]
fn generated_models_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let chain = parse(&Model::random(&mut rng).to_dsl());
        assert_eq!(parse(&pretty_print(&chain)), chain);
    }
}

// Resolution and typing.

#[test]
fn extended_events_gain_the_abstract_parameters() {
    let chain = sres();
    let m1 = chain.machine("M1").unwrap();
    let ev = m1.event("addProgram").unwrap();
    let names: Vec<&str> = ev.params.iter().map(|p| p.name.as_str()).collect();
    for p in ["this_Program", "d", "p_code", "p_name"] {
        assert!(names.contains(&p), "{names:?}");
    }
    // Guard strengthening is syntactic for extending events.
    let abs = chain.machine("M0").unwrap().event("addProgram").unwrap();
    for g in &abs.guards {
        assert!(ev.guards.contains(g), "missing abstract guard {}", g.label);
    }
}

#[test]
fn single_machine_vocabulary_is_its_own() {
    let chain = load_str(ADD_PROGRAM);
    let m = &chain.machines[0];
    let names: Vec<&str> = m.variables.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["Department", "Program", "offeredBy"]);
    assert_eq!(m.events.len(), 1);
}

#[test]
fn resolution_is_idempotent() {
    let once = sres();
    let twice = resolve(&once.source).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn cyclic_refinement_is_reported() {
    let src = "context C0\n  sets S\nend\n\nmachine A refines B sees C0\nend\n\nmachine B refines A sees C0\nend\n";
    let errs = resolve(&parse(src)).unwrap_err();
    assert!(errs.iter().any(|e| matches!(e, ResolveError::CyclicRefinement { .. })), "{errs:?}");
}

#[test]
fn unresolved_duplicate_and_extend_errors() {
    let errs = resolve(&parse(&ADD_PROGRAM.replace("@grd2 d : Department", "@grd2 d : Departmnt"))).unwrap_err();
    assert!(errs.iter().any(|e| matches!(e, ResolveError::UnresolvedName { name, .. } if name == "Departmnt")));

    let errs = resolve(&parse(&ADD_PROGRAM.replace("sets PROGRAM, DEPARTMENT", "sets PROGRAM, DEPARTMENT, Program"))).unwrap_err();
    assert!(errs.iter().any(|e| matches!(e, ResolveError::DuplicateName { name, .. } if name == "Program")));

    let src = format!("{ADD_PROGRAM}\nmachine M1 refines M0 sees C0\n  event addX extends addNothing\n  end\nend\n");
    let errs = resolve(&parse(&src)).unwrap_err();
    assert!(errs.iter().any(|e| matches!(e, ResolveError::ExtendMismatch { .. })), "{errs:?}");
}

#[test]
fn paper_events_typecheck() {
    assert!(typecheck(&sres()).is_empty());
    assert!(typecheck(&load("relation.ubdb")).is_empty());
}

#[test]
fn pair_inserted_into_a_plain_set_is_a_type_error() {
    let src = ADD_PROGRAM.replace(
        "@act1 Program := Program \\/ {this_Program}",
        "@act1 Program := Program \\/ {this_Program |-> d}",
    );
    let diags = typecheck(&resolve(&parse(&src)).unwrap());
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(diags[0].to_string().contains("addProgram"), "{}", diags[0]);
}

#[test]
fn image_query_output_is_well_typed() {
    let chain = sres();
    let ev = chain.machines.last().unwrap().event("getDepartmentStaff").unwrap();
    assert!(ev.guards.iter().any(|g| pretty_expr(&g.pred).contains("worksIn~[{d}]")));
}

// Property tests.

fn ident() -> impl Strategy<Value = Expr> {
    prop::sample::select(vec!["a", "b", "R", "S", "x1", "this_A"]).prop_map(Expr::ident)
}

fn expr() -> impl Strategy<Value = Expr> {
    ident().prop_recursive(4, 24, 3, |inner| {
        let binop = prop::sample::select(vec![
            BinOp::Union,
            BinOp::Minus,
            BinOp::Inter,
            BinOp::Product,
            BinOp::DomSub,
            BinOp::DomRes,
            BinOp::Override,
            BinOp::Compose,
        ]);
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Expr::Enum),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Maplet(Box::new(a), Box::new(b))),
            (binop, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::bin(op, a, b)),
            inner.clone().prop_map(|a| Expr::Inverse(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Image(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Apply(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Dom(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Ran(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Pow(Box::new(a))),
        ]
    })
}

fn pred() -> impl Strategy<Value = Expr> {
    let rel = prop::sample::select(vec![RelOp::In, RelOp::NotIn, RelOp::Subset, RelOp::Eq]);
    let atom = prop_oneof![
        (rel, expr(), expr()).prop_map(|(op, a, b)| Expr::rel(op, a, b)),
        any::<bool>().prop_map(Expr::Bool),
        (expr(), ident(), ident(), prop::sample::select(vec![RelationKind::RELATION, RelationKind::TOTAL, RelationKind::PARTIAL]), any::<bool>())
            .prop_map(|(f, d, r, mut kind, inj)| {
                kind.injective = inj && kind.is_function();
                Expr::FnClass { func: Box::new(f), dom: Box::new(d), ran: Box::new(r), kind }
            }),
    ];
    atom.prop_recursive(3, 12, 2, |inner| {
        let logic = prop::sample::select(vec![Logic::And, Logic::Or, Logic::Implies]);
        prop_oneof![
            (logic, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Logic(op, Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Not(Box::new(a))),
            (prop::sample::select(vec![Quantifier::ForAll, Quantifier::Exists]), ident(), inner.clone())
                .prop_map(|(q, t, body)| Expr::Quant(q, vec![Param { name: "v".into(), typing: t }], Box::new(body))),
        ]
    })
}

proptest! {
    #[test]
    fn expressions_round_trip(e in expr()) {
        let text = pretty_expr(&e);
        let back = parse_expr(&text).map_err(|d| TestCaseError::fail(format!("{text}: {d}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn predicates_round_trip(p in pred()) {
        let text = pretty_expr(&p);
        let back = parse_expr(&text).map_err(|d| TestCaseError::fail(format!("{text}: {d}")))?;
        prop_assert_eq!(back, p, "{}", text);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        match parse_bytes(&bytes, None) {
            Ok(_) => {}
            Err(d) => prop_assert!(!d.is_empty() && d.iter().all(|d| d.span.line >= 1 && d.span.column >= 1)),
        }
    }

    #[test]
    fn mangled_models_never_panic(cut in 0usize..2000, junk in "[ -~]{0,8}") {
        let src = model_text("relation.ubdb");
        let cut = cut.min(src.len());
        let cut = (0..=cut).rev().find(|&i| src.is_char_boundary(i)).unwrap();
        let mangled = format!("{}{junk}{}", &src[..cut], &src[cut..]);
        if let Err(d) = parse_chain(&mangled) {
            prop_assert!(!d.is_empty());
        }
    }
}
