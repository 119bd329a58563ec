//! Live solver round-trips through the session layer.

use fpi::cfg::NProgram;
use fpi::parser::parse_program;
use fpi::smt::solver::{Session, SolverCmd};
use fpi::smt::{self, SolverVerdict};
use std::collections::BTreeMap;
use std::time::Duration;

fn session() -> Session {
    let cmd = SolverCmd::discover(None).expect("solver available");
    Session::start(&cmd, Duration::from_secs(60)).expect("session starts")
}

#[test]
fn trivial_queries() {
    let mut s = session();
    // unsat
    let q = smt::VcQuery {
        label: "false".into(),
        script: vec!["(assert false)".into()],
        polarity: smt::Polarity::Satisfiability,
        witness: None,
    };
    assert!(matches!(smt::check(&mut s, &q).unwrap(), SolverVerdict::Unsat));
    // sat with a model
    let q = smt::VcQuery {
        label: "n>0".into(),
        script: vec!["(declare-const N Int)".into(), "(assert (> N 0))".into()],
        polarity: smt::Polarity::Satisfiability,
        witness: None,
    };
    assert!(matches!(smt::check(&mut s, &q).unwrap(), SolverVerdict::Sat(_)));
    // the bracket popped: N can be redeclared
    let q2 = smt::VcQuery {
        label: "n<0".into(),
        script: vec!["(declare-const N Int)".into(), "(assert (< N 0))".into()],
        polarity: smt::Polarity::Satisfiability,
        witness: None,
    };
    assert!(matches!(smt::check(&mut s, &q2).unwrap(), SolverVerdict::Sat(_)));
}

#[test]
fn bounded_triple_of_cube_chain_base_case() {
    let src = r#"
assume(true);
for (t1 = 0; t1 < N; t1 = t1 + 1) {
  if (t1 == 0) { A[t1] = 6; } else { A[t1] = A[t1 - 1] + 6; }
}
for (t2 = 0; t2 < N; t2 = t2 + 1) {
  if (t2 == 0) { B[t2] = 1; } else { B[t2] = B[t2 - 1] + A[t2 - 1]; }
}
for (t3 = 0; t3 < N; t3 = t3 + 1) {
  if (t3 == 0) { C[t3] = 0; } else { C[t3] = C[t3 - 1] + B[t3 - 1]; }
}
assert(forall i in [0, N) :: C[i] == i * i * i);
"#;
    let t = parse_program(src).unwrap();
    let np = NProgram::from_stmt(&t.prog);
    let q = smt::encode_bounded_triple(&t.pre, &np, &t.post, 1, &BTreeMap::new()).unwrap();
    let mut s = session();
    assert!(matches!(smt::check(&mut s, &q).unwrap(), SolverVerdict::Unsat));
    // same at N = 2 and 3
    for n in [2, 3] {
        let q = smt::encode_bounded_triple(&t.pre, &np, &t.post, n, &BTreeMap::new()).unwrap();
        assert!(
            matches!(smt::check(&mut s, &q).unwrap(), SolverVerdict::Unsat),
            "N={}",
            n
        );
    }
}

#[test]
fn bounded_counterexample_with_witness_replay() {
    // sum of N ones asserted to be N + 1: refutable at N = 1
    let src = r#"
assume(forall i in [0, N) :: A[i] == 1);
S = 0;
for (i = 0; i < N; i = i + 1) { S = S + A[i]; }
assert(S == N + 1);
"#;
    let t = parse_program(src).unwrap();
    let np = NProgram::from_stmt(&t.prog);
    let q = smt::encode_bounded_triple(&t.pre, &np, &t.post, 1, &BTreeMap::new()).unwrap();
    let mut s = session();
    match smt::check(&mut s, &q).unwrap() {
        SolverVerdict::Sat(model) => {
            let w = smt::extract_counterexample(&model, q.witness.as_ref().unwrap(), &t.pre, &t.prog, &t.post)
                .expect("replay confirms");
            assert_eq!(w.n, 1);
            assert_eq!(w.arrays["A"][0], 1);
            assert_eq!(w.failing_atom, "S == N + 1");
        }
        other => panic!("expected sat, got {:?}", verdict_name(&other)),
    }
}

#[test]
fn inductive_step_of_strengthened_sum_chain() {
    // the strengthened inductive obligation of the running sum/update/sum
    // example, with the difference program written out loop-free modulo a
    // parallel rectification loop
    let diff_src = r#"
assume(true);
S = S_Nm1 + A[N - 1];
for (i = 0; i < N - 1; i = i + 1) { A1[i] = A1_Nm1[i] + 1; }
A1[N - 1] = A[N - 1] + S;
S1 = S1_Nm1 + A[N - 1];
S1 = S1 + (N - 1);
S1 = S1 + A1[N - 1];
assert(true);
"#;
    let d = parse_program(diff_src).unwrap();
    let np = NProgram::from_stmt(&d.prog);
    use fpi::ast::*;
    let f = |s: &str| -> Formula {
        parse_program(&format!("assume({}); assert(true);", s)).unwrap().pre
    };
    let pre = vec![
        f("A[N - 1] == 1"),
        f("S1_Nm1 == (N - 1) * (N + 1)"),
        f("forall i in [0, N - 1) :: A1_Nm1[i] == N"),
        f("S_Nm1 == N - 1"),
    ];
    let post = Formula::And(vec![
        f("S == N"),
        f("forall i in [0, N) :: A1[i] == N + 1"),
        f("S1 == N * (N + 2)"),
    ]);
    let mut wiring = BTreeMap::new();
    for (a, b) in [("S", "S_Nm1"), ("S1", "S1_Nm1"), ("A1", "A1_Nm1")] {
        wiring.insert(a.to_string(), b.to_string());
    }
    let q = smt::encode_inductive_triple(&pre, &np, &wiring, &[], &[], &post, 1).unwrap();
    let mut s = session();
    match smt::check(&mut s, &q).unwrap() {
        SolverVerdict::Unsat => {}
        other => panic!(
            "expected unsat, got {}\nscript:\n{}",
            verdict_name(&other),
            q.script.join("\n")
        ),
    }
    // weakening the post to a wrong bound must be refutable
    let bad_post = f("S1 == N * (N + 2) + 1");
    let q = smt::encode_inductive_triple(&pre, &np, &wiring, &[], &[], &bad_post, 1).unwrap();
    assert!(matches!(smt::check(&mut s, &q).unwrap(), SolverVerdict::Sat(_)));
}

fn verdict_name(v: &SolverVerdict) -> &'static str {
    match v {
        SolverVerdict::Unsat => "unsat",
        SolverVerdict::Sat(_) => "sat",
        SolverVerdict::Unknown(_) => "unknown",
    }
}
