//! SMT back end: verification-condition scripts, the solver session, and
//! counterexample extraction.
//!
//! Validity of a loop-free Hoare triple is checked by asserting the
//! pre-condition and the single-assignment program relation, then asking
//! for a model of the negated post-condition: `unsat` certifies the
//! triple. Every script is kept for logging and replay.

pub mod encode;
pub mod solver;

use crate::ast::*;
use crate::cfg::*;
use crate::interp::{self, ProgState};
use encode::{EncodeError, Env, Script};
use serde::Serialize;
use solver::{SatResult, Session, SmtError};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// `unsat` of the negated implication proves validity.
    ValidityViaNegation,
    /// Plain satisfiability question.
    Satisfiability,
}

#[derive(Debug, Clone)]
pub struct WitnessPlan {
    pub n_val: i128,
    pub scalar_inputs: BTreeMap<Name, String>,
    pub array_inputs: BTreeMap<Name, String>,
    pub cell_range: i128,
}

/// A single solver query: declarations plus assertions, run inside a
/// push/pop bracket.
#[derive(Debug, Clone)]
pub struct VcQuery {
    pub label: String,
    pub script: Vec<String>,
    pub polarity: Polarity,
    pub witness: Option<WitnessPlan>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub values: BTreeMap<String, i128>,
}

#[derive(Debug, Clone)]
pub enum SolverVerdict {
    Unsat,
    Sat(Model),
    Unknown(String),
}

/// Run a query in its own push/pop bracket; on sat, fetch the values the
/// witness plan asks for.
pub fn check(session: &mut Session, q: &VcQuery) -> Result<SolverVerdict, SmtError> {
    session.push()?;
    let run = (|| -> Result<SolverVerdict, SmtError> {
        session.send_all(&q.script)?;
        let res = session.check_sat()?;
        match res {
            SatResult::Unsat => Ok(SolverVerdict::Unsat),
            SatResult::Unknown => Ok(SolverVerdict::Unknown("solver returned unknown".into())),
            SatResult::Sat => {
                let mut values = BTreeMap::new();
                if let Some(plan) = &q.witness {
                    let mut terms: Vec<String> = Vec::new();
                    for sym in plan.scalar_inputs.values() {
                        terms.push(sym.clone());
                    }
                    for sym in plan.array_inputs.values() {
                        for i in 0..plan.cell_range {
                            terms.push(format!("(select {} {})", sym, encode::int_term(i)));
                        }
                    }
                    for (t, v) in session.get_values(&terms)? {
                        values.insert(t, v);
                    }
                }
                Ok(SolverVerdict::Sat(Model { values }))
            }
        }
    })();
    // always try to restore the bracket
    if !session.is_dead() {
        let _ = session.pop();
    }
    run
}

// ---------------------------------------------------------------------
// Query builders
// ---------------------------------------------------------------------

fn all_arrays(prog: &NProgram, formulas: &[&Formula]) -> BTreeSet<Name> {
    let mut arrays = prog.array_names();
    for f in formulas {
        f.walk_exprs(&mut |e| {
            e.walk(&mut |x| {
                if let Expr::Read(a, _) = x {
                    arrays.insert(a.clone());
                }
            })
        });
    }
    arrays
}

/// Bounded base-case query: `{pre} prog {post}` at N = n_val, loops
/// statically unrolled, validity via the negated post-condition.
pub fn encode_bounded_triple(
    pre: &Formula,
    prog: &NProgram,
    post: &Formula,
    n_val: i128,
    wiring: &BTreeMap<Name, Name>,
) -> Result<VcQuery, EncodeError> {
    let arrays = all_arrays(prog, &[pre, post]);
    let mut sc = Script::new(&arrays);
    let mut env = Env::default();
    for (plain, frozen) in wiring {
        let sym = sc.lookup(&Env::default(), frozen);
        env.bind(plain, sym);
    }
    let pre_term = encode::formula_term_bounded(pre, &mut sc, &env, n_val)?;
    sc.assert(pre_term);
    encode::encode_items_bounded(&prog.items, &mut sc, &mut env, n_val)?;
    let post_term = encode::formula_term_bounded(post, &mut sc, &env, n_val)?;
    sc.assert(format!("(not {})", post_term));
    let witness = WitnessPlan {
        n_val,
        scalar_inputs: sc.scalar_inputs.clone(),
        array_inputs: sc.array_inputs.clone(),
        cell_range: n_val.max(1) + 4,
    };
    Ok(VcQuery {
        label: format!("base-case N={}", n_val),
        script: sc.lines(),
        polarity: Polarity::ValidityViaNegation,
        witness: Some(witness),
    })
}

/// Inductive-step query over symbolic N > lower.
///
/// `tails` are auxiliary programs (the encodable suffix of `P_{N-1}`)
/// asserted as relations between their entry and final names, exposing
/// how frozen final values connect to frozen intermediates.
pub fn encode_inductive_triple(
    pre: &[Formula],
    prog: &NProgram,
    wiring: &BTreeMap<Name, Name>,
    tails: &[NProgram],
    side_conditions: &[BoolExpr],
    post: &Formula,
    lower: i128,
) -> Result<VcQuery, EncodeError> {
    let mut arrays = all_arrays(prog, &[post]);
    for f in pre {
        arrays.extend(all_arrays(&NProgram::default(), &[f]));
    }
    for t in tails {
        arrays.extend(t.array_names());
    }
    let mut sc = Script::new(&arrays);
    sc.declare("N", encode::Sort::Int);
    sc.assert(format!("(> N {})", encode::int_term(lower)));
    for t in tails {
        encode::encode_program_as_relations(&t.items, &mut sc, "N", &arrays)?;
    }
    let id_env = Env::default();
    for f in pre {
        let t = encode::formula_term(f, &mut sc, &id_env, "N");
        sc.assert(t);
    }
    for cond in side_conditions {
        let t = encode::bool_term(cond, &mut sc, &id_env, "N", &BTreeMap::new());
        sc.assert(t);
    }
    let mut env = Env::default();
    for (plain, frozen) in wiring {
        let sym = sc.lookup(&Env::default(), frozen);
        env.bind(plain, sym);
    }
    encode::encode_items_symbolic(&prog.items, &mut sc, &mut env, "N")?;
    let neg = negated_formula_term(post, &mut sc, &env, "N");
    sc.assert(neg);
    Ok(VcQuery {
        label: format!("inductive-step N>{}", lower),
        script: sc.lines(),
        polarity: Polarity::ValidityViaNegation,
        witness: None,
    })
}

/// Negation with skolemized universal quantifiers: fresh constants
/// witness the failing index.
pub fn negated_formula_term(f: &Formula, sc: &mut Script, env: &Env, n_term: &str) -> String {
    match f {
        Formula::True => "false".into(),
        Formula::False => "true".into(),
        Formula::Qf(b) => format!("(not {})", encode::bool_term(b, sc, env, n_term, &BTreeMap::new())),
        Formula::Forall(q) => {
            let sk = sc.fresh_sym("sk", encode::Sort::Int);
            let mut bound = BTreeMap::new();
            bound.insert(q.idx.clone(), sk.clone());
            let lo = encode::expr_term(&q.lo, sc, env, n_term, &BTreeMap::new());
            let hi = encode::expr_term(&q.hi, sc, env, n_term, &BTreeMap::new());
            let body = encode::bool_term(&q.body, sc, env, n_term, &bound);
            format!("(and (<= {} {}) (< {} {}) (not {}))", lo, sk, sk, hi, body)
        }
        Formula::Exists(q) => {
            let qv = "qn!0".to_string();
            let mut bound = BTreeMap::new();
            bound.insert(q.idx.clone(), qv.clone());
            let lo = encode::expr_term(&q.lo, sc, env, n_term, &BTreeMap::new());
            let hi = encode::expr_term(&q.hi, sc, env, n_term, &BTreeMap::new());
            let body = encode::bool_term(&q.body, sc, env, n_term, &bound);
            format!(
                "(forall (({} Int)) (=> (and (<= {} {}) (< {} {})) (not {})))",
                qv, lo, qv, qv, hi, body
            )
        }
        Formula::And(fs) => {
            let parts: Vec<String> =
                fs.iter().map(|x| negated_formula_term(x, sc, env, n_term)).collect();
            if parts.is_empty() {
                "false".into()
            } else {
                format!("(or {})", parts.join(" "))
            }
        }
        Formula::Or(fs) => {
            let parts: Vec<String> =
                fs.iter().map(|x| negated_formula_term(x, sc, env, n_term)).collect();
            if parts.is_empty() {
                "true".into()
            } else {
                format!("(and {})", parts.join(" "))
            }
        }
    }
}

/// Validity of `antecedent -> consequent` over symbolic N >= lower.
pub fn encode_implication(antecedent: &[Formula], consequent: &Formula, lower: i128) -> VcQuery {
    let mut arrays = BTreeSet::new();
    for f in antecedent.iter().chain(std::iter::once(consequent)) {
        f.walk_exprs(&mut |e| {
            e.walk(&mut |x| {
                if let Expr::Read(a, _) = x {
                    arrays.insert(a.clone());
                }
            })
        });
    }
    let mut sc = Script::new(&arrays);
    sc.declare("N", encode::Sort::Int);
    sc.assert(format!("(>= N {})", encode::int_term(lower)));
    let env = Env::default();
    for f in antecedent {
        let t = encode::formula_term(f, &mut sc, &env, "N");
        sc.assert(t);
    }
    let neg = negated_formula_term(consequent, &mut sc, &env, "N");
    sc.assert(neg);
    VcQuery {
        label: "implication".into(),
        script: sc.lines(),
        polarity: Polarity::ValidityViaNegation,
        witness: None,
    }
}

/// Plain satisfiability of a conjunction of scalar constraints (used by
/// the dependence analysis).
pub fn encode_sat_conjunction(constraints: &[BoolExpr]) -> VcQuery {
    let mut sc = Script::new(&BTreeSet::new());
    let env = Env::default();
    sc.declare("N", encode::Sort::Int);
    sc.assert("(>= N 1)".into());
    for c in constraints {
        let t = encode::bool_term(c, &mut sc, &env, "N", &BTreeMap::new());
        sc.assert(t);
    }
    VcQuery {
        label: "sat".into(),
        script: sc.lines(),
        polarity: Polarity::Satisfiability,
        witness: None,
    }
}

// ---------------------------------------------------------------------
// Counterexample extraction
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub n: i128,
    pub scalars: BTreeMap<Name, i128>,
    pub arrays: BTreeMap<Name, Vec<i128>>,
    pub failing_atom: String,
}

#[derive(Debug, thiserror::Error)]
pub enum WitnessError {
    #[error("witness replay disagrees with the solver model: {0}")]
    ReplayMismatch(String),
    #[error("witness replay failed: {0}")]
    ReplayFailed(String),
}

/// Rebuild the initial state a sat model describes, replay it through
/// the interpreter and confirm the post-condition fails.
pub fn extract_counterexample(
    model: &Model,
    plan: &WitnessPlan,
    pre: &Formula,
    prog: &Stmt,
    post: &Formula,
) -> Result<Witness, WitnessError> {
    let mut st = ProgState::new(plan.n_val);
    for (name, sym) in &plan.scalar_inputs {
        let v = model.values.get(sym).copied().unwrap_or(0);
        st.set_scalar(name.clone(), v);
    }
    for (name, sym) in &plan.array_inputs {
        let mut cells = Vec::new();
        for i in 0..plan.cell_range {
            let t = format!("(select {} {})", sym, encode::int_term(i));
            cells.push(model.values.get(&t).copied().unwrap_or(0));
        }
        st.set_array(name.clone(), cells);
    }
    let inputs = st.clone();
    match interp::eval_formula(pre, &st) {
        Ok(true) => {}
        Ok(false) => {
            return Err(WitnessError::ReplayMismatch(
                "model does not satisfy the pre-condition".into(),
            ))
        }
        Err(e) => return Err(WitnessError::ReplayFailed(e.to_string())),
    }
    interp::interpret(prog, &mut st).map_err(|e| WitnessError::ReplayFailed(e.to_string()))?;
    let failing =
        first_failing_atom(post, &st).map_err(|e| WitnessError::ReplayFailed(e.to_string()))?;
    match failing {
        Some(atom) => Ok(Witness {
            n: plan.n_val,
            scalars: inputs.scalars,
            arrays: inputs
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|c| c.unwrap_or(0)).collect()))
                .collect(),
            failing_atom: atom,
        }),
        None => Err(WitnessError::ReplayMismatch(
            "post-condition holds on replay; the encoding disagrees with the interpreter".into(),
        )),
    }
}

fn first_failing_atom(post: &Formula, st: &ProgState) -> Result<Option<String>, interp::InterpError> {
    match post {
        Formula::And(fs) => {
            for f in fs {
                if let Some(a) = first_failing_atom(f, st)? {
                    return Ok(Some(a));
                }
            }
            Ok(None)
        }
        other => {
            if interp::eval_formula(other, st)? {
                Ok(None)
            } else {
                Ok(Some(other.to_string()))
            }
        }
    }
}
