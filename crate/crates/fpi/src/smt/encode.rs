//! Encoding of programs and assertion formulas into SMT-LIB v2 scripts.
//!
//! Two encoders share the machinery here: the bounded one instantiates N
//! to a literal and unrolls every loop, while the inductive one keeps N
//! symbolic and requires the program to be loop-free up to summarizable
//! loops (single parallel store per iteration, as produced by renaming
//! glue and rectification).

use crate::ast::*;
use crate::cfg::*;
use crate::interp;
use crate::sym;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("iteration count of loop over '{0}' is not concrete at N={1}")]
    UnrollBoundUndefined(Name, i128),
    #[error("difference program still contains a loop over '{0}' that cannot be summarized")]
    ResidualLoop(Name),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Array,
}

fn sort_str(s: Sort) -> &'static str {
    match s {
        Sort::Int => "Int",
        Sort::Array => "(Array Int Int)",
    }
}

const RESERVED: &[&str] = &[
    "select", "store", "and", "or", "not", "true", "false", "div", "mod", "abs", "ite", "let",
    "forall", "exists", "as", "assert",
];

fn smt_sym(name: &str) -> String {
    let clean = name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '!');
    if clean && !RESERVED.contains(&name) {
        name.to_string()
    } else {
        format!("|{}|", name)
    }
}

pub fn int_term(c: i128) -> String {
    if c < 0 {
        format!("(- {})", -c)
    } else {
        c.to_string()
    }
}

/// Symbolic state: name -> current term. Reading an unknown name lazily
/// declares an input symbol.
#[derive(Debug, Clone, Default)]
pub struct Env {
    map: BTreeMap<Name, String>,
}

impl Env {
    pub fn bind(&mut self, name: &str, term: String) {
        self.map.insert(name.to_string(), term);
    }

    pub fn get(&self, name: &str) -> Option<&String> {
        self.map.get(name)
    }
}

/// Shared encoding context: declarations, assertions and fresh-name
/// allocation for one query script.
#[derive(Debug, Default)]
pub struct Script {
    pub decls: BTreeMap<String, Sort>,
    pub asserts: Vec<String>,
    fresh: u32,
    /// Input symbols that were declared lazily (name -> symbol).
    pub scalar_inputs: BTreeMap<Name, String>,
    pub array_inputs: BTreeMap<Name, String>,
    arrays: BTreeSet<Name>,
}

impl Script {
    pub fn new(arrays: &BTreeSet<Name>) -> Script {
        Script { arrays: arrays.clone(), ..Default::default() }
    }

    pub fn declare(&mut self, symbol: &str, sort: Sort) {
        self.decls.entry(symbol.to_string()).or_insert(sort);
    }

    pub fn fresh_sym(&mut self, base: &str, sort: Sort) -> String {
        self.fresh += 1;
        let s = format!("{}!{}", base, self.fresh);
        self.declare(&s, sort);
        s
    }

    pub fn assert(&mut self, term: String) {
        self.asserts.push(term);
    }

    fn is_array(&self, name: &str) -> bool {
        self.arrays.contains(name)
    }

    /// Input symbol for a name read before any write.
    fn input_symbol(&mut self, name: &str) -> String {
        let s = smt_sym(name);
        let sort = if self.is_array(name) { Sort::Array } else { Sort::Int };
        self.declare(&s, sort);
        match sort {
            Sort::Int => {
                self.scalar_inputs.entry(name.to_string()).or_insert_with(|| s.clone());
            }
            Sort::Array => {
                self.array_inputs.entry(name.to_string()).or_insert_with(|| s.clone());
            }
        }
        s
    }

    pub fn lookup(&mut self, env: &Env, name: &str) -> String {
        if let Some(t) = env.get(name) {
            return t.clone();
        }
        self.input_symbol(name)
    }

    /// Render the complete script (declarations, then assertions).
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (sym, sort) in &self.decls {
            out.push(format!("(declare-const {} {})", sym, sort_str(*sort)));
        }
        for a in &self.asserts {
            out.push(format!("(assert {})", a));
        }
        out
    }
}

/// Term for an expression. `n_term` is the rendering of the parameter;
/// `bound` maps quantified/loop variables to their terms.
pub fn expr_term(
    e: &Expr,
    sc: &mut Script,
    env: &Env,
    n_term: &str,
    bound: &BTreeMap<Name, String>,
) -> String {
    match e {
        Expr::Const(c) => int_term(*c),
        Expr::Param => n_term.to_string(),
        Expr::Var(v) => {
            if let Some(t) = bound.get(v) {
                t.clone()
            } else {
                sc.lookup(env, v)
            }
        }
        Expr::Read(a, idx) => {
            let arr = sc.lookup(env, a);
            let i = expr_term(idx, sc, env, n_term, bound);
            format!("(select {} {})", arr, i)
        }
        Expr::Bin(op, x, y) => {
            let a = expr_term(x, sc, env, n_term, bound);
            let b = expr_term(y, sc, env, n_term, bound);
            let o = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "div",
            };
            format!("({} {} {})", o, a, b)
        }
    }
}

pub fn bool_term(
    b: &BoolExpr,
    sc: &mut Script,
    env: &Env,
    n_term: &str,
    bound: &BTreeMap<Name, String>,
) -> String {
    match b {
        BoolExpr::Rel(op, x, y) => {
            let a = expr_term(x, sc, env, n_term, bound);
            let bb = expr_term(y, sc, env, n_term, bound);
            let o = match op {
                RelOp::Eq => "=",
                RelOp::Lt => "<",
                RelOp::Le => "<=",
                RelOp::Gt => ">",
                RelOp::Ge => ">=",
            };
            format!("({} {} {})", o, a, bb)
        }
        BoolExpr::And(x, y) => format!(
            "(and {} {})",
            bool_term(x, sc, env, n_term, bound),
            bool_term(y, sc, env, n_term, bound)
        ),
        BoolExpr::Or(x, y) => format!(
            "(or {} {})",
            bool_term(x, sc, env, n_term, bound),
            bool_term(y, sc, env, n_term, bound)
        ),
        BoolExpr::Not(x) => format!("(not {})", bool_term(x, sc, env, n_term, bound)),
    }
}

/// Symbolic formula term (quantifiers kept as-is).
pub fn formula_term(f: &Formula, sc: &mut Script, env: &Env, n_term: &str) -> String {
    fn go(
        f: &Formula,
        sc: &mut Script,
        env: &Env,
        n_term: &str,
        bound: &BTreeMap<Name, String>,
    ) -> String {
        match f {
            Formula::True => "true".into(),
            Formula::False => "false".into(),
            Formula::Qf(b) => bool_term(b, sc, env, n_term, bound),
            Formula::Forall(q) => {
                let mut b2 = bound.clone();
                let qv = format!("qi!{}", bound.len());
                b2.insert(q.idx.clone(), qv.clone());
                let lo = expr_term(&q.lo, sc, env, n_term, bound);
                let hi = expr_term(&q.hi, sc, env, n_term, bound);
                let body = bool_term(&q.body, sc, env, n_term, &b2);
                format!(
                    "(forall (({} Int)) (=> (and (<= {} {}) (< {} {})) {}))",
                    qv, lo, qv, qv, hi, body
                )
            }
            Formula::Exists(q) => {
                let mut b2 = bound.clone();
                let qv = format!("qi!{}", bound.len());
                b2.insert(q.idx.clone(), qv.clone());
                let lo = expr_term(&q.lo, sc, env, n_term, bound);
                let hi = expr_term(&q.hi, sc, env, n_term, bound);
                let body = bool_term(&q.body, sc, env, n_term, &b2);
                format!(
                    "(exists (({} Int)) (and (<= {} {}) (< {} {}) {}))",
                    qv, lo, qv, qv, hi, body
                )
            }
            Formula::And(fs) => {
                if fs.is_empty() {
                    return "true".into();
                }
                let parts: Vec<String> = fs.iter().map(|x| go(x, sc, env, n_term, bound)).collect();
                format!("(and {})", parts.join(" "))
            }
            Formula::Or(fs) => {
                if fs.is_empty() {
                    return "false".into();
                }
                let parts: Vec<String> = fs.iter().map(|x| go(x, sc, env, n_term, bound)).collect();
                format!("(or {})", parts.join(" "))
            }
        }
    }
    go(f, sc, env, n_term, &BTreeMap::new())
}

/// Bounded formula term: quantifiers expand to finite conjunctions or
/// disjunctions over their concrete range.
pub fn formula_term_bounded(
    f: &Formula,
    sc: &mut Script,
    env: &Env,
    n_val: i128,
) -> Result<String, EncodeError> {
    let n_term = int_term(n_val);
    match f {
        Formula::True => Ok("true".into()),
        Formula::False => Ok("false".into()),
        Formula::Qf(b) => Ok(bool_term(b, sc, env, &n_term, &BTreeMap::new())),
        Formula::Forall(q) | Formula::Exists(q) => {
            let lo = concrete(&q.lo, n_val)
                .ok_or_else(|| EncodeError::UnrollBoundUndefined(q.idx.clone(), n_val))?;
            let hi = concrete(&q.hi, n_val)
                .ok_or_else(|| EncodeError::UnrollBoundUndefined(q.idx.clone(), n_val))?;
            let mut parts = Vec::new();
            for i in lo..hi {
                let mut bound = BTreeMap::new();
                bound.insert(q.idx.clone(), int_term(i));
                parts.push(bool_term(&q.body, sc, env, &n_term, &bound));
            }
            Ok(match f {
                Formula::Forall(_) => {
                    if parts.is_empty() {
                        "true".into()
                    } else {
                        format!("(and {})", parts.join(" "))
                    }
                }
                _ => {
                    if parts.is_empty() {
                        "false".into()
                    } else {
                        format!("(or {})", parts.join(" "))
                    }
                }
            })
        }
        Formula::And(fs) => {
            let mut parts = Vec::new();
            for sub in fs {
                parts.push(formula_term_bounded(sub, sc, env, n_val)?);
            }
            Ok(if parts.is_empty() { "true".into() } else { format!("(and {})", parts.join(" ")) })
        }
        Formula::Or(fs) => {
            let mut parts = Vec::new();
            for sub in fs {
                parts.push(formula_term_bounded(sub, sc, env, n_val)?);
            }
            Ok(if parts.is_empty() { "false".into() } else { format!("(or {})", parts.join(" ")) })
        }
    }
}

fn concrete(e: &Expr, n_val: i128) -> Option<i128> {
    let mut st = interp::ProgState::new(n_val);
    st.n = n_val;
    interp::eval_expr(e, &st).ok()
}

// ---------------------------------------------------------------------
// Program encoding
// ---------------------------------------------------------------------

/// Encode items with N instantiated to a literal; every loop unrolls.
pub fn encode_items_bounded(
    items: &[Item],
    sc: &mut Script,
    env: &mut Env,
    n_val: i128,
) -> Result<(), EncodeError> {
    let n_term = int_term(n_val);
    for it in items {
        match it {
            Item::Atom { stmt, .. } => encode_atom(stmt, sc, env, &n_term, &BTreeMap::new()),
            Item::If { cond, then_items, else_items, .. } => {
                let c = bool_term(cond, sc, env, &n_term, &BTreeMap::new());
                let mut env_t = env.clone();
                let mut env_e = env.clone();
                encode_items_bounded(then_items, sc, &mut env_t, n_val)?;
                encode_items_bounded(else_items, sc, &mut env_e, n_val)?;
                merge_envs(sc, &c, env, env_t, env_e, items_written(then_items, else_items));
            }
            Item::Loop(l) => {
                // evaluate the bound in a state that only knows N
                let bound = concrete(&l.bound, n_val)
                    .ok_or_else(|| EncodeError::UnrollBoundUndefined(l.counter.clone(), n_val))?;
                for i in 0..bound.max(0) {
                    env.bind(&l.counter, int_term(i));
                    encode_items_bounded(&l.body, sc, env, n_val)?;
                }
                env.bind(&l.counter, int_term(bound.max(0)));
            }
        }
    }
    Ok(())
}

fn items_written(then_items: &[Item], else_items: &[Item]) -> BTreeSet<Name> {
    let mut names = BTreeSet::new();
    for it in then_items.iter().chain(else_items) {
        it.walk_atoms(&mut |_, _, st| {
            names.insert(st.target.clone());
        });
    }
    names
}

fn merge_envs(sc: &mut Script, cond: &str, env: &mut Env, env_t: Env, env_e: Env, written: BTreeSet<Name>) {
    for name in written {
        let t = env_t.get(&name).cloned();
        let e = env_e.get(&name).cloned();
        match (t, e) {
            (Some(a), Some(b)) if a == b => env.bind(&name, a),
            (a, b) => {
                // where one side did not write, its value is the
                // pre-branch one (an input symbol if never written)
                let pre = env.get(&name).cloned().unwrap_or_else(|| sc.lookup(&Env::default(), &name));
                let av = a.unwrap_or_else(|| pre.clone());
                let bv = b.unwrap_or_else(|| pre.clone());
                env.bind(&name, format!("(ite {} {} {})", cond, av, bv));
            }
        }
    }
}

fn encode_atom(
    stmt: &AtomStmt,
    sc: &mut Script,
    env: &mut Env,
    n_term: &str,
    bound: &BTreeMap<Name, String>,
) {
    match &stmt.index {
        None => {
            let t = expr_term(&stmt.rhs, sc, env, n_term, bound);
            env.bind(&stmt.target, t);
        }
        Some(ix) => {
            let arr = sc.lookup(env, &stmt.target);
            let i = expr_term(ix, sc, env, n_term, bound);
            let v = expr_term(&stmt.rhs, sc, env, n_term, bound);
            env.bind(&stmt.target, format!("(store {} {} {})", arr, i, v));
        }
    }
}

/// The pre-branch read problem for merges: names first read inside a
/// branch and merged need their input symbol; `lookup` handles this
/// since unwritten names resolve to input symbols in both branches.
///
/// Encode items with symbolic N. Loops must be summarizable: a single
/// unconditional store at the counter whose right-hand side reads the
/// target array only at the counter itself.
pub fn encode_items_symbolic(
    items: &[Item],
    sc: &mut Script,
    env: &mut Env,
    n_term: &str,
) -> Result<(), EncodeError> {
    for it in items {
        match it {
            Item::Atom { stmt, .. } => encode_atom(stmt, sc, env, n_term, &BTreeMap::new()),
            Item::If { cond, then_items, else_items, .. } => {
                let c = bool_term(cond, sc, env, n_term, &BTreeMap::new());
                let mut env_t = env.clone();
                let mut env_e = env.clone();
                encode_items_symbolic(then_items, sc, &mut env_t, n_term)?;
                encode_items_symbolic(else_items, sc, &mut env_e, n_term)?;
                merge_envs(sc, &c, env, env_t, env_e, items_written(then_items, else_items));
            }
            Item::Loop(l) => {
                summarize_loop(l, sc, env, n_term)?;
            }
        }
    }
    Ok(())
}

/// Whether a loop can be encoded with a quantified per-cell summary.
pub fn summarizable(l: &LoopItem) -> bool {
    if l.body.len() != 1 {
        return false;
    }
    match &l.body[0] {
        Item::Atom { stmt, .. } => {
            let at_counter = matches!(&stmt.index, Some(Expr::Var(v)) if *v == l.counter);
            if !at_counter {
                return false;
            }
            // reads of the target array only at the counter itself
            let mut ok = true;
            stmt.rhs.walk(&mut |e| {
                if let Expr::Read(a, ix) = e {
                    if *a == stmt.target && **ix != Expr::Var(l.counter.clone()) {
                        ok = false;
                    }
                }
            });
            ok
        }
        _ => false,
    }
}

fn summarize_loop(
    l: &LoopItem,
    sc: &mut Script,
    env: &mut Env,
    n_term: &str,
) -> Result<(), EncodeError> {
    if !summarizable(l) {
        return Err(EncodeError::ResidualLoop(l.counter.clone()));
    }
    let (target, rhs) = match &l.body[0] {
        Item::Atom { stmt, .. } => (stmt.target.clone(), stmt.rhs.clone()),
        _ => unreachable!(),
    };
    let pre = sc.lookup(env, &target);
    let out = sc.fresh_sym(&smt_sym(&target).replace('|', ""), Sort::Array);
    let bound_term = expr_term(&l.bound, sc, env, n_term, &BTreeMap::new());
    let qv = "li!0".to_string();
    let mut bound_map = BTreeMap::new();
    bound_map.insert(l.counter.clone(), qv.clone());
    // cells inside the range take the body value (reads of the target
    // resolve to the pre-loop array: each cell is read before written)
    let mut env_in = env.clone();
    env_in.bind(&target, pre.clone());
    let body_val = expr_term(&rhs, sc, &env_in, n_term, &bound_map);
    sc.assert(format!(
        "(forall (({} Int)) (=> (and (<= 0 {}) (< {} {})) (= (select {} {}) {})))",
        qv, qv, qv, bound_term, out, qv, body_val
    ));
    sc.assert(format!(
        "(forall (({} Int)) (=> (not (and (<= 0 {}) (< {} {}))) (= (select {} {}) (select {} {}))))",
        qv, qv, qv, bound_term, out, qv, pre, qv
    ));
    env.bind(&target, out);
    env.bind(&l.counter, bound_term);
    Ok(())
}

/// Relational encoding of a program whose entry state is abstract: the
/// final value of every written name is asserted equal to the name's own
/// symbol, while entry values get fresh `!pre` symbols. Used to expose
/// the loop-free tail structure of `P_{N-1}` to inductive checks.
pub fn encode_program_as_relations(
    items: &[Item],
    sc: &mut Script,
    n_term: &str,
    arrays: &BTreeSet<Name>,
) -> Result<(), EncodeError> {
    let mut written = BTreeSet::new();
    for it in items {
        it.walk_atoms(&mut |_, _, st| {
            written.insert(st.target.clone());
        });
    }
    let mut env = Env::default();
    for w in &written {
        let sort = if arrays.contains(w) { Sort::Array } else { Sort::Int };
        let pre = format!("{}!pre", smt_sym(w).replace('|', ""));
        sc.declare(&pre, sort);
        env.bind(w, pre);
    }
    encode_items_symbolic(items, sc, &mut env, n_term)?;
    for w in &written {
        let sym = smt_sym(w);
        let sort = if arrays.contains(w) { Sort::Array } else { Sort::Int };
        sc.declare(&sym, sort);
        let final_term = env.get(w).cloned().unwrap();
        sc.assert(format!("(= {} {})", sym, final_term));
    }
    Ok(())
}

/// Longest encodable suffix of a program (straight-line atoms, branches
/// without loops, summarizable loops).
pub fn encodable_suffix(items: &[Item]) -> &[Item] {
    let mut start = items.len();
    for (i, it) in items.iter().enumerate().rev() {
        let ok = match it {
            Item::Atom { .. } => true,
            Item::If { .. } => !it.contains_loop(),
            Item::Loop(l) => summarizable(l),
        };
        if ok {
            start = i;
        } else {
            break;
        }
    }
    &items[start..]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn bounded_encoding_unrolls() {
        let t = parse_program(
            "assume(true); S = 0; for (i = 0; i < N; i = i + 1) { S = S + A[i]; } assert(S >= 0);",
        )
        .unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let mut sc = Script::new(&np.array_names());
        let mut env = Env::default();
        encode_items_bounded(&np.items, &mut sc, &mut env, 2).unwrap();
        let s_final = env.get("S").unwrap();
        assert_eq!(s_final, "(+ (+ 0 (select A 0)) (select A 1))");
        assert!(sc.array_inputs.contains_key("A"));
    }

    #[test]
    fn symbolic_summary_for_parallel_loop() {
        let t = parse_program(
            "assume(true); for (i = 0; i < N - 1; i = i + 1) { B[i] = B[i] + 1; } assert(true);",
        )
        .unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let mut sc = Script::new(&np.array_names());
        let mut env = Env::default();
        encode_items_symbolic(&np.items, &mut sc, &mut env, "N").unwrap();
        assert!(env.get("B").unwrap().starts_with("B!"));
        assert_eq!(sc.asserts.len(), 2);
        assert!(sc.asserts[0].contains("(select B!1 li!0)"));
    }

    #[test]
    fn loop_carried_bodies_are_residual() {
        let t = parse_program(
            "assume(true); for (i = 0; i < N; i = i + 1) { B[i] = B[i - 1] + 1; } assert(true);",
        )
        .unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let mut sc = Script::new(&np.array_names());
        let mut env = Env::default();
        match encode_items_symbolic(&np.items, &mut sc, &mut env, "N") {
            Err(EncodeError::ResidualLoop(c)) => assert_eq!(c, "i"),
            other => panic!("{:?}", other),
        }
    }
}
