//! Loop peeling: split off the last `k_L(N) - k_L(N-1)` iterations of
//! every loop so the residual loops iterate exactly as often as their
//! counterparts in `P_{N-1}`. Peeled iterations run straight-line right
//! after the loop, with the counter instantiated concretely.

use crate::ast::*;
use crate::cfg::*;
use crate::sym::{self, expr_to_poly, simplify_expr, Subst};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PeelError {
    #[error("failed to peel non-constant number of iterations of loop over '{counter}': {count}")]
    NonConstantPeelCount { counter: Name, count: String },
    #[error("loop over '{counter}' shrinks with N (peel count {count}); decreasing bounds are unsupported")]
    NegativePeelCount { counter: Name, count: i128 },
}

#[derive(Debug, Clone)]
pub struct Peeled {
    pub prog: NProgram,
    pub peel_nodes: BTreeSet<NodeId>,
    /// Peel count per residual loop head.
    pub peel_counts: BTreeMap<NodeId, i128>,
}

/// Decide a guard's truth for all N >= n_min when every relation in it is
/// linear in N alone.
pub fn decide_bool_for_param_ge(b: &BoolExpr, n_min: i128) -> Option<bool> {
    match b {
        BoolExpr::Rel(op, x, y) => {
            let r = sym::normalize_rel(*op, x, y);
            sym::decide_rel_for_all_param_ge(&r, n_min)
        }
        BoolExpr::And(x, y) => match (decide_bool_for_param_ge(x, n_min), decide_bool_for_param_ge(y, n_min)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        },
        BoolExpr::Or(x, y) => match (decide_bool_for_param_ge(x, n_min), decide_bool_for_param_ge(y, n_min)) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        },
        BoolExpr::Not(x) => decide_bool_for_param_ge(x, n_min).map(|v| !v),
    }
}

/// Normalize read/store indices without reassociating the surrounding
/// arithmetic (keeps peeled statements readable).
fn simplify_indices(e: &Expr) -> Expr {
    match e {
        Expr::Read(a, idx) => Expr::read(a.clone(), simplify_expr(idx)),
        Expr::Bin(op, x, y) => Expr::bin(*op, simplify_indices(x), simplify_indices(y)),
        other => other.clone(),
    }
}

fn simplify_indices_bool(b: &BoolExpr) -> BoolExpr {
    match b {
        BoolExpr::Rel(op, x, y) => BoolExpr::Rel(*op, simplify_indices(x), simplify_indices(y)),
        BoolExpr::And(x, y) => BoolExpr::And(Box::new(simplify_indices_bool(x)), Box::new(simplify_indices_bool(y))),
        BoolExpr::Or(x, y) => BoolExpr::Or(Box::new(simplify_indices_bool(x)), Box::new(simplify_indices_bool(y))),
        BoolExpr::Not(x) => BoolExpr::Not(Box::new(simplify_indices_bool(x))),
    }
}

/// Instantiate one peeled iteration of `body` at counter value `at`,
/// pruning guards decidable for all N >= n_min.
fn instantiate_iteration(body: &[Item], counter: &Name, at: &Expr, n_min: i128) -> Vec<Item> {
    let mut s = Subst::default();
    s.vars.insert(counter.clone(), at.clone());
    let mut out = Vec::new();
    for it in body {
        match it {
            Item::Atom { stmt, .. } => {
                let mut st = stmt.clone();
                if let Some(ix) = &mut st.index {
                    *ix = simplify_expr(&sym::subst_expr(ix, &s));
                }
                st.rhs = simplify_indices(&sym::subst_expr(&st.rhs, &s));
                out.push(Item::Atom { id: 0, origin: Origin::Peel, stmt: st });
            }
            Item::If { cond, then_items, else_items, .. } => {
                let c = simplify_indices_bool(&sym::subst_bool(cond, &s));
                match decide_bool_for_param_ge(&c, n_min) {
                    Some(true) => out.extend(instantiate_iteration(then_items, counter, at, n_min)),
                    Some(false) => out.extend(instantiate_iteration(else_items, counter, at, n_min)),
                    None => out.push(Item::If {
                        id: 0,
                        cond: c,
                        then_items: instantiate_iteration(then_items, counter, at, n_min),
                        else_items: instantiate_iteration(else_items, counter, at, n_min),
                    }),
                }
            }
            Item::Loop(_) => unreachable!("loop bodies are loop-free"),
        }
    }
    out
}

fn peel_items(items: &[Item], n_min: i128, out: &mut Vec<Item>, errs: &mut Vec<PeelError>) {
    for it in items {
        match it {
            Item::Atom { .. } => out.push(it.clone()),
            Item::If { id, cond, then_items, else_items } => {
                let mut t = Vec::new();
                let mut e = Vec::new();
                peel_items(then_items, n_min, &mut t, errs);
                peel_items(else_items, n_min, &mut e, errs);
                out.push(Item::If { id: *id, cond: cond.clone(), then_items: t, else_items: e });
            }
            Item::Loop(l) => {
                let k_n = simplify_expr(&l.bound);
                let k_nm1 = simplify_expr(&sym::subst_expr(&l.bound, &Subst::param_to(Expr::param_minus(1))));
                let count_expr = simplify_expr(&Expr::sub(k_n.clone(), k_nm1.clone()));
                let count = match expr_to_poly(&count_expr).as_const() {
                    Some(c) => c,
                    None => {
                        errs.push(PeelError::NonConstantPeelCount {
                            counter: l.counter.clone(),
                            count: count_expr.to_string(),
                        });
                        out.push(it.clone());
                        continue;
                    }
                };
                if count < 0 {
                    errs.push(PeelError::NegativePeelCount { counter: l.counter.clone(), count });
                    out.push(it.clone());
                    continue;
                }
                let mut residual = l.clone();
                residual.bound = k_nm1.clone();
                out.push(Item::Loop(residual));
                for j in 0..count {
                    let at = simplify_expr(&Expr::add(k_nm1.clone(), Expr::Const(j)));
                    out.extend(instantiate_iteration(&l.body, &l.counter, &at, n_min));
                }
            }
        }
    }
}

/// Peel every loop. `lower` is the smallest parameter value the peeled
/// program is used for minus one: peels exist only in runs with
/// N >= lower + 1, so guards are pruned under that assumption.
pub fn peel_all_loops(prog: &NProgram, lower: i128) -> Result<Peeled, PeelError> {
    let mut items = Vec::new();
    let mut errs = Vec::new();
    peel_items(&prog.items, lower + 1, &mut items, &mut errs);
    if let Some(e) = errs.into_iter().next() {
        return Err(e);
    }
    let mut np = NProgram { items, next_id: 0 };
    np.renumber();
    let mut peel_nodes = BTreeSet::new();
    let mut peel_counts = BTreeMap::new();
    fn collect(items: &[Item], peel_nodes: &mut BTreeSet<NodeId>) {
        for it in items {
            match it {
                Item::Atom { id, origin, .. } => {
                    if *origin == Origin::Peel {
                        peel_nodes.insert(*id);
                    }
                }
                Item::If { id, then_items, else_items, .. } => {
                    // a branch whose every atom is peeled is itself a peel node
                    let mut all = true;
                    let mut any = false;
                    for sub in then_items.iter().chain(else_items) {
                        sub.walk_atoms(&mut |_, o, _| {
                            any = true;
                            if o != Origin::Peel {
                                all = false;
                            }
                        });
                    }
                    if any && all {
                        peel_nodes.insert(*id);
                    }
                    collect(then_items, peel_nodes);
                    collect(else_items, peel_nodes);
                }
                Item::Loop(l) => collect(&l.body, peel_nodes),
            }
        }
    }
    collect(&np.items, &mut peel_nodes);
    // recompute per-loop counts against the peeled structure
    for l in np.loops() {
        let k_n = simplify_expr(&sym::subst_expr(&l.bound, &Subst::param_to(Expr::add(Expr::Param, Expr::Const(1)))));
        let count = expr_to_poly(&simplify_expr(&Expr::sub(k_n, l.bound.clone()))).as_const().unwrap_or(0);
        peel_counts.insert(l.head, count);
    }
    Ok(Peeled { prog: np, peel_nodes, peel_counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{interpret, ProgState};
    use crate::parser::parse_program;
    use crate::rename::rename;

    const SS: &str = r#"
assume(forall i in [0, N) :: A[i] == 1);
S = 0;
for (i = 0; i < N; i = i + 1) { S = S + A[i]; }
for (i = 0; i < N; i = i + 1) { A[i] = A[i] + S; }
for (i = 0; i < N; i = i + 1) { S = S + A[i]; }
assert(S == N * (N + 2));
"#;

    fn renamed_ss() -> (crate::rename::Renamed, HoareTriple) {
        let t = parse_program(SS).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        (rename(&np, &t.pre, &t.post), t)
    }

    #[test]
    fn peels_one_iteration_per_loop() {
        let (r, _) = renamed_ss();
        let p = peel_all_loops(&r.prog, 1).unwrap();
        let text = p.prog.to_stmt().to_string();
        assert!(text.contains("i < N - 1"), "{}", text);
        assert!(text.contains("S = S + A[N - 1];"), "{}", text);
        assert!(text.contains("A1[N - 1] = A[N - 1] + S;"), "{}", text);
        assert!(text.contains("S1 = S1 + A1[N - 1];"), "{}", text);
        // one peel node per loop, single-atom bodies
        assert_eq!(p.peel_nodes.len(), 3);
        assert!(p.peel_counts.values().all(|c| *c == 1));
    }

    #[test]
    fn constant_bound_loops_are_untouched() {
        let src = "assume(true); for (i = 0; i < 5; i = i + 1) { A[i] = 0; } assert(true);";
        let t = parse_program(src).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let p = peel_all_loops(&np, 1).unwrap();
        assert!(p.peel_nodes.is_empty());
        assert_eq!(p.prog.loops().len(), 1);
        assert_eq!(p.prog.loops()[0].bound, Expr::Const(5));
    }

    #[test]
    fn quadratic_bound_fails() {
        let src = "assume(true); for (i = 0; i < N * N; i = i + 1) { A[i] = 0; } assert(true);";
        let t = parse_program(src).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        match peel_all_loops(&np, 1) {
            Err(PeelError::NonConstantPeelCount { count, .. }) => {
                assert_eq!(count, "2 * N - 1");
            }
            other => panic!("expected NonConstantPeelCount, got {:?}", other.map(|p| p.prog.to_stmt().to_string())),
        }
    }

    #[test]
    fn peel_preserves_semantics() {
        let (r, _) = renamed_ss();
        let p = peel_all_loops(&r.prog, 1).unwrap();
        let counters = r.prog.counter_names();
        for n in 2..=6i128 {
            let mut st0 = ProgState::new(n);
            st0.set_array("A", vec![1; n as usize]);
            let mut a = st0.clone();
            interpret(&r.prog.to_stmt(), &mut a).unwrap();
            let mut b = st0.clone();
            interpret(&p.prog.to_stmt(), &mut b).unwrap();
            a.scalars.retain(|k, _| !counters.contains(k));
            b.scalars.retain(|k, _| !counters.contains(k));
            assert_eq!(a.scalars, b.scalars, "N={}", n);
            assert_eq!(a.arrays, b.arrays, "N={}", n);
        }
    }

    #[test]
    fn peel_count_accounting() {
        let (r, _) = renamed_ss();
        let p = peel_all_loops(&r.prog, 1).unwrap();
        // |peel atoms| = sum over loops of count * body atom count
        let mut atoms = 0;
        for it in &p.prog.items {
            it.walk_atoms(&mut |_, o, _| {
                if o == Origin::Peel {
                    atoms += 1;
                }
            });
        }
        assert_eq!(atoms, 3);
    }

    #[test]
    fn guarded_bodies_keep_residual_guards_and_prune_peels() {
        let src = r#"
assume(true);
for (t1 = 0; t1 < N; t1 = t1 + 1) {
  if (t1 == 0) { A[t1] = 6; } else { A[t1] = A[t1 - 1] + 6; }
}
assert(true);
"#;
        let t = parse_program(src).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let p = peel_all_loops(&np, 1).unwrap();
        let text = p.prog.to_stmt().to_string();
        // peel at t1 = N-1 resolves the guard (N-1 == 0 is false for N >= 2)
        assert!(text.contains("A[N - 1] = A[N - 2] + 6;"), "{}", text);
        assert!(!text.contains("if (N - 1 == 0)"), "{}", text);
    }
}
