//! Versioning pass: every top-level unit (statement, branch or loop)
//! updates its own copy of each scalar/array, so that when `P_{N-1}`
//! terminates the value each unit produced is still addressable. Copy
//! statements (glue) bridge versions where a unit builds on the previous
//! value. The post-condition is rewritten to the final versions.

use crate::ast::*;
use crate::cfg::*;
use crate::sym::{fresh_name, Subst};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct Renamed {
    pub prog: NProgram,
    pub pre: Formula,
    pub post: Formula,
    pub glue_nodes: BTreeSet<NodeId>,
    /// Final version carrying each original name's value at exit.
    pub final_version: BTreeMap<Name, Name>,
}

#[derive(Default)]
struct UnitInfo {
    writes: BTreeSet<Name>,
    reads: BTreeSet<Name>,
    /// For plain loops: (counter, all reads of `name` use index == counter
    /// and all writes of `name` use index == counter).
    same_slot_ok: BTreeMap<Name, bool>,
    is_plain_loop: Option<(Name, Expr)>,
    /// Arrays fully covered by this unit: unconditional write at the
    /// counter over [0, bound) with bound == N.
    covers_fully: BTreeSet<Name>,
}

fn scan_expr_reads(e: &Expr, counters: &BTreeSet<Name>, out: &mut BTreeSet<Name>) {
    e.walk(&mut |x| match x {
        Expr::Var(v) => {
            if !counters.contains(v) {
                out.insert(v.clone());
            }
        }
        Expr::Read(a, _) => {
            out.insert(a.clone());
        }
        _ => {}
    });
}

fn unit_info(item: &Item, counters: &BTreeSet<Name>) -> UnitInfo {
    let mut info = UnitInfo::default();
    item.walk_atoms(&mut |_, _, st| {
        info.writes.insert(st.target.clone());
        if let Some(ix) = &st.index {
            scan_expr_reads(ix, counters, &mut info.reads);
        }
        scan_expr_reads(&st.rhs, counters, &mut info.reads);
    });
    fn scan_conds(items: &[Item], counters: &BTreeSet<Name>, out: &mut BTreeSet<Name>) {
        for it in items {
            match it {
                Item::If { cond, then_items, else_items, .. } => {
                    cond.walk_exprs(&mut |e| scan_expr_reads(e, counters, out));
                    scan_conds(then_items, counters, out);
                    scan_conds(else_items, counters, out);
                }
                Item::Loop(l) => scan_conds(&l.body, counters, out),
                Item::Atom { .. } => {}
            }
        }
    }
    scan_conds(std::slice::from_ref(item), counters, &mut info.reads);

    if let Item::Loop(l) = item {
        info.is_plain_loop = Some((l.counter.clone(), l.bound.clone()));
        for name in info.writes.clone() {
            let mut ok = true;
            let counter = Expr::var(l.counter.clone());
            item.walk_atoms(&mut |_, _, st| {
                if st.target == name {
                    match &st.index {
                        Some(ix) if *ix == counter => {}
                        Some(_) => ok = false,
                        None => ok = false, // scalar self-accumulation is not same-slot
                    }
                }
                let mut check_reads = |e: &Expr| {
                    e.walk(&mut |x| {
                        if let Expr::Read(a, idx) = x {
                            if *a == name && **idx != counter {
                                ok = false;
                            }
                        }
                    });
                };
                check_reads(&st.rhs);
                if let Some(ix) = &st.index {
                    check_reads(ix);
                }
            });
            // scalar reads of `name` disqualify same-slot treatment
            item.walk_atoms(&mut |_, _, st| {
                let mut scal = false;
                st.rhs.walk(&mut |x| {
                    if matches!(x, Expr::Var(v) if *v == name) {
                        scal = true;
                    }
                });
                if scal {
                    ok = false;
                }
            });
            info.same_slot_ok.insert(name.clone(), ok);
        }
        // full coverage: single unconditional store at the counter, bound N
        for name in info.writes.clone() {
            let mut unconditional = true;
            let mut store_at_counter = true;
            fn scan(items: &[Item], name: &Name, under_if: bool, unc: &mut bool, at_counter: &mut bool, counter: &Name) {
                for it in items {
                    match it {
                        Item::Atom { stmt, .. } if stmt.target == *name => {
                            if under_if {
                                *unc = false;
                            }
                            match &stmt.index {
                                Some(Expr::Var(v)) if v == counter => {}
                                _ => *at_counter = false,
                            }
                        }
                        Item::Atom { .. } => {}
                        Item::If { then_items, else_items, .. } => {
                            scan(then_items, name, true, unc, at_counter, counter);
                            scan(else_items, name, true, unc, at_counter, counter);
                        }
                        Item::Loop(_) => {}
                    }
                }
            }
            scan(&l.body, &name, false, &mut unconditional, &mut store_at_counter, &l.counter);
            if unconditional && store_at_counter && l.bound == Expr::Param {
                info.covers_fully.insert(name.clone());
            }
        }
    }
    info
}

/// Rewrite reads/writes of `base` inside an item subtree.
fn rewrite_unit(item: &mut Item, base: &Name, write_as: &Name, read_as: &Name) {
    fn rw_expr(e: &Expr, base: &Name, read_as: &Name) -> Expr {
        match e {
            Expr::Var(v) if v == base => Expr::Var(read_as.clone()),
            Expr::Read(a, idx) if a == base => Expr::read(read_as.clone(), rw_expr(idx, base, read_as)),
            Expr::Read(a, idx) => Expr::read(a.clone(), rw_expr(idx, base, read_as)),
            Expr::Bin(op, x, y) => Expr::bin(*op, rw_expr(x, base, read_as), rw_expr(y, base, read_as)),
            other => other.clone(),
        }
    }
    fn rw_bool(b: &BoolExpr, base: &Name, read_as: &Name) -> BoolExpr {
        match b {
            BoolExpr::Rel(op, x, y) => BoolExpr::Rel(*op, rw_expr(x, base, read_as), rw_expr(y, base, read_as)),
            BoolExpr::And(x, y) => BoolExpr::And(Box::new(rw_bool(x, base, read_as)), Box::new(rw_bool(y, base, read_as))),
            BoolExpr::Or(x, y) => BoolExpr::Or(Box::new(rw_bool(x, base, read_as)), Box::new(rw_bool(y, base, read_as))),
            BoolExpr::Not(x) => BoolExpr::Not(Box::new(rw_bool(x, base, read_as))),
        }
    }
    fn go(item: &mut Item, base: &Name, write_as: &Name, read_as: &Name) {
        match item {
            Item::Atom { stmt, .. } => {
                if let Some(ix) = &mut stmt.index {
                    *ix = rw_expr(ix, base, read_as);
                }
                stmt.rhs = rw_expr(&stmt.rhs, base, read_as);
                if stmt.target == *base {
                    stmt.target = write_as.clone();
                }
            }
            Item::If { cond, then_items, else_items, .. } => {
                *cond = rw_bool(cond, base, read_as);
                for it in then_items.iter_mut().chain(else_items.iter_mut()) {
                    go(it, base, write_as, read_as);
                }
            }
            Item::Loop(l) => {
                for it in l.body.iter_mut() {
                    go(it, base, write_as, read_as);
                }
            }
        }
    }
    go(item, base, write_as, read_as);
}

/// Rename a program (with its pre/post) so that each unit owns the
/// versions it writes.
pub fn rename(prog: &NProgram, pre: &Formula, post: &Formula) -> Renamed {
    let counters = prog.counter_names();
    let pre_names = pre.names();
    let mut taken: BTreeSet<Name> = prog.all_names();
    taken.extend(pre_names.iter().cloned());
    taken.extend(post.names());

    let infos: Vec<UnitInfo> = prog.items.iter().map(|it| unit_info(it, &counters)).collect();

    // current version of each base name; absent = pristine input
    let mut current: BTreeMap<Name, Name> = BTreeMap::new();
    // index of the unit that produced the current version
    let mut version_writer: BTreeMap<Name, usize> = BTreeMap::new();
    // suffix counters per base name
    let mut suffix: BTreeMap<Name, u32> = BTreeMap::new();
    let arrays = prog.array_names();

    let mut out_items: Vec<Item> = Vec::new();
    let mut glue_markers: Vec<usize> = Vec::new(); // indices into out_items

    for (ui, item) in prog.items.iter().enumerate() {
        let info = &infos[ui];
        let mut new_item = item.clone();
        // first rewrite all reads of names with existing versions
        for (base, ver) in current.clone() {
            if info.reads.contains(&base) && !info.writes.contains(&base) {
                rewrite_unit(&mut new_item, &base, &ver, &ver);
            }
        }
        for base in info.writes.clone() {
            let cur = current.get(&base).cloned();
            let pristine = cur.is_none();
            let cur_name = cur.clone().unwrap_or_else(|| base.clone());

            // does anyone still need what `cur_name` currently holds?
            let live = infos.iter().enumerate().any(|(uj, inf)| {
                uj != ui
                    && inf.reads.contains(&base)
                    && if pristine {
                        // the pristine input value is consumed only by
                        // units running before the first write
                        uj < ui
                    } else {
                        // an intermediate version stays live if read
                        // between its writer and this overwrite
                        let w = version_writer.get(&base).copied().unwrap_or(0);
                        uj > w && uj < ui
                    }
            });
            let protected_input = pristine && (pre_names.contains(&base) || live);
            let live_intermediate = !pristine && live;

            let needs_version = protected_input || live_intermediate;
            if !needs_version {
                // write in place (possibly onto an existing version)
                rewrite_unit(&mut new_item, &base, &cur_name, &cur_name);
                current.insert(base.clone(), cur_name.clone());
                version_writer.insert(base.clone(), ui);
                continue;
            }

            let k = suffix.entry(base.clone()).or_insert(0);
            *k += 1;
            let ver = fresh_name(&format!("{}{}", base, k), &taken);
            taken.insert(ver.clone());

            let same_slot = info.same_slot_ok.get(&base).copied().unwrap_or(false);
            let self_reads = info.reads.contains(&base);
            let covers = info.covers_fully.contains(&base);
            let is_array = arrays.contains(&base);

            if self_reads && same_slot {
                // reads refer to the previous version at the same slot
                rewrite_unit(&mut new_item, &base, &ver, &cur_name);
            } else {
                // reads (if any) refer to the new version; glue copies the
                // previous value in first
                let need_glue = self_reads || (is_array && !covers);
                if need_glue {
                    if is_array {
                        let ctr = fresh_name("g", &taken);
                        let glue = Item::Loop(LoopItem {
                            head: 0,
                            inc: 0,
                            counter: ctr.clone(),
                            bound: Expr::Param,
                            body: vec![Item::Atom {
                                id: 0,
                                origin: Origin::Glue,
                                stmt: AtomStmt::store(
                                    ver.clone(),
                                    Expr::var(ctr),
                                    Expr::read(cur_name.clone(), Expr::var(fresh_name("g", &taken))),
                                ),
                            }],
                            origin: Origin::Glue,
                        });
                        // fix the inner read to use the same counter
                        let glue = match glue {
                            Item::Loop(mut l) => {
                                let c = l.counter.clone();
                                if let Item::Atom { stmt, .. } = &mut l.body[0] {
                                    stmt.index = Some(Expr::var(c.clone()));
                                    stmt.rhs = Expr::read(cur_name.clone(), Expr::var(c));
                                }
                                Item::Loop(l)
                            }
                            other => other,
                        };
                        glue_markers.push(out_items.len());
                        out_items.push(glue);
                    } else {
                        glue_markers.push(out_items.len());
                        out_items.push(Item::Atom {
                            id: 0,
                            origin: Origin::Glue,
                            stmt: AtomStmt::scalar(ver.clone(), Expr::var(cur_name.clone())),
                        });
                    }
                }
                rewrite_unit(&mut new_item, &base, &ver, &ver);
            }
            current.insert(base.clone(), ver.clone());
            version_writer.insert(base.clone(), ui);
        }
        out_items.push(new_item);
    }

    let mut final_version = BTreeMap::new();
    for (base, ver) in &current {
        final_version.insert(base.clone(), ver.clone());
    }

    // rewrite the post-condition to final versions
    let mut s = Subst::default();
    for (base, ver) in &final_version {
        if base != ver {
            if arrays.contains(base) {
                s.arrays.insert(base.clone(), ver.clone());
            } else {
                s.vars.insert(base.clone(), Expr::Var(ver.clone()));
            }
        }
    }
    let post2 = crate::sym::subst_formula(post, &s);

    let mut np = NProgram { items: out_items, next_id: 0 };
    np.renumber();
    let mut glue_nodes = BTreeSet::new();
    for gi in glue_markers {
        let mut ids = BTreeSet::new();
        collect_item_ids(&np.items[gi], &mut ids);
        glue_nodes.extend(ids);
    }

    Renamed { prog: np, pre: pre.clone(), post: post2, glue_nodes, final_version }
}

fn collect_item_ids(it: &Item, out: &mut BTreeSet<NodeId>) {
    match it {
        Item::Atom { id, .. } => {
            out.insert(*id);
        }
        Item::If { id, then_items, else_items, .. } => {
            out.insert(*id);
            for sub in then_items.iter().chain(else_items) {
                collect_item_ids(sub, out);
            }
        }
        Item::Loop(l) => {
            out.insert(l.head);
            out.insert(l.inc);
            for sub in &l.body {
                collect_item_ids(sub, out);
            }
        }
    }
}

/// Static no-overwriting scan: after a unit writes a version and a later
/// unit reads it, no unit after that may write the same version again.
pub fn check_no_overwriting(prog: &NProgram) -> Result<(), String> {
    let counters = prog.counter_names();
    let infos: Vec<UnitInfo> = prog.items.iter().map(|it| unit_info(it, &counters)).collect();
    let mut last_write: BTreeMap<Name, usize> = BTreeMap::new();
    let mut read_since: BTreeMap<Name, bool> = BTreeMap::new();
    for (ui, info) in infos.iter().enumerate() {
        for r in &info.reads {
            if last_write.contains_key(r) && !info.writes.contains(r) {
                read_since.insert(r.clone(), true);
            }
        }
        for w in &info.writes {
            if last_write.contains_key(w) && *read_since.get(w).unwrap_or(&false) {
                return Err(format!(
                    "version '{}' written at unit {} is overwritten at unit {} after being read",
                    w, last_write[w], ui
                ));
            }
            last_write.insert(w.clone(), ui);
            read_since.insert(w.clone(), false);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    const SS: &str = r#"
assume(forall i in [0, N) :: A[i] == 1);
S = 0;
for (i = 0; i < N; i = i + 1) { S = S + A[i]; }
for (i = 0; i < N; i = i + 1) { A[i] = A[i] + S; }
for (i = 0; i < N; i = i + 1) { S = S + A[i]; }
assert(S == N * (N + 2));
"#;

    #[test]
    fn renames_running_example_like_reference() {
        let t = parse_program(SS).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let r = rename(&np, &t.pre, &t.post);
        let text = r.prog.to_stmt().to_string();
        // second loop writes A1 reading A; third loop accumulates S1 with
        // a scalar glue copy S1 = S
        assert!(text.contains("A1[i] = A[i] + S"), "{}", text);
        assert!(text.contains("S1 = S;"), "{}", text);
        assert!(text.contains("S1 = S1 + A1[i]"), "{}", text);
        // the first loop keeps S (initializer merge)
        assert!(text.contains("S = S + A[i]"), "{}", text);
        assert_eq!(r.final_version["S"], "S1");
        assert_eq!(r.final_version["A"], "A1");
        assert_eq!(r.post.to_string(), "S1 == N * (N + 2)");
        assert_eq!(r.glue_nodes.len(), 1);
        check_no_overwriting(&r.prog).unwrap();
    }

    #[test]
    fn single_writer_programs_need_no_renaming() {
        let src = r#"
assume(true);
for (t1 = 0; t1 < N; t1 = t1 + 1) {
  if (t1 == 0) { A[t1] = 6; } else { A[t1] = A[t1 - 1] + 6; }
}
for (t2 = 0; t2 < N; t2 = t2 + 1) {
  if (t2 == 0) { B[t2] = 1; } else { B[t2] = B[t2 - 1] + A[t2 - 1]; }
}
assert(forall i in [0, N) :: B[i] >= 0);
"#;
        let t = parse_program(src).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let r = rename(&np, &t.pre, &t.post);
        assert!(r.glue_nodes.is_empty());
        let text = r.prog.to_stmt().to_string();
        assert!(!text.contains("A1"), "{}", text);
        assert!(!text.contains("B1"), "{}", text);
        check_no_overwriting(&r.prog).unwrap();
    }

    #[test]
    fn rename_preserves_semantics() {
        use crate::interp::{eval_formula, interpret, ProgState};
        let t = parse_program(SS).unwrap();
        let np = NProgram::from_stmt(&t.prog);
        let r = rename(&np, &t.pre, &t.post);
        for n in 1..=6 {
            let mut st0 = ProgState::new(n);
            st0.set_array("A", vec![1; n as usize]);
            let mut orig = st0.clone();
            interpret(&t.prog, &mut orig).unwrap();
            let mut ren = st0.clone();
            interpret(&r.prog.to_stmt(), &mut ren).unwrap();
            // final versions carry the original values
            assert_eq!(orig.scalar("S"), ren.scalar(&r.final_version["S"]));
            assert_eq!(orig.array("A"), ren.array(&r.final_version["A"]));
            assert_eq!(
                eval_formula(&t.post, &orig).unwrap(),
                eval_formula(&r.post, &ren).unwrap()
            );
        }
    }
}
