//! Symbolic algebra: substitution and polynomial normal forms.
//!
//! Expressions normalize to multivariate polynomials over atoms, where an
//! atom is a scalar, the parameter `N`, an array read with a normalized
//! index, or an opaque integer quotient. Division by a literal that
//! divides every coefficient folds away; everything else stays symbolic.

use crate::ast::*;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Atom {
    Var(Name),
    Param,
    Read(Name, Poly),
    Div(Box<Poly>, Box<Poly>),
}

/// Product of atoms with positive integer powers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Monomial(pub BTreeMap<Atom, u32>);

impl Monomial {
    pub fn unit() -> Monomial {
        Monomial::default()
    }

    pub fn atom(a: Atom) -> Monomial {
        let mut m = BTreeMap::new();
        m.insert(a, 1);
        Monomial(m)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (a, p) in &other.0 {
            *out.entry(a.clone()).or_insert(0) += p;
        }
        Monomial(out)
    }

    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }
}

/// Sum of monomials with integer coefficients; empty map is zero.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Poly(pub BTreeMap<Monomial, i128>);

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(c: i128) -> Poly {
        let mut p = Poly::zero();
        if c != 0 {
            p.0.insert(Monomial::unit(), c);
        }
        p
    }

    pub fn atom(a: Atom) -> Poly {
        let mut p = Poly::zero();
        p.0.insert(Monomial::atom(a), 1);
        p
    }

    pub fn var(n: impl Into<Name>) -> Poly {
        Poly::atom(Atom::Var(n.into()))
    }

    pub fn param() -> Poly {
        Poly::atom(Atom::Param)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_const(&self) -> Option<i128> {
        if self.0.is_empty() {
            return Some(0);
        }
        if self.0.len() == 1 {
            if let Some(c) = self.0.get(&Monomial::unit()) {
                return Some(*c);
            }
        }
        None
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.0.clone();
        for (m, c) in &other.0 {
            let e = out.entry(m.clone()).or_insert(0);
            *e += c;
            if *e == 0 {
                out.remove(m);
            }
        }
        Poly(out)
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), -c)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out: BTreeMap<Monomial, i128> = BTreeMap::new();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                let m = m1.mul(m2);
                let e = out.entry(m).or_insert(0);
                *e += c1 * c2;
            }
        }
        out.retain(|_, c| *c != 0);
        Poly(out)
    }

    pub fn scale(&self, k: i128) -> Poly {
        if k == 0 {
            return Poly::zero();
        }
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    /// Integer division. Folds when the divisor is a nonzero literal that
    /// divides every coefficient (then exact), otherwise stays opaque.
    pub fn div(&self, other: &Poly) -> Poly {
        if let Some(d) = other.as_const() {
            if d != 0 && self.0.values().all(|c| c % d == 0) {
                return Poly(self.0.iter().map(|(m, c)| (m.clone(), c / d)).collect());
            }
        }
        if self.is_zero() {
            // 0 div e is 0 for e != 0; division by zero traps at run time
            // anyway, so fold.
            return Poly::zero();
        }
        if self == other {
            if let Some(c) = other.as_const() {
                if c != 0 {
                    return Poly::constant(1);
                }
            }
        }
        Poly::atom(Atom::Div(Box::new(self.clone()), Box::new(other.clone())))
    }

    /// Largest total degree over the given names (array and scalar), 0 if
    /// none occur.
    pub fn degree_in(&self, names: &BTreeSet<Name>) -> u32 {
        let mut best = 0;
        for m in self.0.keys() {
            let mut d = 0;
            for (a, p) in &m.0 {
                let hit = match a {
                    Atom::Var(v) => names.contains(v),
                    Atom::Read(arr, _) => names.contains(arr),
                    _ => false,
                };
                if hit {
                    d += p;
                }
            }
            best = best.max(d);
        }
        best
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        for m in self.0.keys() {
            for a in m.0.keys() {
                out.insert(a.clone());
            }
        }
        out
    }

    /// Names mentioned anywhere, including inside read indices.
    pub fn names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for m in self.0.keys() {
            for a in m.0.keys() {
                atom_names(a, &mut out);
            }
        }
        out
    }
}

fn atom_names(a: &Atom, out: &mut BTreeSet<Name>) {
    match a {
        Atom::Var(v) => {
            out.insert(v.clone());
        }
        Atom::Param => {}
        Atom::Read(arr, idx) => {
            out.insert(arr.clone());
            for n in idx.names() {
                out.insert(n);
            }
        }
        Atom::Div(n, d) => {
            for x in n.names() {
                out.insert(x);
            }
            for x in d.names() {
                out.insert(x);
            }
        }
    }
}

pub fn expr_to_poly(e: &Expr) -> Poly {
    match e {
        Expr::Const(c) => Poly::constant(*c),
        Expr::Var(v) => Poly::var(v.clone()),
        Expr::Param => Poly::param(),
        Expr::Read(a, idx) => Poly::atom(Atom::Read(a.clone(), expr_to_poly(idx))),
        Expr::Bin(op, a, b) => {
            let pa = expr_to_poly(a);
            let pb = expr_to_poly(b);
            match op {
                BinOp::Add => pa.add(&pb),
                BinOp::Sub => pa.sub(&pb),
                BinOp::Mul => pa.mul(&pb),
                BinOp::Div => pa.div(&pb),
            }
        }
    }
}

fn atom_to_expr(a: &Atom) -> Expr {
    match a {
        Atom::Var(v) => Expr::Var(v.clone()),
        Atom::Param => Expr::Param,
        Atom::Read(arr, idx) => Expr::read(arr.clone(), poly_to_expr(idx)),
        Atom::Div(n, d) => Expr::bin(BinOp::Div, poly_to_expr(n), poly_to_expr(d)),
    }
}

fn monomial_to_expr(m: &Monomial, coeff: i128) -> Expr {
    let mut factors: Vec<Expr> = Vec::new();
    for (a, p) in &m.0 {
        for _ in 0..*p {
            factors.push(atom_to_expr(a));
        }
    }
    if factors.is_empty() {
        return Expr::Const(coeff);
    }
    let mut acc = if coeff == 1 {
        factors.remove(0)
    } else if coeff == -1 {
        // caller handles the sign; produce the bare product
        factors.remove(0)
    } else {
        Expr::mul(Expr::Const(coeff.abs()), factors.remove(0))
    };
    for fx in factors {
        acc = Expr::mul(acc, fx);
    }
    acc
}

pub fn poly_to_expr(p: &Poly) -> Expr {
    if p.0.is_empty() {
        return Expr::Const(0);
    }
    let mut const_term: Option<i128> = None;
    for (m, c) in &p.0 {
        if m.0.is_empty() {
            const_term = Some(*c);
        }
    }
    let mut terms: Vec<(bool, Expr)> = Vec::new(); // (negative, expr)
    for (m, c) in &p.0 {
        if m.0.is_empty() {
            continue;
        }
        terms.push((*c < 0, monomial_to_expr(m, *c)));
    }
    let mut expr: Option<Expr> = None;
    for (neg, t) in terms {
        expr = Some(match expr {
            None => {
                if neg {
                    Expr::sub(Expr::Const(0), t)
                } else {
                    t
                }
            }
            Some(prev) => {
                if neg {
                    Expr::sub(prev, t)
                } else {
                    Expr::add(prev, t)
                }
            }
        });
    }
    match (expr, const_term.or(Some(0)).filter(|c| *c != 0)) {
        (None, None) => Expr::Const(0),
        (None, Some(c)) => Expr::Const(c),
        (Some(e), None) => e,
        (Some(e), Some(c)) => {
            if c < 0 {
                Expr::sub(e, Expr::Const(-c))
            } else {
                Expr::add(e, Expr::Const(c))
            }
        }
    }
}

/// Polynomial normal form of an expression: expand, collect like terms,
/// constant-fold; division stays symbolic unless the divisor is a literal
/// dividing all coefficients.
pub fn simplify_expr(e: &Expr) -> Expr {
    poly_to_expr(&expr_to_poly(e))
}

// ---------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------

/// Substitution map applied to leaves; array reads are rewritten after
/// their index is substituted.
#[derive(Default, Clone)]
pub struct Subst {
    /// Replacement for the parameter `N`.
    pub param: Option<Expr>,
    /// Scalar replacements.
    pub vars: BTreeMap<Name, Expr>,
    /// Array renamings (name to name, index untouched).
    pub arrays: BTreeMap<Name, Name>,
}

impl Subst {
    pub fn param_to(e: Expr) -> Subst {
        Subst { param: Some(e), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.param.is_none() && self.vars.is_empty() && self.arrays.is_empty()
    }
}

pub fn subst_expr(e: &Expr, s: &Subst) -> Expr {
    match e {
        Expr::Const(_) => e.clone(),
        Expr::Param => s.param.clone().unwrap_or(Expr::Param),
        Expr::Var(v) => s.vars.get(v).cloned().unwrap_or_else(|| e.clone()),
        Expr::Read(a, idx) => {
            let name = s.arrays.get(a).cloned().unwrap_or_else(|| a.clone());
            Expr::read(name, subst_expr(idx, s))
        }
        Expr::Bin(op, a, b) => Expr::bin(*op, subst_expr(a, s), subst_expr(b, s)),
    }
}

pub fn subst_bool(b: &BoolExpr, s: &Subst) -> BoolExpr {
    match b {
        BoolExpr::Rel(op, x, y) => BoolExpr::Rel(*op, subst_expr(x, s), subst_expr(y, s)),
        BoolExpr::And(x, y) => BoolExpr::And(Box::new(subst_bool(x, s)), Box::new(subst_bool(y, s))),
        BoolExpr::Or(x, y) => BoolExpr::Or(Box::new(subst_bool(x, s)), Box::new(subst_bool(y, s))),
        BoolExpr::Not(x) => BoolExpr::Not(Box::new(subst_bool(x, s))),
    }
}

pub fn subst_formula(f: &Formula, s: &Subst) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Qf(b) => Formula::Qf(subst_bool(b, s)),
        Formula::Forall(q) | Formula::Exists(q) => {
            // The quantified index shadows any scalar substitution.
            let mut inner = s.clone();
            inner.vars.remove(&q.idx);
            let nq = Quant {
                idx: q.idx.clone(),
                lo: subst_expr(&q.lo, s),
                hi: subst_expr(&q.hi, s),
                body: subst_bool(&q.body, &inner),
            };
            if matches!(f, Formula::Forall(_)) {
                Formula::Forall(nq)
            } else {
                Formula::Exists(nq)
            }
        }
        Formula::And(fs) => Formula::And(fs.iter().map(|x| subst_formula(x, s)).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(|x| subst_formula(x, s)).collect()),
    }
}

pub fn subst_stmt(st: &Stmt, s: &Subst) -> Stmt {
    match st {
        Stmt::Assign(v, e) => {
            let name = match s.vars.get(v) {
                Some(Expr::Var(nv)) => nv.clone(),
                _ => v.clone(),
            };
            Stmt::Assign(name, subst_expr(e, s))
        }
        Stmt::Store(a, idx, e) => {
            let name = s.arrays.get(a).cloned().unwrap_or_else(|| a.clone());
            Stmt::Store(name, subst_expr(idx, s), subst_expr(e, s))
        }
        Stmt::Seq(ss) => Stmt::Seq(ss.iter().map(|x| subst_stmt(x, s)).collect()),
        Stmt::If(c, t, e) => Stmt::If(
            subst_bool(c, s),
            Box::new(subst_stmt(t, s)),
            Box::new(subst_stmt(e, s)),
        ),
        Stmt::For(l) => Stmt::For(LoopStmt {
            counter: l.counter.clone(),
            bound: subst_expr(&l.bound, s),
            body: Box::new(subst_stmt(&l.body, s)),
        }),
    }
}

/// Replace every free occurrence of `N` by `repl` in a whole triple.
pub fn substitute_param_triple(t: &HoareTriple, repl: &Expr) -> HoareTriple {
    let s = Subst::param_to(repl.clone());
    HoareTriple {
        pre: subst_formula(&t.pre, &s),
        prog: subst_stmt(&t.prog, &s),
        post: subst_formula(&t.post, &s),
    }
}

/// Replace `N` only in loop-bound positions, leaving bodies untouched.
pub fn subst_param_in_bounds(st: &Stmt, repl: &Expr) -> Stmt {
    match st {
        Stmt::Assign(..) | Stmt::Store(..) => st.clone(),
        Stmt::Seq(ss) => Stmt::Seq(ss.iter().map(|x| subst_param_in_bounds(x, repl)).collect()),
        Stmt::If(c, t, e) => Stmt::If(
            c.clone(),
            Box::new(subst_param_in_bounds(t, repl)),
            Box::new(subst_param_in_bounds(e, repl)),
        ),
        Stmt::For(l) => Stmt::For(LoopStmt {
            counter: l.counter.clone(),
            bound: subst_expr(&l.bound, &Subst::param_to(repl.clone())),
            body: l.body.clone(),
        }),
    }
}

// ---------------------------------------------------------------------
// Normalized relations
// ---------------------------------------------------------------------

/// Relation in normal form: `poly OP 0` with OP in {==, <, <=}.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinRel {
    EqZero(Poly),
    LtZero(Poly),
    LeZero(Poly),
}

impl LinRel {
    pub fn poly(&self) -> &Poly {
        match self {
            LinRel::EqZero(p) | LinRel::LtZero(p) | LinRel::LeZero(p) => p,
        }
    }
}

/// Normalize a relation to `poly OP 0`; equalities get a canonical sign.
pub fn normalize_rel(op: RelOp, a: &Expr, b: &Expr) -> LinRel {
    let pa = expr_to_poly(a);
    let pb = expr_to_poly(b);
    match op {
        RelOp::Eq => {
            let mut d = pa.sub(&pb);
            if let Some((_, c)) = d.0.iter().next() {
                if *c < 0 {
                    d = d.neg();
                }
            }
            LinRel::EqZero(d)
        }
        RelOp::Lt => LinRel::LtZero(pa.sub(&pb)),
        RelOp::Le => LinRel::LeZero(pa.sub(&pb)),
        RelOp::Gt => LinRel::LtZero(pb.sub(&pa)),
        RelOp::Ge => LinRel::LeZero(pb.sub(&pa)),
    }
}

pub fn linrel_to_bool(r: &LinRel) -> BoolExpr {
    match r {
        LinRel::EqZero(p) => BoolExpr::Rel(RelOp::Eq, poly_to_expr(p), Expr::Const(0)),
        LinRel::LtZero(p) => BoolExpr::Rel(RelOp::Lt, poly_to_expr(p), Expr::Const(0)),
        LinRel::LeZero(p) => BoolExpr::Rel(RelOp::Le, poly_to_expr(p), Expr::Const(0)),
    }
}

/// Structural equivalence of boolean expressions after polynomial
/// normalization of both sides of each relation.
pub fn bool_structurally_eq(a: &BoolExpr, b: &BoolExpr) -> bool {
    normalize_bool(a) == normalize_bool(b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormBool {
    Rel(LinRel),
    And(Box<NormBool>, Box<NormBool>),
    Or(Box<NormBool>, Box<NormBool>),
    Not(Box<NormBool>),
}

pub fn normalize_bool(b: &BoolExpr) -> NormBool {
    match b {
        BoolExpr::Rel(op, x, y) => NormBool::Rel(normalize_rel(*op, x, y)),
        BoolExpr::And(x, y) => NormBool::And(Box::new(normalize_bool(x)), Box::new(normalize_bool(y))),
        BoolExpr::Or(x, y) => NormBool::Or(Box::new(normalize_bool(x)), Box::new(normalize_bool(y))),
        BoolExpr::Not(x) => NormBool::Not(Box::new(normalize_bool(x))),
    }
}

// ---------------------------------------------------------------------
// Linear-in-N decisions (used for peel-count checks and guard pruning)
// ---------------------------------------------------------------------

/// View a poly as `a*N + b` if it is linear in N and mentions nothing else.
pub fn as_linear_in_param(p: &Poly) -> Option<(i128, i128)> {
    let mut a = 0i128;
    let mut b = 0i128;
    for (m, c) in &p.0 {
        if m.0.is_empty() {
            b = *c;
        } else if m.0.len() == 1 {
            match m.0.iter().next().unwrap() {
                (Atom::Param, 1) => a = *c,
                _ => return None,
            }
        } else {
            return None;
        }
    }
    Some((a, b))
}

/// Decide whether `p OP 0` has a constant truth value over all integer
/// N >= n_min, for `p` linear in N alone. `Some(v)` means the relation
/// evaluates to `v` at every such N; `None` means it varies or is outside
/// the fragment.
pub fn decide_rel_for_all_param_ge(r: &LinRel, n_min: i128) -> Option<bool> {
    let (p, op_eq, op_lt) = match r {
        LinRel::EqZero(p) => (p, true, false),
        LinRel::LtZero(p) => (p, false, true),
        LinRel::LeZero(p) => (p, false, false),
    };
    let (a, b) = as_linear_in_param(p)?;
    let at_min = a * n_min + b;
    if op_eq {
        if a == 0 {
            return Some(b == 0);
        }
        // a*n + b == 0 at a single root; constant over [n_min, inf) only
        // if that root lies outside the range or is not integral.
        if (-b) % a == 0 && (-b) / a >= n_min {
            return None;
        }
        return Some(false);
    }
    if op_lt {
        if a == 0 {
            return Some(b < 0);
        }
        if a > 0 {
            // increasing: constant false iff already non-negative at n_min
            return if at_min >= 0 { Some(false) } else { None };
        }
        // decreasing: constant true iff already negative at n_min
        return if at_min < 0 { Some(true) } else { None };
    }
    // Le
    if a == 0 {
        return Some(b <= 0);
    }
    if a > 0 {
        return if at_min > 0 { Some(false) } else { None };
    }
    if at_min <= 0 {
        Some(true)
    } else {
        None
    }
}

/// Fresh-name helper: returns `base`, `base_1`, `base_2`, ... avoiding
/// `taken`.
pub fn fresh_name(base: &str, taken: &BTreeSet<Name>) -> Name {
    if !taken.contains(base) {
        return base.to_string();
    }
    for k in 1.. {
        let cand = format!("{}_{}", base, k);
        if !taken.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn expr(src: &str) -> Expr {
        // parse via a tiny program wrapper
        let t = parse_program(&format!("assume(true); x = {}; assert(true);", src)).unwrap();
        match &t.prog {
            Stmt::Seq(ss) => match &ss[0] {
                Stmt::Assign(_, e) => e.clone(),
                _ => panic!(),
            },
            _ => panic!(),
        }
    }

    #[test]
    fn peel_count_of_linear_bound_is_one() {
        // N - (N-1) normalizes to 1
        let e = Expr::sub(Expr::Param, Expr::param_minus(1));
        assert_eq!(simplify_expr(&e), Expr::Const(1));
    }

    #[test]
    fn quadratic_difference_stays_symbolic() {
        // N*N - (N-1)*(N-1) normalizes to 2*N - 1
        let nsq = expr("N * N");
        let nm1sq = expr("(N - 1) * (N - 1)");
        let d = simplify_expr(&Expr::sub(nsq, nm1sq));
        assert_eq!(d, expr("2 * N - 1"));
        assert_eq!(expr_to_poly(&d).as_const(), None);
    }

    #[test]
    fn additive_identity() {
        let e = expr("x + 0");
        assert_eq!(simplify_expr(&e), Expr::var("x"));
    }

    #[test]
    fn division_folds_only_when_exact() {
        assert_eq!(simplify_expr(&expr("(6 * N + 2) / 2")), expr("3 * N + 1"));
        let sym = simplify_expr(&expr("(6 * N + 1) / 2"));
        assert!(matches!(expr_to_poly(&sym).atoms().iter().next(), Some(Atom::Div(..))));
        assert_eq!(simplify_expr(&expr("x / x")), expr("x / x")); // stays symbolic (x may be 0)
    }

    #[test]
    fn substitute_param_examples() {
        // post of the running example at N-1: S == (N-1)*(N+1)
        let post = expr("N * (N + 2)");
        let subst = subst_expr(&post, &Subst::param_to(Expr::param_minus(1)));
        let want = expr("(N - 1) * (N + 1)");
        assert_eq!(
            expr_to_poly(&simplify_expr(&subst)),
            expr_to_poly(&simplify_expr(&want))
        );
        // no occurrence of N
        assert_eq!(subst_expr(&expr("5"), &Subst::param_to(Expr::param_minus(1))), expr("5"));
    }

    #[test]
    fn subst_bounds_only() {
        let src = r#"
assume(true);
for (l = 0; l < N; l = l + 1) {
  if (x < N) { x = x + N; }
}
assert(true);
"#;
        let t = parse_program(src).unwrap();
        let shifted = subst_param_in_bounds(&t.prog, &Expr::param_minus(1));
        match &shifted {
            Stmt::Seq(ss) => match &ss[0] {
                Stmt::For(l) => {
                    assert_eq!(l.bound, Expr::param_minus(1));
                    // body untouched
                    let body_str = l.body.to_string();
                    assert!(body_str.contains("x < N"), "{}", body_str);
                    assert!(body_str.contains("x + N"), "{}", body_str);
                }
                _ => panic!(),
            },
            _ => panic!(),
        }
    }

    #[test]
    fn subst_is_homomorphic() {
        let e = expr("A[i + N] * (N + x) - N / (N + 1)");
        let s = Subst::param_to(expr("N - 1"));
        let direct = subst_expr(&e, &s);
        // recursing into children manually must agree
        if let Expr::Bin(op, a, b) = &e {
            let manual = Expr::bin(*op, subst_expr(a, &s), subst_expr(b, &s));
            assert_eq!(direct, manual);
        } else {
            panic!();
        }
    }

    #[test]
    fn simplify_is_idempotent() {
        for src in ["N * N - (N - 1) * (N - 1)", "A[i] * 2 + A[i] * 3", "x * (y + 1) - x * y"] {
            let once = simplify_expr(&expr(src));
            let twice = simplify_expr(&once);
            assert_eq!(once, twice, "not idempotent for {}", src);
        }
    }

    #[test]
    fn linear_decisions() {
        // N - 1 == 0 for all N >= 2 : false
        let r = normalize_rel(RelOp::Eq, &expr("N - 1"), &Expr::Const(0));
        assert_eq!(decide_rel_for_all_param_ge(&r, 2), Some(false));
        // N - 2 == 0 undecidable for all N >= 2 (true at N=2)
        let r = normalize_rel(RelOp::Eq, &expr("N - 2"), &Expr::Const(0));
        assert_eq!(decide_rel_for_all_param_ge(&r, 2), None);
        // N > 0 for all N >= 1 : true (0 - N < 0)
        let r = normalize_rel(RelOp::Gt, &Expr::Param, &Expr::Const(0));
        assert_eq!(decide_rel_for_all_param_ge(&r, 1), Some(true));
    }
}
