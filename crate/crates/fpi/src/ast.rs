//! AST for the input language and the assertion logic.
//!
//! Programs are sequences of assignments, branches and non-nested
//! counting loops over integer scalars and integer arrays, parameterized
//! by the reserved symbol `N`. Pre- and post-conditions are
//! quantifier-free predicates or single-index `forall`/`exists` formulas
//! over half-open ranges, closed under conjunction and disjunction.

use std::fmt;

pub type Name = String;

/// The reserved program parameter.
pub const PARAM: &str = "N";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(i128),
    /// Scalar variable or loop counter.
    Var(Name),
    /// The program parameter `N`.
    Param,
    /// Array read `A[e]`.
    Read(Name, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(n: impl Into<Name>) -> Expr {
        Expr::Var(n.into())
    }

    pub fn read(a: impl Into<Name>, idx: Expr) -> Expr {
        Expr::Read(a.into(), Box::new(idx))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Mul, a, b)
    }

    /// `N - k` for constant k.
    pub fn param_minus(k: i128) -> Expr {
        if k == 0 {
            Expr::Param
        } else {
            Expr::sub(Expr::Param, Expr::Const(k))
        }
    }

    /// Visit every sub-expression, outermost first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Read(_, idx) => idx.walk(f),
            Expr::Bin(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    pub fn mentions_param(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Param) {
                found = true;
            }
        });
        found
    }

    pub fn reads_array(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Read(..)) {
                found = true;
            }
        });
        found
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "==",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }

    pub fn eval(self, a: i128, b: i128) -> bool {
        match self {
            RelOp::Eq => a == b,
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Gt => a > b,
            RelOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Rel(RelOp, Expr, Expr),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
}

impl BoolExpr {
    pub fn rel(op: RelOp, a: Expr, b: Expr) -> BoolExpr {
        BoolExpr::Rel(op, a, b)
    }

    pub fn not(self) -> BoolExpr {
        BoolExpr::Not(Box::new(self))
    }

    pub fn walk_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            BoolExpr::Rel(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.walk_exprs(f);
                b.walk_exprs(f);
            }
            BoolExpr::Not(a) => a.walk_exprs(f),
        }
    }

    pub fn mentions_param(&self) -> bool {
        let mut found = false;
        self.walk_exprs(&mut |e| {
            if matches!(e, Expr::Param) {
                found = true;
            }
        });
        found
    }
}

/// One quantified conjunct: index ranges over the half-open interval
/// `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quant {
    pub idx: Name,
    pub lo: Expr,
    pub hi: Expr,
    pub body: BoolExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    False,
    Qf(BoolExpr),
    Forall(Quant),
    Exists(Quant),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    /// Flatten nested conjunctions into a list of conjuncts.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(fs) => fs.iter().flat_map(|f| f.conjuncts()).collect(),
            other => vec![other],
        }
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::True => {}
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn walk_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Qf(b) => b.walk_exprs(f),
            Formula::Forall(q) | Formula::Exists(q) => {
                q.lo.walk(f);
                q.hi.walk(f);
                q.body.walk_exprs(f);
            }
            Formula::And(fs) | Formula::Or(fs) => {
                for sub in fs {
                    sub.walk_exprs(f);
                }
            }
        }
    }

    /// Scalar and array names occurring in the formula, quantified
    /// indices excluded.
    pub fn names(&self) -> std::collections::BTreeSet<Name> {
        let mut out = std::collections::BTreeSet::new();
        let mut bound: Vec<Name> = Vec::new();
        collect_formula_names(self, &mut bound, &mut out);
        out
    }
}

fn collect_formula_names(
    f: &Formula,
    bound: &mut Vec<Name>,
    out: &mut std::collections::BTreeSet<Name>,
) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Qf(b) => collect_bool_names(b, bound, out),
        Formula::Forall(q) | Formula::Exists(q) => {
            collect_expr_names(&q.lo, bound, out);
            collect_expr_names(&q.hi, bound, out);
            bound.push(q.idx.clone());
            collect_bool_names(&q.body, bound, out);
            bound.pop();
        }
        Formula::And(fs) | Formula::Or(fs) => {
            for sub in fs {
                collect_formula_names(sub, bound, out);
            }
        }
    }
}

fn collect_bool_names(b: &BoolExpr, bound: &mut Vec<Name>, out: &mut std::collections::BTreeSet<Name>) {
    match b {
        BoolExpr::Rel(_, x, y) => {
            collect_expr_names(x, bound, out);
            collect_expr_names(y, bound, out);
        }
        BoolExpr::And(x, y) | BoolExpr::Or(x, y) => {
            collect_bool_names(x, bound, out);
            collect_bool_names(y, bound, out);
        }
        BoolExpr::Not(x) => collect_bool_names(x, bound, out),
    }
}

fn collect_expr_names(e: &Expr, bound: &mut Vec<Name>, out: &mut std::collections::BTreeSet<Name>) {
    match e {
        Expr::Const(_) | Expr::Param => {}
        Expr::Var(v) => {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        }
        Expr::Read(a, idx) => {
            out.insert(a.clone());
            collect_expr_names(idx, bound, out);
        }
        Expr::Bin(_, x, y) => {
            collect_expr_names(x, bound, out);
            collect_expr_names(y, bound, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    /// `v = E;`
    Assign(Name, Expr),
    /// `A[e] = E;`
    Store(Name, Expr, Expr),
    Seq(Vec<Stmt>),
    If(BoolExpr, Box<Stmt>, Box<Stmt>),
    For(LoopStmt),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopStmt {
    pub counter: Name,
    pub bound: Expr,
    pub body: Box<Stmt>,
}

impl Stmt {
    pub fn empty() -> Stmt {
        Stmt::Seq(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Stmt::Seq(v) if v.is_empty())
    }
}

/// A parameterized Hoare triple `{pre} prog {post}`; the parameter is
/// always the reserved symbol `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoareTriple {
    pub pre: Formula,
    pub prog: Stmt,
    pub post: Formula,
}

// ---------------------------------------------------------------------
// Display / pretty printing (the `.fpi` concrete syntax)
// ---------------------------------------------------------------------

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f, 0)
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
    match e {
        Expr::Const(c) => {
            if *c < 0 {
                write!(f, "({})", c)
            } else {
                write!(f, "{}", c)
            }
        }
        Expr::Var(v) => write!(f, "{}", v),
        Expr::Param => write!(f, "{}", PARAM),
        Expr::Read(a, idx) => write!(f, "{}[{}]", a, idx),
        Expr::Bin(op, a, b) => {
            let my = match op {
                BinOp::Add | BinOp::Sub => 1,
                BinOp::Mul | BinOp::Div => 2,
            };
            let need_paren = my < prec;
            if need_paren {
                write!(f, "(")?;
            }
            write_expr(a, f, my)?;
            write!(f, " {} ", op.symbol())?;
            // Right operand of - and / needs parens at equal precedence.
            let right_prec = match op {
                BinOp::Sub | BinOp::Div => my + 1,
                _ => my,
            };
            write_expr(b, f, right_prec)?;
            if need_paren {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bool(self, f, 0)
    }
}

fn write_bool(b: &BoolExpr, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
    match b {
        BoolExpr::Rel(op, a, bb) => write!(f, "{} {} {}", a, op.symbol(), bb),
        BoolExpr::And(x, y) => {
            let need = prec > 2;
            if need {
                write!(f, "(")?;
            }
            write_bool(x, f, 2)?;
            write!(f, " && ")?;
            write_bool(y, f, 2)?;
            if need {
                write!(f, ")")?;
            }
            Ok(())
        }
        BoolExpr::Or(x, y) => {
            let need = prec > 1;
            if need {
                write!(f, "(")?;
            }
            write_bool(x, f, 1)?;
            write!(f, " || ")?;
            write_bool(y, f, 1)?;
            if need {
                write!(f, ")")?;
            }
            Ok(())
        }
        BoolExpr::Not(x) => {
            write!(f, "!(")?;
            write_bool(x, f, 0)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Qf(b) => write!(f, "{}", b),
            Formula::Forall(q) => {
                write!(f, "forall {} in [{}, {}) :: {}", q.idx, q.lo, q.hi, q.body)
            }
            Formula::Exists(q) => {
                write!(f, "exists {} in [{}, {}) :: {}", q.idx, q.lo, q.hi, q.body)
            }
            Formula::And(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| format!("({})", x)).collect();
                write!(f, "{}", parts.join(" && "))
            }
            Formula::Or(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| format!("({})", x)).collect();
                write!(f, "{}", parts.join(" || "))
            }
        }
    }
}

fn write_stmt(s: &Stmt, out: &mut String, indent: usize) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Assign(v, e) => {
            out.push_str(&format!("{}{} = {};\n", pad, v, e));
        }
        Stmt::Store(a, idx, e) => {
            out.push_str(&format!("{}{}[{}] = {};\n", pad, a, idx, e));
        }
        Stmt::Seq(ss) => {
            for sub in ss {
                write_stmt(sub, out, indent);
            }
        }
        Stmt::If(c, t, e) => {
            out.push_str(&format!("{}if ({}) {{\n", pad, c));
            write_stmt(t, out, indent + 1);
            if !e.is_empty() {
                out.push_str(&format!("{}}} else {{\n", pad));
                write_stmt(e, out, indent + 1);
            }
            out.push_str(&format!("{}}}\n", pad));
        }
        Stmt::For(l) => {
            out.push_str(&format!(
                "{}for ({} = 0; {} < {}; {} = {} + 1) {{\n",
                pad, l.counter, l.counter, l.bound, l.counter, l.counter
            ));
            write_stmt(&l.body, out, indent + 1);
            out.push_str(&format!("{}}}\n", pad));
        }
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_stmt(self, &mut out, 0);
        write!(f, "{}", out)
    }
}

impl fmt::Display for HoareTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "assume({});", self.pre)?;
        write!(f, "{}", self.prog)?;
        writeln!(f, "assert({});", self.post)
    }
}
