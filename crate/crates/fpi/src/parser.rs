//! Recursive-descent parser for `.fpi` sources.
//!
//! ```text
//! program := "assume" "(" formula ")" ";" stmt* "assert" "(" formula ")" ";"
//! stmt    := ID "=" expr ";"
//!          | ID "[" expr "]" "=" expr ";"
//!          | "if" "(" bool ")" block ("else" block)?
//!          | "for" "(" ID "=" "0" ";" ID "<" expr ";" ID "=" ID "+" "1" ")" block
//! formula := "true" | "false" | quant | bool, combined with && and ||
//! quant   := ("forall"|"exists") ID "in" "[" expr "," expr ")" "::" bool
//! ```
//!
//! `//` starts a line comment. `N` is the reserved parameter.

use crate::ast::*;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("grammar violation at {line}:{col}: {msg}")]
    Grammar { line: usize, col: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i128),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCTS: &[&str] = &[
    "::", "==", "<=", ">=", "&&", "||", "(", ")", "[", "]", "{", "}", ";", ",", "=", "<", ">",
    "+", "-", "*", "/", "!",
];

fn lex(text: &str) -> Result<Vec<SpannedTok>, ParseError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '/' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let (sl, sc) = (line, col);
            let mut val: i128 = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                val = val
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((chars[i] as u8 - b'0') as i128))
                    .ok_or_else(|| ParseError::Syntax {
                        line: sl,
                        col: sc,
                        msg: "integer literal too large".into(),
                    })?;
                i += 1;
                col += 1;
            }
            toks.push(SpannedTok { tok: Tok::Int(val), line: sl, col: sc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let (sl, sc) = (line, col);
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            toks.push(SpannedTok { tok: Tok::Ident(s), line: sl, col: sc });
            continue;
        }
        let mut matched = false;
        for p in PUNCTS {
            if chars[i..].starts_with(&p.chars().collect::<Vec<_>>()[..]) {
                toks.push(SpannedTok { tok: Tok::Punct(p), line, col });
                i += p.len();
                col += p.len();
                matched = true;
                break;
            }
        }
        if !matched {
            return Err(ParseError::Syntax {
                line,
                col,
                msg: format!("unexpected character '{}'", c),
            });
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
    /// Names used as loop counters anywhere in the program.
    counters: BTreeSet<Name>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.col))
            .unwrap_or((0, 0))
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::Syntax { line, col, msg: msg.into() }
    }

    fn gerr(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::Grammar { line, col, msg: msg.into() }
    }

    fn eat_punct(&mut self, p: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Punct(q)) if *q == p => {
                self.pos += 1;
                Ok(())
            }
            other => Err(self.err(format!("expected '{}', found {:?}", p, other))),
        }
    }

    fn try_punct(&mut self, p: &'static str) -> bool {
        if let Some(Tok::Punct(q)) = self.peek() {
            if *q == p {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn eat_ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => Err(self.err(format!("expected identifier, found {:?}", other))),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            other => Err(self.err(format!("expected '{}', found {:?}", kw, other))),
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    // -- expressions ---------------------------------------------------

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            if self.try_punct("+") {
                let rhs = self.parse_term()?;
                lhs = Expr::bin(BinOp::Add, lhs, rhs);
            } else if self.try_punct("-") {
                let rhs = self.parse_term()?;
                lhs = Expr::bin(BinOp::Sub, lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_factor()?;
        loop {
            if self.try_punct("*") {
                let rhs = self.parse_factor()?;
                lhs = Expr::bin(BinOp::Mul, lhs, rhs);
            } else if self.try_punct("/") {
                let rhs = self.parse_factor()?;
                lhs = Expr::bin(BinOp::Div, lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Punct("-")) => {
                self.pos += 1;
                let inner = self.parse_factor()?;
                match inner {
                    Expr::Const(c) => Ok(Expr::Const(-c)),
                    other => Ok(Expr::sub(Expr::Const(0), other)),
                }
            }
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.parse_expr()?;
                self.eat_punct(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == PARAM {
                    return Ok(Expr::Param);
                }
                if self.try_punct("[") {
                    let idx = self.parse_expr()?;
                    self.eat_punct("]")?;
                    if idx.reads_array() {
                        return Err(self.gerr(format!(
                            "array read inside index expression of {}[..]; hoist it into a temporary first",
                            name
                        )));
                    }
                    return Ok(Expr::read(name, idx));
                }
                Ok(Expr::Var(name))
            }
            other => Err(self.err(format!("expected expression, found {:?}", other))),
        }
    }

    // -- boolean expressions / formulas ---------------------------------

    fn parse_bool(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.parse_bool_conj()?;
        while self.try_punct("||") {
            let rhs = self.parse_bool_conj()?;
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_bool_conj(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.parse_bool_prim()?;
        while self.try_punct("&&") {
            let rhs = self.parse_bool_prim()?;
            lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_bool_prim(&mut self) -> Result<BoolExpr, ParseError> {
        if self.try_punct("!") {
            self.eat_punct("(")?;
            let inner = self.parse_bool()?;
            self.eat_punct(")")?;
            return Ok(inner.not());
        }
        if let Some(Tok::Punct("(")) = self.peek() {
            // Could be a parenthesized boolean or a parenthesized
            // arithmetic sub-expression; backtrack on failure.
            let save = self.pos;
            self.pos += 1;
            if let Ok(b) = self.parse_bool() {
                if self.try_punct(")") {
                    // Reject `(e1) < e2`-style: if a relop follows, the
                    // parens belonged to arithmetic.
                    if !matches!(
                        self.peek(),
                        Some(Tok::Punct("==" | "<" | "<=" | ">" | ">=" | "+" | "-" | "*" | "/"))
                    ) {
                        return Ok(b);
                    }
                }
            }
            self.pos = save;
        }
        let lhs = self.parse_expr()?;
        let op = match self.peek() {
            Some(Tok::Punct("==")) => RelOp::Eq,
            Some(Tok::Punct("<")) => RelOp::Lt,
            Some(Tok::Punct("<=")) => RelOp::Le,
            Some(Tok::Punct(">")) => RelOp::Gt,
            Some(Tok::Punct(">=")) => RelOp::Ge,
            other => return Err(self.err(format!("expected relational operator, found {:?}", other))),
        };
        self.pos += 1;
        let rhs = self.parse_expr()?;
        Ok(BoolExpr::Rel(op, lhs, rhs))
    }

    fn parse_formula(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.parse_formula_conj()?];
        while self.try_punct("||") {
            parts.push(self.parse_formula_conj()?);
        }
        if parts.len() == 1 {
            Ok(parts.pop().unwrap())
        } else {
            Ok(Formula::Or(parts))
        }
    }

    fn parse_formula_conj(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.parse_formula_prim()?];
        while self.try_punct("&&") {
            parts.push(self.parse_formula_prim()?);
        }
        if parts.len() == 1 {
            Ok(parts.pop().unwrap())
        } else {
            Ok(Formula::And(parts))
        }
    }

    fn parse_formula_prim(&mut self) -> Result<Formula, ParseError> {
        if self.peek_keyword("true") {
            self.pos += 1;
            return Ok(Formula::True);
        }
        if self.peek_keyword("false") {
            self.pos += 1;
            return Ok(Formula::False);
        }
        if self.peek_keyword("forall") || self.peek_keyword("exists") {
            let is_forall = self.peek_keyword("forall");
            self.pos += 1;
            let idx = self.eat_ident()?;
            if idx == PARAM {
                return Err(self.gerr("quantified index must not be the parameter N"));
            }
            self.eat_keyword("in")?;
            self.eat_punct("[")?;
            let lo = self.parse_expr()?;
            self.eat_punct(",")?;
            let hi = self.parse_expr()?;
            self.eat_punct(")")?;
            self.eat_punct("::")?;
            let body = self.parse_bool_prim_or_paren()?;
            let q = Quant { idx, lo, hi, body };
            return Ok(if is_forall { Formula::Forall(q) } else { Formula::Exists(q) });
        }
        if let Some(Tok::Punct("(")) = self.peek() {
            // Try a parenthesized formula, fall back to a relation.
            let save = self.pos;
            self.pos += 1;
            if let Ok(f) = self.parse_formula() {
                if self.try_punct(")")
                    && !matches!(
                        self.peek(),
                        Some(Tok::Punct("==" | "<" | "<=" | ">" | ">=" | "+" | "-" | "*" | "/"))
                    )
                {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        Ok(Formula::Qf(self.parse_bool()?))
    }

    /// Quantifier bodies: a parenthesized boolean or a single relation
    /// chain (`&&`/`||` bind inside parens only).
    fn parse_bool_prim_or_paren(&mut self) -> Result<BoolExpr, ParseError> {
        if let Some(Tok::Punct("(")) = self.peek() {
            let save = self.pos;
            self.pos += 1;
            if let Ok(b) = self.parse_bool() {
                if self.try_punct(")")
                    && !matches!(
                        self.peek(),
                        Some(Tok::Punct("==" | "<" | "<=" | ">" | ">=" | "+" | "-" | "*" | "/"))
                    )
                {
                    return Ok(b);
                }
            }
            self.pos = save;
        }
        self.parse_bool_prim()
    }

    // -- statements ------------------------------------------------------

    fn parse_block(&mut self, in_loop: bool) -> Result<Vec<Stmt>, ParseError> {
        self.eat_punct("{")?;
        let mut out = Vec::new();
        while !self.try_punct("}") {
            out.push(self.parse_stmt(in_loop)?);
        }
        Ok(out)
    }

    fn parse_stmt(&mut self, in_loop: bool) -> Result<Stmt, ParseError> {
        if self.peek_keyword("for") {
            if in_loop {
                return Err(self.gerr("nested loop: loop bodies must be loop-free"));
            }
            return self.parse_for();
        }
        if self.peek_keyword("if") {
            self.pos += 1;
            self.eat_punct("(")?;
            let cond = self.parse_bool()?;
            self.eat_punct(")")?;
            let then_b = self.parse_block(in_loop)?;
            let else_b = if self.peek_keyword("else") {
                self.pos += 1;
                self.parse_block(in_loop)?
            } else {
                Vec::new()
            };
            return Ok(Stmt::If(cond, Box::new(Stmt::Seq(then_b)), Box::new(Stmt::Seq(else_b))));
        }
        // assignment
        let name = self.eat_ident()?;
        if name == PARAM {
            return Err(self.gerr("the parameter N must not be assigned"));
        }
        if self.try_punct("[") {
            let idx = self.parse_expr()?;
            self.eat_punct("]")?;
            if idx.reads_array() {
                return Err(self.gerr("array read inside a store index; hoist it into a temporary"));
            }
            self.eat_punct("=")?;
            let rhs = self.parse_expr()?;
            self.eat_punct(";")?;
            return Ok(Stmt::Store(name, idx, rhs));
        }
        self.eat_punct("=")?;
        let rhs = self.parse_expr()?;
        self.eat_punct(";")?;
        Ok(Stmt::Assign(name, rhs))
    }

    fn parse_for(&mut self) -> Result<Stmt, ParseError> {
        self.eat_keyword("for")?;
        self.eat_punct("(")?;
        let counter = self.eat_ident()?;
        if counter == PARAM {
            return Err(self.gerr("loop counter must not be the parameter N"));
        }
        self.eat_punct("=")?;
        match self.peek() {
            Some(Tok::Int(0)) => {
                self.pos += 1;
            }
            _ => return Err(self.gerr("loop counter must be initialized to 0")),
        }
        self.eat_punct(";")?;
        let c2 = self.eat_ident()?;
        if c2 != counter {
            return Err(self.gerr("loop condition must test the loop counter"));
        }
        self.eat_punct("<")?;
        let bound = self.parse_expr()?;
        self.eat_punct(";")?;
        let c3 = self.eat_ident()?;
        self.eat_punct("=")?;
        let c4 = self.eat_ident()?;
        self.eat_punct("+")?;
        match self.peek() {
            Some(Tok::Int(1)) => {
                self.pos += 1;
            }
            _ => return Err(self.gerr("loop counter must be incremented by 1")),
        }
        if c3 != counter || c4 != counter {
            return Err(self.gerr("loop increment must update the loop counter"));
        }
        self.eat_punct(")")?;
        // LBnd may reference constants and N only.
        let mut bad = None;
        bound.walk(&mut |e| match e {
            Expr::Var(v) => bad = Some(format!("scalar '{}' in loop bound", v)),
            Expr::Read(a, _) => bad = Some(format!("array read of '{}' in loop bound", a)),
            _ => {}
        });
        if let Some(msg) = bad {
            return Err(self.gerr(format!("loop bounds may reference constants and N only: {}", msg)));
        }
        self.counters.insert(counter.clone());
        let body = self.parse_block(true)?;
        Ok(Stmt::For(LoopStmt { counter, bound, body: Box::new(Stmt::Seq(body)) }))
    }
}

/// Parse a `.fpi` source into a Hoare triple.
pub fn parse_program(text: &str) -> Result<HoareTriple, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, counters: BTreeSet::new() };
    p.eat_keyword("assume")?;
    p.eat_punct("(")?;
    let pre = p.parse_formula()?;
    p.eat_punct(")")?;
    p.eat_punct(";")?;
    let mut stmts = Vec::new();
    while !p.peek_keyword("assert") {
        if p.peek().is_none() {
            return Err(p.err("expected 'assert(...)' before end of input"));
        }
        stmts.push(p.parse_stmt(false)?);
    }
    p.eat_keyword("assert")?;
    p.eat_punct("(")?;
    let post = p.parse_formula()?;
    p.eat_punct(")")?;
    p.eat_punct(";")?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after assert(...)"));
    }
    let prog = Stmt::Seq(stmts);
    // Loop counters must never be assigned outside their headers.
    let counters = p.counters;
    let mut bad: Option<String> = None;
    check_counter_writes(&prog, &counters, &mut bad);
    if let Some(msg) = bad {
        return Err(ParseError::Grammar { line: 0, col: 0, msg });
    }
    Ok(HoareTriple { pre, prog, post })
}

fn check_counter_writes(s: &Stmt, counters: &BTreeSet<Name>, bad: &mut Option<String>) {
    match s {
        Stmt::Assign(v, _) => {
            if counters.contains(v) {
                *bad = Some(format!("loop counter '{}' assigned outside its loop header", v));
            }
        }
        Stmt::Store(..) => {}
        Stmt::Seq(ss) => {
            for sub in ss {
                check_counter_writes(sub, counters, bad);
            }
        }
        Stmt::If(_, t, e) => {
            check_counter_writes(t, counters, bad);
            check_counter_writes(e, counters, bad);
        }
        Stmt::For(l) => check_counter_writes(&l.body, counters, bad),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SS: &str = r#"
// running sum/update/sum chain
assume(forall i in [0, N) :: A[i] == 1);
S = 0;
for (i = 0; i < N; i = i + 1) {
  S = S + A[i];
}
for (i = 0; i < N; i = i + 1) {
  A[i] = A[i] + S;
}
for (i = 0; i < N; i = i + 1) {
  S = S + A[i];
}
assert(S == N * (N + 2));
"#;

    #[test]
    fn parses_running_example() {
        let t = parse_program(SS).unwrap();
        match &t.pre {
            Formula::Forall(q) => {
                assert_eq!(q.idx, "i");
                assert_eq!(q.lo, Expr::Const(0));
                assert_eq!(q.hi, Expr::Param);
            }
            other => panic!("unexpected pre: {:?}", other),
        }
        match &t.prog {
            Stmt::Seq(ss) => assert_eq!(ss.len(), 4),
            _ => panic!(),
        }
        assert_eq!(
            t.post,
            Formula::Qf(BoolExpr::Rel(
                RelOp::Eq,
                Expr::var("S"),
                Expr::mul(Expr::Param, Expr::add(Expr::Param, Expr::Const(2)))
            ))
        );
    }

    #[test]
    fn empty_program() {
        let t = parse_program("assume(true); assert(true);").unwrap();
        assert!(t.prog.is_empty());
        assert_eq!(t.pre, Formula::True);
        assert_eq!(t.post, Formula::True);
    }

    #[test]
    fn rejects_nested_loops() {
        let src = r#"
assume(true);
for (i = 0; i < N; i = i + 1) {
  for (j = 0; j < N; j = j + 1) {
    A[j] = 0;
  }
}
assert(true);
"#;
        match parse_program(src) {
            Err(ParseError::Grammar { msg, .. }) => assert!(msg.contains("nested"), "{}", msg),
            other => panic!("expected grammar violation, got {:?}", other),
        }
    }

    #[test]
    fn rejects_scalar_loop_bound() {
        let src = "assume(true); for (i = 0; i < m; i = i + 1) { A[i] = 0; } assert(true);";
        assert!(matches!(parse_program(src), Err(ParseError::Grammar { .. })));
    }

    #[test]
    fn rejects_nested_array_read_index() {
        let src = "assume(true); A[B[0]] = 1; assert(true);";
        assert!(matches!(parse_program(src), Err(ParseError::Grammar { .. })));
    }

    #[test]
    fn rejects_counter_assignment() {
        let src = r#"
assume(true);
for (i = 0; i < N; i = i + 1) { A[i] = 0; }
i = 5;
assert(true);
"#;
        assert!(matches!(parse_program(src), Err(ParseError::Grammar { .. })));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_program("assume(true); x = ; assert(true);") {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn roundtrip_through_pretty_printer() {
        for src in [
            SS,
            "assume(true); assert(true);",
            r#"assume(exists j in [0, N) :: A[j] >= 100);
x = 3;
if (x > 2) { y = 1; } else { y = 0; A[0] = y + 1; }
assert((y == 1) && (exists j in [0, N) :: A[j] >= 100));"#,
        ] {
            let t = parse_program(src).unwrap();
            let printed = t.to_string();
            let t2 = parse_program(&printed).unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
            assert_eq!(t, t2, "round-trip mismatch for:\n{}", printed);
        }
    }
}
