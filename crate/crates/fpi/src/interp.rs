//! Concrete big-step interpreter and formula evaluator.
//!
//! Serves as the semantics oracle for the transformation passes and for
//! counterexample replay. Arithmetic is exact (i128, checked); division
//! is Euclidean, matching the SMT encoding.

use crate::ast::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterpError {
    #[error("division by zero in '{0}'")]
    DivisionByZero(String),
    #[error("uninitialized read of {0}")]
    UninitializedRead(String),
    #[error("negative array index {idx} into '{array}'")]
    NegativeIndex { array: Name, idx: i128 },
    #[error("unbound variable '{0}'")]
    UnboundVariable(Name),
    #[error("arithmetic overflow in '{0}'")]
    Overflow(String),
}

/// Program state: scalar environment, array environment, and the value
/// of the parameter N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgState {
    pub n: i128,
    pub scalars: BTreeMap<Name, i128>,
    pub arrays: BTreeMap<Name, Vec<Option<i128>>>,
}

impl ProgState {
    pub fn new(n: i128) -> ProgState {
        ProgState { n, scalars: BTreeMap::new(), arrays: BTreeMap::new() }
    }

    pub fn set_scalar(&mut self, name: impl Into<Name>, v: i128) {
        self.scalars.insert(name.into(), v);
    }

    /// Install an array with the given cells (fully initialized).
    pub fn set_array(&mut self, name: impl Into<Name>, cells: Vec<i128>) {
        self.arrays.insert(name.into(), cells.into_iter().map(Some).collect());
    }

    pub fn array(&self, name: &str) -> Option<Vec<i128>> {
        self.arrays.get(name).map(|c| c.iter().map(|x| x.unwrap_or(0)).collect())
    }

    pub fn scalar(&self, name: &str) -> Option<i128> {
        self.scalars.get(name).copied()
    }

    fn read_cell(&self, array: &Name, idx: i128) -> Result<i128, InterpError> {
        if idx < 0 {
            return Err(InterpError::NegativeIndex { array: array.clone(), idx });
        }
        match self.arrays.get(array) {
            Some(cells) => match cells.get(idx as usize) {
                Some(Some(v)) => Ok(*v),
                _ => Err(InterpError::UninitializedRead(format!("{}[{}]", array, idx))),
            },
            None => Err(InterpError::UninitializedRead(format!("{}[{}]", array, idx))),
        }
    }

    fn write_cell(&mut self, array: &Name, idx: i128, v: i128) -> Result<(), InterpError> {
        if idx < 0 {
            return Err(InterpError::NegativeIndex { array: array.clone(), idx });
        }
        let cells = self.arrays.entry(array.clone()).or_default();
        let i = idx as usize;
        if cells.len() <= i {
            cells.resize(i + 1, None);
        }
        cells[i] = Some(v);
        Ok(())
    }
}

pub fn eval_expr(e: &Expr, st: &ProgState) -> Result<i128, InterpError> {
    match e {
        Expr::Const(c) => Ok(*c),
        Expr::Param => Ok(st.n),
        Expr::Var(v) => st
            .scalars
            .get(v)
            .copied()
            .ok_or_else(|| InterpError::UnboundVariable(v.clone())),
        Expr::Read(a, idx) => {
            let i = eval_expr(idx, st)?;
            st.read_cell(a, i)
        }
        Expr::Bin(op, a, b) => {
            let x = eval_expr(a, st)?;
            let y = eval_expr(b, st)?;
            let r = match op {
                BinOp::Add => x.checked_add(y),
                BinOp::Sub => x.checked_sub(y),
                BinOp::Mul => x.checked_mul(y),
                BinOp::Div => {
                    if y == 0 {
                        return Err(InterpError::DivisionByZero(e.to_string()));
                    }
                    Some(x.div_euclid(y))
                }
            };
            r.ok_or_else(|| InterpError::Overflow(e.to_string()))
        }
    }
}

pub fn eval_bool(b: &BoolExpr, st: &ProgState) -> Result<bool, InterpError> {
    match b {
        BoolExpr::Rel(op, x, y) => Ok(op.eval(eval_expr(x, st)?, eval_expr(y, st)?)),
        BoolExpr::And(x, y) => Ok(eval_bool(x, st)? && eval_bool(y, st)?),
        BoolExpr::Or(x, y) => Ok(eval_bool(x, st)? || eval_bool(y, st)?),
        BoolExpr::Not(x) => Ok(!eval_bool(x, st)?),
    }
}

pub fn eval_formula(f: &Formula, st: &ProgState) -> Result<bool, InterpError> {
    match f {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Qf(b) => eval_bool(b, st),
        Formula::Forall(q) => {
            let lo = eval_expr(&q.lo, st)?;
            let hi = eval_expr(&q.hi, st)?;
            let mut scoped = st.clone();
            for i in lo..hi {
                scoped.set_scalar(q.idx.clone(), i);
                if !eval_bool(&q.body, &scoped)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Exists(q) => {
            let lo = eval_expr(&q.lo, st)?;
            let hi = eval_expr(&q.hi, st)?;
            let mut scoped = st.clone();
            for i in lo..hi {
                scoped.set_scalar(q.idx.clone(), i);
                if eval_bool(&q.body, &scoped)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::And(fs) => {
            for sub in fs {
                if !eval_formula(sub, st)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(fs) => {
            for sub in fs {
                if eval_formula(sub, st)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

/// Big-step execution. Loops iterate exactly `max(bound, 0)` times.
pub fn interpret(prog: &Stmt, st: &mut ProgState) -> Result<(), InterpError> {
    match prog {
        Stmt::Assign(v, e) => {
            let val = eval_expr(e, st)?;
            st.set_scalar(v.clone(), val);
            Ok(())
        }
        Stmt::Store(a, idx, e) => {
            let i = eval_expr(idx, st)?;
            let val = eval_expr(e, st)?;
            st.write_cell(a, i, val)
        }
        Stmt::Seq(ss) => {
            for s in ss {
                interpret(s, st)?;
            }
            Ok(())
        }
        Stmt::If(c, t, e) => {
            if eval_bool(c, st)? {
                interpret(t, st)
            } else {
                interpret(e, st)
            }
        }
        Stmt::For(l) => {
            let bound = eval_expr(&l.bound, st)?;
            let mut i = 0;
            while i < bound {
                st.set_scalar(l.counter.clone(), i);
                interpret(&l.body, st)?;
                i += 1;
            }
            // Counter holds the bound after the loop, as in the CFG view.
            if bound >= 0 {
                st.set_scalar(l.counter.clone(), bound.max(0));
            }
            Ok(())
        }
    }
}

/// Run a program from an initial state, returning the final state.
pub fn run(prog: &Stmt, init: &ProgState) -> Result<ProgState, InterpError> {
    let mut st = init.clone();
    interpret(prog, &mut st)?;
    Ok(st)
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

    const CUBES: &str = r#"
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

    #[test]
    fn runs_sum_chain_at_three() {
        let t = parse_program(SS).unwrap();
        let mut st = ProgState::new(3);
        st.set_array("A", vec![1, 1, 1]);
        interpret(&t.prog, &mut st).unwrap();
        // After the second loop every cell is 1 + 3 = 4; S ends at 3 + 12.
        assert_eq!(st.array("A").unwrap(), vec![4, 4, 4]);
        assert_eq!(st.scalar("S"), Some(15));
        assert!(eval_formula(&t.post, &st).unwrap());
    }

    #[test]
    fn runs_cube_chain_at_two() {
        let t = parse_program(CUBES).unwrap();
        let mut st = ProgState::new(2);
        interpret(&t.prog, &mut st).unwrap();
        assert_eq!(st.array("C").unwrap(), vec![0, 1]);
        assert_eq!(st.array("B").unwrap(), vec![1, 7]);
        assert_eq!(st.array("A").unwrap(), vec![6, 12]);
        assert!(eval_formula(&t.post, &st).unwrap());
    }

    #[test]
    fn empty_program_preserves_state() {
        let mut st = ProgState::new(4);
        st.set_scalar("x", 9);
        let before = st.clone();
        interpret(&Stmt::empty(), &mut st).unwrap();
        assert_eq!(st, before);
    }

    #[test]
    fn division_by_zero_traps() {
        let t = parse_program("assume(true); x = 1 / y; assert(true);").unwrap();
        let mut st = ProgState::new(1);
        st.set_scalar("y", 0);
        assert!(matches!(
            interpret(&t.prog, &mut st),
            Err(InterpError::DivisionByZero(_))
        ));
    }

    #[test]
    fn uninitialized_read_traps() {
        let t = parse_program("assume(true); x = A[0]; assert(true);").unwrap();
        let mut st = ProgState::new(1);
        assert!(matches!(
            interpret(&t.prog, &mut st),
            Err(InterpError::UninitializedRead(_))
        ));
    }
}
