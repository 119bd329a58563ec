//! Verifier for array-manipulating programs whose size parameter `N` is
//! symbolic. Hoare triples `{pre} P_N {post}` are proved for every
//! `N >= 1` by inducting on the whole program: a difference program for
//! `P_N` versus `P_{N-1}` is synthesized, pre- and post-conditions are
//! strengthened with weakest pre-conditions, and the remaining loop-free
//! obligations are discharged with an external SMT solver. No loop
//! invariants are ever computed.

pub mod ast;
pub mod bench;
pub mod cfg;
pub mod depend;
pub mod diff;
pub mod driver;
pub mod fuzz;
pub mod interp;
pub mod parser;
pub mod peel;
pub mod precond;
pub mod rename;
pub mod smt;
pub mod sym;

pub use ast::{BoolExpr, Expr, Formula, HoareTriple, Stmt};
pub use parser::parse_program;
