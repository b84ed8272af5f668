//! A small bottom-up Datalog engine.
//!
//! The dialect is plain Datalog with stratified negation and a handful of
//! infix builtins (`=`, `!=`, `<`, `<=`, `~=` / `norm_eq(A, B)`). Programs are
//! evaluated stratum by stratum with semi-naive iteration ([`evaluate`]); a
//! naive re-derivation evaluator ([`evaluate_naive`]) is kept alongside as a
//! cross-check.
//!
//! ```
//! use netinfer_datalog::{evaluate, parse_facts, parse_program};
//!
//! let program = parse_program(
//!     "path(X, Y) :- edge(X, Y).\n\
//!      path(X, Z) :- path(X, Y), edge(Y, Z).",
//! )
//! .unwrap();
//! let edb = parse_facts("edge(a, b). edge(b, c).").unwrap();
//! let model = evaluate(&program, edb).unwrap();
//! assert_eq!(model.len(), 3);
//! ```

mod ast;
mod error;
mod eval;
mod naive;
mod parser;
mod stratify;
mod value;

pub use ast::{Atom, CmpOp, Comparison, Fact, FactSet, Literal, Program, Rule};
pub use error::{DatalogError, Position};
pub use eval::{evaluate, evaluate_naive, Evaluator, Normalizer};
pub use parser::{parse_facts, parse_program};
pub use stratify::stratify;
pub use value::{Term, Value};
