//! Size-aware types for a first-order list language: parsing, evaluation,
//! checking of polynomial size annotations and test-based inference of
//! size polynomials.

pub mod check;
pub mod eval;
pub mod infer;
pub mod poly;
pub mod syntax;
pub mod types;

pub use poly::{Polynomial, Rational};
pub use syntax::{parse_program, Program};
pub use types::{FirstOrderType, SizedType};
