//! Operator convexity checks: generating-series arithmetic, operator
//! families of Mastroianni type, functional families `{A_t}`, sign
//! classification of coefficient sequences, and the functionals `A`, `C_m`
//! and `B_m` with a sweep harness on top.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod family;
pub mod functional;
pub mod harness;
pub mod inequality;
pub mod series;
pub mod values;

pub use error::{Error, Result};
pub use family::{Domain, MastroianniFamily, OperatorFamily, PhiOracle};
pub use functional::{FunctionalFamily, TestFunction};
pub use inequality::{SignClassification, SignVerdict};
pub use series::TruncatedSeries;
pub use values::{Evaluator, FunctionalValue, Method, Truncation};
