//! Numerical curvature and positivity analysis for Hermitian and Finsler
//! metrics on holomorphic vector bundles, computed on local charts.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// `Expr::add` and friends are folding constructors, not operator impls.
#![allow(clippy::should_implement_trait)]
// Index loops mirror the tensor notation.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod diff;
pub mod dsl;
pub mod error;
pub mod finsler;
pub mod hermitian;
pub mod l2;
pub mod quadrature;
pub mod report;
pub mod selfcheck;
pub mod tensor;
pub mod vanishing;

pub use error::{Error, Result};
pub use tensor::{CMat, CurvatureTensor, Verdict, VerdictClass, C64};
