//! Expression language for metrics and weights.
//!
//! Variables: `z1..zn` (base), `w1..wr` (affine fiber chart), `Z0..Zr`
//! (homogeneous fiber). Conjugation enters only through `abs2` and `conj`.

pub mod eval;
pub mod expr;
pub mod parser;
pub mod scene;

pub use eval::{eval, eval_field, point_env, FieldValue, Scalar};
pub use expr::{cofactor_expr, det_expr, BinOp, Expr, FieldExpr, Func, Var, VarKind};
pub use parser::{parse_field, parse_scalar, validate};
pub use scene::{builtin, Scene, Tolerances};
