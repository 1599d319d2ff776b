use std::ops::{Add, Div, Mul, Neg, Sub};

use super::expr::{BinOp, Expr, FieldExpr, Func, Var};
use crate::error::{Error, Result};
use crate::tensor::{CMat, C64};

/// Number type the evaluator runs over: plain complex values or Taylor jets.
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(c: C64) -> Self;
    fn value(&self) -> C64;
    /// True when all derivative components vanish.
    fn is_constant(&self) -> bool;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn conj(&self) -> Self;
    fn re(&self) -> Self;
    fn im(&self) -> Self;
    /// Power with a constant exponent.
    fn powc(&self, p: C64) -> Self;
}

impl Scalar for C64 {
    fn constant(c: C64) -> Self {
        c
    }
    fn value(&self) -> C64 {
        *self
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn exp(&self) -> Self {
        C64::exp(*self)
    }
    fn ln(&self) -> Self {
        C64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        C64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        C64::sin(*self)
    }
    fn cos(&self) -> Self {
        C64::cos(*self)
    }
    fn conj(&self) -> Self {
        C64::conj(self)
    }
    fn re(&self) -> Self {
        C64::new(self.re, 0.0)
    }
    fn im(&self) -> Self {
        C64::new(self.im, 0.0)
    }
    fn powc(&self, p: C64) -> Self {
        match integer_exponent(p) {
            Some(k) => self.powi(k),
            None => C64::powc(*self, p),
        }
    }
}

pub(crate) fn integer_exponent(p: C64) -> Option<i32> {
    (p.im == 0.0 && p.re.fract() == 0.0 && p.re.abs() <= 64.0).then_some(p.re as i32)
}

fn domain(e: &Expr, message: impl Into<String>) -> Error {
    Error::Domain {
        subtree: e.to_string(),
        message: message.into(),
    }
}

/// Evaluates `e` with variables supplied by `env`.
pub fn eval<S: Scalar>(e: &Expr, env: &dyn Fn(Var) -> Option<S>) -> Result<S> {
    let mut idx = Vec::new();
    eval_in(e, env, &mut idx)
}

fn eval_in<S: Scalar>(e: &Expr, env: &dyn Fn(Var) -> Option<S>, idx: &mut Vec<(String, i64)>) -> Result<S> {
    let bound = |idx: &Vec<(String, i64)>, name: &str| idx.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v);
    Ok(match e {
        Expr::Num(c) => S::constant(*c),
        Expr::Var(v) => env(*v).ok_or_else(|| Error::input(format!("variable `{v}` is not bound")))?,
        Expr::Index(name) => {
            let v = bound(idx, name).ok_or_else(|| Error::input(format!("unbound sum index `{name}`")))?;
            S::constant(C64::new(v as f64, 0.0))
        }
        Expr::Indexed(kind, name) => {
            let v = bound(idx, name).ok_or_else(|| Error::input(format!("unbound sum index `{name}`")))?;
            let index = kind
                .index_from_printed(v)
                .ok_or_else(|| domain(e, format!("index value {v} out of range")))?;
            let var = Var { kind: *kind, index };
            env(var).ok_or_else(|| Error::input(format!("variable `{var}` is not bound")))?
        }
        Expr::Neg(a) => -eval_in(a, env, idx)?,
        Expr::Bin(op, a, b) => {
            let x = eval_in(a, env, idx)?;
            let y = eval_in(b, env, idx)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y.value() == C64::new(0.0, 0.0) {
                        return Err(domain(e, "division by zero"));
                    }
                    x / y
                }
                BinOp::Pow => power(e, x, y)?,
            }
        }
        Expr::Call(func, args) => {
            let x = eval_in(&args[0], env, idx)?;
            match func {
                Func::Exp => x.exp(),
                Func::Log => {
                    if !(x.value().re > 0.0) {
                        return Err(domain(e, format!("log argument {} has non-positive real part", x.value())));
                    }
                    x.ln()
                }
                Func::Pow => {
                    let y = eval_in(&args[1], env, idx)?;
                    power(e, x, y)?
                }
                Func::Abs2 => x.clone() * x.conj(),
                Func::Conj => x.conj(),
                Func::Sqrt => {
                    if x.value() == C64::new(0.0, 0.0) && !x.is_constant() {
                        return Err(domain(e, "sqrt is not differentiable at 0"));
                    }
                    x.sqrt()
                }
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Re => x.re(),
                Func::Im => x.im(),
            }
        }
        Expr::Sum { index, lo, hi, body } => {
            let mut acc = S::constant(C64::new(0.0, 0.0));
            for k in *lo..=*hi {
                idx.push((index.clone(), k));
                let term = eval_in(body, env, idx);
                idx.pop();
                acc = acc + term?;
            }
            acc
        }
    })
}

fn power<S: Scalar>(e: &Expr, base: S, exp: S) -> Result<S> {
    if exp.is_constant() {
        let p = exp.value();
        if let Some(k) = integer_exponent(p) {
            if k < 0 && base.value() == C64::new(0.0, 0.0) {
                return Err(domain(e, "negative power of zero"));
            }
            return Ok(base.powc(p));
        }
        if !(base.value().re > 0.0) && !base.is_constant() {
            return Err(domain(e, "non-integer power of a base with non-positive real part"));
        }
        return Ok(base.powc(p));
    }
    if !(base.value().re > 0.0) {
        return Err(domain(e, "variable exponent needs a base with positive real part"));
    }
    Ok((exp * base.ln()).exp())
}

/// Evaluates a scalar or matrix field at complex point values.
pub fn eval_field(f: &FieldExpr, env: &dyn Fn(Var) -> Option<C64>) -> Result<FieldValue> {
    match f {
        FieldExpr::Scalar(e) => Ok(FieldValue::Scalar(eval(e, env)?)),
        FieldExpr::Matrix(rows) => {
            let dim = rows.len();
            let mut m = CMat::zeros(dim, dim);
            for (a, row) in rows.iter().enumerate() {
                for (b, entry) in row.iter().enumerate() {
                    m[(a, b)] = eval(entry, env)?;
                }
            }
            Ok(FieldValue::Matrix(m))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Scalar(C64),
    Matrix(CMat),
}

/// Environment binding base variables `z` and fiber variables `w`.
pub fn point_env<'a>(z: &'a [C64], w: &'a [C64]) -> impl Fn(Var) -> Option<C64> + 'a {
    use super::expr::VarKind;
    move |v: Var| match v.kind {
        VarKind::Base => z.get(v.index).copied(),
        VarKind::Fiber => w.get(v.index).copied(),
        VarKind::Homog => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse_scalar;

    fn at(src: &str, z: &[C64], w: &[C64]) -> Result<C64> {
        eval(&parse_scalar(src).unwrap(), &point_env(z, w))
    }

    #[test]
    fn spec_examples() {
        let v = at("abs2(z1)", &[C64::new(1.0, 1.0)], &[]).unwrap();
        assert_eq!(v, C64::new(2.0, 0.0));
        let v = at("log(1+abs2(w1))", &[], &[C64::new(0.0, 0.0)]).unwrap();
        assert_eq!(v, C64::new(0.0, 0.0));
        let v = at("1/(1+abs2(w1))^2", &[], &[C64::new(1.0, 0.0)]).unwrap();
        assert_eq!(v, C64::new(0.25, 0.0));
    }

    #[test]
    fn domain_errors_name_subtree() {
        match at("1 + log(abs2(z1))", &[C64::new(0.0, 0.0)], &[]) {
            Err(Error::Domain { subtree, .. }) => assert_eq!(subtree, "log(abs2(z1))"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(at("1/z1", &[C64::new(0.0, 0.0)], &[]), Err(Error::Domain { .. })));
        assert!(matches!(at("z2", &[C64::new(0.0, 0.0)], &[]), Err(Error::Input(_))));
    }

    #[test]
    fn functions() {
        let z = [C64::new(0.3, -0.4)];
        assert!((at("re(z1)", &z, &[]).unwrap() - C64::new(0.3, 0.0)).norm() < 1e-15);
        assert!((at("im(z1)", &z, &[]).unwrap() - C64::new(-0.4, 0.0)).norm() < 1e-15);
        assert!((at("conj(z1)", &z, &[]).unwrap() - z[0].conj()).norm() < 1e-15);
        assert!((at("sqrt(abs2(z1))", &z, &[]).unwrap() - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((at("pow(abs2(z1), 1.5)", &z, &[]).unwrap() - C64::new(0.125, 0.0)).norm() < 1e-15);
        assert!((at("sin(pi/2) + cos(0)", &z, &[]).unwrap() - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((at("sum(k, 1, 3, k)", &z, &[]).unwrap() - C64::new(6.0, 0.0)).norm() < 1e-15);
    }
}
