//! Wirtinger derivatives of fields: exact forward-mode jets for expression
//! trees and Richardson-extrapolated stencils for arbitrary functions.

pub mod stencil;
pub mod taylor;

use serde::Serialize;

use crate::dsl::eval::eval;
use crate::dsl::expr::{Expr, Var};
use crate::error::{Error, Result};
use crate::tensor::{CMat, C64};
pub use stencil::{default_step, VecFn};
use taylor::{wirtinger_first, wirtinger_mixed, T2};

/// First and mixed second Wirtinger derivatives at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: C64,
    /// `d[i] = df/dxi_i`
    pub d: Vec<C64>,
    /// `dbar[j] = df/dxibar_j`
    pub dbar: Vec<C64>,
    /// `dd[(i, j)] = d^2 f / dxi_i dxibar_j`
    pub dd: CMat,
    pub est_error: f64,
}

/// How derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMode {
    /// Forward-mode Taylor arithmetic on the expression tree.
    Forward,
    /// Central differences with Richardson extrapolation.
    Stencil,
}

/// Largest number of complex directions handled in forward mode.
pub const MAX_FORWARD_DIRS: usize = 6;

fn jet_from_real(value: C64, grad: &[C64], hess: impl Fn(usize, usize) -> C64, m: usize, est_error: f64) -> Jet2 {
    let mut d = Vec::with_capacity(m);
    let mut dbar = Vec::with_capacity(m);
    for a in 0..m {
        let (x, y) = wirtinger_first(grad, a);
        d.push(x);
        dbar.push(y);
    }
    let dd = CMat::from_fn(m, m, |a, b| wirtinger_mixed(&hess, a, b));
    Jet2 {
        value,
        d,
        dbar,
        dd,
        est_error,
    }
}

fn forward_k<const K: usize>(e: &Expr, dirs: &[Var], env: &dyn Fn(Var) -> Option<C64>) -> Result<Jet2> {
    let seeded = |v: Var| -> Option<T2<K>> {
        match dirs.iter().position(|d| *d == v) {
            Some(a) => env(v).map(|x| T2::complex_var(x, a)),
            None => env(v).map(T2::constant),
        }
    };
    let t = eval::<T2<K>>(e, &seeded)?;
    Ok(jet_from_real(t.v, &t.g, |i, j| t.h[i][j], dirs.len(), 0.0))
}

/// Exact jet of an expression along the complex directions `dirs`.
pub fn jet2_forward(e: &Expr, dirs: &[Var], env: &dyn Fn(Var) -> Option<C64>) -> Result<Jet2> {
    match dirs.len() {
        0 => forward_k::<0>(e, dirs, env),
        1 => forward_k::<2>(e, dirs, env),
        2 => forward_k::<4>(e, dirs, env),
        3 => forward_k::<6>(e, dirs, env),
        4 => forward_k::<8>(e, dirs, env),
        5 => forward_k::<10>(e, dirs, env),
        6 => forward_k::<12>(e, dirs, env),
        m => Err(Error::Capability(format!(
            "forward differentiation supports at most {MAX_FORWARD_DIRS} complex directions, got {m}"
        ))),
    }
}

/// Stencil jets of a vector-valued function, one per output component.
/// `step` defaults to [`default_step`]; the result is extrapolated from
/// `(h, h/2)` and `est_error` is the discrepancy between the two.
pub fn jet2_fn(f: &VecFn<'_>, point: &[C64], step: Option<f64>) -> Result<Vec<Jet2>> {
    let h = step.unwrap_or_else(|| default_step(point));
    if !(h > 0.0) {
        return Err(Error::input("stencil step must be positive"));
    }
    let m = point.len();
    let coarse = stencil::real_derivs(f, point, h)?;
    let fine = stencil::real_derivs(f, point, h / 2.0)?;
    let rich = |a: C64, b: C64| (4.0 * b - a) / 3.0;
    let q = coarse.value.len();
    let mut out = Vec::with_capacity(q);
    for c in 0..q {
        let grad: Vec<C64> = (0..2 * m).map(|i| rich(coarse.grad[c][i], fine.grad[c][i])).collect();
        let jc = jet_from_real(coarse.value[c], &coarse.grad[c], |i, j| coarse.hess[c][i][j], m, 0.0);
        let jf = jet_from_real(coarse.value[c], &fine.grad[c], |i, j| fine.hess[c][i][j], m, 0.0);
        let mut err = 0.0f64;
        for a in 0..m {
            err = err.max((jc.d[a] - jf.d[a]).norm()).max((jc.dbar[a] - jf.dbar[a]).norm());
        }
        for x in jc.dd.iter().zip(jf.dd.iter()) {
            err = err.max((x.0 - x.1).norm());
        }
        out.push(jet_from_real(
            coarse.value[c],
            &grad,
            |i, j| rich(coarse.hess[c][i][j], fine.hess[c][i][j]),
            m,
            err,
        ));
    }
    Ok(out)
}

/// Builds a point evaluator for `e` with `dirs` as the free coordinates.
pub fn expr_fn<'a>(e: &'a Expr, dirs: &'a [Var], env: &'a (dyn Fn(Var) -> Option<C64> + Sync)) -> impl Fn(&[C64]) -> Result<Vec<C64>> + Sync + 'a {
    move |p: &[C64]| {
        let local = |v: Var| match dirs.iter().position(|d| *d == v) {
            Some(a) => Some(p[a]),
            None => env(v),
        };
        Ok(vec![eval::<C64>(e, &local)?])
    }
}

/// Jet of an expression in the requested mode.
pub fn jet2(
    e: &Expr,
    dirs: &[Var],
    env: &(dyn Fn(Var) -> Option<C64> + Sync),
    mode: DiffMode,
    step: Option<f64>,
) -> Result<Jet2> {
    match mode {
        DiffMode::Forward => jet2_forward(e, dirs, env),
        DiffMode::Stencil => {
            let point: Vec<C64> = dirs
                .iter()
                .map(|v| env(*v).ok_or_else(|| Error::input(format!("variable `{v}` is not bound"))))
                .collect::<Result<_>>()?;
            let f = expr_fn(e, dirs, env);
            Ok(jet2_fn(&f, &point, step)?.remove(0))
        }
    }
}

/// Outcome of comparing stencil and forward jets.
#[derive(Debug, Clone, Serialize)]
pub struct JetCheck {
    pub max_discrepancy: f64,
    pub relative_discrepancy: f64,
    pub est_error: f64,
    pub flagged: bool,
    pub note: Option<String>,
}

/// Compares the stencil jet (with its `(h, h/2)` error estimate) against the
/// forward jet; flags disagreement above 50 times the estimate.
pub fn jet_check(e: &Expr, dirs: &[Var], env: &(dyn Fn(Var) -> Option<C64> + Sync)) -> JetCheck {
    let stencil = jet2(e, dirs, env, DiffMode::Stencil, None);
    let forward = jet2_forward(e, dirs, env);
    match (stencil, forward) {
        (Ok(s), Ok(f)) => {
            let mut diff = 0.0f64;
            let mut scale = f.value.norm();
            for a in 0..dirs.len() {
                diff = diff.max((s.d[a] - f.d[a]).norm()).max((s.dbar[a] - f.dbar[a]).norm());
                scale = scale.max(f.d[a].norm());
            }
            for (x, y) in s.dd.iter().zip(f.dd.iter()) {
                diff = diff.max((x - y).norm());
                scale = scale.max(y.norm());
            }
            // Rounding floor so that exact agreement is not flagged.
            let floor = 1e-9 * scale.max(1.0);
            let flagged = diff > 50.0 * s.est_error.max(floor);
            let note = (s.est_error > 1e-6 * scale.max(1.0)).then(|| "elevated stencil error estimate".to_string());
            JetCheck {
                max_discrepancy: diff,
                relative_discrepancy: diff / scale.max(f64::MIN_POSITIVE),
                est_error: s.est_error,
                flagged,
                note,
            }
        }
        (Err(err), _) | (_, Err(err)) => JetCheck {
            max_discrepancy: f64::NAN,
            relative_discrepancy: f64::NAN,
            est_error: f64::NAN,
            flagged: true,
            note: Some(err.to_string()),
        },
    }
}
