//! Central-difference Wirtinger stencils with one Richardson step.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::C64;

/// Vector-valued function of complex coordinates.
pub type VecFn<'a> = dyn Fn(&[C64]) -> Result<Vec<C64>> + Sync + 'a;

/// `1e-4 * max(1, |p|)` rounded to a power of two so that offsets are exact.
pub fn default_step(p: &[C64]) -> f64 {
    let scale = p.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    (1e-4 * scale).log2().round().exp2()
}

/// Real gradient and Hessian (per output component) at one step size.
pub(crate) struct RealDerivs {
    pub value: Vec<C64>,
    pub grad: Vec<Vec<C64>>,
    pub hess: Vec<Vec<Vec<C64>>>,
}

fn offset_point(p: &[C64], coords: &[(usize, f64)]) -> Vec<C64> {
    let mut q = p.to_vec();
    for &(c, s) in coords {
        if c % 2 == 0 {
            q[c / 2].re += s;
        } else {
            q[c / 2].im += s;
        }
    }
    q
}

fn annotate(err: Error, q: &[C64]) -> Error {
    match err {
        Error::Domain { subtree, message } => Error::Domain {
            subtree,
            message: format!("{message} (stencil point {q:?})"),
        },
        other => other,
    }
}

pub(crate) fn real_derivs(f: &VecFn<'_>, p: &[C64], h: f64) -> Result<RealDerivs> {
    let k = 2 * p.len();
    let mut offsets: Vec<Vec<(usize, f64)>> = vec![vec![]];
    for i in 0..k {
        offsets.push(vec![(i, h)]);
        offsets.push(vec![(i, -h)]);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                offsets.push(vec![(i, si), (j, sj)]);
            }
        }
    }
    let values: Vec<Vec<C64>> = offsets
        .par_iter()
        .map(|o| {
            let q = offset_point(p, o);
            f(&q).map_err(|e| annotate(e, &q))
        })
        .collect::<Result<_>>()?;
    let q = values[0].len();
    if values.iter().any(|v| v.len() != q) {
        return Err(Error::input("stencil function changed its output length"));
    }
    let f0 = &values[0];
    let plus = |i: usize| &values[1 + 2 * i];
    let minus = |i: usize| &values[2 + 2 * i];
    let mut grad = vec![vec![C64::new(0.0, 0.0); k]; q];
    let mut hess = vec![vec![vec![C64::new(0.0, 0.0); k]; k]; q];
    for c in 0..q {
        for i in 0..k {
            grad[c][i] = (plus(i)[c] - minus(i)[c]) / (2.0 * h);
            hess[c][i][i] = (plus(i)[c] - 2.0 * f0[c] + minus(i)[c]) / (h * h);
        }
    }
    let mut idx = 1 + 2 * k;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = &values[idx..idx + 4];
            for c in 0..q {
                let m = (v[0][c] - v[1][c] - v[2][c] + v[3][c]) / (4.0 * h * h);
                hess[c][i][j] = m;
                hess[c][j][i] = m;
            }
            idx += 4;
        }
    }
    Ok(RealDerivs {
        value: f0.clone(),
        grad,
        hess,
    })
}
