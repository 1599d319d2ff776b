//! Hermitian metrics on a trivialized bundle: Chern curvature, connection,
//! normal frames, positivity verdicts and the determinant twist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diff::{jet2_fn, jet2_forward, DiffMode, Jet2};
use crate::dsl::eval::{eval, point_env};
use crate::dsl::expr::{cofactor_expr, det_expr, Expr, Func, Var};
use crate::dsl::scene::Scene;
use crate::error::{Error, Result};
use crate::tensor::{
    classify, hermitian_eigen, hermitian_verdict, inverse, nakano_flatten, unitary_frame, CMat, CurvatureTensor,
    Hermitian, Verdict, VerdictClass, C64,
};

/// Matrix field `z -> H(z)`; `H[α][β]` pairs as `Σ H[α][β] s_α conj(t_β)`.
#[derive(Debug, Clone)]
pub struct HermitianField {
    pub n: usize,
    pub entries: Vec<Vec<Expr>>,
}

/// Value and derivatives of a matrix field at a point.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub value: CMat,
    /// `d[i] = ∂_i H`
    pub d: Vec<CMat>,
    /// `dbar[j] = ∂̄_j H`
    pub dbar: Vec<CMat>,
    /// `dd[i][j] = ∂_i ∂̄_j H`
    pub dd: Vec<Vec<CMat>>,
    pub est_error: f64,
}

impl MetricJet {
    /// Assembles a matrix jet from per-entry jets in row-major order.
    pub fn from_entries(rank: usize, n: usize, jets: &[Jet2]) -> Self {
        let at = |a: usize, b: usize| &jets[a * rank + b];
        MetricJet {
            value: CMat::from_fn(rank, rank, |a, b| at(a, b).value),
            d: (0..n).map(|i| CMat::from_fn(rank, rank, |a, b| at(a, b).d[i])).collect(),
            dbar: (0..n).map(|j| CMat::from_fn(rank, rank, |a, b| at(a, b).dbar[j])).collect(),
            dd: (0..n)
                .map(|i| (0..n).map(|j| CMat::from_fn(rank, rank, |a, b| at(a, b).dd[(i, j)])).collect())
                .collect(),
            est_error: jets.iter().map(|j| j.est_error).fold(0.0, f64::max),
        }
    }

    pub fn rank(&self) -> usize {
        self.value.nrows()
    }

    pub fn base_dim(&self) -> usize {
        self.d.len()
    }
}

fn base_vars(n: usize) -> Vec<Var> {
    (0..n).map(Var::base).collect()
}

impl HermitianField {
    pub fn new(n: usize, entries: Vec<Vec<Expr>>) -> Result<Self> {
        let rank = entries.len();
        if rank == 0 || entries.iter().any(|row| row.len() != rank) {
            return Err(Error::input("metric must be a non-empty square matrix"));
        }
        Ok(HermitianField { n, entries })
    }

    pub fn from_scene(scene: &Scene) -> Result<Self> {
        let m = scene
            .metric
            .clone()
            .ok_or_else(|| Error::input(format!("scene `{}` has no Hermitian metric", scene.name)))?;
        HermitianField::new(scene.n, m)
    }

    /// Constant field.
    pub fn constant(n: usize, m: &CMat) -> Self {
        let entries = (0..m.nrows()).map(|a| (0..m.ncols()).map(|b| Expr::Num(m[(a, b)])).collect()).collect();
        HermitianField { n, entries }
    }

    pub fn rank(&self) -> usize {
        self.entries.len()
    }

    /// Raw matrix value at `z`.
    pub fn eval(&self, z: &[C64]) -> Result<CMat> {
        let env = point_env(z, &[]);
        let r = self.rank();
        let mut m = CMat::zeros(r, r);
        for a in 0..r {
            for b in 0..r {
                m[(a, b)] = eval(&self.entries[a][b], &env)?;
            }
        }
        Ok(m)
    }

    /// Value at `z`, checked Hermitian positive-definite.
    pub fn metric_at(&self, z: &[C64]) -> Result<CMat> {
        let m = self.eval(z)?;
        let h = Hermitian::new(m.clone()).map_err(|e| Error::degenerate(format!("at z = {z:?}: {e}")))?;
        let eig = hermitian_eigen(&h)?;
        if !(eig.values[0] > 0.0) {
            return Err(Error::degenerate(format!(
                "metric not positive definite at z = {z:?} (smallest eigenvalue {:.3e})",
                eig.values[0]
            )));
        }
        Ok(m)
    }

    /// Derivatives of every entry along the base directions.
    pub fn jets(&self, z: &[C64], mode: DiffMode) -> Result<MetricJet> {
        let r = self.rank();
        let dirs = base_vars(self.n);
        let jets: Vec<Jet2> = match mode {
            DiffMode::Forward => {
                let env = point_env(z, &[]);
                self.entries
                    .iter()
                    .flatten()
                    .map(|e| jet2_forward(e, &dirs, &env))
                    .collect::<Result<_>>()?
            }
            DiffMode::Stencil => {
                let f = |p: &[C64]| -> Result<Vec<C64>> { Ok(self.eval(p)?.transpose().iter().cloned().collect()) };
                jet2_fn(&f, z, None)?
            }
        };
        Ok(MetricJet::from_entries(r, self.n, &jets))
    }

    pub fn det_expr(&self) -> Expr {
        det_expr(&self.entries)
    }

    /// `H ⊗ det H` on `E ⊗ det E`.
    pub fn twist_with_det(&self) -> HermitianField {
        let det = self.det_expr();
        HermitianField {
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(|e| Expr::mul(e.clone(), det.clone())).collect())
                .collect(),
        }
    }

    /// Dual metric on `E*`: `(H^{-1})^T`, entrywise `cof[α][β] / det`.
    pub fn dual(&self) -> HermitianField {
        let det = self.det_expr();
        let r = self.rank();
        let entries = (0..r)
            .map(|a| {
                (0..r)
                    .map(|b| {
                        if r == 1 {
                            Expr::div(Expr::real(1.0), det.clone())
                        } else {
                            Expr::div(cofactor_expr(&self.entries, a, b), det.clone())
                        }
                    })
                    .collect()
            })
            .collect();
        HermitianField { n: self.n, entries }
    }

    /// `H(u, u) = Σ H[α][β] u_α conj(u_β)` for a section given by expressions.
    pub fn pairing_expr(&self, u: &[Expr]) -> Result<Expr> {
        if u.len() != self.rank() {
            return Err(Error::input("section length differs from the rank"));
        }
        let mut terms = Vec::new();
        for (a, ua) in u.iter().enumerate() {
            for (b, ub) in u.iter().enumerate() {
                let conj = Expr::call(Func::Conj, vec![ub.clone()]);
                terms.push(Expr::mul(Expr::mul(self.entries[a][b].clone(), ua.clone()), conj));
            }
        }
        Ok(Expr::sum_of(terms))
    }
}

/// Chern curvature from a matrix jet:
/// `Θ[α][β][i][j] = -∂_i∂̄_j H[α][β] + (∂_i H · H^{-1} · ∂̄_j H)[α][β]`.
pub fn curvature_from_jet(jet: &MetricJet) -> Result<CurvatureTensor> {
    let (r, n) = (jet.rank(), jet.base_dim());
    let inv = inverse(&jet.value)?;
    let mut t = CurvatureTensor::zeros(r, n);
    for i in 0..n {
        let left = &jet.d[i] * &inv;
        for j in 0..n {
            let m = &left * &jet.dbar[j] - &jet.dd[i][j];
            for a in 0..r {
                for b in 0..r {
                    t.set(a, b, i, j, m[(a, b)]);
                }
            }
        }
    }
    Ok(t)
}

pub fn chern_curvature(h: &HermitianField, z: &[C64]) -> Result<CurvatureTensor> {
    h.metric_at(z)?;
    curvature_from_jet(&h.jets(z, DiffMode::Forward)?)
}

/// Connection coefficients, `gamma[i][(α, β)] = Σ_γ ∂_i H[β][γ] (H^{-1})[γ][α]`.
#[derive(Debug, Clone)]
pub struct ConnectionCoeffs {
    pub gamma: Vec<CMat>,
}

impl ConnectionCoeffs {
    pub fn get(&self, a: usize, b: usize, i: usize) -> C64 {
        self.gamma[i][(a, b)]
    }
}

pub fn connection_from_jet(jet: &MetricJet) -> Result<ConnectionCoeffs> {
    let inv = inverse(&jet.value)?;
    Ok(ConnectionCoeffs {
        gamma: jet.d.iter().map(|d| (d * &inv).transpose()).collect(),
    })
}

pub fn connection_coeffs(h: &HermitianField, z: &[C64]) -> Result<ConnectionCoeffs> {
    h.metric_at(z)?;
    connection_from_jet(&h.jets(z, DiffMode::Forward)?)
}

/// Degree-one holomorphic sections `s^k(z) = s^k(z0) + Σ_m (z_m - z0_m) c^k_m`
/// whose covariant derivative vanishes at `z0`.
#[derive(Debug, Clone, Serialize)]
pub struct NormalFrame {
    pub base: Vec<C64>,
    /// `value[k][α] = s^k_α(z0)`
    pub value: Vec<Vec<C64>>,
    /// `linear[k][m][α] = ∂_m s^k_α`
    pub linear: Vec<Vec<Vec<C64>>>,
    /// Max of `|∂s + Γ s|` at `z0`, with `Γ` recomputed by stencil.
    pub residual: f64,
}

impl NormalFrame {
    pub fn eval(&self, k: usize, z: &[C64]) -> Vec<C64> {
        let mut s = self.value[k].clone();
        for (m, lin) in self.linear[k].iter().enumerate() {
            let dz = z[m] - self.base[m];
            for (a, c) in lin.iter().enumerate() {
                s[a] += dz * c;
            }
        }
        s
    }

    /// The sections as expressions in the base variables.
    pub fn exprs(&self, k: usize) -> Vec<Expr> {
        (0..self.value[k].len())
            .map(|a| {
                let mut e = Expr::Num(self.value[k][a]);
                for (m, lin) in self.linear[k].iter().enumerate() {
                    let dz = Expr::sub(Expr::var(Var::base(m)), Expr::Num(self.base[m]));
                    e = Expr::add(e, Expr::mul(Expr::Num(lin[a]), dz));
                }
                e
            })
            .collect()
    }
}

/// Normal frame at `z0` spanning `e_0..e_r`.
pub fn normal_frame(h: &HermitianField, z0: &[C64]) -> Result<NormalFrame> {
    let r = h.rank();
    let gamma = connection_coeffs(h, z0)?;
    let value: Vec<Vec<C64>> = (0..r).map(|k| (0..r).map(|a| C64::new((a == k) as u8 as f64, 0.0)).collect()).collect();
    let linear: Vec<Vec<Vec<C64>>> = (0..r)
        .map(|k| {
            (0..h.n)
                .map(|m| (0..r).map(|a| -(0..r).map(|b| gamma.get(a, b, m) * value[k][b]).sum::<C64>()).collect())
                .collect()
        })
        .collect();
    let check = connection_from_jet(&h.jets(z0, DiffMode::Stencil)?)?;
    let mut residual = 0.0f64;
    for k in 0..r {
        for m in 0..h.n {
            for a in 0..r {
                let cov: C64 = linear[k][m][a] + (0..r).map(|b| check.get(a, b, m) * value[k][b]).sum::<C64>();
                residual = residual.max(cov.norm());
            }
        }
    }
    Ok(NormalFrame {
        base: z0.to_vec(),
        value,
        linear,
        residual,
    })
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Bottom (`sign = 1`) or top (`sign = -1`) eigenpair of `sign · m`, returned
/// as `(eigenvalue of m, conj(eigenvector))`.
fn extreme_eigen(m: &CMat, sign: f64) -> Result<(f64, Vec<C64>)> {
    let eig = hermitian_eigen(&Hermitian::symmetrize(&(m * C64::new(sign, 0.0))))?;
    let v: Vec<C64> = eig.vectors.column(0).iter().map(|x| x.conj()).collect();
    Ok((sign * eig.values[0], v))
}

/// Alternating search for the extremum of the Griffiths form over unit `s`,
/// `v`; `sign = 1` minimizes, `sign = -1` maximizes.
fn griffiths_search(t: &CurvatureTensor, sign: f64, s0: Vec<C64>, v0: Vec<C64>) -> Result<(f64, Vec<C64>, Vec<C64>)> {
    let (r, n) = (t.rank(), t.base_dim());
    let (mut s, mut v) = (s0, v0);
    let mut value = t.griffiths_form(&s, &v);
    for _ in 0..200 {
        let a = CMat::from_fn(r, r, |al, be| {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    acc += t.get(al, be, i, j) * v[i] * v[j].conj();
                }
            }
            acc
        });
        s = extreme_eigen(&a, sign)?.1;
        let b = CMat::from_fn(n, n, |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for al in 0..r {
                for be in 0..r {
                    acc += t.get(al, be, i, j) * s[al] * s[be].conj();
                }
            }
            acc
        });
        let (next, vv) = extreme_eigen(&b, sign)?;
        v = vv;
        let done = (next - value).abs() <= 1e-15 * next.abs().max(1e-300);
        value = next;
        if done {
            break;
        }
    }
    Ok((value, s, v))
}

/// Default number of random restarts for the Griffiths search.
pub const GRIFFITHS_RESTARTS: usize = 24;

/// Griffiths verdict by alternating eigen-iteration from basis starts and
/// `restarts` seeded random starts. The extremum is a heuristic bound.
pub fn griffiths_verdict(t: &CurvatureTensor, tol: f64, seed: u64, restarts: usize) -> Result<Verdict> {
    let (r, n) = (t.rank(), t.base_dim());
    let scale = t.max_abs();
    let norm = if scale > 0.0 { scale } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(Vec<C64>, Vec<C64>)> = Vec::new();
    for a in 0..r {
        for i in 0..n {
            let mut s = vec![C64::new(0.0, 0.0); r];
            let mut v = vec![C64::new(0.0, 0.0); n];
            s[a] = C64::new(1.0, 0.0);
            v[i] = C64::new(1.0, 0.0);
            starts.push((s, v));
        }
    }
    for _ in 0..restarts {
        let s = random_unit(&mut rng, r);
        let v = random_unit(&mut rng, n);
        starts.push((s, v));
    }
    let mut min = (f64::INFINITY, Vec::new());
    let mut max = f64::NEG_INFINITY;
    for (s, v) in &starts {
        let (lo, ls, lv) = griffiths_search(t, 1.0, s.clone(), v.clone())?;
        if lo < min.0 {
            min = (lo, ls.into_iter().chain(lv).collect());
        }
        let (hi, _, _) = griffiths_search(t, -1.0, s.clone(), v.clone())?;
        max = max.max(hi);
    }
    let (class, note) = classify(min.0 / norm, max / norm, tol)?;
    Ok(Verdict {
        class,
        extremal: min.0,
        maximal: max,
        witness: min.1,
        tolerance: tol,
        scale: norm,
        heuristic_restarts: Some(restarts),
        note: Some(match note {
            Some(n) => format!("heuristic extremum ({} starts); {n}", starts.len()),
            None => format!("heuristic extremum ({} starts)", starts.len()),
        }),
    })
}

/// Exact Nakano verdict: eigen-classification of the flattened form.
pub fn nakano_verdict(t: &CurvatureTensor, h: &CMat, tol: f64) -> Result<Verdict> {
    hermitian_verdict(&nakano_flatten(t, h)?, tol)
}

/// Curvature expressed in an `H`-orthonormal frame at `z`.
pub fn unitary_curvature(h: &HermitianField, z: &[C64]) -> Result<CurvatureTensor> {
    let m = h.metric_at(z)?;
    let t = chern_curvature(h, z)?;
    Ok(t.in_frame(&unitary_frame(&m)?))
}

/// Complex Hessian `∂_i∂̄_j log H(u, u)` of a holomorphic section `u`.
pub fn log_pairing_hessian(h: &HermitianField, u: &[Expr], z: &[C64]) -> Result<CMat> {
    let pairing = h.pairing_expr(u)?;
    let env = point_env(z, &[]);
    let value = eval::<C64>(&pairing, &env)?;
    if !(value.re > 0.0) {
        return Err(Error::Domain {
            subtree: pairing.to_string(),
            message: format!("pairing H(u, u) = {value} is not positive at z = {z:?}"),
        });
    }
    let log = Expr::call(Func::Log, vec![pairing]);
    Ok(jet2_forward(&log, &base_vars(h.n), &env)?.dd)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairingHessianReport {
    pub point: Vec<C64>,
    pub max_deviation: f64,
    pub frame_residual: f64,
    pub curvature_scale: f64,
}

/// Compares `∂_i∂̄_j H(s^k, s^l)` at `z0` (normal frame, stencil) against
/// `-Θ[k][l][i][j]` from [`chern_curvature`].
pub fn pairing_hessian_check(h: &HermitianField, z0: &[C64]) -> Result<PairingHessianReport> {
    let r = h.rank();
    let frame = normal_frame(h, z0)?;
    let theta = chern_curvature(h, z0)?;
    let f = |z: &[C64]| -> Result<Vec<C64>> {
        let m = h.eval(z)?;
        let sections: Vec<Vec<C64>> = (0..r).map(|k| frame.eval(k, z)).collect();
        let mut out = Vec::with_capacity(r * r);
        for k in 0..r {
            for l in 0..r {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..r {
                    for b in 0..r {
                        acc += m[(a, b)] * sections[k][a] * sections[l][b].conj();
                    }
                }
                out.push(acc);
            }
        }
        Ok(out)
    };
    let jets = jet2_fn(&f, z0, None)?;
    let mut dev = 0.0f64;
    for k in 0..r {
        for l in 0..r {
            let jet = &jets[k * r + l];
            for i in 0..h.n {
                for j in 0..h.n {
                    let contraction: C64 = (0..r)
                        .flat_map(|a| (0..r).map(move |b| (a, b)))
                        .map(|(a, b)| theta.get(a, b, i, j) * frame.value[k][a] * frame.value[l][b].conj())
                        .sum();
                    dev = dev.max((jet.dd[(i, j)] + contraction).norm());
                }
            }
        }
    }
    Ok(PairingHessianReport {
        point: z0.to_vec(),
        max_deviation: dev,
        frame_residual: frame.residual,
        curvature_scale: theta.max_abs(),
    })
}

/// `R_det[i][j] = -∂_i∂̄_j log det H`.
pub fn det_curvature(h: &HermitianField, z: &[C64]) -> Result<CMat> {
    h.metric_at(z)?;
    let log_det = Expr::call(Func::Log, vec![h.det_expr()]);
    let jet = jet2_forward(&log_det, &base_vars(h.n), &point_env(z, &[]))?;
    Ok(-jet.dd)
}

/// `tr(H^{-1} Θ_{ij})`, the trace route to the determinant curvature.
pub fn curvature_trace(t: &CurvatureTensor, h: &CMat) -> Result<CMat> {
    let inv = inverse(h)?;
    let (r, n) = (t.rank(), t.base_dim());
    Ok(CMat::from_fn(n, n, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..r {
            for b in 0..r {
                acc += inv[(b, a)] * t.get(a, b, i, j);
            }
        }
        acc
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct TwistRelation {
    pub point: Vec<C64>,
    /// Max deviation of `Θ^twist` from `det H · (Θ + H ⊗ R_det)`.
    pub max_deviation: f64,
    pub scale: f64,
    /// Max deviation between `R_det` and the curvature trace.
    pub trace_deviation: f64,
}

/// Verifies the twist curvature relation at `z`.
pub fn twist_relation(h: &HermitianField, z: &[C64]) -> Result<TwistRelation> {
    let m = h.metric_at(z)?;
    let det = crate::tensor::Hermitian::symmetrize(&m).matrix().determinant();
    let theta = chern_curvature(h, z)?;
    let rdet = det_curvature(h, z)?;
    let twist = chern_curvature(&h.twist_with_det(), z)?;
    let (r, n) = (h.rank(), h.n);
    let expected = CurvatureTensor::from_fn(r, n, |a, b, i, j| det * (theta.get(a, b, i, j) + m[(a, b)] * rdet[(i, j)]));
    let trace = curvature_trace(&theta, &m)?;
    Ok(TwistRelation {
        point: z.to_vec(),
        max_deviation: twist.sub(&expected).max_abs(),
        scale: expected.max_abs(),
        trace_deviation: (trace - &rdet).iter().map(|x| x.norm()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DemaillySkodaSample {
    pub point: Vec<C64>,
    pub griffiths: VerdictClass,
    pub twist_nakano: Option<Verdict>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemaillySkodaReport {
    pub samples: Vec<DemaillySkodaSample>,
    pub precondition_met: bool,
    pub failures: usize,
    pub min_normalized_eigenvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Nakano verdict of `E ⊗ det E` at every sample where `E` is Griffiths
/// semi-positive or better. Skips with a note otherwise.
pub fn demailly_skoda_check(h: &HermitianField, samples: &[Vec<C64>], tol: f64, seed: u64) -> Result<DemaillySkodaReport> {
    let twist = h.twist_with_det();
    let rows: Vec<DemaillySkodaSample> = samples
        .par_iter()
        .map(|z| -> Result<DemaillySkodaSample> {
            let g = griffiths_verdict(&unitary_curvature(h, z)?, tol, seed, GRIFFITHS_RESTARTS)?;
            if !g.class.is_semi_positive() {
                return Ok(DemaillySkodaSample {
                    point: z.clone(),
                    griffiths: g.class,
                    twist_nakano: None,
                    passed: false,
                });
            }
            let v = nakano_verdict(&unitary_curvature(&twist, z)?, &CMat::identity(h.rank(), h.rank()), tol)?;
            let passed = v.class.is_semi_positive();
            Ok(DemaillySkodaSample {
                point: z.clone(),
                griffiths: g.class,
                twist_nakano: Some(v),
                passed,
            })
        })
        .collect::<Result<_>>()?;
    let precondition_met = rows.iter().all(|s| s.griffiths.is_semi_positive());
    let min_normalized_eigenvalue = rows
        .iter()
        .filter_map(|s| s.twist_nakano.as_ref().map(|v| v.extremal / v.scale))
        .fold(f64::INFINITY, f64::min);
    if !precondition_met {
        return Ok(DemaillySkodaReport {
            failures: 0,
            samples: rows,
            precondition_met,
            min_normalized_eigenvalue,
            note: Some("precondition not met: metric is not Griffiths semi-positive at every sample; check skipped".into()),
        });
    }
    Ok(DemaillySkodaReport {
        failures: rows.iter().filter(|s| !s.passed).count(),
        samples: rows,
        precondition_met,
        min_normalized_eigenvalue,
        note: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DetBoundReport {
    pub max_det: f64,
    pub max_det_doubled: f64,
    pub growth_flag: bool,
}

/// Records `max det H` over the samples and over the samples scaled by 2;
/// flags growth by more than a factor 10 as a sign of an unbounded
/// determinant.
pub fn det_bound(h: &HermitianField, samples: &[Vec<C64>]) -> DetBoundReport {
    let det_at = |z: &[C64]| h.eval(z).map(|m| m.determinant().re).unwrap_or(f64::NAN);
    let max_det = samples.iter().map(|z| det_at(z)).fold(f64::NEG_INFINITY, f64::max);
    let max_det_doubled = samples
        .iter()
        .map(|z| det_at(&z.iter().map(|c| c * 2.0).collect::<Vec<_>>()))
        .fold(f64::NEG_INFINITY, f64::max);
    DetBoundReport {
        max_det,
        max_det_doubled,
        growth_flag: !(max_det_doubled <= 10.0 * max_det),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::{parse_field, parse_scalar};
    use crate::dsl::FieldExpr;

    fn field(src: &str) -> HermitianField {
        match parse_field(src).unwrap() {
            FieldExpr::Matrix(m) => HermitianField::new(1, m).unwrap(),
            FieldExpr::Scalar(e) => HermitianField::new(1, vec![vec![e]]).unwrap(),
        }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constant_metric_is_flat() {
        let h = field("[[2, i], [-i, 3]]");
        let z = [c(0.2, 0.1)];
        assert_eq!(chern_curvature(&h, &z).unwrap().max_abs(), 0.0);
        assert!(connection_coeffs(&h, &z).unwrap().gamma[0].iter().all(|x| x.norm() == 0.0));
        assert_eq!(det_curvature(&h, &z).unwrap()[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn rank_one_gaussian() {
        let cst = 0.7;
        let h = field("exp(-0.7*abs2(z1))");
        let z = [c(0.4, -0.3)];
        let t = chern_curvature(&h, &z).unwrap();
        let expected = cst * (-cst * z[0].norm_sqr()).exp();
        assert!((t.get(0, 0, 0, 0).re - expected).abs() < 1e-14);
        let g = connection_coeffs(&h, &z).unwrap();
        assert!((g.get(0, 0, 0) + cst * z[0].conj()).norm() < 1e-14);
    }

    #[test]
    fn diagonal_exponential() {
        let h = field("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let z = [c(0.3, 0.2)];
        let t = chern_curvature(&h, &z).unwrap();
        let s = z[0].norm_sqr();
        assert!((t.get(0, 0, 0, 0).re - (-s).exp()).abs() < 1e-14);
        assert!((t.get(1, 1, 0, 0).re - 2.0 * (-2.0 * s).exp()).abs() < 1e-14);
        assert_eq!(t.get(0, 1, 0, 0).norm(), 0.0);
        let g = connection_coeffs(&h, &z).unwrap();
        assert!((g.get(0, 0, 0) + z[0].conj()).norm() < 1e-14);
        assert!((g.get(1, 1, 0) + 2.0 * z[0].conj()).norm() < 1e-14);
        let rdet = det_curvature(&h, &z).unwrap();
        assert!((rdet[(0, 0)].re - 3.0).abs() < 1e-13);
    }

    #[test]
    fn normal_frame_rank_one() {
        let h = field("exp(-abs2(z1))");
        let a = c(0.3, 0.4);
        let f = normal_frame(&h, &[a]).unwrap();
        assert!((f.linear[0][0][0] - a.conj()).norm() < 1e-14);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn verdicts() {
        let h = field("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let t = unitary_curvature(&h, &[c(0.0, 0.0)]).unwrap();
        let g = griffiths_verdict(&t, 1e-8, 7, GRIFFITHS_RESTARTS).unwrap();
        assert_eq!(g.class, VerdictClass::StrictlyPositive);
        assert!((g.extremal - 1.0).abs() < 1e-12);
        let nk = nakano_verdict(&t, &CMat::identity(2, 2), 1e-8).unwrap();
        assert_eq!(nk.class, VerdictClass::StrictlyPositive);
        assert!((nk.extremal - 1.0).abs() < 1e-12);

        let neg = field("[[exp(abs2(z1)), 0], [0, exp(abs2(z1))]]");
        let t = unitary_curvature(&neg, &[c(0.2, 0.0)]).unwrap();
        assert_eq!(griffiths_verdict(&t, 1e-8, 7, GRIFFITHS_RESTARTS).unwrap().class, VerdictClass::StrictlyNegative);

        let zero = CurvatureTensor::zeros(2, 1);
        assert_eq!(griffiths_verdict(&zero, 1e-8, 7, 20).unwrap().class, VerdictClass::SemiPositive);
        assert_eq!(nakano_verdict(&zero, &CMat::identity(2, 2), 1e-8).unwrap().class, VerdictClass::SemiPositive);
    }

    #[test]
    fn log_pairing() {
        let one = [Expr::real(1.0)];
        let z = [c(0.3, 0.1)];
        let h = field("exp(abs2(z1))");
        assert!((log_pairing_hessian(&h, &one, &z).unwrap()[(0, 0)].re - 1.0).abs() < 1e-14);
        let h = field("exp(-abs2(z1))");
        assert!((log_pairing_hessian(&h, &one, &z).unwrap()[(0, 0)].re + 1.0).abs() < 1e-14);
        let h = field("2");
        assert_eq!(log_pairing_hessian(&h, &one, &z).unwrap()[(0, 0)].norm(), 0.0);
        let zero = [parse_scalar("z1").unwrap()];
        assert!(log_pairing_hessian(&h, &zero, &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn pairing_hessian_matches_curvature() {
        let h = field("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let rep = pairing_hessian_check(&h, &[c(0.3, 0.0)]).unwrap();
        assert!(rep.max_deviation < 1e-5, "{rep:?}");
        let h = field("[[2 + abs2(z1), z1], [conj(z1), 1]]");
        let rep = pairing_hessian_check(&h, &[c(0.2, -0.1)]).unwrap();
        assert!(rep.max_deviation < 1e-5, "{rep:?}");
    }

    #[test]
    fn twist() {
        let h = field("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let z = [c(0.25, 0.5)];
        let tw = h.twist_with_det().eval(&z).unwrap();
        let s = z[0].norm_sqr();
        assert!((tw[(0, 0)].re - (-4.0 * s).exp()).abs() < 1e-15);
        assert!((tw[(1, 1)].re - (-5.0 * s).exp()).abs() < 1e-15);
        let rel = twist_relation(&h, &z).unwrap();
        assert!(rel.max_deviation < 1e-12 && rel.trace_deviation < 1e-12);
        let g = field("[[2 + abs2(z1), z1], [conj(z1), 1 + 0.5*abs2(z1)]]");
        let rel = twist_relation(&g, &z).unwrap();
        assert!(rel.max_deviation < 1e-10 * rel.scale.max(1.0), "{rel:?}");
        assert!(rel.trace_deviation < 1e-12);
    }

    #[test]
    fn dual_curvature_sign() {
        // In a unitary frame the dual curvature is minus the transpose.
        let h = field("[[2 + abs2(z1), z1], [conj(z1), 1 + 0.5*abs2(z1)]]");
        let z = [c(0.3, -0.2)];
        let t = unitary_curvature(&h, &z).unwrap();
        let d = unitary_curvature(&h.dual(), &z).unwrap();
        // The dual frame of an orthonormal frame is orthonormal; compare
        // invariants: eigenvalues of the 2x2 blocks flip sign.
        let ev = |m: CMat| hermitian_eigen(&Hermitian::symmetrize(&m)).unwrap().values;
        let a = ev(t.bundle_block(0, 0));
        let b = ev(d.bundle_block(0, 0));
        assert!((a[0] + b[1]).abs() < 1e-12 && (a[1] + b[0]).abs() < 1e-12);
    }

    #[test]
    fn demailly_skoda() {
        let h = field("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let samples: Vec<Vec<C64>> = (0..5).map(|k| vec![c(0.1 * k as f64, 0.05)]).collect();
        let rep = demailly_skoda_check(&h, &samples, 1e-8, 1).unwrap();
        assert!(rep.precondition_met && rep.failures == 0);
        let neg = field("[[exp(abs2(z1)), 0], [0, exp(abs2(z1))]]");
        let rep = demailly_skoda_check(&neg, &samples, 1e-8, 1).unwrap();
        assert!(!rep.precondition_met && rep.note.is_some());
        let flat = field("[[1, 0], [0, 1]]");
        let rep = demailly_skoda_check(&flat, &samples, 1e-8, 1).unwrap();
        assert!(rep.precondition_met && rep.failures == 0);
    }
}
