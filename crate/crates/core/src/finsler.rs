//! Weights on the tautological bundle: chart weights and their homogeneous
//! Finsler forms, the fiber form `∂∂̄φ`, Kobayashi curvature, geodesic
//! curvature and the horizontal/vertical decomposition.

use rayon::prelude::*;
use serde::Serialize;

use crate::diff::{jet2_fn, jet2_forward};
use crate::dsl::eval::eval;
use crate::dsl::expr::{cofactor_expr, Expr, Func, Var, VarKind};
use crate::dsl::scene::Scene;
use crate::error::{Error, Result};
use crate::hermitian::{curvature_from_jet, griffiths_verdict, unitary_curvature, HermitianField, MetricJet, GRIFFITHS_RESTARTS};
use crate::tensor::{classify, hermitian_eigen, inverse, CMat, CurvatureTensor, Hermitian, VerdictClass, C64};

/// Homogeneous index of affine coordinate `j` in chart `a`.
pub fn homog_index(chart: usize, j: usize) -> usize {
    if j < chart {
        j
    } else {
        j + 1
    }
}

/// Affine coordinate index of homogeneous index `alpha != chart`.
pub fn affine_index(chart: usize, alpha: usize) -> usize {
    if alpha < chart {
        alpha
    } else {
        alpha - 1
    }
}

/// Affine coordinates of `Z` in chart `a`.
pub fn to_affine(chart: usize, z: &[C64]) -> Vec<C64> {
    (0..z.len()).filter(|&al| al != chart).map(|al| z[al] / z[chart]).collect()
}

/// Homogeneous representative with `Z_a = 1`.
pub fn from_affine(chart: usize, w: &[C64]) -> Vec<C64> {
    (0..=w.len())
        .map(|al| if al == chart { C64::new(1.0, 0.0) } else { w[affine_index(chart, al)] })
        .collect()
}

/// Weight `φ(z, w)` on the affine chart `W_a = {Z_a != 0}`.
#[derive(Debug, Clone)]
pub struct ChartWeight {
    pub n: usize,
    pub r: usize,
    pub chart: usize,
    pub expr: Expr,
}

fn homog_env<'a>(z: &'a [C64], zz: &'a [C64]) -> impl Fn(Var) -> Option<C64> + Sync + 'a {
    move |v: Var| match v.kind {
        VarKind::Base => z.get(v.index).copied(),
        VarKind::Homog => zz.get(v.index).copied(),
        VarKind::Fiber => None,
    }
}

fn chart_env<'a>(z: &'a [C64], w: &'a [C64]) -> impl Fn(Var) -> Option<C64> + Sync + 'a {
    move |v: Var| match v.kind {
        VarKind::Base => z.get(v.index).copied(),
        VarKind::Fiber => w.get(v.index).copied(),
        VarKind::Homog => None,
    }
}

impl ChartWeight {
    pub fn new(n: usize, r: usize, chart: usize, expr: Expr) -> Result<Self> {
        if chart > r {
            return Err(Error::input(format!("chart {chart} outside 0..={r}")));
        }
        crate::dsl::parser::validate(&expr, n, r)?;
        Ok(ChartWeight { n, r, chart, expr: expr.expand_sums() })
    }

    /// `G(z, Z) = |Z_a|^2 exp(φ_a(z, Z/Z_a))`.
    pub fn homogenize(&self) -> Expr {
        let a = self.chart;
        let za = Expr::var(Var::homog(a));
        let inner = self.expr.substitute(&|v| {
            (v.kind == VarKind::Fiber).then(|| Expr::div(Expr::var(Var::homog(homog_index(a, v.index))), za.clone()))
        });
        Expr::mul(Expr::call(Func::Abs2, vec![za]), Expr::call(Func::Exp, vec![inner]))
    }

    /// The same metric on chart `b`: `φ_b = log|Z_a|^2 + φ_a(Z/Z_a)` with
    /// `Z_b = 1`.
    pub fn to_chart(&self, b: usize) -> ChartWeight {
        if b == self.chart {
            return self.clone();
        }
        let a = self.chart;
        let homog_to_b = |al: usize| -> Expr {
            if al == b {
                Expr::real(1.0)
            } else {
                Expr::var(Var::fiber(affine_index(b, al)))
            }
        };
        let za = homog_to_b(a);
        let inner = self.expr.substitute(&|v| {
            (v.kind == VarKind::Fiber).then(|| Expr::div(homog_to_b(homog_index(a, v.index)), za.clone()))
        });
        let expr = Expr::add(Expr::call(Func::Log, vec![Expr::call(Func::Abs2, vec![za])]), inner);
        ChartWeight {
            n: self.n,
            r: self.r,
            chart: b,
            expr,
        }
    }

    pub fn eval(&self, z: &[C64], w: &[C64]) -> Result<f64> {
        Ok(eval::<C64>(&self.expr, &chart_env(z, w))?.re)
    }

    /// Directions `z_1..z_n, w_1..w_r`.
    pub fn all_dirs(&self) -> Vec<Var> {
        (0..self.n).map(Var::base).chain((0..self.r).map(Var::fiber)).collect()
    }

    pub fn fiber_dirs(&self) -> Vec<Var> {
        (0..self.r).map(Var::fiber).collect()
    }
}

/// A metric on `O(1)` over all charts, with its homogeneous Finsler form.
#[derive(Debug, Clone)]
pub struct FinslerWeight {
    pub n: usize,
    pub r: usize,
    pub charts: Vec<ChartWeight>,
    pub homogeneous: Expr,
    /// True when `G` is quadratic in `Z` (comes from a Hermitian metric).
    pub fiber_quadratic: bool,
}

impl FinslerWeight {
    pub fn from_chart(w: ChartWeight) -> Self {
        let charts = (0..=w.r).map(|b| w.to_chart(b)).collect();
        FinslerWeight {
            n: w.n,
            r: w.r,
            homogeneous: w.homogenize(),
            charts,
            fiber_quadratic: false,
        }
    }

    /// Induced weight of the scene's metric when present, otherwise its
    /// chart weight.
    pub fn from_scene(scene: &Scene) -> Result<Self> {
        if scene.metric.is_some() {
            return induced_weight(&HermitianField::from_scene(scene)?);
        }
        let expr = scene
            .weight
            .clone()
            .ok_or_else(|| Error::input("scene has neither a metric nor a weight"))?;
        Ok(Self::from_chart(ChartWeight::new(scene.n, scene.r, scene.chart, expr)?))
    }

    pub fn chart(&self, a: usize) -> &ChartWeight {
        &self.charts[a]
    }

    pub fn eval_homogeneous(&self, z: &[C64], zz: &[C64]) -> Result<f64> {
        Ok(eval::<C64>(&self.homogeneous, &homog_env(z, zz))?.re)
    }
}

/// Weight induced by `H` through the dual metric `H* = (H^{-1})^T`:
/// `φ_a = log(Σ cof[α][β] Z_α conj(Z_β)) - log det H` with `Z_a = 1`.
pub fn induced_weight(h: &HermitianField) -> Result<FinslerWeight> {
    let rank = h.rank();
    if rank > 4 {
        return Err(Error::Capability("induced weights support rank at most 4".into()));
    }
    let r = rank - 1;
    let quad = |coord: &dyn Fn(usize) -> Expr| -> Expr {
        let mut terms = Vec::new();
        for a in 0..rank {
            for b in 0..rank {
                let cof = if rank == 1 { Expr::real(1.0) } else { cofactor_expr(&h.entries, a, b) };
                if cof.is_num(0.0) {
                    continue;
                }
                let zb = Expr::call(Func::Conj, vec![coord(b)]);
                let term = if a == b {
                    Expr::mul(cof, Expr::call(Func::Abs2, vec![coord(a)]))
                } else {
                    Expr::mul(Expr::mul(cof, coord(a)), zb)
                };
                terms.push(term);
            }
        }
        Expr::sum_of(terms)
    };
    let det = h.det_expr();
    let log_det = Expr::call(Func::Log, vec![det.clone()]);
    let charts = (0..rank)
        .map(|chart| {
            let coord = |al: usize| {
                if al == chart {
                    Expr::real(1.0)
                } else {
                    Expr::var(Var::fiber(affine_index(chart, al)))
                }
            };
            ChartWeight {
                n: h.n,
                r,
                chart,
                expr: Expr::sub(Expr::call(Func::Log, vec![quad(&coord)]), log_det.clone()),
            }
        })
        .collect();
    let homogeneous = Expr::div(quad(&|al| Expr::var(Var::homog(al))), det);
    Ok(FinslerWeight {
        n: h.n,
        r,
        charts,
        homogeneous,
        fiber_quadratic: true,
    })
}

/// `∂∂̄φ` at `(z, w)` in the coordinates `(z_1..z_n, w_1..w_r)`.
#[derive(Debug, Clone, Serialize)]
pub struct FiberForm {
    pub n: usize,
    pub r: usize,
    #[serde(serialize_with = "crate::report::ser_cmat")]
    pub matrix: CMat,
}

impl FiberForm {
    pub fn base_block(&self) -> CMat {
        self.matrix.view((0, 0), (self.n, self.n)).into_owned()
    }
    pub fn mixed_block(&self) -> CMat {
        self.matrix.view((0, self.n), (self.n, self.r)).into_owned()
    }
    pub fn fiber_block(&self) -> CMat {
        self.matrix.view((self.n, self.n), (self.r, self.r)).into_owned()
    }
}

pub fn fiber_form(phi: &ChartWeight, z: &[C64], w: &[C64]) -> Result<FiberForm> {
    let jet = jet2_forward(&phi.expr, &phi.all_dirs(), &chart_env(z, w))?;
    Ok(FiberForm {
        n: phi.n,
        r: phi.r,
        matrix: jet.dd,
    })
}

/// Fiber Hessian `∂_{Z_α}∂̄_{Z_β} G` at `(z, Z)`.
pub fn fiber_hessian(g: &Expr, z: &[C64], zz: &[C64]) -> Result<CMat> {
    let dirs: Vec<Var> = (0..zz.len()).map(Var::homog).collect();
    Ok(jet2_forward(g, &dirs, &homog_env(z, zz))?.dd)
}

/// Kobayashi curvature of `G` at `(z, Z)`: the Chern formula applied to the
/// fiber Hessian as a matrix field in `z`. Returns the tensor and the
/// stencil error estimate.
pub fn kobayashi_tensor(g: &Expr, n: usize, z: &[C64], zz: &[C64]) -> Result<(CurvatureTensor, f64)> {
    let rank = zz.len();
    let center = fiber_hessian(g, z, zz)?;
    if inverse(&center).is_err() {
        return Err(Error::degenerate(format!("fiber Hessian of G is singular at z = {z:?}, Z = {zz:?}")));
    }
    let f = |p: &[C64]| -> Result<Vec<C64>> { Ok(fiber_hessian(g, p, zz)?.transpose().iter().cloned().collect()) };
    let jets = jet2_fn(&f, z, None)?;
    let jet = MetricJet::from_entries(rank, n, &jets);
    Ok((curvature_from_jet(&jet)?, jet.est_error))
}

fn block_inverse(ff: &FiberForm) -> Result<CMat> {
    inverse(&ff.fiber_block()).map_err(|_| Error::degenerate("fiber block of the fiber form is singular (fiber degeneracy)"))
}

/// Geodesic curvature: Schur complement of the fiber block.
pub fn geodesic_curvature_of(ff: &FiberForm) -> Result<CMat> {
    let inv = block_inverse(ff)?;
    let mzw = ff.mixed_block();
    Ok(ff.base_block() - &mzw * inv * mzw.adjoint())
}

/// Horizontal lift coefficients `a[i][α] = -(M_zw M_ww^{-1})[i][α]`.
pub fn horizontal_lift(ff: &FiberForm) -> Result<CMat> {
    Ok(-(ff.mixed_block() * block_inverse(ff)?))
}

/// Geodesic curvature as the pairing of horizontal lifts through the full form.
pub fn geodesic_curvature_lift(ff: &FiberForm) -> Result<CMat> {
    let a = horizontal_lift(ff)?;
    let (n, r) = (ff.n, ff.r);
    let lift = CMat::from_fn(n, n + r, |i, p| {
        if p < n {
            C64::new((p == i) as u8 as f64, 0.0)
        } else {
            a[(i, p - n)]
        }
    });
    Ok(&lift * &ff.matrix * lift.adjoint())
}

pub fn geodesic_curvature(phi: &ChartWeight, z: &[C64], w: &[C64]) -> Result<CMat> {
    geodesic_curvature_of(&fiber_form(phi, z, w)?)
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionRecord {
    pub z: Vec<C64>,
    pub w: Vec<C64>,
    /// Max deviation of `blockdiag(c, 0) + P^T M_ww conj(P)` from `∂∂̄φ`.
    pub residual: f64,
    /// Max deviation between the Schur complement and the lift pairing.
    pub schur_consistency: f64,
    /// Max deviation of `-K(Z, Z̄)/G` (Kobayashi route) from `c(φ)`.
    pub kobayashi_deviation: f64,
    #[serde(serialize_with = "crate::report::ser_cmat")]
    pub geodesic_curvature: CMat,
    pub mixed_block_max: f64,
}

/// Prop-2.2-style decomposition of `∂∂̄φ` at `(z, w)`.
pub fn decomposition_residual(fw: &FinslerWeight, chart: usize, z: &[C64], w: &[C64]) -> Result<DecompositionRecord> {
    let phi = fw.chart(chart);
    let ff = fiber_form(phi, z, w)?;
    let (n, r) = (ff.n, ff.r);
    let c = geodesic_curvature_of(&ff)?;
    let c_lift = geodesic_curvature_lift(&ff)?;
    let a = horizontal_lift(&ff)?;
    // Vertical coframe δw_α = dw_α - Σ_i a[i][α] dz_i.
    let p = CMat::from_fn(r, n + r, |al, q| {
        if q < n {
            -a[(q, al)]
        } else {
            C64::new((q - n == al) as u8 as f64, 0.0)
        }
    });
    let mut rebuilt = p.transpose() * ff.fiber_block() * p.map(|x| x.conj());
    for i in 0..n {
        for j in 0..n {
            rebuilt[(i, j)] += c[(i, j)];
        }
    }
    let residual = max_abs(&(rebuilt - &ff.matrix));
    let kob_dev = if r == 0 {
        0.0
    } else {
        let zz = from_affine(chart, w);
        let g = fw.eval_homogeneous(z, &zz)?;
        let (k, _) = kobayashi_tensor(&fw.homogeneous, n, z, &zz)?;
        let via_k = CMat::from_fn(n, n, |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for al in 0..=r {
                for be in 0..=r {
                    acc += k.get(al, be, i, j) * zz[al] * zz[be].conj();
                }
            }
            -acc / g
        });
        max_abs(&(via_k - &c))
    };
    Ok(DecompositionRecord {
        z: z.to_vec(),
        w: w.to_vec(),
        residual,
        schur_consistency: max_abs(&(c_lift - &c)),
        kobayashi_deviation: kob_dev,
        geodesic_curvature: c,
        mixed_block_max: max_abs(&ff.mixed_block()),
    })
}

/// Deterministic fiber point paired with the `k`-th base sample.
pub fn paired_fiber_point(r: usize, k: usize) -> Vec<C64> {
    (0..r)
        .map(|j| C64::from_polar(0.25 + 0.15 * ((k + 2 * j) % 5) as f64, 0.9 * k as f64 + 1.3 * j as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FinslerValidation {
    pub positivity: bool,
    pub homogeneity: bool,
    pub pseudo_convexity: bool,
    pub max_homogeneity_defect: f64,
    pub min_fiber_eigenvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positivity_witness: Option<(Vec<C64>, Vec<C64>)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convexity_witness: Option<(Vec<C64>, Vec<C64>)>,
}

/// Checks positivity, `G(z, λZ) = |λ|^2 G(z, Z)` and positivity of the
/// fiber Hessian at the given base samples and fiber directions.
pub fn validate_finsler(g: &Expr, base: &[Vec<C64>], fibers: &[Vec<C64>]) -> Result<FinslerValidation> {
    let lambdas = [C64::new(0.7, -1.3), C64::new(-2.1, 0.4), C64::new(0.05, 0.02)];
    let mut out = FinslerValidation {
        positivity: true,
        homogeneity: true,
        pseudo_convexity: true,
        max_homogeneity_defect: 0.0,
        min_fiber_eigenvalue: f64::INFINITY,
        positivity_witness: None,
        convexity_witness: None,
    };
    for z in base {
        for zz in fibers {
            let value = eval::<C64>(g, &homog_env(z, zz))?;
            if !(value.re > 0.0) || value.im.abs() > 1e-12 * value.norm() {
                out.positivity = false;
                out.positivity_witness.get_or_insert((z.clone(), zz.clone()));
                continue;
            }
            for l in lambdas {
                let scaled: Vec<C64> = zz.iter().map(|x| x * l).collect();
                let gl = eval::<C64>(g, &homog_env(z, &scaled))?;
                let defect = (gl - value * l.norm_sqr()).norm() / (value.norm() * l.norm_sqr());
                out.max_homogeneity_defect = out.max_homogeneity_defect.max(defect);
            }
            let hess = fiber_hessian(g, z, zz)?;
            let eig = hermitian_eigen(&Hermitian::symmetrize(&hess))?;
            let rel = eig.values[0] / value.re;
            out.min_fiber_eigenvalue = out.min_fiber_eigenvalue.min(rel);
            if !(rel > 1e-10) {
                out.pseudo_convexity = false;
                out.convexity_witness.get_or_insert((z.clone(), zz.clone()));
            }
        }
    }
    out.homogeneity = out.max_homogeneity_defect < 1e-12;
    Ok(out)
}

/// Aggregated verdict over several samples of a family of forms.
#[derive(Debug, Clone, Serialize)]
pub struct SampledVerdict {
    pub class: VerdictClass,
    pub min_normalized: f64,
    pub max_normalized: f64,
    pub zero_form: bool,
}

fn aggregate(extremes: &[(f64, f64)], tol: f64) -> Result<SampledVerdict> {
    let min = extremes.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let max = extremes.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let (class, note) = classify(min, max, tol)?;
    Ok(SampledVerdict {
        class,
        min_normalized: min,
        max_normalized: max,
        zero_form: note.is_some(),
    })
}

fn spectrum_extremes(m: &CMat, scale: f64) -> Result<(f64, f64)> {
    let eig = hermitian_eigen(&Hermitian::symmetrize(m))?;
    let s = if scale > 0.0 { scale } else { 1.0 };
    Ok((eig.values[0] / s, eig.values[eig.values.len() - 1] / s))
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRecord {
    pub z: Vec<C64>,
    pub griffiths: VerdictClass,
    pub griffiths_zero: bool,
    pub full_form: SampledVerdict,
    pub kobayashi: SampledVerdict,
    pub agree: bool,
}

/// Compares (a) the Griffiths verdict of `H`, (b) the full fiber form of the
/// induced weight over sampled fiber points and (c) the Kobayashi verdict of
/// the dual Finsler form over sampled `Z`. Agreement means (c) is the sign
/// flip of (a), and (b) is positive exactly when (a) is.
pub fn positivity_equivalence_check(h: &HermitianField, samples: &[Vec<C64>], tol: f64, seed: u64) -> Result<Vec<EquivalenceRecord>> {
    let fw = induced_weight(h)?;
    let r = h.rank() - 1;
    let fibers: Vec<Vec<C64>> = (0..6).map(|k| paired_fiber_point(r, k)).collect();
    samples
        .par_iter()
        .map(|z| -> Result<EquivalenceRecord> {
            let t = unitary_curvature(h, z)?;
            let g = griffiths_verdict(&t, tol, seed, GRIFFITHS_RESTARTS)?;
            let g_zero = g.note.as_deref().is_some_and(|s| s.contains("zero form"));
            let phi = fw.chart(0);
            let mut full = Vec::new();
            let mut kob = Vec::new();
            for w in &fibers {
                let ff = fiber_form(phi, z, w)?;
                full.push(spectrum_extremes(&ff.matrix, max_abs(&ff.matrix))?);
                let zz = from_affine(0, w);
                let gval = fw.eval_homogeneous(z, &zz)?;
                let (k, _) = kobayashi_tensor(&fw.homogeneous, h.n, z, &zz)?;
                let m = CMat::from_fn(h.n, h.n, |i, j| {
                    let mut acc = C64::new(0.0, 0.0);
                    for al in 0..=r {
                        for be in 0..=r {
                            acc += k.get(al, be, i, j) * zz[al] * zz[be].conj();
                        }
                    }
                    acc / gval
                });
                // Scale by the curvature magnitude so noise near a flat
                // metric reads as zero.
                let scale = k.max_abs().max(t.max_abs());
                kob.push(spectrum_extremes(&m, if scale > 1e-9 { scale } else { 1.0 })?);
            }
            // Near-zero Kobayashi forms are stencil noise on flat metrics.
            let kob = kob.into_iter().map(|(a, b)| (snap(a), snap(b))).collect::<Vec<_>>();
            let full_form = aggregate(&full, tol)?;
            let kobayashi = aggregate(&kob, tol.max(1e-6))?;
            let flipped = if kobayashi.zero_form { VerdictClass::SemiPositive } else { kobayashi.class.flipped() };
            let agree = (flipped == g.class || (kobayashi.zero_form && g_zero))
                && (full_form.class.is_semi_positive() == g.class.is_semi_positive())
                && ((full_form.class == VerdictClass::StrictlyPositive) == (g.class == VerdictClass::StrictlyPositive));
            Ok(EquivalenceRecord {
                z: z.clone(),
                griffiths: g.class,
                griffiths_zero: g_zero,
                full_form,
                kobayashi,
                agree,
            })
        })
        .collect()
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        0.0
    } else {
        x
    }
}

/// `21^r` stratified fiber points on chart coordinates, covering `[0, ∞)` in
/// modulus with equal Fubini-Study spacing.
pub fn stratified_fiber_points(r: usize, per_axis: usize) -> Vec<Vec<C64>> {
    let golden = 0.618_033_988_749_894_9;
    let axis: Vec<C64> = (0..per_axis)
        .map(|k| {
            let rho = (std::f64::consts::FRAC_PI_2 * (k as f64 + 0.5) / per_axis as f64).tan();
            C64::from_polar(rho, 2.0 * std::f64::consts::PI * golden * k as f64)
        })
        .collect();
    let mut out: Vec<Vec<C64>> = vec![vec![]];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |c| {
                    let mut q = p.clone();
                    q.push(*c);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipRecord {
    pub z: Vec<C64>,
    pub fiber_points: usize,
    pub fiber_positive: bool,
    pub full_semi_positive: bool,
    pub full_strictly_positive: bool,
    pub min_fiber_eigenvalue: f64,
    pub min_full_normalized: f64,
    pub bad_fiber: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub records: Vec<MembershipRecord>,
    /// Fiber block positive-definite at all fiber samples of all charts.
    pub in_h: bool,
    /// Additionally `∂∂̄φ` semi-positive on the total space samples.
    pub in_h_h0: bool,
    /// Strictly positive current at all samples: a necessary proxy for
    /// bigness, not a certificate.
    pub big_proxy: bool,
    pub background: String,
}

/// Membership tests on `21^r` fiber samples per chart at each base sample.
pub fn hx_membership(fw: &FinslerWeight, samples: &[Vec<C64>], per_axis: usize, tol: f64) -> Result<MembershipReport> {
    let fibers = stratified_fiber_points(fw.r, per_axis);
    let records: Vec<MembershipRecord> = samples
        .par_iter()
        .map(|z| {
            let mut rec = MembershipRecord {
                z: z.clone(),
                fiber_points: 0,
                fiber_positive: true,
                full_semi_positive: true,
                full_strictly_positive: true,
                min_fiber_eigenvalue: f64::INFINITY,
                min_full_normalized: f64::INFINITY,
                bad_fiber: None,
            };
            for phi in &fw.charts {
                for w in &fibers {
                    let ff = match fiber_form(phi, z, w) {
                        Ok(ff) => ff,
                        Err(e) => {
                            rec.bad_fiber.get_or_insert(format!("chart {} w = {w:?}: {e}", phi.chart));
                            rec.fiber_positive = false;
                            rec.full_semi_positive = false;
                            rec.full_strictly_positive = false;
                            continue;
                        }
                    };
                    rec.fiber_points += 1;
                    let scale = max_abs(&ff.matrix);
                    if fw.r > 0 {
                        let fb = ff.fiber_block();
                        let (lo, _) = spectrum_extremes(&fb, max_abs(&fb)).unwrap_or((f64::NAN, f64::NAN));
                        rec.min_fiber_eigenvalue = rec.min_fiber_eigenvalue.min(lo);
                        if !(lo > tol) {
                            rec.fiber_positive = false;
                        }
                    }
                    let (lo, _) = spectrum_extremes(&ff.matrix, scale).unwrap_or((f64::NAN, f64::NAN));
                    rec.min_full_normalized = rec.min_full_normalized.min(lo);
                    if !(lo >= -tol) {
                        rec.full_semi_positive = false;
                    }
                    if !(lo > tol) {
                        rec.full_strictly_positive = false;
                    }
                }
            }
            rec
        })
        .collect();
    let in_h = records.iter().all(|r| r.fiber_positive);
    Ok(MembershipReport {
        in_h,
        in_h_h0: in_h && records.iter().all(|r| r.full_semi_positive),
        big_proxy: in_h && records.iter().all(|r| r.full_strictly_positive),
        records,
        background: "h0 = weight induced by the identity metric; curvature tested on the total weight".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::{parse_field, parse_scalar};
    use crate::dsl::FieldExpr;
    use crate::hermitian::chern_curvature;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn metric(src: &str) -> HermitianField {
        match parse_field(src).unwrap() {
            FieldExpr::Matrix(m) => HermitianField::new(1, m).unwrap(),
            FieldExpr::Scalar(e) => HermitianField::new(1, vec![vec![e]]).unwrap(),
        }
    }

    fn weight(src: &str, r: usize) -> FinslerWeight {
        FinslerWeight::from_chart(ChartWeight::new(1, r, 0, parse_scalar(src).unwrap()).unwrap())
    }

    #[test]
    fn induced_identity_is_fs() {
        let fw = induced_weight(&metric("[[1, 0], [0, 1]]")).unwrap();
        let w = [c(0.3, -0.4)];
        let v = fw.chart(0).eval(&[c(0.1, 0.0)], &w).unwrap();
        assert!((v - (1.0 + w[0].norm_sqr()).ln()).abs() < 1e-15);
    }

    #[test]
    fn induced_diagonal() {
        let fw = induced_weight(&metric("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]")).unwrap();
        let (z, w) = ([c(0.3, 0.2)], [c(-0.5, 0.1)]);
        let s = z[0].norm_sqr();
        let expected = (s.exp() + (2.0 * s).exp() * w[0].norm_sqr()).ln();
        assert!((fw.chart(0).eval(&z, &w).unwrap() - expected).abs() < 1e-14);
        // chart 1: w is Z0/Z1
        let expected1 = (s.exp() * w[0].norm_sqr() + (2.0 * s).exp()).ln();
        assert!((fw.chart(1).eval(&z, &w).unwrap() - expected1).abs() < 1e-14);
    }

    #[test]
    fn chart_change_is_consistent() {
        let fw = weight("2*abs2(z1) + log(1 + abs2(w1) + 0.5*abs2(w1)^2)", 1);
        let z = [c(0.2, 0.1)];
        let zz = [c(0.7, 0.2), c(-0.3, 0.9)];
        let g = fw.eval_homogeneous(&z, &zz).unwrap();
        for b in 0..2 {
            let w = to_affine(b, &zz);
            let phi = fw.chart(b).eval(&z, &w).unwrap();
            assert!((g - zz[b].norm_sqr() * phi.exp()).abs() < 1e-13 * g);
        }
    }

    #[test]
    fn trivial_fiber_form() {
        let fw = weight("log(1 + abs2(w1))", 1);
        let ff = fiber_form(fw.chart(0), &[c(0.1, 0.0)], &[c(0.0, 0.0)]).unwrap();
        assert!(max_abs(&ff.base_block()) == 0.0 && max_abs(&ff.mixed_block()) == 0.0);
        assert!((ff.fiber_block()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!(max_abs(&geodesic_curvature(fw.chart(0), &[c(0.1, 0.0)], &[c(0.3, 0.0)]).unwrap()) < 1e-15);
    }

    #[test]
    fn product_weight_geodesic_curvature() {
        let fw = weight("1.5*abs2(z1) + log(1 + abs2(w1))", 1);
        let rec = decomposition_residual(&fw, 0, &[c(0.2, -0.1)], &[c(0.4, 0.3)]).unwrap();
        assert!((rec.geodesic_curvature[(0, 0)].re - 1.5).abs() < 1e-14);
        assert!(rec.residual < 1e-8 && rec.mixed_block_max == 0.0);
        assert!(rec.kobayashi_deviation < 1e-6, "{rec:?}");
    }

    #[test]
    fn kobayashi_examples() {
        let zz = [c(0.6, 0.1), c(-0.2, 0.5)];
        let z = [c(0.3, 0.2)];
        let flat = parse_scalar("abs2(Z0) + abs2(Z1)").unwrap();
        assert!(kobayashi_tensor(&flat, 1, &z, &zz).unwrap().0.max_abs() < 1e-12);
        let g = parse_scalar("exp(0.8*abs2(z1)) * (abs2(Z0) + abs2(Z1))").unwrap();
        let (k, _) = kobayashi_tensor(&g, 1, &z, &zz).unwrap();
        let expected = -0.8 * (0.8 * z[0].norm_sqr()).exp();
        assert!((k.get(0, 0, 0, 0).re - expected).abs() < 1e-7);
        assert!((k.get(1, 1, 0, 0).re - expected).abs() < 1e-7);
        assert!(k.get(0, 1, 0, 0).norm() < 1e-7);
    }

    #[test]
    fn hermitian_collapse() {
        let h = metric("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let gq = parse_scalar("exp(-abs2(z1))*abs2(Z0) + exp(-2*abs2(z1))*abs2(Z1)").unwrap();
        let z = [c(0.3, -0.2)];
        let (k, _) = kobayashi_tensor(&gq, 1, &z, &[c(0.4, 0.1), c(0.2, -0.7)]).unwrap();
        let t = chern_curvature(&h, &z).unwrap();
        assert!(k.sub(&t).max_abs() < 1e-6);
    }

    #[test]
    fn finsler_validation() {
        let base = vec![vec![c(0.1, 0.2)]];
        let fibers = vec![vec![c(0.6, 0.1), c(-0.2, 0.5)], vec![c(1.0, 0.0), c(0.3, 0.3)]];
        let v = validate_finsler(&parse_scalar("abs2(Z0) + abs2(Z1)").unwrap(), &base, &fibers).unwrap();
        assert!(v.positivity && v.homogeneity && v.pseudo_convexity);
        let q = parse_scalar("pow(abs2(Z0)^2 + abs2(Z1)^2, 0.5)").unwrap();
        let v = validate_finsler(&q, &base, &fibers).unwrap();
        assert!(v.homogeneity && v.positivity && v.pseudo_convexity);
        let bad = parse_scalar("abs2(Z0) - abs2(Z1)").unwrap();
        let fibers = vec![vec![c(0.1, 0.0), c(1.0, 0.0)]];
        let v = validate_finsler(&bad, &base, &fibers).unwrap();
        assert!(!v.positivity && v.positivity_witness.is_some());
    }

    #[test]
    fn equivalence() {
        let samples = vec![vec![c(0.1, 0.2)], vec![c(-0.3, 0.0)]];
        let h = metric("[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]");
        let recs = positivity_equivalence_check(&h, &samples, 1e-8, 3).unwrap();
        assert!(recs.iter().all(|r| r.agree && r.griffiths == VerdictClass::StrictlyPositive), "{recs:?}");
        let h = metric("[[exp(abs2(z1)), 0], [0, exp(abs2(z1))]]");
        let recs = positivity_equivalence_check(&h, &samples, 1e-8, 3).unwrap();
        assert!(recs.iter().all(|r| r.agree && r.griffiths == VerdictClass::StrictlyNegative), "{recs:?}");
        assert!(recs.iter().all(|r| !r.full_form.class.is_semi_positive()));
        let h = metric("[[1, 0], [0, 1]]");
        let recs = positivity_equivalence_check(&h, &samples, 1e-8, 3).unwrap();
        assert!(recs.iter().all(|r| r.agree && r.griffiths_zero), "{recs:?}");
    }

    #[test]
    fn membership() {
        let samples = vec![vec![c(0.2, 0.1)]];
        let rep = hx_membership(&weight("log(1 + abs2(w1))", 1), &samples, 21, 1e-8).unwrap();
        assert!(rep.in_h && rep.in_h_h0);
        let rep = hx_membership(&weight("log(1 + abs2(w1)) - 3*abs2(z1)", 1), &samples, 21, 1e-8).unwrap();
        assert!(rep.in_h && !rep.in_h_h0);
        assert_eq!(rep.records[0].fiber_points, 42);
    }
}
