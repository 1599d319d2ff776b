//! Threshold arithmetic for symmetric powers, Lelong numbers of base
//! weights, local integrability of `e^{-tφ}`, and the stable-model checks.
//!
//! Lelong convention: `ν(c log|z|^2) = c`.

use rayon::prelude::*;
use serde::Serialize;

use crate::diff::jet2_forward;
use crate::dsl::eval::{eval, point_env};
use crate::dsl::expr::{Expr, Func, Var};
use crate::dsl::scene::Scene;
use crate::error::{Error, Result};
use crate::finsler::{fiber_form, hx_membership, induced_weight, paired_fiber_point, FinslerWeight};
use crate::hermitian::HermitianField;
use crate::l2::{classify_refinement, RefinementClass};
use crate::tensor::{max_abs_entry, CMat, C64};

/// Largest `r` accepted by the threshold arithmetic.
pub const MAX_THRESHOLD_R: usize = 30;

/// `R = C(2r+2, r+2)`, the rank of `S^{r+2}` of a rank `r+1` space.
pub fn symmetric_rank(r: usize) -> Result<u64> {
    if r == 0 || r > MAX_THRESHOLD_R {
        return Err(Error::input(format!("symmetric_rank needs 1 <= r <= {MAX_THRESHOLD_R}, got {r}")));
    }
    Ok(binomial((2 * r + 2) as u64, (r + 2) as u64))
}

/// Exact for the arguments used here (`C(62, 32)` fits in 60 bits).
pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub r: usize,
    #[serde(rename = "R")]
    pub symmetric_rank: u64,
    /// `2R / ((r+2)(r+3))`
    pub threshold: f64,
    pub gt_one: bool,
}

pub fn vanishing_threshold(r: usize) -> Result<ThresholdReport> {
    let big_r = symmetric_rank(r)?;
    let threshold = 2.0 * big_r as f64 / ((r + 2) * (r + 3)) as f64;
    Ok(ThresholdReport {
        r,
        symmetric_rank: big_r,
        threshold,
        gt_one: threshold > 1.0,
    })
}

/// Scalar base weight with known singular points.
#[derive(Debug, Clone)]
pub struct SingularBaseWeight {
    pub n: usize,
    pub expr: Expr,
    pub singular_points: Vec<Vec<C64>>,
}

impl SingularBaseWeight {
    pub fn new(n: usize, expr: Expr, singular_points: Vec<Vec<C64>>) -> Result<Self> {
        if let Some(v) = expr.variables().into_iter().find(|v| v.kind != crate::dsl::VarKind::Base || v.index >= n) {
            return Err(Error::input(format!("base weight may only use z1..z{n}, found {v}")));
        }
        Ok(SingularBaseWeight { n, expr, singular_points })
    }

    /// The scene's base weight, or `-log det H` when only a metric is given.
    pub fn from_scene(scene: &Scene) -> Result<Self> {
        let expr = match (&scene.base_weight, &scene.metric) {
            (Some(e), _) => e.clone(),
            (None, Some(_)) => Expr::neg(Expr::call(Func::Log, vec![HermitianField::from_scene(scene)?.det_expr()])),
            (None, None) => return Err(Error::input("scene has neither a base weight nor a metric")),
        };
        Self::new(scene.n, expr, scene.singular_points.clone())
    }

    pub fn eval(&self, z: &[C64]) -> Result<f64> {
        Ok(eval::<C64>(&self.expr, &point_env(z, &[]))?.re)
    }
}

/// `ρ = 10^{-k}`, `k = 1..12`.
pub fn default_radii() -> Vec<f64> {
    (1..=12).map(|k| 10f64.powi(-k)).collect()
}

const CIRCLE_SAMPLES: usize = 64;

/// Sample directions on the unit sphere of `C^n`: phases along each axis
/// and along the diagonal.
fn sphere_directions(n: usize) -> Vec<Vec<C64>> {
    let mut dirs = Vec::new();
    let phases: Vec<C64> = (0..CIRCLE_SAMPLES)
        .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / CIRCLE_SAMPLES as f64))
        .collect();
    for axis in 0..n {
        for p in &phases {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[axis] = *p;
            dirs.push(v);
        }
    }
    if n > 1 {
        let s = 1.0 / (n as f64).sqrt();
        for p in &phases {
            dirs.push((0..n).map(|i| if i == 0 { p * s } else { C64::new(s, 0.0) }).collect());
        }
    }
    dirs
}

#[derive(Debug, Clone, Serialize)]
pub struct LelongEstimate {
    pub point: Vec<C64>,
    pub nu: f64,
    /// Raw least-squares slope before the monotonicity and floor checks.
    pub slope: f64,
    pub radii: Vec<f64>,
    pub circle_maxima: Vec<f64>,
    /// Number of smallest radii entering the fit.
    pub fitted_radii: usize,
    pub monotone: bool,
    pub note: Option<String>,
}

/// Slopes below this are reported as zero.
const SLOPE_FLOOR: f64 = 1e-3;

/// Least-squares slope of `max_{|z-p|=ρ} φ` against `log ρ^2`, fitted on the
/// smaller half of the radii.
pub fn lelong_estimate(phi: &SingularBaseWeight, point: &[C64], radii: &[f64]) -> Result<LelongEstimate> {
    if point.len() != phi.n {
        return Err(Error::input(format!("point has {} coordinates, expected {}", point.len(), phi.n)));
    }
    if radii.len() < 2 || radii.windows(2).any(|p| !(p[1] < p[0])) || radii.iter().any(|&r| !(r > 1e-150)) {
        return Err(Error::input("radii must be positive, above underflow, and strictly decreasing"));
    }
    let dirs = sphere_directions(phi.n);
    let maxima: Vec<f64> = radii
        .iter()
        .map(|&rho| {
            dirs.iter().try_fold(f64::NEG_INFINITY, |m, d| {
                let z: Vec<C64> = point.iter().zip(d).map(|(p, u)| p + u * rho).collect();
                Ok::<f64, Error>(m.max(phi.eval(&z)?))
            })
        })
        .collect::<Result<_>>()?;
    // Radii decrease, so a plurisubharmonic weight gives non-increasing maxima.
    let monotone = maxima.windows(2).all(|p| p[1] <= p[0] + 1e-12 * p[0].abs().max(1.0));
    let start = radii.len() / 2;
    let xs: Vec<f64> = radii[start..].iter().map(|r| (r * r).ln()).collect();
    let ys = &maxima[start..];
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let (nu, note) = if !monotone {
        (0.0, Some("circle maxima are not monotone in the radius; weight looks smooth or non-psh, reporting 0".to_string()))
    } else if slope < SLOPE_FLOOR {
        (0.0, Some(format!("slope {slope:.3e} is below {SLOPE_FLOOR:.0e}; reporting 0")))
    } else {
        (slope, None)
    };
    Ok(LelongEstimate {
        point: point.to_vec(),
        nu,
        slope,
        radii: radii.to_vec(),
        circle_maxima: maxima,
        fitted_radii: xs.len(),
        monotone,
        note,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrability {
    Integrable,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub point: Vec<C64>,
    pub t: f64,
    pub radius: f64,
    /// Number of dyadic annuli at each refinement level.
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
    pub growth: Vec<f64>,
    pub class: Integrability,
}

/// Annulus counts of the three refinement levels.
pub const ANNULUS_LEVELS: [usize; 3] = [64, 128, 256];
const ANNULUS_RADIAL: usize = 8;
const ANNULUS_ANGULAR: usize = 32;

/// `∫ e^{-tφ} dV` over the dyadic annulus `ε 2^{-k-1} < |z - p| < ε 2^{-k}`,
/// Gauss-Legendre in `log ρ`, midpoint in angle.
fn annulus_integral(phi: &SingularBaseWeight, p: C64, t: f64, eps: f64, k: usize) -> Result<f64> {
    use gauss_quad::legendre::GaussLegendre;
    let gl = GaussLegendre::new(std::num::NonZeroUsize::new(ANNULUS_RADIAL).expect("positive"));
    let hi = eps.ln() - k as f64 * std::f64::consts::LN_2;
    let lo = hi - std::f64::consts::LN_2;
    let mut acc = 0.0;
    for &(x, wx) in gl.as_node_weight_pairs().iter() {
        let u = lo + 0.5 * (x + 1.0) * (hi - lo);
        let rho = u.exp();
        let wu = 0.5 * wx * (hi - lo);
        let mut ring = 0.0;
        for a in 0..ANNULUS_ANGULAR {
            let th = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / ANNULUS_ANGULAR as f64;
            let z = p + C64::from_polar(rho, th);
            ring += match phi.eval(&[z]) {
                Ok(v) => (-t * v).exp(),
                Err(Error::Domain { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
        }
        acc += wu * rho * rho * ring * (2.0 * std::f64::consts::PI / ANNULUS_ANGULAR as f64);
    }
    Ok(acc)
}

/// Integrability of `e^{-tφ}` on the disc of radius `eps` around `point`
/// (base dimension 1), by the growth of nested annulus sums.
pub fn integrability_classify(phi: &SingularBaseWeight, point: &[C64], t: f64, eps: f64) -> Result<IntegrabilityReport> {
    if phi.n != 1 || point.len() != 1 {
        return Err(Error::Capability("integrability classification is implemented for base dimension 1".into()));
    }
    if !(t > 0.0) || !(eps > 0.0) {
        return Err(Error::input("t and the disc radius must be positive"));
    }
    let kmax = *ANNULUS_LEVELS.last().expect("levels");
    let parts: Vec<f64> = (0..kmax)
        .into_par_iter()
        .map(|k| annulus_integral(phi, point[0], t, eps, k))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = ANNULUS_LEVELS.iter().map(|&l| parts[..l].iter().sum()).collect();
    let refinement = classify_refinement(&values);
    let class = match refinement.class {
        RefinementClass::Converged => Integrability::Integrable,
        RefinementClass::Divergent => Integrability::Divergent,
        RefinementClass::Inconclusive => Integrability::Inconclusive,
    };
    Ok(IntegrabilityReport {
        point: point.to_vec(),
        t,
        radius: eps,
        levels: ANNULUS_LEVELS.to_vec(),
        values,
        growth: refinement.growth,
        class,
    })
}

/// Closed form for `φ = c log|z|^2` plus a bounded part: integrable iff `tc < 1`.
pub fn closed_form_integrable(t: f64, c: f64) -> bool {
    t * c < 1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct StableModelSample {
    pub z: Vec<C64>,
    pub w: Vec<C64>,
    /// `∂∂̄ φ_base / (r+1)`
    #[serde(serialize_with = "crate::report::ser_cmat")]
    pub expected_base_block: CMat,
    pub base_deviation: f64,
    pub fiber_deviation: f64,
    pub mixed_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StableModelReport {
    pub samples: Vec<StableModelSample>,
    pub max_base_deviation: f64,
    pub max_fiber_deviation: f64,
    pub max_mixed: f64,
    pub skipped: usize,
}

/// Block structure of the induced weight of the stable model: base block
/// `∂∂̄φ_base / (r+1)`, fiber block Fubini-Study, no mixed terms.
pub fn stable_model_check(scene: &Scene, fibers_per_sample: usize) -> Result<StableModelReport> {
    let base = scene
        .base_weight
        .clone()
        .ok_or_else(|| Error::input("stable-model check needs a base weight"))?;
    let fw = FinslerWeight::from_scene(scene)?;
    let r = fw.r;
    let base_dirs: Vec<Var> = (0..scene.n).map(Var::base).collect();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for z in &scene.samples {
        if scene.distance_to_singular(z).is_some_and(|d| d < scene.punctured_radius) {
            skipped += 1;
            continue;
        }
        let hess = jet2_forward(&base, &base_dirs, &point_env(z, &[]))?.dd / C64::new((r + 1) as f64, 0.0);
        for k in 0..fibers_per_sample.max(1) {
            let w = paired_fiber_point(r, k);
            let ff = fiber_form(fw.chart(scene.chart), z, &w)?;
            let w2 = 1.0 + w.iter().map(|x| x.norm_sqr()).sum::<f64>();
            let fs = CMat::from_fn(r, r, |a, b| {
                let d = if a == b { C64::new(1.0 / w2, 0.0) } else { C64::new(0.0, 0.0) };
                d - w[b] * w[a].conj() / (w2 * w2)
            });
            samples.push(StableModelSample {
                z: z.clone(),
                w: w.clone(),
                base_deviation: max_abs_entry(&(ff.base_block() - &hess)),
                fiber_deviation: max_abs_entry(&(ff.fiber_block() - fs)),
                mixed_max: max_abs_entry(&ff.mixed_block()),
                expected_base_block: hess.clone(),
            });
        }
    }
    let fold = |f: fn(&StableModelSample) -> f64| samples.iter().map(f).fold(0.0, f64::max);
    Ok(StableModelReport {
        max_base_deviation: fold(|s| s.base_deviation),
        max_fiber_deviation: fold(|s| s.fiber_deviation),
        max_mixed: fold(|s| s.mixed_max),
        samples,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tristate {
    Yes,
    No,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishingReport {
    pub threshold: ThresholdReport,
    /// Strict positivity of `∂∂̄φ` on the sampled total space.
    pub strict_positivity_proxy: bool,
    pub fibers_finite: bool,
    pub lelong: Vec<LelongEstimate>,
    pub nu: f64,
    pub nu_below_threshold: bool,
    /// `t = (r+2)(r+3) / (2R)`
    pub t: f64,
    pub integrability: Vec<IntegrabilityReport>,
    pub hypotheses_satisfied: Tristate,
    /// `ν < 1`, the older sufficient condition.
    pub nu_below_one: bool,
    pub notes: Vec<String>,
}

/// Disc radius for the integrability test around each singular point.
pub const INTEGRABILITY_RADIUS: f64 = 0.5;

/// Assembles the hypotheses of the vanishing statement for a scene.
pub fn vanishing_report(scene: &Scene, tol: f64) -> Result<VanishingReport> {
    let r = scene.r;
    let threshold = vanishing_threshold(r)?;
    let phi = SingularBaseWeight::from_scene(scene)?;
    let fw = match &scene.metric {
        Some(_) => induced_weight(&HermitianField::from_scene(scene)?)?,
        None => FinslerWeight::from_scene(scene)?,
    };
    let samples: Vec<Vec<C64>> = scene
        .samples
        .iter()
        .filter(|z| !scene.distance_to_singular(z).is_some_and(|d| d < scene.punctured_radius))
        .cloned()
        .collect();
    let membership = hx_membership(&fw, &samples, 5, tol)?;
    let fibers_finite = membership.records.iter().all(|rec| rec.bad_fiber.is_none());
    let lelong: Vec<LelongEstimate> = scene
        .singular_points
        .iter()
        .map(|p| lelong_estimate(&phi, p, &default_radii()))
        .collect::<Result<_>>()?;
    let nu = lelong.iter().map(|l| l.nu).fold(0.0, f64::max);
    let t = ((r + 2) * (r + 3)) as f64 / (2.0 * threshold.symmetric_rank as f64);
    let mut notes = vec![
        "H^q(Y, K_Y ⊗ E ⊗ det E) = 0 for q > 0 is the conclusion the vanishing theorem asserts under these hypotheses; \
         cohomology is not computed here"
            .to_string(),
        "bigness of (det E, φ) is not certified; strict positivity at samples is a proxy".to_string(),
        "stability of the bundle is assumed by the model, not checked".to_string(),
    ];
    let integrability: Vec<IntegrabilityReport> = if scene.n == 1 {
        scene
            .singular_points
            .iter()
            .map(|p| integrability_classify(&phi, p, t, INTEGRABILITY_RADIUS))
            .collect::<Result<_>>()?
    } else {
        notes.push("integrability is evaluated for base dimension 1 only".into());
        Vec::new()
    };
    let nu_below_threshold = nu < threshold.threshold;
    let any = |c: Integrability| integrability.iter().any(|i| i.class == c);
    let hypotheses_satisfied = if !nu_below_threshold || any(Integrability::Divergent) || !membership.big_proxy || !fibers_finite {
        Tristate::No
    } else if any(Integrability::Inconclusive) || (scene.n != 1 && !scene.singular_points.is_empty()) {
        Tristate::Inconclusive
    } else {
        Tristate::Yes
    };
    let nu_below_one = nu < 1.0;
    if nu_below_one {
        notes.push("ν < 1: the older sufficient condition for the same vanishing also holds".into());
    }
    Ok(VanishingReport {
        threshold,
        strict_positivity_proxy: membership.big_proxy,
        fibers_finite,
        lelong,
        nu,
        nu_below_threshold,
        t,
        integrability,
        hypotheses_satisfied,
        nu_below_one,
        notes,
    })
}
