//! L² metrics pushed forward from weights on `O(1)`, and the checks that tie
//! them back to the Hermitian side: round trip, fiberwise Kähler-Einstein
//! residual, duality of curvatures and the determinant pushforward.

use serde::Serialize;

use crate::diff::jet2_fn;
use crate::error::{Error, Result};
use crate::finsler::{affine_index, geodesic_curvature, induced_weight, to_affine, FinslerWeight};
use crate::hermitian::{curvature_from_jet, curvature_trace, HermitianField, MetricJet};
use crate::quadrature::{build_grid, integrate_fiber, weighted_point, ChartPoint, FiberGrid, Measure, WeightedPoint};
use crate::tensor::{hermitian_eigen, CMat, CurvatureTensor, Hermitian, C64};

/// Section of `O(1)` given by coefficients `s_0..s_r`; on chart `A` it reads
/// `ξ_A(w) = s_A + Σ_{i≠A} s_i w^i_A`.
#[derive(Debug, Clone, Serialize)]
pub struct SectionXi {
    pub coefficients: Vec<C64>,
    pub chart: usize,
}

impl SectionXi {
    pub fn new(coefficients: Vec<C64>, chart: usize) -> Result<Self> {
        if chart >= coefficients.len() {
            return Err(Error::input(format!("chart {chart} out of range for {} coefficients", coefficients.len())));
        }
        Ok(SectionXi { coefficients, chart })
    }

    pub fn in_chart(&self, chart: usize) -> Result<Self> {
        Self::new(self.coefficients.clone(), chart)
    }

    pub fn eval(&self, w: &[C64]) -> C64 {
        let a = self.chart;
        let mut acc = self.coefficients[a];
        for (i, s) in self.coefficients.iter().enumerate() {
            if i != a {
                acc += s * w[affine_index(a, i)];
            }
        }
        acc
    }

    /// `|ξ_A|^2 e^{-φ_A}` at the fiber point with homogeneous coordinates `zz`.
    pub fn pointwise_norm(&self, fw: &FinslerWeight, z: &[C64], zz: &[C64]) -> Result<f64> {
        let w = to_affine(self.chart, zz);
        let phi = fw.chart(self.chart).eval(z, &w)?;
        Ok(self.eval(&w).norm_sqr() * (-phi).exp())
    }
}

/// Relative disagreement of `|ξ|^2 e^{-φ}` between two charts at one point.
pub fn cross_chart_defect(xi: &SectionXi, other: usize, fw: &FinslerWeight, z: &[C64], zz: &[C64]) -> Result<f64> {
    let a = xi.pointwise_norm(fw, z, zz)?;
    let b = xi.in_chart(other)?.pointwise_norm(fw, z, zz)?;
    Ok((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
}

/// L² metric of a weight at one base point.
#[derive(Debug, Clone, Serialize)]
pub struct L2Matrix {
    pub z: Vec<C64>,
    #[serde(serialize_with = "crate::report::ser_cmat")]
    pub matrix: CMat,
    pub resolution: usize,
    pub measure: Measure,
}

/// Entry `(α, β)` of the integrand on chart `A`, by the four cases of
/// which index equals the chart index.
fn l2_integrand(wp: &WeightedPoint, rank: usize) -> Vec<C64> {
    let a = wp.point.chart;
    let w = &wp.point.w;
    let e = (-wp.phi).exp();
    let mut out = Vec::with_capacity(rank * rank);
    for al in 0..rank {
        for be in 0..rank {
            let v = match (al == a, be == a) {
                (true, true) => C64::new(e, 0.0),
                (true, false) => w[affine_index(a, be)].conj() * e,
                (false, true) => w[affine_index(a, al)] * e,
                (false, false) => w[affine_index(a, al)] * w[affine_index(a, be)].conj() * e,
            };
            out.push(v);
        }
    }
    out
}

/// `H_{αβ} = ∫ ξ_α conj(ξ_β) e^{-φ} ω_φ^r / r!` with `ξ_α` the section `Z_α`.
pub fn l2_metric(fw: &FinslerWeight, z: &[C64], grid: &FiberGrid, measure: Measure) -> Result<L2Matrix> {
    let m = l2_raw(fw, z, grid, measure)?;
    let eig = hermitian_eigen(&Hermitian::symmetrize(&m))?;
    if !(eig.values[0] > 0.0) {
        return Err(Error::degenerate(format!(
            "L2 metric at z = {z:?} is not positive-definite (smallest eigenvalue {:.3e})",
            eig.values[0]
        )));
    }
    Ok(L2Matrix {
        z: z.to_vec(),
        matrix: m,
        resolution: grid.resolution,
        measure,
    })
}

fn l2_raw(fw: &FinslerWeight, z: &[C64], grid: &FiberGrid, measure: Measure) -> Result<CMat> {
    let rank = fw.r + 1;
    let v = integrate_fiber(fw, z, grid, measure, &|wp| Ok(l2_integrand(wp, rank)))?;
    Ok(CMat::from_row_slice(rank, rank, &v))
}

/// Outcome of a resolution-doubling sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementClass {
    Converged,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub values: Vec<f64>,
    /// Relative growth between consecutive refinements.
    pub growth: Vec<f64>,
    pub class: RefinementClass,
}

/// Divergent when every refinement grows the value by more than 10%, or
/// the value is not finite; converged when the last growth is below 1%.
pub fn classify_refinement(values: &[f64]) -> Refinement {
    let growth: Vec<f64> = values.windows(2).map(|p| (p[1] - p[0]) / p[0].abs().max(f64::MIN_POSITIVE)).collect();
    let class = if values.iter().any(|v| !v.is_finite()) || (!growth.is_empty() && growth.iter().all(|&g| g > 0.1)) {
        RefinementClass::Divergent
    } else if growth.last().is_some_and(|g| g.abs() < 0.01) {
        RefinementClass::Converged
    } else {
        RefinementClass::Inconclusive
    };
    Refinement {
        values: values.to_vec(),
        growth,
        class,
    }
}

/// `l2_metric` with tail monitoring: the trace is recomputed at twice and
/// four times the resolution. A divergent sequence is an error.
pub fn l2_metric_monitored(fw: &FinslerWeight, z: &[C64], resolution: usize, measure: Measure) -> Result<(L2Matrix, Refinement)> {
    let mut traces = Vec::new();
    let mut finest = None;
    for k in 0..3 {
        let grid = build_grid(fw.r, resolution << k)?;
        let m = l2_raw(fw, z, &grid, measure)?;
        traces.push(m.trace().re);
        if k == 0 {
            finest = Some(grid);
        }
    }
    let refinement = classify_refinement(&traces);
    if refinement.class == RefinementClass::Divergent {
        return Err(Error::Numerical {
            message: format!("L2 integral at z = {z:?} diverges under refinement (traces {traces:?})"),
            iterations: traces.len(),
        });
    }
    let grid = finest.expect("first refinement level");
    Ok((l2_metric(fw, z, &grid, measure)?, refinement))
}

fn frob(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Best real `c` with `a ≈ c b`, and `|a - c b| / |a|`.
pub fn best_fit(a: &[C64], b: &[C64]) -> (f64, f64) {
    let bb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    if bb == 0.0 {
        return (f64::NAN, if frob(a) == 0.0 { 0.0 } else { 1.0 });
    }
    let ab: f64 = b.iter().zip(a).map(|(x, y)| (x.conj() * y).re).sum();
    let c = ab / bb;
    let res: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y * c).collect();
    let na = frob(a);
    (c, if na == 0.0 { frob(&res) } else { frob(&res) / na })
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTrip {
    pub z: Vec<C64>,
    /// Best-fit `λ` in `L2 ≈ λ H`.
    pub lambda: f64,
    /// `|L2 - λ H| / |L2|` (Frobenius).
    pub residual: f64,
    pub fiber_volume: f64,
    /// `|λ - V| / V`
    pub volume_deviation: f64,
    /// Second-moment prediction `V / (r + 1)`.
    pub moment_prediction: f64,
    pub moment_deviation: f64,
}

/// L² metric of the induced weight of `H`, compared with `H`.
pub fn roundtrip_check(h: &HermitianField, z: &[C64], grid: &FiberGrid, measure: Measure) -> Result<RoundTrip> {
    let hz = h.metric_at(z)?;
    let fw = induced_weight(h)?;
    let l2 = l2_metric(&fw, z, grid, measure)?;
    let (lambda, residual) = best_fit(l2.matrix.as_slice(), hz.as_slice());
    let vol = crate::quadrature::fiber_volume(&fw, z, grid, measure)?;
    let pred = vol / (fw.r + 1) as f64;
    Ok(RoundTrip {
        z: z.to_vec(),
        lambda,
        residual,
        fiber_volume: vol,
        volume_deviation: (lambda - vol).abs() / vol,
        moment_prediction: pred,
        moment_deviation: (lambda - pred).abs() / pred,
    })
}

/// Left side of the fiberwise Kähler-Einstein equation as a unit-mass
/// density against Lebesgue measure (`r! det(∂∂̄_w φ) / π^r`), and the factor
/// `e^{-(r+1)φ} / det H` multiplying `C` on the right.
#[derive(Debug, Clone, Serialize)]
pub struct KeNode {
    pub chart: usize,
    pub w: Vec<C64>,
    pub lhs: f64,
    pub rhs_factor: f64,
}

/// One node per grid point, on the chart where it is best conditioned.
pub fn ke_nodes(fw: &FinslerWeight, det_h: f64, z: &[C64], grid: &FiberGrid) -> Result<Vec<KeNode>> {
    use rayon::prelude::*;
    let r = fw.r;
    let unit = (1..=r).map(|k| k as f64).product::<f64>() / std::f64::consts::PI.powi(r as i32);
    grid.nodes
        .par_iter()
        .map(|node| {
            let chart = (0..=r).fold(0, |best, b| if node.s[b] > node.s[best] { b } else { best });
            let p = ChartPoint {
                chart,
                w: to_affine(chart, &node.homog),
                homog: node.homog.clone(),
            };
            let wp = weighted_point(fw.chart(chart), z, p)?;
            let fs = 1.0 + wp.point.w.iter().map(|x| x.norm_sqr()).sum::<f64>();
            let det = wp.density / fs.powi(r as i32 + 1);
            Ok(KeNode {
                chart,
                w: wp.point.w,
                lhs: unit * det,
                rhs_factor: (-((r + 1) as f64) * wp.phi).exp() / det_h,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct KeResidual {
    pub z: Vec<C64>,
    pub c: f64,
    /// Max over nodes of `|lhs - C rhs| / max(lhs, C rhs)`.
    pub max_residual: f64,
    pub worst_chart: usize,
    pub worst_w: Vec<C64>,
    pub nodes: usize,
}

pub fn ke_residual(fw: &FinslerWeight, det_h: f64, z: &[C64], grid: &FiberGrid, c: f64) -> Result<KeResidual> {
    let nodes = ke_nodes(fw, det_h, z, grid)?;
    let mut out = KeResidual {
        z: z.to_vec(),
        c,
        max_residual: 0.0,
        worst_chart: 0,
        worst_w: Vec::new(),
        nodes: nodes.len(),
    };
    for k in &nodes {
        let rhs = c * k.rhs_factor;
        let res = (k.lhs - rhs).abs() / k.lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        if res > out.max_residual || out.worst_w.is_empty() {
            out.max_residual = out.max_residual.max(res);
            out.worst_chart = k.chart;
            out.worst_w = k.w.clone();
        }
    }
    Ok(out)
}

/// Least-squares `C` over the nodes of one fiber.
pub fn fit_ke_constant(fw: &FinslerWeight, det_h: f64, z: &[C64], grid: &FiberGrid) -> Result<f64> {
    let nodes = ke_nodes(fw, det_h, z, grid)?;
    let num: f64 = nodes.iter().map(|k| k.lhs * k.rhs_factor).sum();
    let den: f64 = nodes.iter().map(|k| k.rhs_factor * k.rhs_factor).sum();
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationReport {
    pub r: usize,
    pub fitted: Vec<f64>,
    pub mean: f64,
    /// Coefficient of variation of the fitted values across base points.
    pub coefficient_of_variation: f64,
    /// Largest KE residual with the mean constant.
    pub max_residual: f64,
    /// `((r+1)!)^{-r}`
    pub reference_value: f64,
    pub ratio_to_reference: f64,
    /// `r! / π^r`, the value implied by the unit-mass convention.
    pub convention_value: f64,
}

/// Fits `C` at every base point for the induced weight of `h`.
pub fn ke_constant_survey(h: &HermitianField, points: &[Vec<C64>], grid: &FiberGrid) -> Result<NormalizationReport> {
    let fw = induced_weight(h)?;
    let r = fw.r;
    let mut fitted = Vec::new();
    let mut dets = Vec::new();
    for z in points {
        let det = h.metric_at(z)?.determinant().re;
        fitted.push(fit_ke_constant(&fw, det, z, grid)?);
        dets.push(det);
    }
    let k = fitted.len() as f64;
    let mean = fitted.iter().sum::<f64>() / k;
    let var = fitted.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / k;
    let mut max_residual: f64 = 0.0;
    for (z, det) in points.iter().zip(&dets) {
        max_residual = max_residual.max(ke_residual(&fw, *det, z, grid, mean)?.max_residual);
    }
    let fact = |m: usize| (1..=m).map(|x| x as f64).product::<f64>();
    let reference_value = fact(r + 1).powi(-(r as i32));
    Ok(NormalizationReport {
        r,
        fitted,
        mean,
        coefficient_of_variation: var.sqrt() / mean.abs(),
        max_residual,
        reference_value,
        ratio_to_reference: mean / reference_value,
        convention_value: fact(r) / std::f64::consts::PI.powi(r as i32),
    })
}

/// `C` for `H = I` over `points` (rank `r + 1`, one base dimension).
pub fn normalization_constant_estimate(r: usize, grid: &FiberGrid, points: &[Vec<C64>]) -> Result<NormalizationReport> {
    let n = points.first().map_or(1, |p| p.len());
    ke_constant_survey(&HermitianField::constant(n, &CMat::identity(r + 1, r + 1)), points, grid)
}

/// Stencil jet of the tabulated field `z -> L2(z)` of `fw`.
pub fn l2_field_jet(fw: &FinslerWeight, z: &[C64], grid: &FiberGrid) -> Result<MetricJet> {
    let f = |p: &[C64]| -> Result<Vec<C64>> { Ok(l2_raw(fw, p, grid, Measure::Unit)?.transpose().as_slice().to_vec()) };
    let jets = jet2_fn(&f, z, None)?;
    Ok(MetricJet::from_entries(fw.r + 1, fw.n, &jets))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProportionalityReport {
    pub z: Vec<C64>,
    /// Best-fit constant; absent when both sides vanish.
    pub fitted_constant: Option<f64>,
    /// Value implied by the unit-mass convention, `1 / (r + 1)`.
    pub expected_constant: f64,
    pub deviation: f64,
    pub scale_lhs: f64,
    pub scale_rhs: f64,
    pub stencil_error: f64,
}

/// Both sides below this are treated as zero.
const ZERO_FLOOR: f64 = 1e-7;

fn proportionality(z: &[C64], a: &[C64], b: &[C64], expected: f64, stencil_error: f64) -> ProportionalityReport {
    let (sa, sb) = (frob(a), frob(b));
    let (fitted_constant, deviation) = if sa.max(sb) < ZERO_FLOOR {
        (None, 0.0)
    } else {
        let (c, dev) = best_fit(a, b);
        (c.is_finite().then_some(c), dev)
    };
    ProportionalityReport {
        z: z.to_vec(),
        fitted_constant,
        expected_constant: expected,
        deviation,
        scale_lhs: sa,
        scale_rhs: sb,
        stencil_error,
    }
}

/// Curvature of the L² metric of the induced weight (stencil over `z`)
/// against `-H K^T H`, `K` the Kobayashi curvature of the dual Finsler form.
pub fn duality_check(h: &HermitianField, z: &[C64], grid: &FiberGrid) -> Result<ProportionalityReport> {
    let hz = h.metric_at(z)?;
    let fw = induced_weight(h)?;
    let jet = l2_field_jet(&fw, z, grid)?;
    let lhs = curvature_from_jet(&jet)?;
    let rank = fw.r + 1;
    let zz = vec![C64::new(1.0 / (rank as f64).sqrt(), 0.0); rank];
    let (k, k_err) = crate::finsler::kobayashi_tensor(&fw.homogeneous, h.n, z, &zz)?;
    let mut rhs = CurvatureTensor::zeros(rank, h.n);
    for i in 0..h.n {
        for j in 0..h.n {
            let m = -(&hz * k.bundle_block(i, j).transpose() * &hz);
            for a in 0..rank {
                for b in 0..rank {
                    rhs.set(a, b, i, j, m[(a, b)]);
                }
            }
        }
    }
    Ok(proportionality(
        z,
        lhs.entries(),
        rhs.entries(),
        1.0 / rank as f64,
        jet.est_error.max(k_err),
    ))
}

/// Fiber integral of the geodesic curvature against `R_det` of the L² metric.
pub fn det_pushforward_check(h: &HermitianField, z: &[C64], grid: &FiberGrid) -> Result<ProportionalityReport> {
    h.metric_at(z)?;
    let fw = induced_weight(h)?;
    let n = h.n;
    let integral = integrate_fiber(&fw, z, grid, Measure::Unit, &|wp| {
        let c = geodesic_curvature(fw.chart(wp.point.chart), z, &wp.point.w)?;
        Ok(c.as_slice().to_vec())
    })?;
    let jet = l2_field_jet(&fw, z, grid)?;
    let theta = curvature_from_jet(&jet)?;
    let rdet = curvature_trace(&theta, &jet.value)?;
    debug_assert_eq!(integral.len(), n * n);
    Ok(proportionality(z, &integral, rdet.as_slice(), 1.0 / (fw.r + 1) as f64, jet.est_error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin;
    use crate::dsl::parser::parse_scalar;
    use crate::finsler::{from_affine, ChartWeight};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn field(name: &str, params: &[f64], r: Option<usize>) -> HermitianField {
        HermitianField::from_scene(&builtin(name, params, 1, r).unwrap()).unwrap()
    }

    #[test]
    fn section_cross_chart() {
        let h = field("diagonal-exponential", &[1.0, 2.0, 0.5], None);
        let fw = induced_weight(&h).unwrap();
        let xi = SectionXi::new(vec![c(0.3, 0.1), c(-1.0, 0.2), c(0.5, 0.5)], 0).unwrap();
        let zz = [c(0.4, 0.2), c(-0.7, 0.1), c(0.3, -0.6)];
        let z = [c(0.2, -0.1)];
        for b in 1..3 {
            assert!(cross_chart_defect(&xi, b, &fw, &z, &zz).unwrap() < 1e-12);
        }
        // ξ_A(w) is the linear form Σ s_i Z_i / Z_A.
        let w = to_affine(1, &zz);
        let direct: C64 = xi.coefficients.iter().zip(from_affine(1, &w)).map(|(s, x)| s * x).sum();
        assert!((xi.in_chart(1).unwrap().eval(&w) - direct).norm() < 1e-14);
    }

    #[test]
    fn trivial_l2_is_scalar() {
        let fw = induced_weight(&field("trivial", &[], Some(1))).unwrap();
        let g = build_grid(1, 32).unwrap();
        let m = l2_metric(&fw, &[c(0.1, 0.0)], &g, Measure::Unit).unwrap().matrix;
        assert!((m[(0, 0)].re - 0.5).abs() < 1e-12 && (m[(1, 1)].re - 0.5).abs() < 1e-12);
        assert!(m[(0, 1)].norm() < 1e-13);
    }

    #[test]
    fn roundtrip_diagonal_and_dense() {
        let g = build_grid(1, 32).unwrap();
        let rt = roundtrip_check(&field("diagonal-exponential", &[1.0, 2.0], None), &[c(0.5, 0.0)], &g, Measure::Unit).unwrap();
        assert!(rt.residual < 1e-4, "{rt:?}");
        assert!(rt.moment_deviation < 1e-4, "{rt:?}");
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.0, 0.0)]);
        let rt = roundtrip_check(&HermitianField::constant(1, &m), &[c(0.0, 0.0)], &g, Measure::Unit).unwrap();
        assert!(rt.residual < 1e-6, "{rt:?}");
        assert!((rt.fiber_volume - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ke_fs_and_witness() {
        let g = build_grid(1, 16).unwrap();
        let z = [c(0.2, 0.0)];
        let fs = FinslerWeight::from_chart(ChartWeight::new(1, 1, 0, parse_scalar("log(1 + abs2(w1))").unwrap()).unwrap());
        let cfit = fit_ke_constant(&fs, 1.0, &z, &g).unwrap();
        assert!((cfit - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!(ke_residual(&fs, 1.0, &z, &g, cfit).unwrap().max_residual < 1e-10);
        let bump =
            FinslerWeight::from_chart(ChartWeight::new(1, 1, 0, parse_scalar("log(1 + abs2(w1)) + 0.5*log(1 + 3*abs2(w1))").unwrap()).unwrap());
        let cb = fit_ke_constant(&bump, 1.0, &z, &g).unwrap();
        assert!(ke_residual(&bump, 1.0, &z, &g, cb).unwrap().max_residual > 0.1);
    }

    #[test]
    fn ke_constant_stable() {
        let g = build_grid(2, 16).unwrap();
        let pts: Vec<Vec<C64>> = (0..4).map(|k| vec![c(0.1 * k as f64, 0.05)]).collect();
        let rep = ke_constant_survey(&field("diagonal-exponential", &[1.0, 2.0, 0.5], None), &pts, &g).unwrap();
        assert!(rep.coefficient_of_variation < 1e-6, "{rep:?}");
        assert!(rep.max_residual < 1e-6);
        assert!((rep.mean / rep.convention_value - 1.0).abs() < 1e-10);
        assert!((rep.reference_value - 1.0 / 36.0).abs() < 1e-16);
    }

    #[test]
    fn duality_constants() {
        let g = build_grid(1, 16).unwrap();
        let z = [c(0.3, 0.1)];
        let d = duality_check(&field("diagonal-exponential", &[1.0, 2.0], None), &z, &g).unwrap();
        assert!(d.deviation < 1e-3, "{d:?}");
        assert!((d.fitted_constant.unwrap() - 0.5).abs() < 1e-3, "{d:?}");
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.0, 0.0)]);
        let d = duality_check(&HermitianField::constant(1, &m), &z, &g).unwrap();
        assert!(d.fitted_constant.is_none() && d.deviation == 0.0);
    }

    #[test]
    fn duality_dense_metric() {
        // Non-diagonal, non-constant metric: fixes the index order of -H K^T H.
        let h = HermitianField::new(
            1,
            vec![
                vec![parse_scalar("exp(-abs2(z1))").unwrap(), parse_scalar("0.3*z1").unwrap()],
                vec![parse_scalar("0.3*conj(z1)").unwrap(), parse_scalar("1 + abs2(z1)").unwrap()],
            ],
        )
        .unwrap();
        let g = build_grid(1, 24).unwrap();
        let d = duality_check(&h, &[c(0.2, -0.1)], &g).unwrap();
        assert!(d.deviation < 1e-3, "{d:?}");
    }

    #[test]
    fn pushforward() {
        let g = build_grid(1, 16).unwrap();
        let d = det_pushforward_check(&field("diagonal-exponential", &[1.0, 2.0], None), &[c(0.3, 0.1)], &g).unwrap();
        assert!(d.deviation < 1e-3, "{d:?}");
        assert!((d.fitted_constant.unwrap() - 0.5).abs() < 1e-3, "{d:?}");
        let h1 = field("diagonal-exponential", &[1.5], None);
        let d = det_pushforward_check(&h1, &[c(0.3, 0.1)], &build_grid(0, 8).unwrap()).unwrap();
        assert!((d.fitted_constant.unwrap() - 1.0).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn refinement_classes() {
        assert_eq!(classify_refinement(&[1.0, 1.2, 1.5]).class, RefinementClass::Divergent);
        assert_eq!(classify_refinement(&[1.0, 1.001, 1.0011]).class, RefinementClass::Converged);
        assert_eq!(classify_refinement(&[1.0, 1.05, 1.09]).class, RefinementClass::Inconclusive);
        assert_eq!(classify_refinement(&[1.0, f64::INFINITY]).class, RefinementClass::Divergent);
    }
}
