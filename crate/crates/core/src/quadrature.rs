//! Integration over the fiber `P^r`.
//!
//! Nodes live in moment coordinates: `s_k = |Z_k|^2 / |Z|^2` on the simplex
//! (collapsed coordinates, Gauss-Legendre) times the torus of phases
//! (uniform midpoint rule). The unit-mass Fubini-Study measure is
//! `r! ds dθ / (2π)^r` there. Chart `B` carries the partition weight
//! `χ_B = s_B`.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::diff::jet2_forward;
use crate::dsl::expr::Var;
use crate::error::{Error, Result};
use crate::finsler::{to_affine, ChartWeight, FinslerWeight};
use crate::tensor::{hermitian_eigen, Hermitian, C64};

/// Largest supported fiber dimension.
pub const MAX_FIBER_DIM: usize = 3;

#[derive(Debug, Clone)]
pub struct FiberNode {
    /// Unit homogeneous representative.
    pub homog: Vec<C64>,
    /// Moment coordinates `s_k = |Z_k|^2`.
    pub s: Vec<f64>,
    /// Unit-mass Fubini-Study weight.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct FiberGrid {
    pub r: usize,
    pub resolution: usize,
    pub nodes: Vec<FiberNode>,
}

/// Normalization of the fiber measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// `(ω/2π)^r`: the Fubini-Study volume is 1.
    Unit,
    /// `ω^r / r!`.
    Raw,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Factor from the unit-mass measure to `ω^r / r!`: `(2π)^r / r!`.
pub fn raw_over_unit(r: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powi(r as i32) / factorial(r)
}

impl Measure {
    pub fn factor(self, r: usize) -> f64 {
        match self {
            Measure::Unit => 1.0,
            Measure::Raw => raw_over_unit(r),
        }
    }
}

/// Radial and angular node counts for a resolution.
pub fn node_counts(resolution: usize) -> (usize, usize) {
    ((resolution / 2).max(4), resolution)
}

/// Deterministic grid; `r = 0` is the one-point fiber.
pub fn build_grid(r: usize, resolution: usize) -> Result<FiberGrid> {
    if r > MAX_FIBER_DIM {
        return Err(Error::Capability(format!("fiber dimension r = {r} exceeds {MAX_FIBER_DIM}")));
    }
    if resolution < 8 {
        return Err(Error::input("quadrature resolution must be at least 8"));
    }
    if r == 0 {
        return Ok(FiberGrid {
            r,
            resolution,
            nodes: vec![FiberNode {
                homog: vec![C64::new(1.0, 0.0)],
                s: vec![1.0],
                weight: 1.0,
            }],
        });
    }
    let (nr, na) = node_counts(resolution);
    let gl = GaussLegendre::new(NonZeroUsize::new(nr).expect("positive"));
    let radial: Vec<(f64, f64)> = gl.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    let angles: Vec<f64> = (0..na).map(|k| 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / na as f64).collect();
    let rfact = factorial(r);

    // Collapsed coordinates: s_k = u_k Π_{j<k} (1 - u_j), s_0 = Π (1 - u_j);
    // Jacobian Π_k (1 - u_k)^{r-k} (k = 1..r).
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
    for _ in 0..r {
        simplex = simplex
            .into_iter()
            .flat_map(|(u, w)| radial.iter().map(move |&(x, wx)| ([u.clone(), vec![x]].concat(), w * wx)))
            .collect();
    }
    let mut torus: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..r {
        torus = torus
            .into_iter()
            .flat_map(|t| angles.iter().map(move |&a| [t.clone(), vec![a]].concat()))
            .collect();
    }
    let torus_weight = 1.0 / (na as f64).powi(r as i32);
    let mut nodes = Vec::with_capacity(simplex.len() * torus.len());
    for (u, wu) in &simplex {
        let mut s = vec![0.0; r + 1];
        let mut rest = 1.0;
        let mut jac = 1.0;
        for k in 0..r {
            s[k + 1] = u[k] * rest;
            jac *= (1.0 - u[k]).powi((r - 1 - k) as i32);
            rest *= 1.0 - u[k];
        }
        s[0] = rest;
        let weight = rfact * wu * jac * torus_weight;
        for t in &torus {
            let homog: Vec<C64> = (0..=r)
                .map(|k| if k == 0 { C64::new(s[0].sqrt(), 0.0) } else { C64::from_polar(s[k].sqrt(), t[k - 1]) })
                .collect();
            nodes.push(FiberNode {
                homog,
                s: s.clone(),
                weight,
            });
        }
    }
    Ok(FiberGrid { r, resolution, nodes })
}

/// A quadrature point as seen on one chart.
#[derive(Debug, Clone)]
pub struct ChartPoint {
    pub chart: usize,
    pub w: Vec<C64>,
    /// Unit homogeneous representative of the point.
    pub homog: Vec<C64>,
}

/// `∫ f dμ_FS` (unit mass), each chart weighted by `χ_B = s_B`.
pub fn integrate_fs(grid: &FiberGrid, f: &(dyn Fn(&ChartPoint) -> Result<Vec<C64>> + Sync)) -> Result<Vec<C64>> {
    let r = grid.r;
    let parts: Vec<Vec<C64>> = grid
        .nodes
        .par_iter()
        .map(|node| {
            let mut acc: Option<Vec<C64>> = None;
            for b in 0..=r {
                let chi = node.s[b];
                if chi == 0.0 {
                    continue;
                }
                let p = ChartPoint {
                    chart: b,
                    w: to_affine(b, &node.homog),
                    homog: node.homog.clone(),
                };
                let v = f(&p)?;
                let scaled = v.into_iter().map(|x| x * (chi * node.weight));
                acc = Some(match acc {
                    None => scaled.collect(),
                    Some(a) => a.into_iter().zip(scaled).map(|(x, y)| x + y).collect(),
                });
            }
            Ok(acc.unwrap_or_default())
        })
        .collect::<Result<_>>()?;
    Ok(ordered_sum(parts))
}

fn ordered_sum(parts: Vec<Vec<C64>>) -> Vec<C64> {
    let len = parts.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut total = vec![C64::new(0.0, 0.0); len];
    for p in parts {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    total
}

/// Weight data at a quadrature point.
#[derive(Debug, Clone)]
pub struct WeightedPoint {
    pub point: ChartPoint,
    /// `φ_B(z, w)`
    pub phi: f64,
    /// Density of `(∂∂̄_w φ)^r` against the Fubini-Study volume:
    /// `det(∂∂̄_w φ) (1 + |w|^2)^{r+1}`.
    pub density: f64,
}

/// Fiber density data of `φ` on chart `B` at `w`.
pub fn weighted_point(phi: &ChartWeight, z: &[C64], point: ChartPoint) -> Result<WeightedPoint> {
    let r = phi.r;
    let dirs: Vec<Var> = phi.fiber_dirs();
    let env = |v: Var| -> Option<C64> {
        match v.kind {
            crate::dsl::VarKind::Base => z.get(v.index).copied(),
            crate::dsl::VarKind::Fiber => point.w.get(v.index).copied(),
            crate::dsl::VarKind::Homog => None,
        }
    };
    let jet = jet2_forward(&phi.expr, &dirs, &env)?;
    let det = if r == 0 {
        1.0
    } else {
        let h = Hermitian::symmetrize(&jet.dd);
        let eig = hermitian_eigen(&h)?;
        if !(eig.values[0] > 0.0) {
            return Err(Error::degenerate(format!(
                "fiber measure degenerates at chart {} node w = {:?} (z = {z:?}): smallest eigenvalue {:.3e}",
                point.chart, point.w, eig.values[0]
            )));
        }
        eig.values.iter().product::<f64>()
    };
    let fs = 1.0 + point.w.iter().map(|x| x.norm_sqr()).sum::<f64>();
    Ok(WeightedPoint {
        phi: jet.value.re,
        density: det * fs.powi(r as i32 + 1),
        point,
    })
}

/// `∫ f (∂∂̄_w φ)^r`-measure at fixed `z`, in the requested normalization.
pub fn integrate_fiber(
    fw: &FinslerWeight,
    z: &[C64],
    grid: &FiberGrid,
    measure: Measure,
    f: &(dyn Fn(&WeightedPoint) -> Result<Vec<C64>> + Sync),
) -> Result<Vec<C64>> {
    if grid.r != fw.r {
        return Err(Error::input(format!("grid has r = {}, weight has r = {}", grid.r, fw.r)));
    }
    let g = |p: &ChartPoint| -> Result<Vec<C64>> {
        let wp = weighted_point(fw.chart(p.chart), z, p.clone())?;
        let v = f(&wp)?;
        Ok(v.into_iter().map(|x| x * wp.density).collect())
    };
    let factor = measure.factor(grid.r);
    Ok(integrate_fs(grid, &g)?.into_iter().map(|x| x * factor).collect())
}

/// Fiber volume `∫ (∂∂̄_w φ)^r`-measure.
pub fn fiber_volume(fw: &FinslerWeight, z: &[C64], grid: &FiberGrid, measure: Measure) -> Result<f64> {
    Ok(integrate_fiber(fw, z, grid, measure, &|_| Ok(vec![C64::new(1.0, 0.0)]))?[0].re)
}

/// Index pattern of a Fubini-Study moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentPattern {
    /// `∫ Z_α conj(Z_β) / |Z|^2`
    Second(usize, usize),
    /// `∫ Z_α conj(Z_β) Z_σ conj(Z_τ) / |Z|^4`
    Fourth(usize, usize, usize, usize),
}

impl MomentPattern {
    fn check(&self, r: usize) -> Result<()> {
        let ok = match *self {
            MomentPattern::Second(a, b) => a.max(b) <= r,
            MomentPattern::Fourth(a, b, s, t) => a.max(b).max(s).max(t) <= r,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("moment indices {self:?} exceed r = {r}")))
        }
    }

    fn integrand(&self, z: &[C64]) -> C64 {
        let n2: f64 = z.iter().map(|x| x.norm_sqr()).sum();
        match *self {
            MomentPattern::Second(a, b) => z[a] * z[b].conj() / n2,
            MomentPattern::Fourth(a, b, s, t) => z[a] * z[b].conj() * z[s] * z[t].conj() / (n2 * n2),
        }
    }
}

/// Closed form under unit mass.
pub fn fs_moment(r: usize, pattern: MomentPattern) -> Result<f64> {
    pattern.check(r)?;
    let d = |a: usize, b: usize| (a == b) as u8 as f64;
    let r1 = (r + 1) as f64;
    Ok(match pattern {
        MomentPattern::Second(a, b) => d(a, b) / r1,
        MomentPattern::Fourth(a, b, s, t) => (d(a, b) * d(s, t) + d(a, t) * d(s, b)) / (r1 * (r1 + 1.0)),
    })
}

/// Quadrature value of the moment, evaluated through the chart coordinates
/// of every node. `unitary` optionally changes homogeneous coordinates first.
pub fn fs_moment_quadrature(grid: &FiberGrid, pattern: MomentPattern, unitary: Option<&crate::tensor::CMat>) -> Result<C64> {
    pattern.check(grid.r)?;
    let f = |p: &ChartPoint| -> Result<Vec<C64>> {
        let mut zz = crate::finsler::from_affine(p.chart, &p.w);
        if let Some(u) = unitary {
            zz = (0..zz.len()).map(|a| (0..zz.len()).map(|b| u[(a, b)] * zz[b]).sum()).collect();
        }
        Ok(vec![pattern.integrand(&zz)])
    };
    Ok(integrate_fs(grid, &f)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse_scalar;

    fn fs(r: usize) -> FinslerWeight {
        let src = match r {
            1 => "log(1 + abs2(w1))",
            2 => "log(1 + abs2(w1) + abs2(w2))",
            _ => "log(1 + abs2(w1) + abs2(w2) + abs2(w3))",
        };
        FinslerWeight::from_chart(ChartWeight::new(1, r, 0, parse_scalar(src).unwrap()).unwrap())
    }

    #[test]
    fn grid_shape() {
        let g = build_grid(1, 64).unwrap();
        assert_eq!(g.nodes.len(), 32 * 64);
        let total: f64 = g.nodes.iter().map(|n| n.weight).sum();
        assert!((total - 1.0).abs() < 1e-13);
        assert!(g.nodes.iter().all(|n| (n.s.iter().sum::<f64>() - 1.0).abs() < 1e-14));
        assert_eq!(build_grid(2, 32).unwrap().nodes[0].homog.len(), 3);
        assert!(matches!(build_grid(4, 32), Err(Error::Capability(_))));
        assert!(build_grid(1, 4).is_err());
    }

    #[test]
    fn fs_volume_unit_and_raw() {
        let z = [C64::new(0.2, 0.0)];
        for r in 1..=2 {
            let g = build_grid(r, 16).unwrap();
            let v = fiber_volume(&fs(r), &z, &g, Measure::Unit).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "r={r} v={v}");
        }
        let g = build_grid(1, 16).unwrap();
        let raw = fiber_volume(&fs(1), &z, &g, Measure::Raw).unwrap();
        assert!((raw - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn half_volume_by_symmetry() {
        let g = build_grid(1, 32).unwrap();
        let f = |p: &WeightedPoint| {
            let zz = crate::finsler::from_affine(p.point.chart, &p.point.w);
            let n: f64 = zz.iter().map(|x| x.norm_sqr()).sum();
            Ok(vec![C64::new(zz[1].norm_sqr() / n, 0.0)])
        };
        let v = integrate_fiber(&fs(1), &[C64::new(0.0, 0.0)], &g, Measure::Unit, &f).unwrap();
        assert!((v[0].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn base_shift_does_not_change_volume() {
        let g = build_grid(1, 16).unwrap();
        let w = ChartWeight::new(1, 1, 0, parse_scalar("log(1 + abs2(w1)) + 3*abs2(z1)").unwrap()).unwrap();
        let v = fiber_volume(&FinslerWeight::from_chart(w), &[C64::new(0.5, 0.5)], &g, Measure::Unit).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments() {
        let g = build_grid(1, 16).unwrap();
        assert_eq!(fs_moment(1, MomentPattern::Second(0, 0)).unwrap(), 0.5);
        assert!((fs_moment_quadrature(&g, MomentPattern::Second(0, 0), None).unwrap().re - 0.5).abs() < 1e-13);
        assert!(fs_moment_quadrature(&g, MomentPattern::Second(0, 1), None).unwrap().norm() < 1e-13);
        let g2 = build_grid(2, 16).unwrap();
        let p = MomentPattern::Fourth(0, 0, 1, 1);
        assert!((fs_moment(2, p).unwrap() - 1.0 / 12.0).abs() < 1e-16);
        assert!((fs_moment_quadrature(&g2, p, None).unwrap().re - 1.0 / 12.0).abs() < 1e-13);
        assert!(fs_moment(1, MomentPattern::Second(0, 2)).is_err());
    }

    #[test]
    fn rank_zero_fiber() {
        let g = build_grid(0, 8).unwrap();
        assert_eq!(g.nodes.len(), 1);
        let fw = FinslerWeight::from_chart(ChartWeight::new(1, 0, 0, parse_scalar("abs2(z1)").unwrap()).unwrap());
        assert_eq!(fiber_volume(&fw, &[C64::new(0.3, 0.0)], &g, Measure::Unit).unwrap(), 1.0);
    }
}
