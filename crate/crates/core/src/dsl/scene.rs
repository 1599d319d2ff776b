use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::eval::eval;
use super::expr::{Expr, FieldExpr, Var};
use super::parser::{parse_field, parse_scalar, validate};
use crate::error::{Error, Result};
use crate::tensor::{VerdictClass, C64, DEFAULT_POSITIVITY_TOL};

/// A metric problem: bundle dimensions, the metric and/or weight, and where to
/// sample.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    /// Base dimension.
    pub n: usize,
    /// Fiber dimension; the bundle rank is `r + 1`.
    pub r: usize,
    /// Affine fiber chart `A`, `0 <= A <= r`.
    pub chart: usize,
    /// Hermitian metric, `(r+1) x (r+1)` in the base variables only.
    pub metric: Option<Vec<Vec<Expr>>>,
    /// Finsler weight on chart `A` in `(z, w)`.
    pub weight: Option<Expr>,
    /// Singular base weight (vanishing analyses).
    pub base_weight: Option<Expr>,
    pub singular_points: Vec<Vec<C64>>,
    pub punctured_radius: f64,
    pub samples: Vec<Vec<C64>>,
    pub tolerances: Tolerances,
    pub expect: Option<VerdictClass>,
    pub builtin: Option<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_positivity")]
    pub positivity: f64,
}

fn default_positivity() -> f64 {
    DEFAULT_POSITIVITY_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            positivity: DEFAULT_POSITIVITY_TOL,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PointIn {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridIn {
    #[serde(default = "default_radius")]
    radius: f64,
    #[serde(default = "default_count")]
    count: usize,
}

fn default_radius() -> f64 {
    0.5
}

fn default_count() -> usize {
    5
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplesIn {
    points: Option<Vec<PointIn>>,
    grid: Option<GridIn>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: Option<String>,
    n: Option<usize>,
    rank: Option<usize>,
    #[serde(default)]
    chart: usize,
    builtin: Option<String>,
    #[serde(default)]
    params: Vec<f64>,
    metric: Option<String>,
    weight: Option<String>,
    base_weight: Option<String>,
    #[serde(default)]
    singular_points: Vec<PointIn>,
    #[serde(default)]
    punctured_radius: f64,
    #[serde(default)]
    samples: SamplesIn,
    #[serde(default)]
    tolerances: Tolerances,
    expect: Option<VerdictClass>,
}

fn constant_point(p: &PointIn, n: usize) -> Result<Vec<C64>> {
    let parts: Vec<&String> = match p {
        PointIn::One(s) => vec![s],
        PointIn::Many(v) => v.iter().collect(),
    };
    if parts.len() != n {
        return Err(Error::input(format!("point has {} coordinates, expected n = {n}", parts.len())));
    }
    parts
        .into_iter()
        .map(|s| {
            let e = parse_scalar(s)?;
            if !e.variables().is_empty() {
                return Err(Error::input(format!("point coordinate `{s}` must be a constant")));
            }
            eval::<C64>(&e, &|_| None)
        })
        .collect()
}

/// Rectangular grid of `count^2` points for n = 1; for n > 1 the same planar
/// grid is spread over the coordinates with a per-coordinate shift.
fn rect_grid(n: usize, radius: f64, count: usize) -> Vec<Vec<C64>> {
    let axis: Vec<f64> = (0..count)
        .map(|k| if count == 1 { 0.0 } else { -radius + 2.0 * radius * k as f64 / (count - 1) as f64 })
        .collect();
    let plane: Vec<C64> = axis.iter().flat_map(|&y| axis.iter().map(move |&x| C64::new(x, y))).collect();
    let m = plane.len();
    (0..m).map(|p| (0..n).map(|k| plane[(p + 7 * k) % m]).collect()).collect()
}

/// Polar grid avoiding a puncture at the origin: `count` radii times `count`
/// angles.
fn polar_grid(n: usize, inner: f64, radius: f64, count: usize) -> Vec<Vec<C64>> {
    let mut out = Vec::with_capacity(count * count);
    for a in 0..count {
        let rho = if count == 1 { radius } else { inner + (radius - inner) * a as f64 / (count - 1) as f64 };
        for b in 0..count {
            let theta = 2.0 * std::f64::consts::PI * (b as f64 + 0.5 * (a % 2) as f64) / count as f64;
            let z = C64::from_polar(rho, theta);
            out.push((0..n).map(|k| if k == 0 { z } else { z * 0.5 }).collect());
        }
    }
    out
}

impl Scene {
    /// Loads a scene from TOML text.
    pub fn from_toml(text: &str) -> Result<Scene> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::input(format!("scene file: {e}")))?;
        let mut scene = match &file.builtin {
            Some(name) => builtin(name, &file.params, file.n.unwrap_or(1), file.rank.map(|k| k.saturating_sub(1)))?,
            None => {
                let n = file.n.ok_or_else(|| Error::input("scene needs `n`"))?;
                let rank = file.rank.ok_or_else(|| Error::input("scene needs `rank`"))?;
                if n == 0 || rank == 0 {
                    return Err(Error::input("`n` and `rank` must be positive"));
                }
                Scene::empty(file.name.clone().unwrap_or_else(|| "custom".into()), n, rank - 1)
            }
        };
        if let Some(name) = file.name {
            scene.name = name;
        }
        if let Some(src) = &file.metric {
            match parse_field(src)? {
                FieldExpr::Matrix(rows) => scene.metric = Some(rows),
                FieldExpr::Scalar(e) if scene.r == 0 => scene.metric = Some(vec![vec![e]]),
                FieldExpr::Scalar(_) => return Err(Error::input("`metric` must be a matrix literal for rank > 1")),
            }
        }
        if let Some(src) = &file.weight {
            scene.weight = Some(parse_scalar(src)?);
        }
        if let Some(src) = &file.base_weight {
            scene.base_weight = Some(parse_scalar(src)?);
        }
        if !file.singular_points.is_empty() {
            scene.singular_points = file
                .singular_points
                .iter()
                .map(|p| constant_point(p, scene.n))
                .collect::<Result<_>>()?;
        }
        if file.punctured_radius > 0.0 {
            scene.punctured_radius = file.punctured_radius;
        }
        scene.chart = file.chart;
        scene.tolerances = file.tolerances;
        if file.expect.is_some() {
            scene.expect = file.expect;
        }
        if let Some(points) = &file.samples.points {
            scene.samples = points.iter().map(|p| constant_point(p, scene.n)).collect::<Result<_>>()?;
        } else if let Some(g) = &file.samples.grid {
            scene.samples = scene.default_grid(g.radius, g.count);
        } else if file.builtin.is_none() {
            scene.samples = scene.default_grid(default_radius(), default_count());
        }
        scene.check()?;
        Ok(scene)
    }

    fn empty(name: String, n: usize, r: usize) -> Scene {
        Scene {
            name,
            n,
            r,
            chart: 0,
            metric: None,
            weight: None,
            base_weight: None,
            singular_points: Vec::new(),
            punctured_radius: 0.0,
            samples: Vec::new(),
            tolerances: Tolerances::default(),
            expect: None,
            builtin: None,
        }
    }

    /// Default 25-point grid; polar around the origin when the scene is
    /// punctured there.
    pub fn default_grid(&self, radius: f64, count: usize) -> Vec<Vec<C64>> {
        if self.singular_points.is_empty() {
            rect_grid(self.n, radius, count)
        } else {
            let inner = (2.0 * self.punctured_radius).max(0.1).min(radius);
            let shift = self.singular_points[0].clone();
            polar_grid(self.n, inner, radius, count)
                .into_iter()
                .map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect())
                .collect()
        }
    }

    /// Validates dimensions, variable ranges and sample placement.
    pub fn check(&self) -> Result<()> {
        if self.metric.is_none() && self.weight.is_none() {
            return Err(Error::input("scene needs a `metric` or a `weight`"));
        }
        if self.chart > self.r {
            return Err(Error::input(format!("chart {} outside 0..={}", self.chart, self.r)));
        }
        if let Some(m) = &self.metric {
            if m.len() != self.r + 1 {
                return Err(Error::input(format!("metric is {}x{}, rank is {}", m.len(), m.len(), self.r + 1)));
            }
            for e in m.iter().flatten() {
                validate(e, self.n, 0)?;
            }
        }
        if let Some(e) = &self.weight {
            validate(e, self.n, self.r)?;
            if e.variables().iter().any(|v| v.kind == super::expr::VarKind::Homog) {
                return Err(Error::input("weight must use affine fiber variables w1..wr"));
            }
        }
        if let Some(e) = &self.base_weight {
            validate(e, self.n, 0)?;
        }
        if self.samples.is_empty() {
            return Err(Error::input("scene has no sample points"));
        }
        for p in &self.samples {
            if p.len() != self.n {
                return Err(Error::input("sample dimension differs from n"));
            }
            if let Some(d) = self.distance_to_singular(p) {
                if d <= self.punctured_radius {
                    return Err(Error::input(format!(
                        "sample {p:?} lies within the punctured radius {} of a singular point",
                        self.punctured_radius
                    )));
                }
            }
        }
        if !(self.tolerances.positivity > 0.0) {
            return Err(Error::input("positivity tolerance must be positive"));
        }
        Ok(())
    }

    pub fn distance_to_singular(&self, p: &[C64]) -> Option<f64> {
        self.singular_points
            .iter()
            .map(|s| p.iter().zip(s).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
            .min_by(f64::total_cmp)
    }

    /// Stable textual form used for the report digest.
    pub fn canonical(&self) -> String {
        let mut s = format!("name={}\nn={}\nr={}\nchart={}\n", self.name, self.n, self.r, self.chart);
        if let Some(m) = &self.metric {
            s += &format!("metric={}\n", FieldExpr::Matrix(m.clone()));
        }
        if let Some(w) = &self.weight {
            s += &format!("weight={w}\n");
        }
        if let Some(b) = &self.base_weight {
            s += &format!("base_weight={b}\n");
        }
        for p in &self.singular_points {
            s += &format!("singular={p:?}\n");
        }
        s += &format!("punctured={:e}\n", self.punctured_radius);
        for p in &self.samples {
            s += &format!("sample={p:?}\n");
        }
        s += &format!("tol={:e}\nexpect={:?}\n", self.tolerances.positivity, self.expect);
        s
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn rank(&self) -> usize {
        self.r + 1
    }
}

fn abs2_sum(kind: fn(usize) -> Var, count: usize) -> Expr {
    Expr::sum_of((0..count).map(|k| Expr::call(super::expr::Func::Abs2, vec![Expr::var(kind(k))])))
}

fn fs_weight(r: usize) -> Expr {
    Expr::call(super::expr::Func::Log, vec![Expr::add(Expr::real(1.0), abs2_sum(Var::fiber, r))])
}

fn diag_metric(entries: Vec<Expr>) -> Vec<Vec<Expr>> {
    let dim = entries.len();
    entries
        .into_iter()
        .enumerate()
        .map(|(a, e)| (0..dim).map(|b| if a == b { e.clone() } else { Expr::real(0.0) }).collect())
        .collect()
}

fn exp_of(e: Expr) -> Expr {
    Expr::call(super::expr::Func::Exp, vec![e])
}

/// Builtin scenes:
///
/// * `trivial`: `H = I`, weight `log(1 + |w|^2)`.
/// * `product` (alias `fubini-study`), params `[c]`: `H = exp(-c|z|^2) I`,
///   weight `c|z|^2 + log(1 + |w|^2)`.
/// * `diagonal-exponential`, params `[c_0, .., c_r]`: `H = diag(exp(-c_a |z|^2))`.
/// * `stable-model`, params `[c]` or `[c, s]`: base weight
///   `c log|z|^2 + s|z|^2` and `H = exp(-base/(r+1)) I`, punctured at 0.
pub fn builtin(name: &str, params: &[f64], n: usize, r: Option<usize>) -> Result<Scene> {
    if n == 0 {
        return Err(Error::input("`n` must be positive"));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::input("builtin parameters must be finite"));
    }
    let arity = |lo: usize, hi: usize| -> Result<()> {
        if params.len() < lo || params.len() > hi {
            Err(Error::input(format!(
                "builtin `{name}` takes {lo}..={hi} parameters, got {}",
                params.len()
            )))
        } else {
            Ok(())
        }
    };
    let z2 = abs2_sum(Var::base, n);
    let mut scene = match name {
        "trivial" => {
            arity(0, 0)?;
            let r = r.unwrap_or(1);
            let mut s = Scene::empty(name.into(), n, r);
            s.metric = Some(diag_metric(vec![Expr::real(1.0); r + 1]));
            s.weight = Some(fs_weight(r));
            s
        }
        "product" | "fubini-study" => {
            arity(0, 1)?;
            let c = params.first().copied().unwrap_or(1.0);
            let r = r.unwrap_or(1);
            let mut s = Scene::empty(name.into(), n, r);
            let cz = Expr::mul(Expr::real(c), z2.clone());
            s.metric = Some(diag_metric(vec![exp_of(Expr::neg(cz.clone())); r + 1]));
            s.weight = Some(Expr::add(cz, fs_weight(r)));
            s
        }
        "diagonal-exponential" => {
            if params.is_empty() {
                return Err(Error::input("builtin `diagonal-exponential` needs c_0..c_r"));
            }
            let r_here = params.len() - 1;
            if r.is_some_and(|r| r != r_here) {
                return Err(Error::input("diagonal-exponential: parameter count must equal the rank"));
            }
            let mut s = Scene::empty(name.into(), n, r_here);
            s.metric = Some(diag_metric(
                params.iter().map(|&c| exp_of(Expr::neg(Expr::mul(Expr::real(c), z2.clone())))).collect(),
            ));
            s
        }
        "stable-model" => {
            arity(1, 2)?;
            let c = params[0];
            let smooth = params.get(1).copied().unwrap_or(1.0);
            let r = r.unwrap_or(1);
            let mut s = Scene::empty(name.into(), n, r);
            let base = Expr::add(
                Expr::mul(Expr::real(c), Expr::call(super::expr::Func::Log, vec![z2.clone()])),
                Expr::mul(Expr::real(smooth), z2.clone()),
            );
            let entry = exp_of(Expr::neg(Expr::div(base.clone(), Expr::real((r + 1) as f64))));
            s.metric = Some(diag_metric(vec![entry; r + 1]));
            s.base_weight = Some(base);
            s.singular_points = vec![vec![C64::new(0.0, 0.0); n]];
            s.punctured_radius = 0.05;
            s
        }
        _ => return Err(Error::input(format!("unknown builtin `{name}`"))),
    };
    if r.is_some_and(|r| r != scene.r) {
        return Err(Error::input("rank mismatch"));
    }
    scene.samples = scene.default_grid(default_radius(), default_count());
    scene.builtin = Some((name.to_string(), params.to_vec()));
    scene.check()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::eval::{eval_field, point_env, FieldValue};

    fn metric_at(s: &Scene, z: C64) -> crate::tensor::CMat {
        match eval_field(&FieldExpr::Matrix(s.metric.clone().unwrap()), &point_env(&[z], &[])).unwrap() {
            FieldValue::Matrix(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn trivial_builtin() {
        let s = builtin("trivial", &[], 1, Some(1)).unwrap();
        assert_eq!(metric_at(&s, C64::new(0.3, 0.2)), crate::tensor::CMat::identity(2, 2));
        assert_eq!(s.weight.unwrap().to_string(), "log((1.0 + abs2(w1)))");
        assert_eq!(s.samples.len(), 25);
    }

    #[test]
    fn diagonal_builtin() {
        let s = builtin("diagonal-exponential", &[1.0, 2.0], 1, None).unwrap();
        let z = C64::new(0.5, 0.1);
        let m = metric_at(&s, z);
        assert!((m[(0, 0)].re - (-z.norm_sqr()).exp()).abs() < 1e-15);
        assert!((m[(1, 1)].re - (-2.0 * z.norm_sqr()).exp()).abs() < 1e-15);
        assert_eq!(m[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn stable_model_builtin() {
        let s = builtin("stable-model", &[0.5, 0.0], 1, Some(1)).unwrap();
        let z = C64::new(0.3, 0.0);
        let expected = (-0.5 * 0.5 * z.norm_sqr().ln()).exp();
        assert!((metric_at(&s, z)[(0, 0)].re - expected).abs() < 1e-14);
        assert!(s.samples.iter().all(|p| p[0].norm() > 0.05));
    }

    #[test]
    fn builtin_errors() {
        assert!(builtin("nope", &[], 1, None).is_err());
        assert!(builtin("stable-model", &[], 1, None).is_err());
        assert!(builtin("trivial", &[1.0], 1, None).is_err());
    }

    #[test]
    fn toml_scene() {
        let s = Scene::from_toml(
            r#"
            n = 1
            rank = 2
            metric = "[[exp(-abs2(z1)), 0], [0, 1]]"
            [samples]
            points = ["0.1 + 0.2i", "0.3"]
            "#,
        )
        .unwrap();
        assert_eq!(s.samples, vec![vec![C64::new(0.1, 0.2)], vec![C64::new(0.3, 0.0)]]);
        assert!(Scene::from_toml("n = 1\nrank = 2\nmetric = \"[[z2, 0],[0, 1]]\"").is_err());
        assert!(Scene::from_toml("n = 1\nrank = 2").is_err());
        assert_eq!(s.digest(), s.clone().digest());
    }
}
