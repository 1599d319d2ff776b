//! Command-line front end: load a scene, run one analysis, print a JSON
//! report. Exit codes: 0 success, 1 input error, 2 verdict failure.

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dsl::{builtin, Scene};
use crate::error::{Error, Result};
use crate::finsler::{decomposition_residual, hx_membership, paired_fiber_point, FinslerWeight};
use crate::hermitian::{chern_curvature, griffiths_verdict, nakano_verdict, unitary_curvature, HermitianField, GRIFFITHS_RESTARTS};
use crate::l2::{
    det_pushforward_check, duality_check, fit_ke_constant, ke_constant_survey, ke_residual, l2_metric_monitored, roundtrip_check,
    RefinementClass,
};
use crate::quadrature::{build_grid, raw_over_unit, Measure};
use crate::report::{Conventions, Report, SceneInfo};
use crate::tensor::{classify, CMat, Verdict, VerdictClass, C64};
use crate::vanishing::{
    default_radii, integrability_classify, lelong_estimate, stable_model_check, vanishing_report, vanishing_threshold,
    SingularBaseWeight, INTEGRABILITY_RADIUS,
};

pub const ANALYSES: [&str; 15] = [
    "curvature",
    "griffiths",
    "nakano",
    "decompose",
    "l2metric",
    "roundtrip",
    "ke",
    "duality",
    "pushforward",
    "membership",
    "threshold",
    "lelong",
    "integrability",
    "vanishing-report",
    "selfcheck",
];

/// Pass thresholds of the property analyses.
pub mod tolerances {
    pub const DECOMPOSITION: f64 = 1e-5;
    pub const ROUNDTRIP: f64 = 1e-4;
    pub const KE: f64 = 1e-6;
    pub const DUALITY: f64 = 1e-3;
    pub const PUSHFORWARD: f64 = 1e-3;
}

#[derive(Debug, Parser)]
#[command(name = "bundlegeom", version, about = "Curvature and positivity analysis of bundle metrics")]
pub struct Args {
    /// One of: curvature, griffiths, nakano, decompose, l2metric, roundtrip,
    /// ke, duality, pushforward, membership, threshold, lelong,
    /// integrability, vanishing-report, selfcheck.
    pub analysis: String,
    /// Scene file (TOML).
    pub scene: Option<PathBuf>,
    /// Builtin scene instead of a file.
    #[arg(long, conflicts_with = "scene")]
    pub builtin: Option<String>,
    /// Builtin parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub params: Vec<f64>,
    /// Base dimension of a builtin scene.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Fiber dimension (bundle rank minus one).
    #[arg(long)]
    pub r: Option<usize>,
    /// Fiber quadrature resolution.
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// Positivity tolerance; defaults to the scene's.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Affine fiber chart for chart-dependent analyses.
    #[arg(long)]
    pub chart: Option<usize>,
    /// Seed of the random restarts in the Griffiths search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Integrate against `ω^r / r!` instead of the unit-mass measure.
    #[arg(long)]
    pub raw_measure: bool,
    /// Exponent `t` for `integrability`; defaults to `(r+2)(r+3)/(2R)`.
    #[arg(long)]
    pub t: Option<f64>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
    /// Negative control for `selfcheck`.
    #[arg(long, hide = true)]
    pub corrupt_volume: bool,
}

impl Args {
    /// Default options for `analysis`, as if given alone on the command line.
    pub fn for_analysis(analysis: &str) -> Self {
        Args {
            analysis: analysis.to_string(),
            scene: None,
            builtin: None,
            params: Vec::new(),
            n: 1,
            r: None,
            resolution: 32,
            tol: None,
            chart: None,
            seed: 0,
            raw_measure: false,
            t: None,
            timing: false,
            corrupt_volume: false,
        }
    }
}

/// Output of one invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `argv` (including the program name) and runs the analysis.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    match execute(&args) {
        Ok(report) => Outcome {
            code: if report.passed { 0 } else { 2 },
            stdout: report.to_json() + "\n",
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn usage_error() -> Error {
    Error::input(format!("unknown analysis; expected one of: {}", ANALYSES.join(", ")))
}

fn load_scene(args: &Args) -> Result<Scene> {
    let mut scene = match (&args.scene, &args.builtin) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
            let s = Scene::from_toml(&text)?;
            if args.r.is_some_and(|r| r != s.r) {
                return Err(Error::input(format!("--r {} disagrees with the scene rank {}", args.r.unwrap_or(0), s.r)));
            }
            s
        }
        (None, Some(name)) => builtin(name, &args.params, args.n, args.r)?,
        (None, None) => return Err(Error::input("a scene file or --builtin is required")),
    };
    if let Some(chart) = args.chart {
        if chart > scene.r {
            return Err(Error::input(format!("--chart {chart} outside 0..={}", scene.r)));
        }
        scene.chart = chart;
    }
    Ok(scene)
}

fn measure(args: &Args) -> Measure {
    if args.raw_measure {
        Measure::Raw
    } else {
        Measure::Unit
    }
}

fn conventions(args: &Args, r: usize, tol: f64) -> Conventions {
    Conventions {
        volume_normalization: if args.raw_measure { "raw".into() } else { "unit-mass".into() },
        raw_over_unit: raw_over_unit(r),
        positivity_tolerance: tol,
        resolution: args.resolution,
        seed: args.seed,
        lelong: "nu(c log|z|^2) = c".into(),
        fitted: Default::default(),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn metric(scene: &Scene) -> Result<HermitianField> {
    if scene.metric.is_none() {
        return Err(Error::input(format!("scene `{}` has no Hermitian metric", scene.name)));
    }
    HermitianField::from_scene(scene)
}

fn point_str(z: &[C64]) -> String {
    let parts: Vec<String> = z.iter().map(|c| format!("{}{:+}i", c.re, c.im)).collect();
    format!("[{}]", parts.join(", "))
}

fn tensor_value(t: &crate::tensor::CurvatureTensor) -> Value {
    let (r, n) = (t.rank(), t.base_dim());
    let rows: Vec<Value> = (0..r)
        .map(|a| {
            Value::Array(
                (0..r)
                    .map(|b| {
                        Value::Array(
                            (0..n)
                                .map(|i| Value::Array((0..n).map(|j| json!([t.get(a, b, i, j).re, t.get(a, b, i, j).im])).collect()))
                                .collect(),
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    Value::Array(rows)
}

/// Class of a family of verdicts from the extremes of their normalized forms.
fn combine(verdicts: &[Verdict], tol: f64) -> Result<(VerdictClass, bool)> {
    let min = verdicts.iter().map(|v| v.extremal / v.scale).fold(f64::INFINITY, f64::min);
    let max = verdicts.iter().map(|v| v.maximal / v.scale).fold(f64::NEG_INFINITY, f64::max);
    let (class, note) = classify(min, max, tol)?;
    Ok((class, note.is_some()))
}

/// A strict class satisfies the corresponding semi expectation; the zero
/// form satisfies either semi expectation.
fn meets(found: VerdictClass, zero: bool, expected: VerdictClass) -> bool {
    use VerdictClass::*;
    found == expected
        || (expected == SemiPositive && found == StrictlyPositive)
        || (expected == SemiNegative && found == StrictlyNegative)
        || (zero && matches!(expected, SemiPositive | SemiNegative))
}

pub fn execute(args: &Args) -> Result<Report> {
    if !ANALYSES.contains(&args.analysis.as_str()) {
        return Err(usage_error());
    }
    if args.resolution < 8 {
        return Err(Error::input("--resolution must be at least 8"));
    }
    if args.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::input("--tol must be positive"));
    }
    let started = Instant::now();
    let mut report = match args.analysis.as_str() {
        "threshold" => threshold(args)?,
        "selfcheck" => selfcheck(args),
        _ => {
            let scene = load_scene(args)?;
            analyze_scene(args, &scene)?
        }
    };
    if args.timing {
        report.timing_seconds = Some(started.elapsed().as_secs_f64());
    }
    Ok(report)
}

fn threshold(args: &Args) -> Result<Report> {
    let r = match (args.r, args.scene.is_some() || args.builtin.is_some()) {
        (Some(r), _) => r,
        (None, true) => load_scene(args)?.r,
        (None, false) => return Err(Error::input("threshold needs --r or a scene")),
    };
    let mut report = Report::new("threshold", conventions(args, r, args.tol.unwrap_or(crate::tensor::DEFAULT_POSITIVITY_TOL)));
    report.results = to_value(&vanishing_threshold(r)?);
    Ok(report)
}

fn selfcheck(args: &Args) -> Report {
    let tol = args.tol.unwrap_or(crate::tensor::DEFAULT_POSITIVITY_TOL);
    let opts = crate::selfcheck::Options {
        resolution: if args.resolution == 32 { 16 } else { args.resolution },
        seed: args.seed,
        tol,
        corrupt_volume: args.corrupt_volume,
    };
    let rep = crate::selfcheck::run(&opts);
    let mut conv = conventions(args, 1, tol);
    conv.resolution = opts.resolution;
    let mut report = Report::new("selfcheck", conv);
    report.passed = rep.passed;
    for f in &rep.failed {
        report.warnings.push(format!("selfcheck: check {f} failed"));
    }
    if args.corrupt_volume {
        report.warnings.push("selfcheck: volume convention corrupted on purpose (negative control)".into());
    }
    report.results = to_value(&rep);
    report
}

/// Runs a scene analysis with the options in `args`; `args.scene` and
/// `args.builtin` are ignored.
pub fn analyze_scene(args: &Args, scene: &Scene) -> Result<Report> {
    if !ANALYSES.contains(&args.analysis.as_str()) || matches!(args.analysis.as_str(), "threshold" | "selfcheck") {
        return Err(usage_error());
    }
    let tol = args.tol.unwrap_or(scene.tolerances.positivity);
    let mut report = Report::new(&args.analysis, conventions(args, scene.r, tol));
    report.scene = Some(SceneInfo {
        name: scene.name.clone(),
        digest: scene.digest(),
        n: scene.n,
        rank: scene.rank(),
        chart: scene.chart,
    });
    let samples = &scene.samples;
    let name = args.analysis.as_str();
    let warn = |op: &str, z: &[C64], msg: &str| format!("{op} at z = {}: {msg}", point_str(z));
    match name {
        "curvature" => {
            let h = metric(scene)?;
            let records: Vec<Value> = samples
                .iter()
                .map(|z| {
                    let t = chern_curvature(&h, z)?;
                    Ok(json!({"point": z, "max_abs": t.max_abs(), "pair_symmetry_defect": t.pair_symmetry_defect(), "tensor": tensor_value(&t)}))
                })
                .collect::<Result<_>>()?;
            report.results = json!({"index_order": "theta[alpha][beta][i][j]", "samples": records});
        }
        "griffiths" | "nakano" => {
            let h = metric(scene)?;
            let rank = h.rank();
            let verdicts: Vec<Verdict> = samples
                .par_iter()
                .map(|z| {
                    let t = unitary_curvature(&h, z)?;
                    if name == "griffiths" {
                        griffiths_verdict(&t, tol, args.seed, GRIFFITHS_RESTARTS)
                    } else {
                        nakano_verdict(&t, &CMat::identity(rank, rank), tol)
                    }
                })
                .collect::<Result<_>>()?;
            let (class, zero) = combine(&verdicts, tol)?;
            let records: Vec<Value> = samples.iter().zip(&verdicts).map(|(z, v)| json!({"point": z, "verdict": v})).collect();
            if let Some(expected) = scene.expect {
                if !meets(class, zero, expected) {
                    report.passed = false;
                    let worst = samples
                        .iter()
                        .zip(&verdicts)
                        .min_by(|a, b| (a.1.extremal / a.1.scale).total_cmp(&(b.1.extremal / b.1.scale)))
                        .map(|(z, _)| z.clone())
                        .unwrap_or_default();
                    report.warnings.push(warn(name, &worst, &format!("expected {expected:?}, found {class:?}")));
                }
            }
            report.results = json!({"class": class, "zero_form": zero, "expected": scene.expect, "frame": "unitary", "samples": records});
        }
        "decompose" => {
            let fw = FinslerWeight::from_scene(scene)?;
            let records: Vec<_> = samples
                .par_iter()
                .enumerate()
                .map(|(k, z)| decomposition_residual(&fw, scene.chart, z, &paired_fiber_point(scene.r, k)))
                .collect::<Result<_>>()?;
            let max = records.iter().map(|r| r.residual).fold(0.0, f64::max);
            for rec in records.iter().filter(|r| r.residual > tolerances::DECOMPOSITION) {
                report.warnings.push(warn(name, &rec.z, &format!("residual {:.3e} above tolerance", rec.residual)));
            }
            report.passed = max <= tolerances::DECOMPOSITION;
            report.conventions.volume_normalization = "raw".into();
            report.results = json!({"max_residual": max, "tolerance": tolerances::DECOMPOSITION, "samples": records});
        }
        "l2metric" => {
            let fw = FinslerWeight::from_scene(scene)?;
            let mut records = Vec::new();
            for z in samples {
                let (m, refinement) = l2_metric_monitored(&fw, z, args.resolution, measure(args))?;
                if refinement.class == RefinementClass::Inconclusive {
                    report.warnings.push(warn(name, z, &format!("refinement inconclusive, growth {:?}", refinement.growth)));
                }
                records.push(json!({"l2": m, "refinement": refinement}));
            }
            report.results = json!({"samples": records});
        }
        "roundtrip" => {
            let h = metric(scene)?;
            let grid = build_grid(scene.r, args.resolution)?;
            let records: Vec<_> = samples.iter().map(|z| roundtrip_check(&h, z, &grid, measure(args))).collect::<Result<_>>()?;
            let max_res = records.iter().map(|r| r.residual).fold(0.0, f64::max);
            let max_moment = records.iter().map(|r| r.moment_deviation).fold(0.0, f64::max);
            let max_volume = records.iter().map(|r| r.volume_deviation).fold(0.0, f64::max);
            for rec in records.iter().filter(|r| r.residual > tolerances::ROUNDTRIP || r.moment_deviation > tolerances::ROUNDTRIP) {
                report.warnings.push(warn(name, &rec.z, &format!("residual {:.3e}, moment deviation {:.3e}", rec.residual, rec.moment_deviation)));
            }
            report.passed = max_res <= tolerances::ROUNDTRIP && max_moment <= tolerances::ROUNDTRIP;
            report.results = json!({
                "max_residual": max_res,
                "max_moment_deviation": max_moment,
                "max_volume_deviation": max_volume,
                "tolerance": tolerances::ROUNDTRIP,
                "note": "lambda is compared with V/(r+1) (second moment); lambda = V holds only for r = 0",
                "samples": records,
            });
        }
        "ke" => {
            let grid = build_grid(scene.r, args.resolution)?;
            if scene.metric.is_some() {
                let h = metric(scene)?;
                let rep = ke_constant_survey(&h, samples, &grid)?;
                report.conventions.fitted.insert("ke_constant".into(), rep.mean);
                report.passed = rep.max_residual <= tolerances::KE;
                if !report.passed {
                    report.warnings.push(format!("ke: max residual {:.3e} over {} base samples", rep.max_residual, samples.len()));
                }
                report.results = to_value(&rep);
            } else {
                let fw = FinslerWeight::from_scene(scene)?;
                let mut records = Vec::new();
                for z in samples {
                    let cfit = fit_ke_constant(&fw, 1.0, z, &grid)?;
                    let res = ke_residual(&fw, 1.0, z, &grid, cfit)?;
                    if res.max_residual > tolerances::KE {
                        report.passed = false;
                        report.warnings.push(warn(name, z, &format!("residual {:.3e} at chart {} w = {}", res.max_residual, res.worst_chart, point_str(&res.worst_w))));
                    }
                    records.push(res);
                }
                report.results = json!({"determinant_factor": 1.0, "samples": records});
            }
        }
        "duality" | "pushforward" => {
            let h = metric(scene)?;
            let grid = build_grid(scene.r, args.resolution)?;
            let records: Vec<_> = samples
                .iter()
                .map(|z| if name == "duality" { duality_check(&h, z, &grid) } else { det_pushforward_check(&h, z, &grid) })
                .collect::<Result<_>>()?;
            let tolv = if name == "duality" { tolerances::DUALITY } else { tolerances::PUSHFORWARD };
            let max = records.iter().map(|r| r.deviation).fold(0.0, f64::max);
            for rec in records.iter().filter(|r| r.deviation > tolv) {
                report.warnings.push(warn(name, &rec.z, &format!("deviation {:.3e}", rec.deviation)));
            }
            let fitted: Vec<f64> = records.iter().filter_map(|r| r.fitted_constant).collect();
            if !fitted.is_empty() {
                report.conventions.fitted.insert(format!("{name}_constant"), fitted.iter().sum::<f64>() / fitted.len() as f64);
            }
            report.passed = max <= tolv;
            report.results = json!({"max_deviation": max, "tolerance": tolv, "samples": records});
        }
        "membership" => {
            let fw = FinslerWeight::from_scene(scene)?;
            let per_axis = if scene.r <= 1 { 21 } else { 7 };
            let rep = hx_membership(&fw, samples, per_axis, tol)?;
            for rec in &rep.records {
                if let Some(bad) = &rec.bad_fiber {
                    report.warnings.push(warn(name, &rec.z, bad));
                }
            }
            report.results = to_value(&rep);
        }
        "lelong" => {
            let phi = SingularBaseWeight::from_scene(scene)?;
            if scene.singular_points.is_empty() {
                return Err(Error::input("scene lists no singular points"));
            }
            let records: Vec<_> = scene.singular_points.iter().map(|p| lelong_estimate(&phi, p, &default_radii())).collect::<Result<_>>()?;
            for rec in &records {
                if let Some(note) = &rec.note {
                    report.warnings.push(warn(name, &rec.point, note));
                }
            }
            report.results = json!({"estimates": records});
        }
        "integrability" => {
            let phi = SingularBaseWeight::from_scene(scene)?;
            if scene.singular_points.is_empty() {
                return Err(Error::input("scene lists no singular points"));
            }
            let t = match args.t {
                Some(t) => t,
                None => {
                    let th = vanishing_threshold(scene.r)?;
                    1.0 / th.threshold
                }
            };
            let records: Vec<_> = scene
                .singular_points
                .iter()
                .map(|p| integrability_classify(&phi, p, t, INTEGRABILITY_RADIUS))
                .collect::<Result<_>>()?;
            for rec in records.iter().filter(|r| r.class == crate::vanishing::Integrability::Inconclusive) {
                report.warnings.push(warn(name, &rec.point, &format!("inconclusive, growth {:?}", rec.growth)));
            }
            report.results = json!({"t": t, "points": records});
        }
        "vanishing-report" => {
            let rep = vanishing_report(scene, tol)?;
            let stable = if scene.base_weight.is_some() { Some(stable_model_check(scene, 3)?) } else { None };
            report.results = json!({"hypotheses": rep, "stable_model": stable});
        }
        _ => return Err(usage_error()),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(a: &[&str]) -> Outcome {
        run(std::iter::once("bundlegeom").chain(a.iter().copied()))
    }

    #[test]
    fn threshold_json() {
        let out = run_args(&["threshold", "--r", "2"]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["results"]["R"], 15);
        assert_eq!(v["results"]["threshold"], 1.5);
        assert_eq!(v["results"]["gt_one"], true);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_args(&["frobnicate", "--builtin", "trivial"]).code, 1);
        assert_eq!(run_args(&["curvature"]).code, 1);
        assert_eq!(run_args(&["curvature", "--builtin", "nope"]).code, 1);
        assert_eq!(run_args(&["--help"]).code, 0);
    }

    #[test]
    fn curvature_of_trivial_is_zero() {
        let out = run_args(&["curvature", "--builtin", "trivial"]);
        assert_eq!(out.code, 0);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        for s in v["results"]["samples"].as_array().unwrap() {
            assert_eq!(s["max_abs"], 0.0);
        }
    }

    #[test]
    fn decompose_diagonal() {
        let out = run_args(&["decompose", "--builtin", "diagonal-exponential", "--params", "1,2"]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert!(v["results"]["max_residual"].as_f64().unwrap() < 1e-5);
    }

    #[test]
    fn expectation_failure_exits_two() {
        let dir = std::env::temp_dir().join(format!("bg-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("neg.toml");
        std::fs::write(
            &path,
            "name = \"neg\"\nn = 1\nrank = 2\nmetric = \"[[exp(abs2(z1)), 0], [0, exp(abs2(z1))]]\"\nexpect = \"strictly-positive\"\n",
        )
        .unwrap();
        let out = run_args(&["griffiths", path.to_str().unwrap()]);
        assert_eq!(out.code, 2, "{}{}", out.stdout, out.stderr);
        assert!(out.stdout.contains("griffiths at z = ["));
    }
}
