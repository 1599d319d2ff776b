//! Invariants as property tests over random inputs.

use bundlegeom::diff::{jet2, DiffMode};
use bundlegeom::dsl::{builtin, parse_scalar, point_env, Expr, Var};
use bundlegeom::finsler::{induced_weight, ChartWeight, FinslerWeight};
use bundlegeom::hermitian::{chern_curvature, unitary_curvature, HermitianField};
use bundlegeom::l2::{cross_chart_defect, l2_metric, SectionXi};
use bundlegeom::quadrature::{build_grid, fs_moment, fs_moment_quadrature, Measure, MomentPattern};
use bundlegeom::tensor::{classify_spectrum, hermitian_eigen, max_abs_entry, nakano_flatten, CurvatureTensor, Hermitian};
use bundlegeom::vanishing::{binomial, default_radii, lelong_estimate, symmetric_rank, vanishing_threshold, SingularBaseWeight};
use bundlegeom::{CMat, C64};
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b))
}

fn matrix(d: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(complex(), d * d).prop_map(move |v| CMat::from_row_slice(d, d, &v))
}

fn hermitian(d: usize) -> impl Strategy<Value = CMat> {
    matrix(d).prop_map(|m| (&m + m.adjoint()) * C64::new(0.5, 0.0))
}

fn positive(d: usize) -> impl Strategy<Value = CMat> {
    matrix(d).prop_map(move |m| &m * m.adjoint() + CMat::identity(d, d) * C64::new(0.5, 0.0))
}

fn unitary(d: usize) -> impl Strategy<Value = CMat> {
    matrix(d).prop_map(move |m| (m + CMat::identity(d, d) * C64::new(0.1, 0.0)).qr().q())
}

/// Small random expressions over `z1` and `w1`, printed as source text.
fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("z1".to_string()),
        Just("w1".to_string()),
        (1u32..9).prop_map(|k| format!("{k}")),
        (1u32..9).prop_map(|k| format!("0.{k}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} - {b}")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.clone().prop_map(|a| format!("abs2({a})")),
            inner.clone().prop_map(|a| format!("exp({a})")),
            inner.clone().prop_map(|a| format!("conj({a})")),
            (inner, 1u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_reconstruction(m in (1usize..=12).prop_flat_map(hermitian)) {
        let d = m.nrows();
        let eig = hermitian_eigen(&Hermitian::symmetrize(&m)).unwrap();
        let mut rebuilt = CMat::zeros(d, d);
        for k in 0..d {
            let v = eig.vectors.column(k);
            rebuilt += v * v.adjoint() * C64::new(eig.values[k], 0.0);
        }
        prop_assert!(max_abs_entry(&(rebuilt - &m)) <= 1e-9 * max_abs_entry(&m).max(1e-300));
    }

    #[test]
    fn classify_monotone_under_positive_shift(m in hermitian(4), shift in 0.0f64..5.0) {
        let spectrum = |m: &CMat| {
            let e = hermitian_eigen(&Hermitian::symmetrize(m)).unwrap().values;
            classify_spectrum(&e, 1e-8).unwrap().0
        };
        let before = spectrum(&m);
        let after = spectrum(&(&m + CMat::identity(4, 4) * C64::new(shift, 0.0)));
        prop_assert!(after.rank() >= before.rank(), "{before:?} -> {after:?}");
    }

    #[test]
    fn nakano_flatten_of_pair_symmetric_tensor_is_hermitian(entries in prop::collection::vec(complex(), 16), h in positive(2)) {
        let raw = CurvatureTensor::from_fn(2, 2, |a, b, i, j| entries[((a * 2 + b) * 2 + i) * 2 + j]);
        let t = CurvatureTensor::from_fn(2, 2, |a, b, i, j| (raw.get(a, b, i, j) + raw.get(b, a, j, i).conj()) * 0.5);
        prop_assert!(t.pair_symmetry_defect() < 1e-15);
        let flat = nakano_flatten(&t, &h).unwrap();
        let m = flat.matrix();
        prop_assert!(max_abs_entry(&(m - m.adjoint())) <= 1e-12 * max_abs_entry(m).max(1.0));
    }

    #[test]
    fn parse_print_parse_is_idempotent(src in expr_source()) {
        let once = parse_scalar(&src).unwrap();
        let printed = once.to_string();
        let twice = parse_scalar(&printed).unwrap();
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(twice.to_string(), printed);
    }

    #[test]
    fn homogeneous_form_has_weight_one_one(z in complex(), zz0 in complex(), zz1 in complex(), lambda in complex()) {
        prop_assume!(lambda.norm() > 0.1 && zz0.norm() + zz1.norm() > 0.1);
        let scene = builtin("trivial", &[], 1, Some(1)).unwrap();
        let fw = FinslerWeight::from_scene(&scene).unwrap();
        let base = fw.eval_homogeneous(&[z], &[zz0, zz1]).unwrap();
        let scaled = fw.eval_homogeneous(&[z], &[lambda * zz0, lambda * zz1]).unwrap();
        prop_assert!((scaled - lambda.norm_sqr() * base).abs() <= 1e-12 * scaled.abs().max(1.0));
    }

    #[test]
    fn mixed_jet_is_hermitian_within_error(family in 0usize..3, z in complex()) {
        let scene = match family {
            0 => builtin("product", &[1.0], 1, Some(1)).unwrap(),
            1 => builtin("diagonal-exponential", &[1.0, 2.0], 1, None).unwrap(),
            _ => builtin("stable-model", &[0.5], 1, Some(1)).unwrap(),
        };
        prop_assume!(scene.distance_to_singular(&[z]).is_none_or(|d| d > scene.punctured_radius.max(0.05)));
        let fw = FinslerWeight::from_scene(&scene).unwrap();
        let phi = fw.chart(0);
        let w = [C64::new(0.3, -0.2)];
        let zs = [z];
        for mode in [DiffMode::Forward, DiffMode::Stencil] {
            let env = point_env(&zs, &w);
            let jet = jet2(&phi.expr, &phi.all_dirs(), &env, mode, None).unwrap();
            let defect = max_abs_entry(&(&jet.dd - jet.dd.adjoint()));
            prop_assert!(defect <= jet.est_error.max(1e-12) * 2.0, "{mode:?}: {defect:e} vs {:e}", jet.est_error);
        }
    }

    #[test]
    fn curvature_pair_symmetry(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, z in complex()) {
        let h = HermitianField::from_scene(&builtin("diagonal-exponential", &[c0, c1], 1, None).unwrap()).unwrap();
        let t = chern_curvature(&h, &[z]).unwrap();
        prop_assert!(t.pair_symmetry_defect() <= 1e-10 * t.max_abs().max(1.0));
    }

    #[test]
    fn dual_curvature_flips_sign(m in positive(2), a in 0.0f64..1.0, z in complex()) {
        // Diagonal growth keeps H(z) >= M positive-definite.
        let h = HermitianField::new(1, vec![
            vec![parse_scalar(&format!("{} + {a}*abs2(z1)", m[(0, 0)].re)).unwrap(), constant(m[(0, 1)])],
            vec![constant(m[(1, 0)]), parse_scalar(&format!("{} * exp({a}*abs2(z1))", m[(1, 1)].re)).unwrap()],
        ]).unwrap();
        let z = [z * 0.5];
        let t = unitary_curvature(&h, &z).unwrap();
        let d = unitary_curvature(&h.dual(), &z).unwrap();
        let eigs = |m: CMat| hermitian_eigen(&Hermitian::symmetrize(&m)).unwrap().values;
        let (x, y) = (eigs(t.bundle_block(0, 0)), eigs(d.bundle_block(0, 0)));
        for i in 0..2 {
            prop_assert!((x[i] + y[1 - i]).abs() <= 1e-6 * t.max_abs().max(1.0));
        }
    }

    #[test]
    fn moments_are_unitarily_invariant(u in unitary(3), a in 0usize..3, b in 0usize..3) {
        let grid = build_grid(2, 16).unwrap();
        let p = MomentPattern::Second(a, b);
        let v = fs_moment_quadrature(&grid, p, Some(&u)).unwrap();
        // The moment of U Z is (U M U*)_{ab} with M = I/(r+1).
        let exact = (&u * u.adjoint())[(a, b)] * fs_moment(2, MomentPattern::Second(0, 0)).unwrap();
        prop_assert!((v - exact).norm() < 1e-6);
    }

    #[test]
    fn section_norm_is_chart_independent(
        m in positive(3),
        coeffs in prop::collection::vec(complex(), 3),
        chart in 0usize..3,
        other in 0usize..3,
        zz in prop::collection::vec(complex(), 3),
        z in complex(),
    ) {
        prop_assume!(zz.iter().all(|x| x.norm() > 0.05));
        let fw = induced_weight(&HermitianField::constant(1, &m)).unwrap();
        let xi = SectionXi::new(coeffs, chart).unwrap();
        prop_assert!(cross_chart_defect(&xi, other, &fw, &[z], &zz).unwrap() <= 1e-10);
    }

    #[test]
    fn l2_metric_constant_shift_equivariance(shift in -3.0f64..3.0, z in complex()) {
        let h = HermitianField::from_scene(&builtin("diagonal-exponential", &[1.0, 2.0], 1, None).unwrap()).unwrap();
        let fw = induced_weight(&h).unwrap();
        let shifted = FinslerWeight::from_chart(
            ChartWeight::new(1, 1, 0, Expr::add(fw.chart(0).expr.clone(), Expr::real(shift))).unwrap(),
        );
        let grid = build_grid(1, 16).unwrap();
        let a = l2_metric(&fw, &[z], &grid, Measure::Unit).unwrap().matrix;
        let b = l2_metric(&shifted, &[z], &grid, Measure::Unit).unwrap().matrix;
        let expected = a * C64::new((-shift).exp(), 0.0);
        prop_assert!(max_abs_entry(&(b - &expected)) <= 1e-12 * max_abs_entry(&expected));
    }

    #[test]
    fn lelong_number_ignores_bounded_smooth_terms(cst in 0.2f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let src = format!("{cst}*log(abs2(z1)) + {a}*sin(re(z1)) + {b}*abs2(z1)");
        let phi = SingularBaseWeight::new(1, parse_scalar(&src).unwrap(), vec![vec![C64::new(0.0, 0.0)]]).unwrap();
        let est = lelong_estimate(&phi, &[C64::new(0.0, 0.0)], &default_radii()).unwrap();
        prop_assert!((est.nu - cst).abs() < 1e-2);
    }
}

proptest! {
    #[test]
    fn symmetric_rank_binomial_symmetry(r in 1usize..=30) {
        let n = 2 * r as u64 + 2;
        prop_assert_eq!(symmetric_rank(r).unwrap(), binomial(n, r as u64));
        prop_assert_eq!(binomial(n, r as u64), binomial(n, r as u64 + 2));
    }

    #[test]
    fn threshold_exceeds_one_iff_r_exceeds_one(r in 1usize..=30) {
        prop_assert_eq!(vanishing_threshold(r).unwrap().threshold > 1.0, r > 1);
    }
}

fn constant(x: C64) -> Expr {
    Expr::add(Expr::real(x.re), Expr::mul(Expr::Num(C64::new(0.0, 1.0)), Expr::real(x.im)))
}

#[test]
fn var_helpers_cover_fiber_dims() {
    let phi = ChartWeight::new(1, 2, 0, parse_scalar("log(1 + abs2(w1) + abs2(w2))").unwrap()).unwrap();
    assert_eq!(phi.fiber_dirs(), vec![Var::fiber(0), Var::fiber(1)]);
}
