//! Acceptance suite: one test per criterion, every tolerance pinned in code.
//! Each test prints a single pass/fail line (visible with `--nocapture`).
//!
//! The catalog under test is flat(3), sphere(3,1), hyperbolic(3) and
//! perturbed(3,0.3); the normalization family is `gamma(r) = Id + 2r P_hat`.

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use tractor_forge::ambient::{AdmissibleFamily, AmbientMetric, AmbientPoint, AmbientVec};
use tractor_forge::catalog;
use tractor_forge::chart::{MetricChart, ScalarField};
use tractor_forge::expr::Expr;
use tractor_forge::fd;
use tractor_forge::grid::{self, Rng};
use tractor_forge::immersion::{Immersion, NormalField};
use tractor_forge::tractor::{
    einstein_scale_tractor, CurvePath, Tractor, TractorSection, TractorVector,
};
use tractor_forge::Error;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn charts() -> Vec<MetricChart> {
    catalog::standard_charts()
}

fn scales() -> Vec<(String, ScalarField)> {
    catalog::standard_scales(3)
}

fn announce(criterion: u32, label: &str, pass: bool) {
    println!(
        "[acceptance] criterion {criterion} ({label}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({label}) failed");
}

/// Criterion 1: symbolic curvature equals the finite-difference oracle within
/// 1e-4 at 20 interior points per catalog chart; the sphere chart reproduces
/// Ric = 2g and P = g/2 within 1e-8 on the symbolic path.
#[test]
fn criterion_1_curvature_oracle_agreement() {
    let mut worst = 0.0f64;
    for chart in charts() {
        for x in grid::random_points(chart.domain(), 20, 42) {
            let sym = chart.curvature(&x).unwrap();
            let num = fd::curvature_fd_oracle(&chart, &x, fd::DEFAULT_STEP).unwrap();
            worst = worst
                .max(max_abs(&(&sym.ric - &num.ric)))
                .max((sym.scalar - num.scalar).abs());
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            worst = worst
                                .max((sym.riem.get(a, b, c, d) - num.riem.get(a, b, c, d)).abs());
                        }
                    }
                }
            }
        }
    }
    let fd_ok = worst <= 1e-4;

    let sphere = catalog::sphere(3, 1.0).unwrap();
    let mut sphere_dev = 0.0f64;
    for x in grid::random_points(sphere.domain(), 20, 42) {
        let pack = sphere.curvature(&x).unwrap();
        sphere_dev = sphere_dev
            .max(max_abs(&(&pack.ric - &pack.g * 2.0)))
            .max(max_abs(&(pack.schouten().unwrap() - &pack.g * 0.5)));
    }
    let sphere_ok = sphere_dev <= 1e-8;

    announce(1, "curvature oracle agreement", fd_ok && sphere_ok);
}

/// Criterion 2: the five closed-form connection identities match the numeric
/// ambient Christoffel contraction within 1e-6 at 20 random (t, x) with
/// r = 0, for every catalog chart with the Schouten family.
#[test]
fn criterion_2_connection_identities() {
    let mut worst = 0.0f64;
    for chart in charts() {
        let family = AdmissibleFamily::schouten(&chart).unwrap();
        let ambient = AmbientMetric::new(&chart, &family);
        let mut rng = Rng::new(42);
        let interior = grid::shrink_domain(chart.domain(), 0.1);
        for _ in 0..20 {
            let x = rng.point_in(&interior);
            let t = rng.in_range(0.5, 2.5);
            let p = AmbientPoint::on_slice(t, x);
            let v = AmbientVec::lift(DVector::from_vec(rng.unit_box_vector(3)));
            let w = AmbientVec::lift(DVector::from_vec(rng.unit_box_vector(3)));
            let dt = AmbientVec::d_t(3);
            let dr = AmbientVec::d_r(3);
            // The five displayed identities: both partials, the mixed
            // d_t/d_r pair, nabla_V d_t, nabla_V d_r, and nabla_V W.
            let pairs: [(&AmbientVec, &AmbientVec); 7] = [
                (&dt, &dt),
                (&dr, &dr),
                (&dt, &dr),
                (&dr, &dt),
                (&v, &dt),
                (&v, &dr),
                (&v, &w),
            ];
            for (a, b) in pairs {
                let closed = ambient.connection_closed_form(&p, a, b).unwrap();
                let numeric = ambient.connection_numeric(&p, a, b).unwrap();
                worst = worst.max((closed - numeric).amax());
            }
        }
    }
    announce(2, "ambient connection identities", worst <= 1e-6);
}

/// Criterion 3: the Ricci restriction formula equals the numeric ambient
/// Ricci on lifted directions within 1e-4; with the Schouten family it
/// vanishes within 1e-8 (formula) and 1e-4 (numeric); the transverse entries
/// Ric~(d_t, -) vanish within 1e-4.
#[test]
fn criterion_3_ricci_restriction() {
    let mut formula_vs_numeric = 0.0f64;
    let mut formula_zero = 0.0f64;
    let mut numeric_zero = 0.0f64;
    let mut transverse = 0.0f64;
    for chart in charts() {
        let family = AdmissibleFamily::schouten(&chart).unwrap();
        let ambient = AmbientMetric::new(&chart, &family);
        let mut rng = Rng::new(43);
        let interior = grid::shrink_domain(chart.domain(), 0.1);
        for _ in 0..10 {
            let x = rng.point_in(&interior);
            let t = rng.in_range(0.5, 2.5);
            let numeric = ambient
                .ricci_numeric(&AmbientPoint::on_slice(t, x.clone()))
                .unwrap();
            let v = DVector::from_vec(rng.unit_box_vector(3));
            let w = DVector::from_vec(rng.unit_box_vector(3));
            let formula = ambient.ricci_r0_formula(&x, &v, &w).unwrap();
            let mut num_vw = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    num_vw += numeric[(2 + i, 2 + j)] * v[i] * w[j];
                }
            }
            formula_vs_numeric = formula_vs_numeric.max((formula - num_vw).abs());
            formula_zero = formula_zero.max(formula.abs());
            numeric_zero = numeric_zero.max(num_vw.abs());
            transverse = transverse.max(numeric[(0, 0)].abs());
            for i in 0..3 {
                transverse = transverse.max(numeric[(0, 2 + i)].abs());
            }
        }
    }
    announce(
        3,
        "Ricci restriction at r = 0",
        formula_vs_numeric <= 1e-4
            && formula_zero <= 1e-8
            && numeric_zero <= 1e-4
            && transverse <= 1e-4,
    );
}

/// Criterion 4: frame identities within 1e-10; A_xi = -Id within 1e-10;
/// A_ell closed form vs extrinsic oracle within 1e-6 for the catalog scales;
/// the trace reconstruction of H within 1e-9; and the normalized-family mean
/// curvature equals -S^{e^{2u}g}/(2n(n-1)) xi + ell within 1e-8.
#[test]
fn criterion_4_immersion_package() {
    let mut frame_dev = 0.0f64;
    let mut a_xi_dev = 0.0f64;
    let mut a_ell_dev = 0.0f64;
    let mut h_trace_dev = 0.0f64;
    let mut h_scalar_dev = 0.0f64;
    for chart in charts() {
        let family = AdmissibleFamily::schouten(&chart).unwrap();
        for (_, u) in scales() {
            let im = Immersion::new(&chart, &family, u.clone());
            let ambient = im.ambient();
            for x in grid::random_points(chart.domain(), 5, 44) {
                let frame = im.frame(&x).unwrap();
                let gram = ambient.gram(&im.immerse(&x).unwrap()).unwrap();
                frame_dev = frame_dev
                    .max((&gram * &frame.xi).dot(&frame.xi).abs())
                    .max((&gram * &frame.ell).dot(&frame.ell).abs())
                    .max(((&gram * &frame.ell).dot(&frame.xi) + 1.0).abs())
                    .max((frame.t_psi.transpose() * &gram * &frame.xi).amax())
                    .max((frame.t_psi.transpose() * &gram * &frame.ell).amax());
                a_xi_dev = a_xi_dev.max(max_abs(&(&frame.a_xi + DMatrix::identity(3, 3))));
                let oracle = im.weingarten_oracle(&x, NormalField::Ell).unwrap();
                a_ell_dev = a_ell_dev.max(max_abs(&(&frame.a_ell - &oracle.a)));

                let h = frame.mean_curvature;
                h_trace_dev = h_trace_dev
                    .max((h.xi - (-frame.a_ell.trace() / 3.0)).abs())
                    .max((h.ell - (-frame.a_xi.trace() / 3.0)).abs());
                let s_conf = chart.conformal_scalar(&u, &x).unwrap();
                h_scalar_dev = h_scalar_dev.max((h.xi - (-s_conf / 12.0)).abs());
            }
        }
    }
    announce(
        4,
        "immersion package",
        frame_dev <= 1e-10
            && a_xi_dev <= 1e-10
            && a_ell_dev <= 1e-6
            && h_trace_dev <= 1e-9
            && h_scalar_dev <= 1e-8,
    );
}

/// Criterion 5: the compatibility residual stays below 1e-6 on every catalog
/// chart with the Schouten family for every catalog scale, and exceeds 1e-2
/// on the sphere with the identity family.
#[test]
fn criterion_5_compatibility_residual() {
    let mut normalized_worst = 0.0f64;
    for chart in charts() {
        let family = AdmissibleFamily::schouten(&chart).unwrap();
        for (_, u) in scales() {
            let im = Immersion::new(&chart, &family, u);
            for x in grid::random_points(chart.domain(), 10, 45) {
                normalized_worst =
                    normalized_worst.max(im.compatibility_residual(&x).unwrap().max_abs);
            }
        }
    }

    let sphere = catalog::sphere(3, 1.0).unwrap();
    let identity = AdmissibleFamily::identity();
    let im = Immersion::new(&sphere, &identity, ScalarField::zero(3));
    let mut identity_worst = 0.0f64;
    for x in grid::random_points(sphere.domain(), 10, 45) {
        identity_worst = identity_worst.max(im.compatibility_residual(&x).unwrap().max_abs);
    }

    announce(
        5,
        "compatibility residual",
        normalized_worst <= 1e-6 && identity_worst >= 1e-2,
    );
}

/// Criterion 6: the component covariant derivative equals the extrinsic
/// oracle within 1e-6 over 50 random (section, direction, point) draws per
/// chart, and the two residual formulations agree within 1e-8.
#[test]
fn criterion_6_covariant_derivative_equivalence() {
    let mut worst = 0.0f64;
    let mut forms = 0.0f64;
    for chart in charts() {
        let family = AdmissibleFamily::schouten(&chart).unwrap();
        let tractor = Tractor::new(&chart, &family).unwrap();
        let mut rng = Rng::new(46);
        let interior = grid::shrink_domain(chart.domain(), 0.1);
        for _ in 0..50 {
            let sec = random_section(&mut rng);
            let x = rng.point_in(&interior);
            let v = DVector::from_vec(rng.unit_box_vector(3));
            let a = tractor.cov_deriv_intrinsic(&sec, &v, &x).unwrap();
            let b = tractor.cov_deriv_extrinsic(&sec, &v, &x).unwrap();
            worst = worst.max((a.to_dvector() - b.to_dvector()).amax());
        }
        let points = grid::random_points(chart.domain(), 5, 46);
        for _ in 0..5 {
            let sec = random_section(&mut rng);
            let report = tractor.parallel_residual(&sec, &points).unwrap();
            forms = forms.max(report.form_disagreement);
        }
    }
    announce(
        6,
        "covariant derivative equivalence",
        worst <= 1e-6 && forms <= 1e-8,
    );
}

/// Criterion 7: the bundle metric is preserved along transport within 1e-8;
/// forward-backward transport returns the start within 1e-7; the flat square
/// loop has identity holonomy within 1e-6; and holonomy matrices preserve the
/// frame Gram matrix within 1e-6.
#[test]
fn criterion_7_transport_and_holonomy() {
    // Flat square loop.
    let flat = catalog::flat(3).unwrap();
    let identity_family = AdmissibleFamily::identity();
    let tr_flat = Tractor::new(&flat, &identity_family).unwrap();
    let corners: [[f64; 3]; 4] = [
        [-0.5, -0.5, 0.0],
        [0.5, -0.5, 0.0],
        [0.5, 0.5, 0.0],
        [-0.5, 0.5, 0.0],
    ];
    let square: Vec<CurvePath> = (0..4)
        .map(|k| CurvePath::segment(&corners[k], &corners[(k + 1) % 4]).unwrap())
        .collect();
    let hol_flat = tr_flat.holonomy(&square).unwrap();
    let square_dev = max_abs(&(&hol_flat.matrix - DMatrix::identity(5, 5)));

    // Sphere circle loop.
    let sphere = catalog::sphere(3, 1.0).unwrap();
    let family = AdmissibleFamily::schouten(&sphere).unwrap();
    let tr = Tractor::new(&sphere, &family).unwrap();
    let circle = CurvePath::new(
        vec![
            Expr::parse("0.5*cos(s)").unwrap(),
            Expr::parse("0.5*sin(s)").unwrap(),
            Expr::parse("0").unwrap(),
        ],
        0.0,
        std::f64::consts::TAU,
        true,
    )
    .unwrap();

    let w0 = TractorVector::new(DVector::from_vec(vec![0.3, -0.2, 0.4]), 0.6, -0.8);
    let out = tr.parallel_transport(&circle, &w0).unwrap();
    let h0 = tr.metric(&circle.point_at(0.0).unwrap(), &w0, &w0).unwrap();
    let mut h_drift = 0.0f64;
    for (s, w) in &out.samples {
        let x = circle.point_at(*s).unwrap();
        h_drift = h_drift.max((tr.metric(&x, w, w).unwrap() - h0).abs());
    }

    let arc = CurvePath::new(
        vec![
            Expr::parse("0.1 + 0.4*s").unwrap(),
            Expr::parse("0.3*s^2 - 0.2").unwrap(),
            Expr::parse("0.5*s").unwrap(),
        ],
        0.0,
        1.0,
        false,
    )
    .unwrap();
    let there = tr.parallel_transport(&arc, &w0).unwrap();
    let back = tr.parallel_transport_back(&arc, &there.end).unwrap();
    let round_trip = (back.end.to_dvector() - w0.to_dvector()).amax();

    let mut frame_metric_dev = 0.0f64;
    for (tractor, hol) in [
        (&tr_flat, &hol_flat),
        (&tr, &tr.holonomy(std::slice::from_ref(&circle)).unwrap()),
    ] {
        let h_gram = tractor.metric_gram(&hol.base_point).unwrap();
        frame_metric_dev = frame_metric_dev.max(max_abs(
            &(hol.matrix.transpose() * &h_gram * &hol.matrix - &h_gram),
        ));
    }

    announce(
        7,
        "transport and holonomy",
        h_drift <= 1e-8 && round_trip <= 1e-7 && square_dev <= 1e-6 && frame_metric_dev <= 1e-6,
    );
}

/// Criterion 8: scale tractors (0,0,1), (0,1/2,1), (0,-1/2,1) for
/// flat/sphere/hyperbolic have parallel residual <= 1e-7; the flat parallel
/// family spans the full rank n+2; the perturbed chart is rejected with an
/// Einstein residual >= 1e-3.
#[test]
fn criterion_8_einstein_detection() {
    let cases = [
        (catalog::flat(3).unwrap(), 0.0),
        (catalog::sphere(3, 1.0).unwrap(), 0.5),
        (catalog::hyperbolic(3).unwrap(), -0.5),
    ];
    let mut scale_ok = true;
    for (chart, expected_w1) in cases {
        let scale = einstein_scale_tractor(&chart, 42, 1e-6).unwrap();
        let value = scale.section.value_at(&[0.0, 0.0, 0.6]).unwrap();
        scale_ok &= (value.w1 - expected_w1).abs() < 1e-8 && (value.w2 - 1.0).abs() < 1e-12;
        let family = AdmissibleFamily::schouten(&chart).unwrap();
        let tractor = Tractor::new(&chart, &family).unwrap();
        let points = grid::random_points(chart.domain(), 10, 48);
        let residual = tractor.parallel_residual(&scale.section, &points).unwrap();
        scale_ok &= residual.max_residual() <= 1e-7;
    }

    // Flat-space solution family: the rank of the bundle is n + 2, and the
    // (a, b, c) family realizes it with independent residual-zero sections.
    let flat = catalog::flat(3).unwrap();
    let identity_family = AdmissibleFamily::identity();
    let tractor = Tractor::new(&flat, &identity_family).unwrap();
    let points = grid::random_points(flat.domain(), 10, 48);
    let params: [(f64, [f64; 3], f64); 5] = [
        (1.0, [0.0; 3], 0.0),
        (0.0, [1.0, 0.0, 0.0], 0.0),
        (0.0, [0.0, 1.0, 0.0], 0.0),
        (0.0, [0.0, 0.0, 1.0], 0.0),
        (0.0, [0.0; 3], 1.0),
    ];
    let mut family_ok = true;
    let mut values = DMatrix::zeros(5, 5);
    for (col, (a, b, c)) in params.iter().enumerate() {
        let sec = TractorSection::flat_parallel(3, *a, b, *c);
        let report = tractor.parallel_residual(&sec, &points).unwrap();
        family_ok &= report.max_residual() <= 1e-8;
        values.set_column(col, &sec.value_at(&[0.0; 3]).unwrap().to_dvector());
    }
    let full_rank = values.lu().determinant().abs() > 1e-6;

    let perturbed = catalog::perturbed(3, 0.3).unwrap();
    let rejected = matches!(
        einstein_scale_tractor(&perturbed, 42, 1e-6),
        Err(Error::NotEinstein { residual, .. }) if residual >= 1e-3
    );

    announce(
        8,
        "Einstein detection",
        scale_ok && family_ok && full_rank && rejected,
    );
}

/// Criterion 9: halving the finite-difference step shrinks the curvature
/// oracle error by at least 3x; halving the transport step changes endpoints
/// by at most 1e-7; identical seeds give identical reports.
#[test]
fn criterion_9_determinism_and_convergence() {
    // FD convergence on the sphere chart.
    let sphere = catalog::sphere(3, 1.0).unwrap();
    let mut ratios = Vec::new();
    for x in grid::random_points(sphere.domain(), 5, 49) {
        let sym = sphere.curvature(&x).unwrap();
        let err = |h: f64| {
            let num = fd::curvature_fd_oracle(&sphere, &x, h).unwrap();
            max_abs(&(&num.ric - &sym.ric))
        };
        ratios.push(err(1e-3) / err(5e-4));
    }
    let fd_ok = ratios.iter().all(|&r| r >= 3.0);

    // ODE step halving.
    let family = AdmissibleFamily::schouten(&sphere).unwrap();
    let tractor = Tractor::new(&sphere, &family).unwrap();
    let path = CurvePath::new(
        vec![
            Expr::parse("0.1 + 0.4*s").unwrap(),
            Expr::parse("0.2*s").unwrap(),
            Expr::parse("0.3*s^2").unwrap(),
        ],
        0.0,
        1.0,
        false,
    )
    .unwrap();
    let w0 = TractorVector::new(DVector::from_vec(vec![0.2, -0.4, 0.1]), 1.0, 0.7);
    let coarse = tractor.transport_fixed_steps(&path, &w0, 2000).unwrap();
    let fine = tractor.transport_fixed_steps(&path, &w0, 4000).unwrap();
    let ode_ok = (coarse.to_dvector() - fine.to_dvector()).amax() <= 1e-7;

    // Report determinism through the CLI code path.
    let config =
        r#"{"schema":"tractor-forge/1","chart":"sphere(3,1)","family":"schouten","seed":7}"#;
    let strip = |report: &tractor_forge_cli::report::Report| -> String {
        let mut v: Value = serde_json::from_str(&report.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("wall_ms");
        serde_json::to_string_pretty(&v).unwrap()
    };
    let overrides = tractor_forge_cli::config::Overrides::default();
    let (r1, c1) = tractor_forge_cli::run_command("verify-ambient", config, &overrides);
    let (r2, c2) = tractor_forge_cli::run_command("verify-ambient", config, &overrides);
    let det_ok = c1 == 0 && c2 == 0 && strip(&r1) == strip(&r2);

    announce(9, "determinism and convergence", fd_ok && ode_ok && det_ok);
}

fn random_section(rng: &mut Rng) -> TractorSection {
    use tractor_forge::expr::{self};
    let component = |rng: &mut Rng| -> Expr {
        let mut e = expr::num(rng.in_range(-1.0, 1.0));
        for i in 1..=3 {
            e = expr::add(
                e,
                expr::mul(expr::num(rng.in_range(-1.0, 1.0)), expr::var(i)),
            );
        }
        let i = 1 + (rng.next_u64() as usize) % 3;
        let j = 1 + (rng.next_u64() as usize) % 3;
        expr::add(
            e,
            expr::mul(
                expr::num(rng.in_range(-0.5, 0.5)),
                expr::mul(expr::var(i), expr::var(j)),
            ),
        )
    };
    TractorSection::new(
        (0..3).map(|_| component(rng)).collect(),
        component(rng),
        component(rng),
        3,
    )
    .unwrap()
}
