//! Wire-format tests for the JSON schemas: charts, families, sections,
//! paths, and expression strings.

use tractor_forge::ambient::FamilySpec;
use tractor_forge::chart::{ChartSpec, MetricChart};
use tractor_forge::expr::Expr;
use tractor_forge::tractor::{CurvePath, PathSpec, SectionSpec, TractorSection};

#[test]
fn chart_json_shape() {
    let text = r#"{
        "n": 3,
        "domain": [[-0.9, 0.9], [-0.9, 0.9], [-0.9, 0.9]],
        "g": [
            ["4/(1 + x1^2 + x2^2 + x3^2)^2", "0", "0"],
            ["0", "4/(1 + x1^2 + x2^2 + x3^2)^2", "0"],
            ["0", "0", "4/(1 + x1^2 + x2^2 + x3^2)^2"]
        ],
        "label": "round sphere"
    }"#;
    let spec: ChartSpec = serde_json::from_str(text).unwrap();
    let chart = MetricChart::from_spec(spec).unwrap();
    assert_eq!(chart.dim(), 3);
    assert_eq!(chart.label(), Some("round sphere"));
    let g = chart.metric_at(&[0.0, 0.0, 0.0]).unwrap();
    assert!((g[(0, 0)] - 4.0).abs() < 1e-15);

    // Round trip through the spec form preserves the evaluated metric.
    let text2 = serde_json::to_string(&chart.to_spec()).unwrap();
    let again = MetricChart::from_spec(serde_json::from_str(&text2).unwrap()).unwrap();
    let g2 = again.metric_at(&[0.2, -0.1, 0.3]).unwrap();
    let g1 = chart.metric_at(&[0.2, -0.1, 0.3]).unwrap();
    assert!((g1 - g2).amax() < 1e-15);
}

#[test]
fn family_spec_forms() {
    let named: FamilySpec = serde_json::from_str(r#""schouten""#).unwrap();
    assert!(matches!(named, FamilySpec::Named(ref n) if n == "schouten"));

    let matrix: FamilySpec = serde_json::from_str(r#"[["1 + r", "0"], ["0", "1 + r"]]"#).unwrap();
    assert!(matches!(matrix, FamilySpec::Matrix(_)));

    let tagged: FamilySpec =
        serde_json::from_str(r#"{"gamma": [["1 + r", "0"], ["0", "1 + r"]]}"#).unwrap();
    assert!(matches!(tagged, FamilySpec::Tagged { .. }));
}

#[test]
fn section_json_shape() {
    let text = r#"{"w_top": ["-x1", "0", "0"], "w1": "1", "w2": "x1^2/2"}"#;
    let spec: SectionSpec = serde_json::from_str(text).unwrap();
    let section = TractorSection::from_spec(spec, 3).unwrap();
    let v = section.value_at(&[0.4, 0.0, 0.0]).unwrap();
    assert!((v.w_top[0] + 0.4).abs() < 1e-15);
    assert!((v.w1 - 1.0).abs() < 1e-15);
    assert!((v.w2 - 0.08).abs() < 1e-15);
}

#[test]
fn path_json_shape_with_loop_field() {
    let text = r#"{
        "coords": ["0.5*cos(s)", "0.5*sin(s)", "0"],
        "s": [0.0, 6.283185307179586],
        "loop": true
    }"#;
    let spec: PathSpec = serde_json::from_str(text).unwrap();
    assert!(spec.is_loop);
    let path = CurvePath::from_spec(spec).unwrap();
    let p = path.point_at(0.0).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-15);

    // The loop flag defaults to false when absent.
    let open: PathSpec =
        serde_json::from_str(r#"{"coords": ["s", "0", "0"], "s": [0.0, 1.0]}"#).unwrap();
    assert!(!open.is_loop);
}

#[test]
fn expressions_serialize_as_strings() {
    let expr = Expr::parse("4/(1 + x1^2)^2").unwrap();
    let json = serde_json::to_string(&expr).unwrap();
    assert!(json.starts_with('"'));
    let back: Expr = serde_json::from_str(&json).unwrap();
    let at = tractor_forge::expr::Bindings::chart(&[0.5]);
    assert!((expr.eval(at).unwrap() - back.eval(at).unwrap()).abs() < 1e-15);

    // Malformed strings surface the parse error through serde.
    let bad: Result<Expr, _> = serde_json::from_str(r#""sin(x1""#);
    assert!(bad.is_err());
}
