//! Built-in charts and conformal scales used throughout the verification
//! campaigns. Domains are chosen to stay clear of chart degeneracies: the
//! stereographic sphere chart uses the box `[-0.9, 0.9]^n`, the upper
//! half-space chart keeps the last coordinate in `[0.5, 1.5]`.

use crate::chart::{MetricChart, ScalarField};
use crate::error::Error;
use crate::expr::{self, Expr, Func};
use crate::Result;

fn diagonal(n: usize, entry: Expr) -> Vec<Vec<Expr>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        entry.clone()
                    } else {
                        expr::num(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn norm_sq(n: usize) -> Expr {
    (1..=n)
        .map(|i| expr::pow(expr::var(i), expr::num(2.0)))
        .reduce(expr::add)
        .expect("n >= 1")
}

/// Euclidean metric on `[-1, 1]^n`.
pub fn flat(n: usize) -> Result<MetricChart> {
    MetricChart::new(
        n,
        vec![(-1.0, 1.0); n],
        diagonal(n, expr::num(1.0)),
        Some(format!("flat({n})")),
    )
}

/// Round sphere of the given radius in the stereographic chart:
/// `g = 4 radius^4 / (radius^2 + |x|^2)^2 delta` on `[-0.9, 0.9]^n`.
pub fn sphere(n: usize, radius: f64) -> Result<MetricChart> {
    if !(radius > 0.0) {
        return Err(Error::InvalidChart(format!(
            "sphere radius must be positive, got {radius}"
        )));
    }
    let r2 = expr::num(radius * radius);
    let entry = expr::div(
        expr::num(4.0 * radius.powi(4)),
        expr::pow(expr::add(r2, norm_sq(n)), expr::num(2.0)),
    );
    MetricChart::new(
        n,
        vec![(-0.9, 0.9); n],
        diagonal(n, entry),
        Some(format!("sphere({n},{radius})")),
    )
}

/// Hyperbolic upper half-space `g = delta / x_n^2`, with `x_n in [0.5, 1.5]`.
pub fn hyperbolic(n: usize) -> Result<MetricChart> {
    let entry = expr::div(expr::num(1.0), expr::pow(expr::var(n), expr::num(2.0)));
    let mut domain = vec![(-0.9, 0.9); n];
    domain[n - 1] = (0.5, 1.5);
    MetricChart::new(
        n,
        domain,
        diagonal(n, entry),
        Some(format!("hyperbolic({n})")),
    )
}

/// Non-Einstein perturbation of the flat metric: `g = (1 + eps x1^2) delta`
/// on `[-1, 1]^n`.
pub fn perturbed(n: usize, eps: f64) -> Result<MetricChart> {
    let entry = expr::add(
        expr::num(1.0),
        expr::mul(expr::num(eps), expr::pow(expr::var(1), expr::num(2.0))),
    );
    MetricChart::new(
        n,
        vec![(-1.0, 1.0); n],
        diagonal(n, entry),
        Some(format!("perturbed({n},{eps})")),
    )
}

/// Parse a catalog name of the form `flat(3)`, `sphere(3,1)`, `hyperbolic(3)`
/// or `perturbed(3,0.3)`.
pub fn by_name(name: &str) -> Result<MetricChart> {
    let trimmed = name.trim();
    let (head, rest) = trimmed
        .split_once('(')
        .ok_or_else(|| Error::InvalidChart(format!("unknown catalog chart `{trimmed}`")))?;
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::InvalidChart(format!("unbalanced parenthesis in `{trimmed}`")))?;
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    let dim = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::InvalidChart(format!("bad dimension `{s}` in `{trimmed}`")))
    };
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidChart(format!("bad number `{s}` in `{trimmed}`")))
    };
    match (head.trim(), parts.as_slice()) {
        ("flat", [n]) => flat(dim(n)?),
        ("sphere", [n, r]) => sphere(dim(n)?, num(r)?),
        ("hyperbolic", [n]) => hyperbolic(dim(n)?),
        ("perturbed", [n, e]) => perturbed(dim(n)?, num(e)?),
        _ => Err(Error::InvalidChart(format!(
            "unknown catalog chart `{trimmed}` (expected flat(n), sphere(n,radius), hyperbolic(n), perturbed(n,eps))"
        ))),
    }
}

/// The four charts every campaign runs over.
pub fn standard_charts() -> Vec<MetricChart> {
    vec![
        flat(3).expect("flat(3)"),
        sphere(3, 1.0).expect("sphere(3,1)"),
        hyperbolic(3).expect("hyperbolic(3)"),
        perturbed(3, 0.3).expect("perturbed(3,0.3)"),
    ]
}

/// Conformal scales exercised by the immersion and tractor campaigns:
/// zero, a constant shift, a linear gradient, and the sphere-flattening scale.
pub fn standard_scales(n: usize) -> Vec<(String, ScalarField)> {
    let mut out = vec![
        ("0".to_string(), ScalarField::zero(n)),
        (
            "1/4".to_string(),
            ScalarField::new(expr::num(0.25), n).expect("constant"),
        ),
        (
            "x1/4".to_string(),
            ScalarField::new(expr::div(expr::var(1), expr::num(4.0)), n).expect("linear"),
        ),
    ];
    let log_scale = expr::fun(
        Func::Log,
        expr::div(expr::num(2.0), expr::add(expr::num(1.0), norm_sq(n))),
    );
    out.push((
        "log(2/(1+|x|^2))".to_string(),
        ScalarField::new(log_scale, n).expect("log scale"),
    ));
    out
}
