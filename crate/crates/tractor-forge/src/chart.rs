//! Riemannian geometry of a single coordinate chart: metric, Levi-Civita
//! coefficients, Riemann/Ricci/scalar curvature, the Schouten tensor, scalar
//! field calculus, and the conformal transformation law of the Ricci tensor.
//!
//! All curvature here is analytic: the metric entries are expressions, their
//! coordinate derivatives are taken symbolically (up to third order), and the
//! curvature tensors are assembled from those exact values at each query
//! point. The independent finite-difference path lives in [`crate::fd`].

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curv::{self, MetricJet, Tensor3, Tensor4};
use crate::error::Error;
use crate::expr::{self, Bindings, Expr, Var};
use crate::grid;
use crate::Result;

/// Christoffel symbols `Gamma^k_{ij}` at a point.
pub type Christoffel = Tensor3;

/// Curvature operator components `R^rho_{sigma mu nu}` in the convention
/// `R(V, W) Z = nabla_V nabla_W Z - nabla_W nabla_V Z - nabla_{[V,W]} Z`.
pub type Riemann = Tensor4;

/// A coordinate chart with a Riemannian metric given by expressions.
///
/// Construction validates the shape, samples the domain on a 5-per-axis grid
/// to confirm symmetry and positive definiteness (by Cholesky), and caches the
/// symbolic derivatives of every metric entry up to third order.
#[derive(Debug, Clone)]
pub struct MetricChart {
    n: usize,
    domain: Vec<(f64, f64)>,
    g: Vec<Vec<Expr>>,
    label: Option<String>,
    /// dg[i][j][m] = d_m g_ij
    dg: Vec<Vec<Vec<Expr>>>,
    /// ddg[i][j][m][l] = d_m d_l g_ij
    ddg: Vec<Vec<Vec<Vec<Expr>>>>,
    /// dddg[i][j][m][l][p] = d_m d_l d_p g_ij
    dddg: Vec<Vec<Vec<Vec<Vec<Expr>>>>>,
}

/// Serialized form of a chart: `{"n":3,"domain":[[lo,hi],...],"g":[["expr",...],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartSpec {
    pub n: usize,
    pub domain: Vec<[f64; 2]>,
    pub g: Vec<Vec<Expr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MetricChart {
    pub fn new(
        n: usize,
        domain: Vec<(f64, f64)>,
        g: Vec<Vec<Expr>>,
        label: Option<String>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidChart(format!(
                "dimension must be >= 2, got {n}"
            )));
        }
        if domain.len() != n {
            return Err(Error::InvalidChart(format!(
                "domain has {} intervals for dimension {n}",
                domain.len()
            )));
        }
        for (axis, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidChart(format!(
                    "axis {axis} interval [{lo}, {hi}] is not a valid box side"
                )));
            }
        }
        if g.len() != n || g.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidChart(format!(
                "metric must be an {n}x{n} matrix"
            )));
        }
        for row in &g {
            for entry in row {
                for v in entry.variables() {
                    match v {
                        Var::X(i) if i >= 1 && i <= n => {}
                        other => {
                            return Err(Error::InvalidChart(format!(
                                "metric entry `{entry}` uses variable `{other}` outside x1..x{n}"
                            )))
                        }
                    }
                }
            }
        }

        let dg: Vec<Vec<Vec<Expr>>> = g
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| (1..=n).map(|m| e.differentiate(Var::X(m))).collect())
                    .collect()
            })
            .collect();
        let ddg: Vec<Vec<Vec<Vec<Expr>>>> = dg
            .iter()
            .map(|row| {
                row.iter()
                    .map(|per_m| {
                        per_m
                            .iter()
                            .map(|e: &Expr| (1..=n).map(|l| e.differentiate(Var::X(l))).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let dddg: Vec<Vec<Vec<Vec<Vec<Expr>>>>> = ddg
            .iter()
            .map(|row| {
                row.iter()
                    .map(|per_m| {
                        per_m
                            .iter()
                            .map(|per_l: &Vec<Expr>| {
                                per_l
                                    .iter()
                                    .map(|e| (1..=n).map(|p| e.differentiate(Var::X(p))).collect())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let chart = MetricChart {
            n,
            domain,
            g,
            label,
            dg,
            ddg,
            dddg,
        };
        chart.validate_spd()?;
        Ok(chart)
    }

    pub fn from_spec(spec: ChartSpec) -> Result<Self> {
        MetricChart::new(
            spec.n,
            spec.domain.iter().map(|d| (d[0], d[1])).collect(),
            spec.g,
            spec.label,
        )
    }

    pub fn to_spec(&self) -> ChartSpec {
        ChartSpec {
            n: self.n,
            domain: self.domain.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            g: self.g.clone(),
            label: self.label.clone(),
        }
    }

    fn validate_spd(&self) -> Result<()> {
        for point in grid::interior_grid(&self.domain, 5) {
            let g = self.metric_at(&point)?;
            for i in 0..self.n {
                for j in (i + 1)..self.n {
                    let scale = 1.0f64.max(g[(i, j)].abs());
                    if (g[(i, j)] - g[(j, i)]).abs() > 1e-9 * scale {
                        return Err(Error::InvalidChart(format!(
                            "metric is not symmetric at {point:?}: g[{i}][{j}] != g[{j}][{i}]"
                        )));
                    }
                }
            }
            if Cholesky::new(g).is_none() {
                return Err(Error::SingularMetric { point });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn metric_exprs(&self) -> &[Vec<Expr>] {
        &self.g
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n
            && x.iter()
                .zip(&self.domain)
                .all(|(&xi, &(lo, hi))| xi >= lo - 1e-12 && xi <= hi + 1e-12)
    }

    /// Metric matrix `g(x)`.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let at = Bindings::chart(x);
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = self.g[i][j].eval(at)?;
            }
        }
        Ok(m)
    }

    /// Cholesky factorization of `g(x)`; fails with `SingularMetric` when the
    /// matrix is not positive definite.
    pub fn metric_cholesky(&self, x: &[f64]) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let g = self.metric_at(x)?;
        Cholesky::new(g).ok_or_else(|| Error::SingularMetric { point: x.to_vec() })
    }

    pub fn metric_inverse_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.metric_cholesky(x)?.inverse())
    }

    /// Exact first derivative `d_m g` at `x`.
    pub(crate) fn metric_d(&self, x: &[f64], m: usize) -> Result<DMatrix<f64>> {
        self.eval_matrix(x, |i, j| &self.dg[i][j][m])
    }

    /// Exact second derivative `d_m d_l g` at `x`.
    pub(crate) fn metric_dd(&self, x: &[f64], m: usize, l: usize) -> Result<DMatrix<f64>> {
        self.eval_matrix(x, |i, j| &self.ddg[i][j][m][l])
    }

    fn eval_matrix<'b>(
        &'b self,
        x: &[f64],
        pick: impl Fn(usize, usize) -> &'b Expr,
    ) -> Result<DMatrix<f64>> {
        let at = Bindings::chart(x);
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = pick(i, j).eval(at)?;
            }
        }
        Ok(m)
    }

    /// Metric jet at `x` with symbolic derivatives up to `order` (1..=3).
    fn jet(&self, x: &[f64], order: usize) -> Result<MetricJet> {
        let g = self.metric_at(x)?;
        let ginv = Cholesky::new(g.clone())
            .ok_or_else(|| Error::SingularMetric { point: x.to_vec() })?
            .inverse();
        let n = self.n;
        let mut dg = Vec::with_capacity(n);
        for m in 0..n {
            dg.push(self.eval_matrix(x, |i, j| &self.dg[i][j][m])?);
        }
        let mut ddg = Vec::new();
        if order >= 2 {
            for m in 0..n {
                let mut row = Vec::with_capacity(n);
                for l in 0..n {
                    row.push(self.eval_matrix(x, |i, j| &self.ddg[i][j][m][l])?);
                }
                ddg.push(row);
            }
        }
        let mut dddg = Vec::new();
        if order >= 3 {
            for m in 0..n {
                let mut plane = Vec::with_capacity(n);
                for l in 0..n {
                    let mut row = Vec::with_capacity(n);
                    for p in 0..n {
                        row.push(self.eval_matrix(x, |i, j| &self.dddg[i][j][m][l][p])?);
                    }
                    plane.push(row);
                }
                dddg.push(plane);
            }
        }
        Ok(MetricJet {
            g,
            ginv,
            dg,
            ddg,
            dddg,
        })
    }

    fn check_in_domain(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain(format!(
                "{x:?} is outside the chart domain {:?}",
                self.domain
            )))
        }
    }

    /// Levi-Civita coefficients `Gamma^k_{ij}(x)` from exact derivatives.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        self.check_in_domain(x)?;
        let jet = self.jet(x, 1)?;
        Ok(curv::christoffel(&jet))
    }

    /// Full curvature package at `x`.
    pub fn curvature(&self, x: &[f64]) -> Result<CurvaturePack> {
        self.check_in_domain(x)?;
        let jet = self.jet(x, 2)?;
        Ok(curvature_from_jet(self.n, x, &jet))
    }

    /// Schouten endomorphism and its coordinate gradient:
    /// `(P_hat, [d_m P_hat])`. Requires `n >= 3`.
    pub fn schouten_hat_gradient(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.n;
        if n < 3 {
            return Err(Error::SchoutenUndefined { n });
        }
        self.check_in_domain(x)?;
        let jet = self.jet(x, 3)?;
        let gamma = curv::christoffel(&jet);
        let dginv = curv::dginv(&jet);
        let ddginv = curv::ddginv(&jet, &dginv);
        let dgamma = curv::dchristoffel(&jet, &dginv);
        let ddgamma = curv::ddchristoffel(&jet, &dginv, &ddginv);
        let ric = curv::ricci(&gamma, &dgamma);
        let dric = curv::dricci(&gamma, &dgamma, &ddgamma);
        let scalar = curv::trace_against(&jet.ginv, &ric);
        let nf = n as f64;

        let p = (&ric - &jet.g * (scalar / (2.0 * (nf - 1.0)))) / (nf - 2.0);
        let p_hat = &jet.ginv * &p;
        let mut dp_hat = Vec::with_capacity(n);
        for m in 0..n {
            let dscalar =
                curv::trace_against(&dginv[m], &ric) + curv::trace_against(&jet.ginv, &dric[m]);
            let dp = (&dric[m]
                - &jet.dg[m] * (scalar / (2.0 * (nf - 1.0)))
                - &jet.g * (dscalar / (2.0 * (nf - 1.0))))
                / (nf - 2.0);
            dp_hat.push(&dginv[m] * &p + &jet.ginv * &dp);
        }
        Ok((p_hat, dp_hat))
    }

    /// Connection-level curvature data without the full curvature operator:
    /// what parallel transport and the tractor formulas consume per point.
    pub(crate) fn connection_data(&self, x: &[f64]) -> Result<ConnectionData> {
        let n = self.n;
        if n < 3 {
            return Err(Error::SchoutenUndefined { n });
        }
        self.check_in_domain(x)?;
        let jet = self.jet(x, 2)?;
        let gamma = curv::christoffel(&jet);
        let dginv = curv::dginv(&jet);
        let dgamma = curv::dchristoffel(&jet, &dginv);
        let ric = curv::ricci(&gamma, &dgamma);
        let scalar = curv::trace_against(&jet.ginv, &ric);
        let nf = n as f64;
        let p = (&ric - &jet.g * (scalar / (2.0 * (nf - 1.0)))) / (nf - 2.0);
        let p_hat = &jet.ginv * &p;
        Ok(ConnectionData {
            g: jet.g,
            gamma,
            p,
            p_hat,
        })
    }

    /// Gradient, Hessian, Laplacian and squared gradient norm of a scalar
    /// field at `x`.
    pub fn field_calculus(&self, u: &ScalarField, x: &[f64]) -> Result<FieldCalculus> {
        self.check_in_domain(x)?;
        let jet = self.jet(x, 1)?;
        let gamma = curv::christoffel(&jet);
        field_calculus_from(self.n, u, x, &jet.ginv, &gamma)
    }

    /// Ricci tensor of the conformally rescaled metric `e^{2u} g` by the
    /// transformation law
    /// `Ric^g - (Lap u) g - (n-2)|grad u|^2 g + (n-2) du (x) du - (n-2) Hess u`.
    pub fn conformal_ricci(&self, u: &ScalarField, x: &[f64]) -> Result<DMatrix<f64>> {
        let pack = self.curvature(x)?;
        let fc = self.field_calculus(u, x)?;
        let nf = self.n as f64;
        let du = &fc.du;
        let outer = DMatrix::from_fn(self.n, self.n, |i, j| du[i] * du[j]);
        Ok(
            &pack.ric - &pack.g * fc.lap - &pack.g * ((nf - 2.0) * fc.grad_norm_sq)
                + (&outer - &fc.hess) * (nf - 2.0),
        )
    }

    /// Scalar curvature of `e^{2u} g`, obtained by tracing
    /// [`MetricChart::conformal_ricci`] against the rescaled metric.
    pub fn conformal_scalar(&self, u: &ScalarField, x: &[f64]) -> Result<f64> {
        let ric = self.conformal_ricci(u, x)?;
        let ginv = self.metric_inverse_at(x)?;
        let scale = (-2.0 * u.eval(x)?).exp();
        Ok(scale * curv::trace_against(&ginv, &ric))
    }
}

pub(crate) fn curvature_from_jet(n: usize, x: &[f64], jet: &MetricJet) -> CurvaturePack {
    let gamma = curv::christoffel(jet);
    let dginv = curv::dginv(jet);
    let dgamma = curv::dchristoffel(jet, &dginv);
    let riem = curv::riemann(&gamma, &dgamma);
    let ric = curv::ricci(&gamma, &dgamma);
    let scalar = curv::trace_against(&jet.ginv, &ric);
    let nf = n as f64;
    let (schouten, schouten_hat, gauss) = if n >= 3 {
        let p = (&ric - &jet.g * (scalar / (2.0 * (nf - 1.0)))) / (nf - 2.0);
        let p_hat = &jet.ginv * &p;
        (Some(p), Some(p_hat), None)
    } else {
        (None, None, Some(scalar / 2.0))
    };
    CurvaturePack {
        point: x.to_vec(),
        g: jet.g.clone(),
        ginv: jet.ginv.clone(),
        gamma,
        riem,
        ric,
        scalar,
        schouten,
        schouten_hat,
        gauss,
    }
}

/// What the tractor connection needs per point: metric, Levi-Civita
/// coefficients, Schouten tensor and its endomorphism.
#[derive(Debug, Clone)]
pub(crate) struct ConnectionData {
    pub g: DMatrix<f64>,
    pub gamma: Christoffel,
    pub p: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
}

/// Pointwise curvature data of a chart.
#[derive(Debug, Clone)]
pub struct CurvaturePack {
    pub point: Vec<f64>,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub gamma: Christoffel,
    pub riem: Riemann,
    /// Ricci tensor, convention `Ric(V, W) = trace(Z -> R(Z, V) W)`.
    pub ric: DMatrix<f64>,
    pub scalar: f64,
    schouten: Option<DMatrix<f64>>,
    schouten_hat: Option<DMatrix<f64>>,
    gauss: Option<f64>,
}

impl CurvaturePack {
    pub(crate) fn assemble(
        point: Vec<f64>,
        g: DMatrix<f64>,
        ginv: DMatrix<f64>,
        gamma: Christoffel,
        riem: Riemann,
        ric: DMatrix<f64>,
        scalar: f64,
        schouten: Option<DMatrix<f64>>,
        schouten_hat: Option<DMatrix<f64>>,
        gauss: Option<f64>,
    ) -> Self {
        CurvaturePack {
            point,
            g,
            ginv,
            gamma,
            riem,
            ric,
            scalar,
            schouten,
            schouten_hat,
            gauss,
        }
    }

    /// Schouten tensor `P = (Ric - S/(2(n-1)) g) / (n-2)`; undefined for n = 2.
    pub fn schouten(&self) -> Result<&DMatrix<f64>> {
        self.schouten
            .as_ref()
            .ok_or(Error::SchoutenUndefined { n: 2 })
    }

    /// Schouten endomorphism `P_hat = g^-1 P`; undefined for n = 2.
    pub fn schouten_hat(&self) -> Result<&DMatrix<f64>> {
        self.schouten_hat
            .as_ref()
            .ok_or(Error::SchoutenUndefined { n: 2 })
    }

    /// Gauss curvature `K = S/2`, defined only for n = 2.
    pub fn gauss(&self) -> Option<f64> {
        self.gauss
    }
}

/// A smooth scalar field on the chart, with its first and second symbolic
/// derivatives cached.
#[derive(Debug, Clone)]
pub struct ScalarField {
    u: Expr,
    du: Vec<Expr>,
    ddu: Vec<Vec<Expr>>,
}

impl ScalarField {
    pub fn new(u: Expr, n: usize) -> Result<Self> {
        for v in u.variables() {
            match v {
                Var::X(i) if i >= 1 && i <= n => {}
                other => {
                    return Err(Error::InvalidChart(format!(
                        "scalar field `{u}` uses variable `{other}` outside x1..x{n}"
                    )))
                }
            }
        }
        let du: Vec<Expr> = (1..=n).map(|m| u.differentiate(Var::X(m))).collect();
        let ddu = du
            .iter()
            .map(|e| (1..=n).map(|l| e.differentiate(Var::X(l))).collect())
            .collect();
        Ok(ScalarField { u, du, ddu })
    }

    pub fn parse(text: &str, n: usize) -> Result<Self> {
        ScalarField::new(Expr::parse(text)?, n)
    }

    pub fn zero(n: usize) -> Self {
        ScalarField::new(expr::num(0.0), n).expect("constant field")
    }

    pub fn expr(&self) -> &Expr {
        &self.u
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.u.eval(Bindings::chart(x))?)
    }

    /// Partial derivatives `(d_1 u, ..., d_n u)` at `x`.
    pub fn partials(&self, x: &[f64]) -> Result<DVector<f64>> {
        let at = Bindings::chart(x);
        let mut out = DVector::zeros(self.du.len());
        for (m, e) in self.du.iter().enumerate() {
            out[m] = e.eval(at)?;
        }
        Ok(out)
    }

    fn second_partials(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let at = Bindings::chart(x);
        let n = self.du.len();
        let mut out = DMatrix::zeros(n, n);
        for m in 0..n {
            for l in 0..n {
                out[(m, l)] = self.ddu[m][l].eval(at)?;
            }
        }
        Ok(out)
    }
}

/// Result of [`MetricChart::field_calculus`].
#[derive(Debug, Clone)]
pub struct FieldCalculus {
    /// Coordinate partials `d_i u` (lower index).
    pub du: DVector<f64>,
    /// Gradient `g^{ij} d_j u` (upper index).
    pub grad: DVector<f64>,
    /// Covariant Hessian as a (0,2)-tensor: `Hess_{ij} = d_i d_j u - Gamma^k_{ij} d_k u`.
    pub hess: DMatrix<f64>,
    /// Hessian as an endomorphism: `g^{ik} Hess_{kj}`.
    pub hess_op: DMatrix<f64>,
    /// Laplace operator value `trace_g Hess`.
    pub lap: f64,
    /// `|grad u|^2 = g^{ij} d_i u d_j u`.
    pub grad_norm_sq: f64,
}

pub(crate) fn field_calculus_from(
    n: usize,
    u: &ScalarField,
    x: &[f64],
    ginv: &DMatrix<f64>,
    gamma: &Christoffel,
) -> Result<FieldCalculus> {
    let du = u.partials(x)?;
    let ddu = u.second_partials(x)?;
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ddu[(i, j)];
            for k in 0..n {
                acc -= gamma.get(k, i, j) * du[k];
            }
            hess[(i, j)] = acc;
        }
    }
    let grad = ginv * &du;
    let hess_op = ginv * &hess;
    let lap = curv::trace_against(ginv, &hess);
    let grad_norm_sq = (ginv * &du).dot(&du);
    Ok(FieldCalculus {
        du,
        grad,
        hess,
        hess_op,
        lap,
        grad_norm_sq,
    })
}
