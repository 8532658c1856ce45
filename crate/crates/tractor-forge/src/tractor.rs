//! The rank `n+2` tractor bundle in its extrinsic realization at `u = 0`:
//! bundle metric, covariant derivative (component formula plus an extrinsic
//! oracle through the ambient connection), parallel transport along curves,
//! loop holonomy, parallel-section residual systems, and Einstein scale
//! tractors.
//!
//! Sections are written in the frame `{T Psi . d_i, xi, ell}` as
//! `W = T Psi . w_top + w1 xi + w2 ell`. With a normalization family the
//! covariant derivative has the component form
//!
//! ```text
//!   top: nabla_V w_top + w1 V - w2 P_hat V
//!   xi : V(w1) - P(V, w_top)
//!   ell: V(w2) + g(V, w_top)
//! ```
//!
//! and a section is parallel exactly when all three vanish for every `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambient::{AdmissibleFamily, AmbientMetric, AmbientPoint};
use crate::chart::{MetricChart, ScalarField};
use crate::curv;
use crate::error::Error;
use crate::expr::{self, Bindings, Expr, Var};
use crate::grid;
use crate::immersion::Immersion;
use crate::Result;

/// Residual threshold under which a family counts as normalized.
const NORMALIZATION_TOL: f64 = 1e-8;

/// Fixed-step integrator density: steps per unit parameter length.
const STEPS_PER_UNIT: f64 = 2000.0;

/// Agreement required between an integration and its half-step refinement.
const REFINE_TOL: f64 = 1e-7;

const MAX_REFINEMENTS: usize = 3;

/// A tractor at a point: chart components plus lightlike-frame coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TractorVector {
    pub w_top: DVector<f64>,
    pub w1: f64,
    pub w2: f64,
}

impl TractorVector {
    pub fn new(w_top: DVector<f64>, w1: f64, w2: f64) -> Self {
        TractorVector { w_top, w1, w2 }
    }

    pub fn zeros(n: usize) -> Self {
        TractorVector {
            w_top: DVector::zeros(n),
            w1: 0.0,
            w2: 0.0,
        }
    }

    /// Frame basis vector `k`: chart directions first, then `xi`, then `ell`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        if k < n {
            v.w_top[k] = 1.0;
        } else if k == n {
            v.w1 = 1.0;
        } else {
            v.w2 = 1.0;
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.w_top.len() + 2
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        let n = self.w_top.len();
        let mut out = DVector::zeros(n + 2);
        for i in 0..n {
            out[i] = self.w_top[i];
        }
        out[n] = self.w1;
        out[n + 1] = self.w2;
        out
    }

    pub fn from_dvector(v: &DVector<f64>) -> Self {
        let n = v.len() - 2;
        TractorVector {
            w_top: DVector::from_fn(n, |i, _| v[i]),
            w1: v[n],
            w2: v[n + 1],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.to_dvector().amax()
    }
}

/// A smooth tractor section: component expressions over the chart variables,
/// with first derivatives cached.
#[derive(Debug, Clone)]
pub struct TractorSection {
    w_top: Vec<Expr>,
    w1: Expr,
    w2: Expr,
    dw_top: Vec<Vec<Expr>>,
    dw1: Vec<Expr>,
    dw2: Vec<Expr>,
}

/// Serialized form: `{"w_top":["expr",...], "w1":"expr", "w2":"expr"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionSpec {
    pub w_top: Vec<Expr>,
    pub w1: Expr,
    pub w2: Expr,
}

impl TractorSection {
    pub fn new(w_top: Vec<Expr>, w1: Expr, w2: Expr, n: usize) -> Result<Self> {
        if w_top.len() != n {
            return Err(Error::InvalidSection(format!(
                "w_top has {} components for an n = {n} chart",
                w_top.len()
            )));
        }
        for e in w_top.iter().chain([&w1, &w2]) {
            for v in e.variables() {
                match v {
                    Var::X(i) if i >= 1 && i <= n => {}
                    other => {
                        return Err(Error::InvalidSection(format!(
                            "component `{e}` uses variable `{other}` outside x1..x{n}"
                        )))
                    }
                }
            }
        }
        let dw_top = w_top
            .iter()
            .map(|e| (1..=n).map(|m| e.differentiate(Var::X(m))).collect())
            .collect();
        let dw1 = (1..=n).map(|m| w1.differentiate(Var::X(m))).collect();
        let dw2 = (1..=n).map(|m| w2.differentiate(Var::X(m))).collect();
        Ok(TractorSection {
            w_top,
            w1,
            w2,
            dw_top,
            dw1,
            dw2,
        })
    }

    pub fn from_spec(spec: SectionSpec, n: usize) -> Result<Self> {
        TractorSection::new(spec.w_top, spec.w1, spec.w2, n)
    }

    pub fn to_spec(&self) -> SectionSpec {
        SectionSpec {
            w_top: self.w_top.clone(),
            w1: self.w1.clone(),
            w2: self.w2.clone(),
        }
    }

    /// Section with constant components.
    pub fn constant(w_top: &[f64], w1: f64, w2: f64) -> Self {
        let n = w_top.len();
        TractorSection::new(
            w_top.iter().map(|&c| expr::num(c)).collect(),
            expr::num(w1),
            expr::num(w2),
            n,
        )
        .expect("constant section")
    }

    /// The flat-space parallel family
    /// `(w_top, w1, w2) = (-b - a x, a, c + b . x + a |x|^2 / 2)`.
    pub fn flat_parallel(n: usize, a: f64, b: &[f64], c: f64) -> Self {
        let w_top: Vec<Expr> = (0..n)
            .map(|i| expr::sub(expr::num(-b[i]), expr::mul(expr::num(a), expr::var(i + 1))))
            .collect();
        let dot = (0..n)
            .map(|i| expr::mul(expr::num(b[i]), expr::var(i + 1)))
            .reduce(expr::add)
            .unwrap_or_else(|| expr::num(0.0));
        let norm_half = (0..n)
            .map(|i| expr::pow(expr::var(i + 1), expr::num(2.0)))
            .reduce(expr::add)
            .map(|s| expr::mul(expr::num(a / 2.0), s))
            .unwrap_or_else(|| expr::num(0.0));
        let w2 = expr::add(expr::add(expr::num(c), dot), norm_half);
        TractorSection::new(w_top, expr::num(a), w2, n).expect("flat parallel section")
    }

    pub fn value_at(&self, x: &[f64]) -> Result<TractorVector> {
        let at = Bindings::chart(x);
        let n = self.w_top.len();
        let mut w_top = DVector::zeros(n);
        for i in 0..n {
            w_top[i] = self.w_top[i].eval(at)?;
        }
        Ok(TractorVector {
            w_top,
            w1: self.w1.eval(at)?,
            w2: self.w2.eval(at)?,
        })
    }

    fn derivatives_at(&self, x: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        let at = Bindings::chart(x);
        let n = self.w_top.len();
        // dtop[(k, m)] = d_m w_top^k.
        let mut dtop = DMatrix::zeros(n, n);
        for k in 0..n {
            for m in 0..n {
                dtop[(k, m)] = self.dw_top[k][m].eval(at)?;
            }
        }
        let mut d1 = DVector::zeros(n);
        let mut d2 = DVector::zeros(n);
        for m in 0..n {
            d1[m] = self.dw1[m].eval(at)?;
            d2[m] = self.dw2[m].eval(at)?;
        }
        Ok((dtop, d1, d2))
    }
}

/// A smooth curve in the chart, `s -> (c_1(s), ..., c_n(s))`.
#[derive(Debug, Clone)]
pub struct CurvePath {
    coords: Vec<Expr>,
    velocity: Vec<Expr>,
    pub s0: f64,
    pub s1: f64,
    pub is_loop: bool,
}

/// Serialized form: `{"coords":["expr in s",...], "s":[s0,s1], "loop":bool}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSpec {
    pub coords: Vec<Expr>,
    pub s: [f64; 2],
    #[serde(rename = "loop", default)]
    pub is_loop: bool,
}

impl CurvePath {
    pub fn new(coords: Vec<Expr>, s0: f64, s1: f64, is_loop: bool) -> Result<Self> {
        if !(s0 < s1) {
            return Err(Error::InvalidPath(format!(
                "parameter interval [{s0}, {s1}] is empty"
            )));
        }
        for e in &coords {
            for v in e.variables() {
                if v != Var::S {
                    return Err(Error::InvalidPath(format!(
                        "coordinate `{e}` uses variable `{v}`; only s is allowed"
                    )));
                }
            }
        }
        let velocity = coords.iter().map(|e| e.differentiate(Var::S)).collect();
        let path = CurvePath {
            coords,
            velocity,
            s0,
            s1,
            is_loop,
        };
        if is_loop {
            let start = path.point_at(s0)?;
            let end = path.point_at(s1)?;
            let gap = start
                .iter()
                .zip(&end)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if gap > 1e-12 {
                return Err(Error::InvalidPath(format!(
                    "loop endpoints differ by {gap:.3e}"
                )));
            }
        }
        Ok(path)
    }

    pub fn from_spec(spec: PathSpec) -> Result<Self> {
        CurvePath::new(spec.coords, spec.s[0], spec.s[1], spec.is_loop)
    }

    pub fn to_spec(&self) -> PathSpec {
        PathSpec {
            coords: self.coords.clone(),
            s: [self.s0, self.s1],
            is_loop: self.is_loop,
        }
    }

    /// Straight segment between two points, parameterized on `[0, 1]`.
    pub fn segment(from: &[f64], to: &[f64]) -> Result<Self> {
        let coords = from
            .iter()
            .zip(to)
            .map(|(&a, &b)| expr::add(expr::num(a), expr::mul(expr::num(b - a), Expr::Var(Var::S))))
            .collect();
        CurvePath::new(coords, 0.0, 1.0, false)
    }

    pub fn point_at(&self, s: f64) -> Result<Vec<f64>> {
        let at = Bindings::curve(s);
        self.coords
            .iter()
            .map(|e| Ok(e.eval(at)?))
            .collect::<Result<Vec<f64>>>()
    }

    pub fn velocity_at(&self, s: f64) -> Result<DVector<f64>> {
        let at = Bindings::curve(s);
        let mut out = DVector::zeros(self.velocity.len());
        for (i, e) in self.velocity.iter().enumerate() {
            out[i] = e.eval(at)?;
        }
        Ok(out)
    }
}

/// The tractor bundle over a chart with a normalization family. Construction
/// verifies the normalization residual so the component formulas below are
/// actually valid.
pub struct Tractor<'a> {
    chart: &'a MetricChart,
    family: &'a AdmissibleFamily,
    immersion: Immersion<'a>,
}

impl<'a> Tractor<'a> {
    pub fn new(chart: &'a MetricChart, family: &'a AdmissibleFamily) -> Result<Self> {
        let report = crate::ambient::normalization_check(chart, family, 0)?;
        if report.residual > NORMALIZATION_TOL {
            return Err(Error::RequiresNormalizedFamily {
                residual: report.residual,
            });
        }
        Ok(Tractor {
            chart,
            family,
            immersion: Immersion::new(chart, family, ScalarField::zero(chart.dim())),
        })
    }

    pub fn chart(&self) -> &MetricChart {
        self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim() + 2
    }

    /// Bundle metric `h(W, Z) = g(w_top, z_top) - w1 z2 - w2 z1`.
    pub fn metric(&self, x: &[f64], w: &TractorVector, z: &TractorVector) -> Result<f64> {
        tractor_metric(self.chart, x, w, z)
    }

    /// Gram matrix of the bundle metric in the frame `{T Psi d_i, xi, ell}`.
    pub fn metric_gram(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.chart.dim();
        let g = self.chart.metric_at(x)?;
        let mut out = DMatrix::zeros(n + 2, n + 2);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = g[(i, j)];
            }
        }
        out[(n, n + 1)] = -1.0;
        out[(n + 1, n)] = -1.0;
        Ok(out)
    }

    /// Covariant derivative by the component formula.
    pub fn cov_deriv_intrinsic(
        &self,
        sec: &TractorSection,
        v: &DVector<f64>,
        x: &[f64],
    ) -> Result<TractorVector> {
        let n = self.chart.dim();
        let pack = self.chart.curvature(x)?;
        let p_hat = pack.schouten_hat()?;
        let p = pack.schouten()?;
        let w = sec.value_at(x)?;
        let (dtop, d1, d2) = sec.derivatives_at(x)?;

        // nabla_V w_top, then the frame coupling terms.
        let mut top = &dtop * v;
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += pack.gamma.get(k, i, j) * v[i] * w.w_top[j];
                }
            }
            top[k] += acc;
        }
        let top = top + v * w.w1 - p_hat * v * w.w2;
        let xi = d1.dot(v) - (p * &w.w_top).dot(v);
        let ell = d2.dot(v) + (&pack.g * &w.w_top).dot(v);
        Ok(TractorVector {
            w_top: top,
            w1: xi,
            w2: ell,
        })
    }

    /// Extrinsic oracle: embeds the section into ambient components along the
    /// straight chart curve through `x` in direction `v`, differentiates with
    /// the numeric ambient connection, and re-decomposes in the frame.
    pub fn cov_deriv_extrinsic(
        &self,
        sec: &TractorSection,
        v: &DVector<f64>,
        x: &[f64],
    ) -> Result<TractorVector> {
        let n = self.chart.dim();
        let ambient = AmbientMetric::new(self.chart, self.family);
        let p = AmbientPoint::on_slice(1.0, x.to_vec());
        let chris = ambient.christoffels(&p)?;

        // At u = 0 the frame has constant ambient components, so the embedded
        // section is (w1, -w2, w_top).
        let embed = |y: &[f64]| -> Result<DVector<f64>> {
            let w = sec.value_at(y)?;
            let mut out = DVector::zeros(n + 2);
            out[0] = w.w1;
            out[1] = -w.w2;
            for i in 0..n {
                out[2 + i] = w.w_top[i];
            }
            Ok(out)
        };

        let h = 1e-5;
        let step = |sign: f64| -> Vec<f64> {
            x.iter()
                .zip(v.iter())
                .map(|(&xi, &vi)| xi + sign * h * vi)
                .collect()
        };
        let mut deriv = (embed(&step(1.0))? - embed(&step(-1.0))?) / (2.0 * h);

        let w_amb = embed(x)?;
        let mut cdot = DVector::zeros(n + 2);
        for i in 0..n {
            cdot[2 + i] = v[i];
        }
        for c in 0..(n + 2) {
            let mut acc = 0.0;
            for a in 0..(n + 2) {
                for b in 0..(n + 2) {
                    acc += chris.get(c, a, b) * cdot[a] * w_amb[b];
                }
            }
            deriv[c] += acc;
        }

        let parts = self.immersion.decompose(x, &deriv)?;
        Ok(TractorVector {
            w_top: parts.tangent,
            w1: parts.xi,
            w2: parts.ell,
        })
    }

    /// Coefficient matrix of the linear transport system at parameter `s`:
    /// the state `(w_top, w1, w2)` evolves by `y' = A(s) y`.
    fn stage_matrix(&self, s: f64, path: &CurvePath) -> Result<DMatrix<f64>> {
        let n = self.chart.dim();
        let x = path.point_at(s)?;
        let cdot = path.velocity_at(s)?;
        let data = self.chart.connection_data(&x)?;

        let mut a = DMatrix::zeros(n + 2, n + 2);
        // w_top' = -Gamma(c') w_top - w1 c' + w2 P_hat c'.
        for k in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc -= data.gamma.get(k, i, j) * cdot[i];
                }
                a[(k, j)] = acc;
            }
            a[(k, n)] = -cdot[k];
        }
        let deflect = &data.p_hat * &cdot;
        for k in 0..n {
            a[(k, n + 1)] = deflect[k];
        }
        // w1' = P(c', w_top); w2' = -g(c', w_top).
        let p_c = &data.p * &cdot;
        let g_c = &data.g * &cdot;
        for j in 0..n {
            a[(n, j)] = p_c[j];
            a[(n + 1, j)] = -g_c[j];
        }
        Ok(a)
    }

    /// Classical RK4 on the column-stacked state. The system is linear, so
    /// one stage-coefficient evaluation serves every column.
    fn integrate(
        &self,
        path: &CurvePath,
        start: &DMatrix<f64>,
        steps: usize,
        keep_samples: bool,
    ) -> Result<(DMatrix<f64>, Vec<(f64, DMatrix<f64>)>)> {
        let mut y = start.clone();
        let h = (path.s1 - path.s0) / steps as f64;
        let sample_every = (steps / 32).max(1);
        let mut samples = Vec::new();
        if keep_samples {
            samples.push((path.s0, y.clone()));
        }
        // The last stage matrix of one step is the first of the next.
        let mut a1 = self.stage_matrix(path.s0, path)?;
        for k in 0..steps {
            let s = path.s0 + k as f64 * h;
            let a2 = self.stage_matrix(s + 0.5 * h, path)?;
            let a4 = self.stage_matrix(s + h, path)?;
            let k1 = &a1 * &y;
            let k2 = &a2 * (&y + &k1 * (0.5 * h));
            let k3 = &a2 * (&y + &k2 * (0.5 * h));
            let k4 = &a4 * (&y + &k3 * h);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            a1 = a4;
            if keep_samples && ((k + 1) % sample_every == 0 || k + 1 == steps) {
                samples.push((s + h, y.clone()));
            }
        }
        Ok((y, samples))
    }

    /// Integrate with the pinned step density, then re-run at half step and
    /// require endpoint agreement within 1e-7, refining further if needed.
    fn integrate_refined(
        &self,
        path: &CurvePath,
        start: &DMatrix<f64>,
        keep_samples: bool,
    ) -> Result<(DMatrix<f64>, Vec<(f64, DMatrix<f64>)>, usize)> {
        self.validate_path(path)?;
        let base = ((path.s1 - path.s0).abs() * STEPS_PER_UNIT).ceil() as usize;
        let mut steps = base.max(16);
        let (mut coarse, _) = self.integrate(path, start, steps, false)?;
        for _ in 0..MAX_REFINEMENTS {
            let (fine, samples) = self.integrate(path, start, steps * 2, keep_samples)?;
            let disagreement = curv::max_abs(&(&fine - &coarse));
            if disagreement <= REFINE_TOL {
                return Ok((fine, samples, steps * 2));
            }
            steps *= 2;
            coarse = fine;
        }
        let (fine, _) = self.integrate(path, start, steps * 2, false)?;
        let disagreement = curv::max_abs(&(&fine - &coarse));
        Err(Error::StepSizeUnderflow { disagreement })
    }

    /// Parallel transport of `start` along the path by classical fixed-step
    /// RK4, 2000 steps per unit parameter length. The integration is re-run
    /// at half step until the endpoint agrees within 1e-7; failure to
    /// converge is a `StepSizeUnderflow`.
    pub fn parallel_transport(&self, path: &CurvePath, start: &TractorVector) -> Result<Transport> {
        let state = DMatrix::from_column_slice(start.dim(), 1, start.to_dvector().as_slice());
        let (end, samples, steps) = self.integrate_refined(path, &state, true)?;
        Ok(Transport {
            end: TractorVector::from_dvector(&end.column(0).into_owned()),
            samples: samples
                .into_iter()
                .map(|(s, m)| (s, TractorVector::from_dvector(&m.column(0).into_owned())))
                .collect(),
            steps,
        })
    }

    /// Single integration with an explicit step count, no refinement. This is
    /// the hook for step-halving convergence studies; regular callers want
    /// [`Tractor::parallel_transport`].
    pub fn transport_fixed_steps(
        &self,
        path: &CurvePath,
        start: &TractorVector,
        steps: usize,
    ) -> Result<TractorVector> {
        self.validate_path(path)?;
        let state = DMatrix::from_column_slice(start.dim(), 1, start.to_dvector().as_slice());
        let (end, _) = self.integrate(path, &state, steps, false)?;
        Ok(TractorVector::from_dvector(&end.column(0).into_owned()))
    }

    fn validate_path(&self, path: &CurvePath) -> Result<()> {
        for k in 0..=64 {
            let s = path.s0 + (path.s1 - path.s0) * k as f64 / 64.0;
            let x = path.point_at(s)?;
            if !self.chart.contains(&x) {
                return Err(Error::InvalidPath(format!(
                    "curve leaves the chart domain at s = {s} ({x:?})"
                )));
            }
        }
        Ok(())
    }

    /// Transport along the path reversed end-to-start.
    pub fn parallel_transport_back(
        &self,
        path: &CurvePath,
        start: &TractorVector,
    ) -> Result<Transport> {
        // Reparameterize sigma = s0 + s1 - s, which reverses the traversal.
        let reversed: Vec<Expr> = path
            .coords
            .iter()
            .map(|e| {
                substitute_s(
                    e,
                    &expr::sub(expr::num(path.s0 + path.s1), Expr::Var(Var::S)),
                )
            })
            .collect();
        let back = CurvePath::new(reversed, path.s0, path.s1, false)?;
        self.parallel_transport(&back, start)
    }

    /// Matrix of the transport map along a path in the frame
    /// `{T Psi d_i, xi, ell}`: column `k` is the transport of basis vector
    /// `k`. All columns ride one integration since the system is linear.
    pub fn transport_matrix(&self, path: &CurvePath) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let (end, _, _) = self.integrate_refined(path, &DMatrix::identity(m, m), false)?;
        Ok(end)
    }

    /// Holonomy of a loop given as one or more consecutive path segments.
    pub fn holonomy(&self, segments: &[CurvePath]) -> Result<Holonomy> {
        if segments.is_empty() {
            return Err(Error::InvalidPath(
                "holonomy needs at least one segment".into(),
            ));
        }
        for pair in segments.windows(2) {
            let end = pair[0].point_at(pair[0].s1)?;
            let next = pair[1].point_at(pair[1].s0)?;
            let gap = end
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if gap > 1e-9 {
                return Err(Error::InvalidPath(format!(
                    "consecutive segments are disconnected (gap {gap:.3e})"
                )));
            }
        }
        let start = segments[0].point_at(segments[0].s0)?;
        let last = segments.last().unwrap();
        let end = last.point_at(last.s1)?;
        let gap = start
            .iter()
            .zip(&end)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if gap > 1e-12 {
            return Err(Error::InvalidPath(format!(
                "loop does not close (gap {gap:.3e})"
            )));
        }
        if segments.len() == 1 && !segments[0].is_loop {
            return Err(Error::InvalidPath(
                "single-segment holonomy requires the loop flag".into(),
            ));
        }

        let mut matrix = DMatrix::identity(self.dim(), self.dim());
        for seg in segments {
            matrix = self.transport_matrix(seg)? * matrix;
        }
        Ok(Holonomy {
            matrix,
            base_point: start,
        })
    }

    /// Residuals of the parallel-section system at the sample points, through
    /// both equivalent formulations: the metric-splitting component system and
    /// the Gauss/Weingarten splitting.
    pub fn parallel_residual(
        &self,
        sec: &TractorSection,
        points: &[Vec<f64>],
    ) -> Result<ParallelResidualReport> {
        let n = self.chart.dim();
        let mut report = ParallelResidualReport::default();
        for x in points {
            let w = sec.value_at(x)?;
            let (dtop, d1, d2) = sec.derivatives_at(x)?;
            let pack = self.chart.curvature(x)?;
            let (a_xi, a_ell) = self.immersion.weingarten(x)?;
            for dir in 0..n {
                let mut v = DVector::zeros(n);
                v[dir] = 1.0;

                // Metric-splitting form: the three component residuals.
                let deriv = self.cov_deriv_intrinsic(sec, &v, x)?;
                let split_max = deriv.max_abs();

                // Gauss/Weingarten splitting: tangential part through the
                // shape operators, normal part through the second fundamental
                // form plus the normal-connection derivative.
                let mut nab_top = &dtop * &v;
                for k in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            acc += pack.gamma.get(k, i, j) * v[i] * w.w_top[j];
                        }
                    }
                    nab_top[k] += acc;
                }
                let a_wperp = &a_xi * &v * w.w1 + &a_ell * &v * w.w2;
                let top_b = nab_top - a_wperp;
                let ii = self.immersion.second_fundamental_form(x, &v, &w.w_top)?;
                let xi_b = ii.xi + d1.dot(&v);
                let ell_b = ii.ell + d2.dot(&v);
                let shape_max = top_b.amax().max(xi_b.abs()).max(ell_b.abs());

                let diff = (&top_b - &deriv.w_top)
                    .amax()
                    .max((xi_b - deriv.w1).abs())
                    .max((ell_b - deriv.w2).abs());

                if split_max > report.split_residual {
                    report.split_residual = split_max;
                    report.worst_point = x.clone();
                }
                report.shape_residual = report.shape_residual.max(shape_max);
                report.form_disagreement = report.form_disagreement.max(diff);
                report.tangential_residual = report.tangential_residual.max(deriv.w_top.amax());
                report.xi_residual = report.xi_residual.max(deriv.w1.abs());
                report.ell_residual = report.ell_residual.max(deriv.w2.abs());
            }
        }
        Ok(report)
    }

    pub fn immersion(&self) -> &Immersion<'a> {
        &self.immersion
    }
}

fn substitute_s(e: &Expr, replacement: &Expr) -> Expr {
    match e {
        Expr::Num(_) => e.clone(),
        Expr::Var(Var::S) => replacement.clone(),
        Expr::Var(_) => e.clone(),
        Expr::Neg(a) => expr::neg(substitute_s(a, replacement)),
        Expr::Bin(op, a, b) => {
            let (a, b) = (substitute_s(a, replacement), substitute_s(b, replacement));
            match op {
                expr::BinOp::Add => expr::add(a, b),
                expr::BinOp::Sub => expr::sub(a, b),
                expr::BinOp::Mul => expr::mul(a, b),
                expr::BinOp::Div => expr::div(a, b),
                expr::BinOp::Pow => expr::pow(a, b),
            }
        }
        Expr::Fun(f, a) => expr::fun(*f, substitute_s(a, replacement)),
    }
}

/// Result of a parallel transport.
#[derive(Debug, Clone)]
pub struct Transport {
    pub end: TractorVector,
    /// Sampled trajectory `(s, W(s))`, including both endpoints.
    pub samples: Vec<(f64, TractorVector)>,
    /// Step count of the accepted (finer) integration.
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct Holonomy {
    pub matrix: DMatrix<f64>,
    pub base_point: Vec<f64>,
}

/// Maxima of the parallel-section residuals over a scan.
#[derive(Debug, Clone, Default)]
pub struct ParallelResidualReport {
    /// Largest component residual of the metric-splitting system.
    pub split_residual: f64,
    /// Largest component residual of the Gauss/Weingarten system.
    pub shape_residual: f64,
    /// Largest disagreement between the two formulations.
    pub form_disagreement: f64,
    pub tangential_residual: f64,
    pub xi_residual: f64,
    pub ell_residual: f64,
    pub worst_point: Vec<f64>,
}

impl ParallelResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.split_residual.max(self.shape_residual)
    }
}

/// Bundle metric in the g-decomposition frame, independent of any family:
/// `h(W, Z) = g(w_top, z_top) - w1 z2 - w2 z1`.
pub fn tractor_metric(
    chart: &MetricChart,
    x: &[f64],
    w: &TractorVector,
    z: &TractorVector,
) -> Result<f64> {
    let g = chart.metric_at(x)?;
    Ok((&g * &z.w_top).dot(&w.w_top) - w.w1 * z.w2 - w.w2 * z.w1)
}

/// An Einstein scale tractor fitted from the chart curvature.
#[derive(Debug, Clone)]
pub struct EinsteinScale {
    pub section: TractorSection,
    /// Fitted constant in `Ric = (n-1) k g`.
    pub k: f64,
    /// `max |Ric - (n-1) k g|` over the scan grid.
    pub residual: f64,
}

/// Fit `Ric = (n-1) k g` over the scan grid and return the scale tractor
/// `(0, k/2, 1)`; fails with `NotEinstein` when the residual exceeds `tol`.
pub fn einstein_scale_tractor(chart: &MetricChart, seed: u64, tol: f64) -> Result<EinsteinScale> {
    einstein_scale_tractor_dense(chart, 5, seed, tol)
}

/// [`einstein_scale_tractor`] with a configurable grid density.
pub fn einstein_scale_tractor_dense(
    chart: &MetricChart,
    per_axis: usize,
    seed: u64,
    tol: f64,
) -> Result<EinsteinScale> {
    let n = chart.dim();
    let nf = n as f64;
    let points = grid::scan_points_dense(chart.domain(), per_axis, seed);
    let mut k_sum = 0.0;
    for x in &points {
        let pack = chart.curvature(x)?;
        k_sum += pack.scalar / (nf * (nf - 1.0));
    }
    let k = k_sum / points.len() as f64;
    let mut residual = 0.0f64;
    for x in &points {
        let pack = chart.curvature(x)?;
        residual = residual.max(curv::max_abs(&(&pack.ric - &pack.g * ((nf - 1.0) * k))));
    }
    if residual > tol {
        return Err(Error::NotEinstein {
            residual,
            tolerance: tol,
        });
    }
    let section = TractorSection::constant(&vec![0.0; n], k / 2.0, 1.0);
    Ok(EinsteinScale {
        section,
        k,
        residual,
    })
}
