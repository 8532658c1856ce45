//! The ambient Lorentzian manifold built from a chart and an admissible
//! one-parameter family of endomorphisms.
//!
//! On `B x M` with `B = R_{>0} x (-delta, delta)` and coordinates
//! `(t, r, x^1..x^n)`, the metric has the block Gram matrix
//!
//! ```text
//!   [ 2r  t  0          ]
//!   [ t   0  0          ]
//!   [ 0   0  t^2 M(r,x) ]      with  M_ij = g(gamma(r) d_i, d_j),
//! ```
//!
//! so `g~_tt = 2r`, `g~_tr = t`, `g~_rr = 0`, and the spatial block is the
//! `gamma`-deformation of `g` scaled by `t^2`. The closed-form connection and
//! the Ricci restriction to `r = 0` are implemented next to a fully numeric
//! coordinate computation of the Christoffel symbols that serves as oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::MetricChart;
use crate::curv::{self, MetricJet, Tensor3};
use crate::error::Error;
use crate::expr::{Bindings, Expr, Var};
use crate::grid;
use crate::Result;

/// Upper bound for the estimated validity radius `delta`.
pub const DELTA_CAP: f64 = 10.0;

/// Bisection resolution for the `delta` estimate.
const DELTA_RESOLUTION: f64 = 1e-3;

/// Point of the ambient manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint {
    pub t: f64,
    pub r: f64,
    pub x: Vec<f64>,
}

impl AmbientPoint {
    pub fn new(t: f64, r: f64, x: Vec<f64>) -> Self {
        AmbientPoint { t, r, x }
    }

    /// The point `(t, 0, x)` on the distinguished slice.
    pub fn on_slice(t: f64, x: Vec<f64>) -> Self {
        AmbientPoint { t, r: 0.0, x }
    }
}

/// An ambient tangent vector with constant coefficients on `d_t`, `d_r` and a
/// coordinate lift of a chart vector.
#[derive(Debug, Clone)]
pub struct AmbientVec {
    pub dt: f64,
    pub dr: f64,
    pub x: DVector<f64>,
}

impl AmbientVec {
    pub fn d_t(n: usize) -> Self {
        AmbientVec {
            dt: 1.0,
            dr: 0.0,
            x: DVector::zeros(n),
        }
    }

    pub fn d_r(n: usize) -> Self {
        AmbientVec {
            dt: 0.0,
            dr: 1.0,
            x: DVector::zeros(n),
        }
    }

    /// Coordinate lift of a chart vector.
    pub fn lift(v: DVector<f64>) -> Self {
        AmbientVec {
            dt: 0.0,
            dr: 0.0,
            x: v,
        }
    }

    pub fn to_coords(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut out = DVector::zeros(n + 2);
        out[0] = self.dt;
        out[1] = self.dr;
        for i in 0..n {
            out[2 + i] = self.x[i];
        }
        out
    }
}

/// Serialized family selector: a catalog tag or an inline matrix of
/// expressions in `(r, x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySpec {
    Named(String),
    Tagged { gamma: Vec<Vec<Expr>> },
    Matrix(Vec<Vec<Expr>>),
}

impl FamilySpec {
    pub fn resolve(&self, chart: &MetricChart) -> Result<AdmissibleFamily> {
        match self {
            FamilySpec::Named(name) => match name.as_str() {
                "schouten" => AdmissibleFamily::schouten(chart),
                "identity" => Ok(AdmissibleFamily::identity()),
                other => Err(Error::InvalidFamily(format!(
                    "unknown family `{other}` (expected \"schouten\", \"identity\" or a gamma matrix)"
                ))),
            },
            FamilySpec::Tagged { gamma } | FamilySpec::Matrix(gamma) => {
                AdmissibleFamily::from_exprs(chart, gamma.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
enum FamilyKind {
    /// `gamma(r) = Id`; the undeformed cone.
    Identity,
    /// `gamma(r) = Id + 2 r P_hat` with the Schouten endomorphism evaluated
    /// through the chart's exact curvature pipeline.
    Schouten,
    /// Entries given explicitly as expressions in `(r, x)`.
    Exprs {
        gamma: Vec<Vec<Expr>>,
        /// First derivatives: `d[i][j][v]`, v = 0 for `r`, 1..=n for `x`.
        d: Vec<Vec<Vec<Expr>>>,
        /// Second derivatives: `dd[i][j][v][w]`.
        dd: Vec<Vec<Vec<Vec<Expr>>>>,
    },
}

/// One-parameter family `gamma(r)` of g-self-adjoint endomorphisms with
/// `gamma(0) = Id`, valid for `|r| < delta`.
#[derive(Debug, Clone)]
pub struct AdmissibleFamily {
    kind: FamilyKind,
    delta: f64,
}

/// Value and derivatives of `gamma` at a point, as needed by the ambient
/// Gram jet: first derivatives everywhere, second derivatives for the
/// curvature oracle.
pub(crate) struct FamilyJet {
    pub gamma: DMatrix<f64>,
    pub d_r: DMatrix<f64>,
    pub d_x: Vec<DMatrix<f64>>,
    pub d_rr: DMatrix<f64>,
    pub d_rx: Vec<DMatrix<f64>>,
    pub d_xx: Vec<Vec<DMatrix<f64>>>,
}

impl AdmissibleFamily {
    /// The trivial family `gamma = Id` (cone over the undeformed metric).
    pub fn identity() -> Self {
        AdmissibleFamily {
            kind: FamilyKind::Identity,
            delta: DELTA_CAP,
        }
    }

    /// The normalization family `gamma(r) = Id + 2 r P_hat` (n >= 3), with
    /// `delta` estimated by sampled-determinant bisection up to [`DELTA_CAP`].
    pub fn schouten(chart: &MetricChart) -> Result<Self> {
        if chart.dim() < 3 {
            return Err(Error::SchoutenUndefined { n: chart.dim() });
        }
        let probe = AdmissibleFamily {
            kind: FamilyKind::Schouten,
            delta: f64::INFINITY,
        };
        let delta = probe.estimate_delta(chart)?;
        Ok(AdmissibleFamily {
            kind: FamilyKind::Schouten,
            delta,
        })
    }

    /// A family given by explicit entries in `(r, x)`. Checks the
    /// admissibility conditions on the sample grid: `gamma(0) = Id`,
    /// g-self-adjointness, and non-singularity inside the estimated radius.
    pub fn from_exprs(chart: &MetricChart, gamma: Vec<Vec<Expr>>) -> Result<Self> {
        let n = chart.dim();
        if gamma.len() != n || gamma.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidFamily(format!(
                "gamma must be an {n}x{n} matrix of expressions"
            )));
        }
        for row in &gamma {
            for e in row {
                for v in e.variables() {
                    match v {
                        Var::R => {}
                        Var::X(i) if i >= 1 && i <= n => {}
                        other => {
                            return Err(Error::InvalidFamily(format!(
                            "entry `{e}` uses variable `{other}`; only r and x1..x{n} are allowed"
                        )))
                        }
                    }
                }
            }
        }
        let vars: Vec<Var> = std::iter::once(Var::R).chain((1..=n).map(Var::X)).collect();
        let d: Vec<Vec<Vec<Expr>>> = gamma
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| vars.iter().map(|&v| e.differentiate(v)).collect())
                    .collect()
            })
            .collect();
        let dd: Vec<Vec<Vec<Vec<Expr>>>> = d
            .iter()
            .map(|row| {
                row.iter()
                    .map(|per_v| {
                        per_v
                            .iter()
                            .map(|e: &Expr| vars.iter().map(|&w| e.differentiate(w)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let family = AdmissibleFamily {
            kind: FamilyKind::Exprs { gamma, d, dd },
            delta: f64::INFINITY,
        };
        let delta = family.estimate_delta(chart)?;
        let family = AdmissibleFamily { delta, ..family };
        family.validate(chart)?;
        Ok(family)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// True when this is the Schouten normalization family.
    pub fn is_schouten(&self) -> bool {
        matches!(self.kind, FamilyKind::Schouten)
    }

    /// `gamma(r)` at `(r, x)`.
    pub fn gamma(&self, chart: &MetricChart, r: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = chart.dim();
        match &self.kind {
            FamilyKind::Identity => Ok(DMatrix::identity(n, n)),
            FamilyKind::Schouten => {
                let p_hat = chart.connection_data(x)?.p_hat;
                Ok(DMatrix::identity(n, n) + p_hat * (2.0 * r))
            }
            FamilyKind::Exprs { gamma, .. } => eval_entries(gamma, r, x),
        }
    }

    /// Exact `r`-derivative `gamma'(r)` at `(r, x)`.
    pub fn gamma_dot(&self, chart: &MetricChart, r: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = chart.dim();
        match &self.kind {
            FamilyKind::Identity => Ok(DMatrix::zeros(n, n)),
            FamilyKind::Schouten => {
                let _ = r;
                Ok(chart.connection_data(x)?.p_hat * 2.0)
            }
            FamilyKind::Exprs { d, .. } => eval_entries_indexed(d, r, x, |per_v| &per_v[0]),
        }
    }

    /// `gamma'(0)`, the tensor the normalization condition constrains.
    pub fn gamma_dot0(&self, chart: &MetricChart, x: &[f64]) -> Result<DMatrix<f64>> {
        self.gamma_dot(chart, 0.0, x)
    }

    /// Full derivative jet at `(r, x)`.
    pub(crate) fn jet(&self, chart: &MetricChart, r: f64, x: &[f64]) -> Result<FamilyJet> {
        let n = chart.dim();
        let zero = || DMatrix::zeros(n, n);
        match &self.kind {
            FamilyKind::Identity => Ok(FamilyJet {
                gamma: DMatrix::identity(n, n),
                d_r: zero(),
                d_x: vec![zero(); n],
                d_rr: zero(),
                d_rx: vec![zero(); n],
                d_xx: vec![vec![zero(); n]; n],
            }),
            FamilyKind::Schouten => {
                let (p_hat, dp_hat) = chart.schouten_hat_gradient(x)?;
                let d_xx = if r == 0.0 {
                    vec![vec![zero(); n]; n]
                } else {
                    // Off the r = 0 slice the Gram curvature needs second
                    // derivatives of P_hat; differentiate the exact gradient
                    // once more by central differences.
                    let h = 1e-4;
                    let mut out = vec![vec![zero(); n]; n];
                    for m in 0..n {
                        let mut xp = x.to_vec();
                        let mut xm = x.to_vec();
                        xp[m] += h;
                        xm[m] -= h;
                        let (_, dp) = chart.schouten_hat_gradient(&xp)?;
                        let (_, dm) = chart.schouten_hat_gradient(&xm)?;
                        for l in 0..n {
                            out[m][l] = (&dp[l] - &dm[l]) * (2.0 * r / (2.0 * h));
                        }
                    }
                    out
                };
                Ok(FamilyJet {
                    gamma: DMatrix::identity(n, n) + &p_hat * (2.0 * r),
                    d_r: &p_hat * 2.0,
                    d_x: dp_hat.iter().map(|m| m * (2.0 * r)).collect(),
                    d_rr: zero(),
                    d_rx: dp_hat.iter().map(|m| m * 2.0).collect(),
                    d_xx,
                })
            }
            FamilyKind::Exprs { gamma, d, dd } => {
                let d_x = (1..=n)
                    .map(|m| eval_entries_indexed(d, r, x, |per_v| &per_v[m]))
                    .collect::<Result<Vec<_>>>()?;
                let d_rx = (1..=n)
                    .map(|m| eval_entries_indexed(dd, r, x, |per_v| &per_v[0][m]))
                    .collect::<Result<Vec<_>>>()?;
                let mut d_xx = Vec::with_capacity(n);
                for m in 1..=n {
                    let mut row = Vec::with_capacity(n);
                    for l in 1..=n {
                        row.push(eval_entries_indexed(dd, r, x, |per_v| &per_v[m][l])?);
                    }
                    d_xx.push(row);
                }
                Ok(FamilyJet {
                    gamma: eval_entries(gamma, r, x)?,
                    d_r: eval_entries_indexed(d, r, x, |per_v| &per_v[0])?,
                    d_rx,
                    d_rr: eval_entries_indexed(dd, r, x, |per_v| &per_v[0][0])?,
                    d_x,
                    d_xx,
                })
            }
        }
    }

    /// Largest radius `rho <= DELTA_CAP` with `det gamma(+-rho) > 0` on the
    /// sample grid, located by bisection to 1e-3.
    fn estimate_delta(&self, chart: &MetricChart) -> Result<f64> {
        let points = grid::interior_grid(chart.domain(), 5);
        // For the Schouten family the curvature pipeline is the expensive
        // part; evaluate P_hat once per point and reuse it across the
        // bisection.
        let schouten_cache: Option<Vec<DMatrix<f64>>> = match self.kind {
            FamilyKind::Schouten => Some(
                points
                    .iter()
                    .map(|x| Ok(chart.connection_data(x)?.p_hat))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let n = chart.dim();
        let good = |rho: f64| -> Result<bool> {
            for (idx, x) in points.iter().enumerate() {
                for r in [rho, -rho] {
                    let det = if let Some(cache) = &schouten_cache {
                        (DMatrix::identity(n, n) + &cache[idx] * (2.0 * r)).determinant()
                    } else {
                        self.gamma(chart, r, x)?.determinant()
                    };
                    if det <= 1e-12 {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        };
        if good(DELTA_CAP)? {
            return Ok(DELTA_CAP);
        }
        let (mut lo, mut hi) = (0.0f64, DELTA_CAP);
        while hi - lo > DELTA_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if good(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo == 0.0 {
            return Err(Error::InvalidFamily(
                "gamma is singular arbitrarily close to r = 0".into(),
            ));
        }
        Ok(lo)
    }

    /// Sampled admissibility checks: `gamma(0) = Id` and g-self-adjointness.
    fn validate(&self, chart: &MetricChart) -> Result<()> {
        let n = chart.dim();
        let points = grid::interior_grid(chart.domain(), 5);
        let id = DMatrix::identity(n, n);
        for x in &points {
            let at_zero = self.gamma(chart, 0.0, x)?;
            let dev = curv::max_abs(&(&at_zero - &id));
            if dev > 1e-9 {
                return Err(Error::InvalidFamily(format!(
                    "gamma(0) differs from the identity by {dev:.3e} at {x:?}"
                )));
            }
            let g = chart.metric_at(x)?;
            for r in sample_radii(self.delta) {
                let gamma = self.gamma(chart, r, x)?;
                // Self-adjointness w.r.t. g means gamma^T g = g gamma.
                let skew = gamma.transpose() * &g - &g * &gamma;
                let dev = curv::max_abs(&skew);
                if dev > 1e-9 {
                    return Err(Error::InvalidFamily(format!(
                        "gamma({r}) is not self-adjoint w.r.t. g at {x:?} (deviation {dev:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn sample_radii(delta: f64) -> Vec<f64> {
    let d = delta.min(DELTA_CAP);
    vec![0.0, 0.45 * d, -0.45 * d, 0.9 * d, -0.9 * d]
}

fn eval_entries(entries: &[Vec<Expr>], r: f64, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = entries.len();
    let at = Bindings {
        x,
        t: None,
        r: Some(r),
        s: None,
    };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = entries[i][j].eval(at)?;
        }
    }
    Ok(out)
}

fn eval_entries_indexed<T>(
    entries: &[Vec<T>],
    r: f64,
    x: &[f64],
    pick: impl Fn(&T) -> &Expr,
) -> Result<DMatrix<f64>> {
    let n = entries.len();
    let at = Bindings {
        x,
        t: None,
        r: Some(r),
        s: None,
    };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = pick(&entries[i][j]).eval(at)?;
        }
    }
    Ok(out)
}

/// The ambient Lorentzian metric determined by a chart and a family.
#[derive(Debug, Clone, Copy)]
pub struct AmbientMetric<'a> {
    pub chart: &'a MetricChart,
    pub family: &'a AdmissibleFamily,
}

impl<'a> AmbientMetric<'a> {
    pub fn new(chart: &'a MetricChart, family: &'a AdmissibleFamily) -> Self {
        AmbientMetric { chart, family }
    }

    fn check_point(&self, p: &AmbientPoint) -> Result<()> {
        if !(p.t > 0.0) {
            return Err(Error::OutOfDomain(format!(
                "t must be positive, got {}",
                p.t
            )));
        }
        if p.r.abs() >= self.family.delta() {
            return Err(Error::OutOfDomain(format!(
                "|r| = {} exceeds the family validity radius delta = {}",
                p.r.abs(),
                self.family.delta()
            )));
        }
        if !self.chart.contains(&p.x) {
            return Err(Error::OutOfDomain(format!(
                "{:?} is outside the chart domain",
                p.x
            )));
        }
        Ok(())
    }

    /// Gram matrix of the ambient metric at `p`, coordinates `(t, r, x)`.
    pub fn gram(&self, p: &AmbientPoint) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let n = self.chart.dim();
        let g = self.chart.metric_at(&p.x)?;
        let gamma = self.family.gamma(self.chart, p.r, &p.x)?;
        let spatial = gamma.transpose() * &g;
        let mut out = DMatrix::zeros(n + 2, n + 2);
        out[(0, 0)] = 2.0 * p.r;
        out[(0, 1)] = p.t;
        out[(1, 0)] = p.t;
        for i in 0..n {
            for j in 0..n {
                out[(2 + i, 2 + j)] = p.t * p.t * spatial[(i, j)];
            }
        }
        Ok(out)
    }

    /// Signature of the Gram matrix at `p` as `(negative, positive)` counts.
    pub fn signature(&self, p: &AmbientPoint) -> Result<(usize, usize)> {
        let gram = self.gram(p)?;
        let eig = nalgebra::SymmetricEigen::new(gram);
        let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        let pos = eig.eigenvalues.iter().filter(|&&v| v > 0.0).count();
        Ok((neg, pos))
    }

    /// Gram matrix with its first and (optionally) second derivative jets in
    /// the coordinates `(t, r, x)`.
    fn gram_jet(&self, p: &AmbientPoint, order: usize) -> Result<MetricJet> {
        self.check_point(p)?;
        let n = self.chart.dim();
        let m = n + 2;
        let t = p.t;
        let g = self.chart.metric_at(&p.x)?;
        let fam = self.family.jet(self.chart, p.r, &p.x)?;

        // Chart metric derivatives at x (exact, symbolic).
        let mut dgx: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut ddgx: Vec<Vec<DMatrix<f64>>> = vec![vec![DMatrix::zeros(n, n); n]; n];
        {
            // Borrow the chart jet machinery through curvature-free accessors.
            for mm in 0..n {
                dgx.push(self.chart.metric_d(&p.x, mm)?);
            }
            if order >= 2 {
                for mm in 0..n {
                    for ll in 0..n {
                        ddgx[mm][ll] = self.chart.metric_dd(&p.x, mm, ll)?;
                    }
                }
            }
        }

        // Spatial block and its derivatives: M = gamma^T g.
        let m_val = fam.gamma.transpose() * &g;
        let m_r = fam.d_r.transpose() * &g;
        let m_x: Vec<DMatrix<f64>> = (0..n)
            .map(|mm| fam.d_x[mm].transpose() * &g + fam.gamma.transpose() * &dgx[mm])
            .collect();

        let mut gram = DMatrix::zeros(m, m);
        gram[(0, 0)] = 2.0 * p.r;
        gram[(0, 1)] = t;
        gram[(1, 0)] = t;
        set_block(&mut gram, &(&m_val * (t * t)));

        let mut dg: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); m];
        // d/dt
        dg[0][(0, 1)] = 1.0;
        dg[0][(1, 0)] = 1.0;
        set_block(&mut dg[0], &(&m_val * (2.0 * t)));
        // d/dr
        dg[1][(0, 0)] = 2.0;
        set_block(&mut dg[1], &(&m_r * (t * t)));
        // d/dx_m
        for mm in 0..n {
            set_block(&mut dg[2 + mm], &(&m_x[mm] * (t * t)));
        }

        let mut ddg: Vec<Vec<DMatrix<f64>>> = Vec::new();
        if order >= 2 {
            let m_rr = fam.d_rr.transpose() * &g;
            let m_rx: Vec<DMatrix<f64>> = (0..n)
                .map(|mm| fam.d_rx[mm].transpose() * &g + fam.d_r.transpose() * &dgx[mm])
                .collect();
            ddg = vec![vec![DMatrix::zeros(m, m); m]; m];
            // (t, t)
            set_block(&mut ddg[0][0], &(&m_val * 2.0));
            // (t, r)
            set_block(&mut ddg[0][1], &(&m_r * (2.0 * t)));
            // (t, x_m)
            for mm in 0..n {
                set_block(&mut ddg[0][2 + mm], &(&m_x[mm] * (2.0 * t)));
            }
            // (r, r)
            set_block(&mut ddg[1][1], &(&m_rr * (t * t)));
            // (r, x_m)
            for mm in 0..n {
                set_block(&mut ddg[1][2 + mm], &(&m_rx[mm] * (t * t)));
            }
            // (x_m, x_l)
            for mm in 0..n {
                for ll in mm..n {
                    let m_ml = fam.d_xx[mm][ll].transpose() * &g
                        + fam.d_x[mm].transpose() * &dgx[ll]
                        + fam.d_x[ll].transpose() * &dgx[mm]
                        + fam.gamma.transpose() * &ddgx[mm][ll];
                    set_block(&mut ddg[2 + mm][2 + ll], &(&m_ml * (t * t)));
                }
            }
            // Mirror the upper triangle.
            for a in 0..m {
                for b in 0..a {
                    ddg[a][b] = ddg[b][a].clone();
                }
            }
        }

        let ginv = gram
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularGram {
                point: ambient_coords(p),
            })?;
        Ok(MetricJet {
            g: gram,
            ginv,
            dg,
            ddg,
            dddg: Vec::new(),
        })
    }

    /// Christoffel symbols of the ambient metric at `p`, indices ordered
    /// `(t, r, x^1..x^n)`, computed from the explicit Gram matrix with exact
    /// derivatives.
    pub fn christoffels(&self, p: &AmbientPoint) -> Result<Tensor3> {
        let jet = self.gram_jet(p, 1)?;
        Ok(curv::christoffel(&jet))
    }

    /// Numeric covariant derivative of constant-coefficient vector fields:
    /// `(nabla_a b)^C = a^A b^B Gamma^C_{AB}`.
    pub fn connection_numeric(
        &self,
        p: &AmbientPoint,
        a: &AmbientVec,
        b: &AmbientVec,
    ) -> Result<DVector<f64>> {
        let gamma = self.christoffels(p)?;
        let av = a.to_coords();
        let bv = b.to_coords();
        Ok(DVector::from_vec(
            gamma.contract2(av.as_slice(), bv.as_slice()),
        ))
    }

    /// The closed-form connection. The mixed lifted-lifted branch is only
    /// defined on the `r = 0` slice and fails with `RequiresRZero` elsewhere;
    /// every other branch is valid for all admissible `r`.
    pub fn connection_closed_form(
        &self,
        p: &AmbientPoint,
        a: &AmbientVec,
        b: &AmbientVec,
    ) -> Result<DVector<f64>> {
        self.check_point(p)?;
        let n = self.chart.dim();
        let t = p.t;
        let mut out = DVector::zeros(n + 2);

        // nabla_dt dt = nabla_dr dr = 0; nabla_dt dr = nabla_dr dt = dr / t.
        out[1] += (a.dt * b.dr + a.dr * b.dt) / t;

        let a_has_lift = a.x.iter().any(|&c| c != 0.0);
        let b_has_lift = b.x.iter().any(|&c| c != 0.0);

        // nabla_V dt = V / t (and nabla_dt V = V / t by torsion symmetry).
        if b.dt != 0.0 && a_has_lift {
            for i in 0..n {
                out[2 + i] += b.dt * a.x[i] / t;
            }
        }
        if a.dt != 0.0 && b_has_lift {
            for i in 0..n {
                out[2 + i] += a.dt * b.x[i] / t;
            }
        }

        // nabla_V dr = 1/2 gamma(r)^{-1} gamma'(r) V, symmetric in the pair.
        if (b.dr != 0.0 && a_has_lift) || (a.dr != 0.0 && b_has_lift) {
            let gamma = self.family.gamma(self.chart, p.r, &p.x)?;
            let gamma_dot = self.family.gamma_dot(self.chart, p.r, &p.x)?;
            let gamma_inv = gamma
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::SingularGram {
                    point: ambient_coords(p),
                })?;
            let op = gamma_inv * gamma_dot * 0.5;
            let combined = &a.x * b.dr + &b.x * a.dr;
            let deflect = &op * combined;
            for i in 0..n {
                out[2 + i] += deflect[i];
            }
        }

        // nabla_V W on the r = 0 slice:
        // -(1/2t) g~(gamma'(0) V, W) dt - (1/t^2) g~(V, W) dr + nabla_V W,
        // with g~ = t^2 g on lifted pairs at r = 0.
        if a_has_lift && b_has_lift {
            if p.r != 0.0 {
                return Err(Error::RequiresRZero { r: p.r });
            }
            let g = self.chart.metric_at(&p.x)?;
            let gamma_dot = self.family.gamma_dot0(self.chart, &p.x)?;
            let g_dot_vw = (&gamma_dot * &a.x).dot(&(&g * &b.x));
            let g_vw = (&g * &b.x).dot(&a.x);
            out[0] += -(t / 2.0) * g_dot_vw;
            out[1] += -g_vw;
            let chris = self.chart.christoffel(&p.x)?;
            let nab = chris.contract2(a.x.as_slice(), b.x.as_slice());
            for i in 0..n {
                out[2 + i] += nab[i];
            }
        }

        Ok(out)
    }

    /// Numeric Ricci tensor of the ambient metric at `p`, assembled from the
    /// exact Gram derivative jet.
    pub fn ricci_numeric(&self, p: &AmbientPoint) -> Result<DMatrix<f64>> {
        let jet = self.gram_jet(p, 2)?;
        let gamma = curv::christoffel(&jet);
        let dginv = curv::dginv(&jet);
        let dgamma = curv::dchristoffel(&jet, &dginv);
        Ok(curv::ricci(&gamma, &dgamma))
    }

    /// The closed-form Ricci restriction to `r = 0` on lifted directions:
    /// `Ric^g(V, W) - (trace gamma'(0) / 2) g(V, W) - ((n-2)/2) g(gamma'(0) V, W)`.
    pub fn ricci_r0_formula(&self, x: &[f64], v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let n = self.chart.dim() as f64;
        let pack = self.chart.curvature(x)?;
        let gamma_dot = self.family.gamma_dot0(self.chart, x)?;
        let ric_vw = (&pack.ric * w).dot(v);
        let g_vw = (&pack.g * w).dot(v);
        let g_dot_vw = (&pack.g * w).dot(&(&gamma_dot * v));
        Ok(ric_vw - 0.5 * gamma_dot.trace() * g_vw - 0.5 * (n - 2.0) * g_dot_vw)
    }
}

fn ambient_coords(p: &AmbientPoint) -> Vec<f64> {
    let mut out = vec![p.t, p.r];
    out.extend_from_slice(&p.x);
    out
}

fn set_block(target: &mut DMatrix<f64>, block: &DMatrix<f64>) {
    let n = block.nrows();
    for i in 0..n {
        for j in 0..n {
            target[(2 + i, 2 + j)] = block[(i, j)];
        }
    }
}

/// Residual of the normalization condition of the family against the chart:
/// `max |g(gamma'(0) -, -) - 2 P|` for n >= 3, `|trace gamma'(0) - 2 K|` for
/// n = 2, over the scan grid.
#[derive(Debug, Clone)]
pub struct NormalizationReport {
    pub residual: f64,
    pub worst_point: Vec<f64>,
    /// Number of sample points scanned.
    pub points: usize,
}

pub fn normalization_check(
    chart: &MetricChart,
    family: &AdmissibleFamily,
    seed: u64,
) -> Result<NormalizationReport> {
    normalization_check_dense(chart, family, 5, seed)
}

/// [`normalization_check`] with a configurable grid density.
pub fn normalization_check_dense(
    chart: &MetricChart,
    family: &AdmissibleFamily,
    per_axis: usize,
    seed: u64,
) -> Result<NormalizationReport> {
    let points = grid::scan_points_dense(chart.domain(), per_axis, seed);
    let mut residual = 0.0f64;
    let mut worst_point = points[0].clone();
    for x in &points {
        let gamma_dot = family.gamma_dot0(chart, x)?;
        let pack = chart.curvature(x)?;
        let dev = if chart.dim() >= 3 {
            let lowered = gamma_dot.transpose() * &pack.g;
            curv::max_abs(&(&lowered - &(pack.schouten()? * 2.0)))
        } else {
            (gamma_dot.trace() - 2.0 * pack.gauss().expect("n = 2")).abs()
        };
        if dev > residual {
            residual = dev;
            worst_point = x.clone();
        }
    }
    Ok(NormalizationReport {
        residual,
        worst_point,
        points: points.len(),
    })
}
