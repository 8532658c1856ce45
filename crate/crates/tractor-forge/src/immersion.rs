//! Codimension-two spacelike immersions `x -> (e^{u(x)}, 0, x)` of the chart
//! into the ambient manifold: differential, lightlike normal frame,
//! Weingarten operators, second fundamental form, mean curvature, the
//! intrinsic-extrinsic compatibility residual, and the Einstein/umbilical
//! equivalence.
//!
//! Each closed-form quantity has an extrinsic numeric oracle next to it that
//! goes through the ambient Christoffel symbols and re-projection onto the
//! immersed tangent space.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::ambient::{AdmissibleFamily, AmbientMetric, AmbientPoint};
use crate::chart::{FieldCalculus, MetricChart, ScalarField};
use crate::curv;
use crate::error::Error;
use crate::Result;

/// A normal vector expressed on the lightlike frame: `xi_coeff * xi + ell_coeff * ell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalVec {
    pub xi: f64,
    pub ell: f64,
}

impl NormalVec {
    /// `|v|^2 = g~(v, v) = -2 xi_coeff ell_coeff`, exact in the null frame.
    pub fn norm_sq(&self) -> f64 {
        -2.0 * self.xi * self.ell
    }
}

/// Which normal field an oracle differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalField {
    Xi,
    Ell,
}

/// Per-point extrinsic package of the immersion.
#[derive(Debug, Clone)]
pub struct ImmersionFrame {
    pub x: Vec<f64>,
    pub u: f64,
    pub grad_u: DVector<f64>,
    pub grad_norm_sq: f64,
    pub lap_u: f64,
    /// Ambient components of `T Psi (d_i)`, one column per chart direction.
    pub t_psi: DMatrix<f64>,
    pub xi: DVector<f64>,
    pub ell: DVector<f64>,
    pub a_xi: DMatrix<f64>,
    pub a_ell: DMatrix<f64>,
    /// xi-coefficients of `II(d_i, d_j)`.
    pub ii_xi: DMatrix<f64>,
    /// ell-coefficients of `II(d_i, d_j)`.
    pub ii_ell: DMatrix<f64>,
    pub mean_curvature: NormalVec,
}

/// The immersion `Psi^u` determined by a chart, an admissible family and a
/// conformal scale `u`.
pub struct Immersion<'a> {
    chart: &'a MetricChart,
    family: &'a AdmissibleFamily,
    u: ScalarField,
}

impl<'a> Immersion<'a> {
    pub fn new(chart: &'a MetricChart, family: &'a AdmissibleFamily, u: ScalarField) -> Self {
        Immersion { chart, family, u }
    }

    pub fn chart(&self) -> &MetricChart {
        self.chart
    }

    pub fn scale(&self) -> &ScalarField {
        &self.u
    }

    pub fn ambient(&self) -> AmbientMetric<'a> {
        AmbientMetric::new(self.chart, self.family)
    }

    /// `Psi^u(x) = (e^{u(x)}, 0, x)`.
    pub fn immerse(&self, x: &[f64]) -> Result<AmbientPoint> {
        Ok(AmbientPoint::on_slice(self.u.eval(x)?.exp(), x.to_vec()))
    }

    /// `T Psi^u (V) = e^u V(u) d_t + V`.
    pub fn differential(&self, x: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.chart.dim();
        let eu = self.u.eval(x)?.exp();
        let du = self.u.partials(x)?;
        let mut out = DVector::zeros(n + 2);
        out[0] = eu * du.dot(v);
        for i in 0..n {
            out[2 + i] = v[i];
        }
        Ok(out)
    }

    /// Ambient components of the differential, one column per coordinate
    /// direction.
    pub fn t_psi(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.chart.dim();
        let eu = self.u.eval(x)?.exp();
        let du = self.u.partials(x)?;
        let mut out = DMatrix::zeros(n + 2, n);
        for j in 0..n {
            out[(0, j)] = eu * du[j];
            out[(2 + j, j)] = 1.0;
        }
        Ok(out)
    }

    /// The lightlike normal frame:
    /// `xi = e^u d_t`,
    /// `ell = e^{-u} |grad u|^2 / 2 d_t - e^{-2u} d_r + e^{-2u} grad u`.
    pub fn normal_frame(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.chart.dim();
        let uval = self.u.eval(x)?;
        let eu = uval.exp();
        let fc = self.chart.field_calculus(&self.u, x)?;
        let mut xi = DVector::zeros(n + 2);
        xi[0] = eu;
        let mut ell = DVector::zeros(n + 2);
        ell[0] = (-uval).exp() * fc.grad_norm_sq / 2.0;
        ell[1] = -(-2.0 * uval).exp();
        for i in 0..n {
            ell[2 + i] = (-2.0 * uval).exp() * fc.grad[i];
        }
        Ok((xi, ell))
    }

    /// Closed-form Weingarten operators:
    /// `A_xi = -Id` and
    /// `A_ell = e^{-2u} [ (gamma'(0) - |grad u|^2 Id)/2 + grad u (x) du - Hess u ]`.
    pub fn weingarten(&self, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.chart.dim();
        let uval = self.u.eval(x)?;
        let fc = self.chart.field_calculus(&self.u, x)?;
        let gamma_dot = self.family.gamma_dot0(self.chart, x)?;
        let outer = DMatrix::from_fn(n, n, |i, j| fc.grad[i] * fc.du[j]);
        let a_ell = ((&gamma_dot - DMatrix::identity(n, n) * fc.grad_norm_sq) * 0.5 + outer
            - &fc.hess_op)
            * (-2.0 * uval).exp();
        Ok((-DMatrix::identity(n, n), a_ell))
    }

    /// Extrinsic Weingarten oracle: differentiates the chosen normal field
    /// along each coordinate direction with the numeric ambient connection and
    /// projects back with the induced metric. Returns the operator matrix and
    /// the normal components of `nabla~_V zeta` (which must vanish: the frame
    /// is parallel in the normal bundle).
    pub fn weingarten_oracle(&self, x: &[f64], field: NormalField) -> Result<WeingartenOracle> {
        let n = self.chart.dim();
        let ambient = self.ambient();
        let p = self.immerse(x)?;
        let chris = ambient.christoffels(&p)?;
        let h = 1e-5;

        let pick = |y: &[f64]| -> Result<DVector<f64>> {
            let (xi, ell) = self.normal_frame(y)?;
            Ok(match field {
                NormalField::Xi => xi,
                NormalField::Ell => ell,
            })
        };

        let mut a = DMatrix::zeros(n, n);
        let mut normal_xi = DVector::zeros(n);
        let mut normal_ell = DVector::zeros(n);
        for j in 0..n {
            let mut yp = x.to_vec();
            let mut ym = x.to_vec();
            yp[j] += h;
            ym[j] -= h;
            let dzeta = (pick(&yp)? - pick(&ym)?) / (2.0 * h);

            let mut v = DVector::zeros(n);
            v[j] = 1.0;
            let tv = self.differential(x, &v)?;
            let zeta = pick(x)?;
            let mut covariant = dzeta;
            for c in 0..(n + 2) {
                let mut acc = 0.0;
                for aa in 0..(n + 2) {
                    for bb in 0..(n + 2) {
                        acc += chris.get(c, aa, bb) * tv[aa] * zeta[bb];
                    }
                }
                covariant[c] += acc;
            }

            let parts = self.decompose(x, &covariant)?;
            for i in 0..n {
                a[(i, j)] = -parts.tangent[i];
            }
            normal_xi[j] = parts.xi;
            normal_ell[j] = parts.ell;
        }
        Ok(WeingartenOracle {
            a,
            normal_xi,
            normal_ell,
        })
    }

    /// Split an ambient vector at `Psi^u(x)` into tangential coordinates and
    /// lightlike-frame normal coefficients. The tangential system is solved
    /// with the induced metric, which is positive definite by spacelikeness.
    pub fn decompose(&self, x: &[f64], y: &DVector<f64>) -> Result<Decomposition> {
        let ambient = self.ambient();
        let p = self.immerse(x)?;
        let gram = ambient.gram(&p)?;
        let t_psi = self.t_psi(x)?;
        let induced = t_psi.transpose() * &gram * &t_psi;
        let rhs = t_psi.transpose() * &gram * y;
        let chol =
            Cholesky::new(induced).ok_or_else(|| Error::SingularGram { point: x.to_vec() })?;
        let tangent = chol.solve(&rhs);
        let normal = y - &t_psi * &tangent;
        let (xi, ell) = self.normal_frame(x)?;
        let xi_coeff = -(&gram * &ell).dot(&normal);
        let ell_coeff = -(&gram * &xi).dot(&normal);
        Ok(Decomposition {
            tangent,
            xi: xi_coeff,
            ell: ell_coeff,
        })
    }

    /// Closed-form second fundamental form evaluated on a pair of chart
    /// vectors, returned as coefficients on the lightlike frame.
    pub fn second_fundamental_form(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<NormalVec> {
        let uval = self.u.eval(x)?;
        let fc = self.chart.field_calculus(&self.u, x)?;
        let g = self.chart.metric_at(x)?;
        let gamma_dot = self.family.gamma_dot0(self.chart, x)?;
        // II(V, W) = -g( (gamma'(0) V - |grad u|^2 V)/2 + V(u) grad u
        //               - Hess_op V, W ) xi + e^{2u} g(V, W) ell.
        let v_u = fc.du.dot(v);
        let inner = (&gamma_dot * v - v * fc.grad_norm_sq) * 0.5 + &fc.grad * v_u - &fc.hess_op * v;
        let xi = -(&g * w).dot(&inner);
        let ell = (2.0 * uval).exp() * (&g * w).dot(v);
        Ok(NormalVec { xi, ell })
    }

    /// Closed-form mean curvature
    /// `H = e^{-2u}/n (Lap u - (trace gamma'(0) - (n-2)|grad u|^2)/2) xi + ell`.
    pub fn mean_curvature(&self, x: &[f64]) -> Result<NormalVec> {
        let n = self.chart.dim() as f64;
        let uval = self.u.eval(x)?;
        let fc = self.chart.field_calculus(&self.u, x)?;
        let gamma_dot = self.family.gamma_dot0(self.chart, x)?;
        let xi = (-2.0 * uval).exp() / n
            * (fc.lap - 0.5 * (gamma_dot.trace() - (n - 2.0) * fc.grad_norm_sq));
        Ok(NormalVec { xi, ell: 1.0 })
    }

    /// The full per-point package.
    pub fn frame(&self, x: &[f64]) -> Result<ImmersionFrame> {
        let n = self.chart.dim();
        let fc: FieldCalculus = self.chart.field_calculus(&self.u, x)?;
        let (xi, ell) = self.normal_frame(x)?;
        let (a_xi, a_ell) = self.weingarten(x)?;
        let mut ii_xi = DMatrix::zeros(n, n);
        let mut ii_ell = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = DVector::zeros(n);
                let mut w = DVector::zeros(n);
                v[i] = 1.0;
                w[j] = 1.0;
                let nv = self.second_fundamental_form(x, &v, &w)?;
                ii_xi[(i, j)] = nv.xi;
                ii_ell[(i, j)] = nv.ell;
            }
        }
        Ok(ImmersionFrame {
            x: x.to_vec(),
            u: self.u.eval(x)?,
            grad_u: fc.grad.clone(),
            grad_norm_sq: fc.grad_norm_sq,
            lap_u: fc.lap,
            t_psi: self.t_psi(x)?,
            xi,
            ell,
            a_xi,
            a_ell,
            ii_xi,
            ii_ell,
            mean_curvature: self.mean_curvature(x)?,
        })
    }

    /// Residual of the intrinsic-extrinsic compatibility condition for the
    /// induced metric `e^{2u} g`:
    /// `Ric^{e^{2u}g}(V,W) - (n/2)|H|^2 e^{2u}g(V,W) + (n-2) g~(H,xi) e^{2u}g(V, A_ell W)`
    /// reported componentwise on the coordinate basis. For n = 2 the residual
    /// is still computed but `tractor_connection_unique` is false: the
    /// condition no longer pins down a unique connection there.
    pub fn compatibility_residual(&self, x: &[f64]) -> Result<CompatibilityResidual> {
        let n = self.chart.dim();
        let nf = n as f64;
        let uval = self.u.eval(x)?;
        let scale = (2.0 * uval).exp();
        let g = self.chart.metric_at(x)?;
        let conf_ric = self.chart.conformal_ricci(&self.u, x)?;
        let (_, a_ell) = self.weingarten(x)?;
        let h = self.mean_curvature(x)?;
        // In the null frame: g~(H, xi) = -ell-coefficient = -1.
        let h_dot_xi = -h.ell;
        let induced = &g * scale;
        let residual = &conf_ric - &induced * (nf / 2.0 * h.norm_sq())
            + (&g * &a_ell) * (scale * (nf - 2.0) * h_dot_xi);
        Ok(CompatibilityResidual {
            max_abs: curv::max_abs(&residual),
            residual,
            tractor_connection_unique: n >= 3,
        })
    }

    /// Umbilicity vs Einstein report over the given sample points.
    pub fn umbilic_einstein_check(&self, points: &[Vec<f64>], tol: f64) -> Result<UmbilicEinstein> {
        let n = self.chart.dim();
        let nf = n as f64;
        let mut umbilic_dev = 0.0f64;
        let mut einstein_res = 0.0f64;
        let mut h_norm_identity_res = 0.0f64;
        for x in points {
            let (_, a_ell) = self.weingarten(x)?;
            let h = self.mean_curvature(x)?;
            // mu = g~(H, ell) = -xi-coefficient.
            let mu = -h.xi;
            umbilic_dev = umbilic_dev.max(curv::max_abs(&(&a_ell - DMatrix::identity(n, n) * mu)));

            let scale = (2.0 * self.u.eval(x)?).exp();
            let conf_ric = self.chart.conformal_ricci(&self.u, x)?;
            let conf_scalar = self.chart.conformal_scalar(&self.u, x)?;
            let induced = self.chart.metric_at(x)? * scale;
            einstein_res =
                einstein_res.max(curv::max_abs(&(&conf_ric - &induced * (conf_scalar / nf))));

            // |H|^2 computed through the ambient Gram matrix versus the
            // null-frame identity |H|^2 = -2 g~(H, xi) g~(H, ell).
            let ambient = self.ambient();
            let p = self.immerse(x)?;
            let gram = ambient.gram(&p)?;
            let (xi, ell) = self.normal_frame(x)?;
            let h_amb = &xi * h.xi + &ell * h.ell;
            let norm_gram = (&gram * &h_amb).dot(&h_amb);
            let h_xi_gram = (&gram * &xi).dot(&h_amb);
            let h_ell_gram = (&gram * &ell).dot(&h_amb);
            h_norm_identity_res =
                h_norm_identity_res.max((norm_gram - (-2.0 * h_xi_gram * h_ell_gram)).abs());
        }
        let einstein = einstein_res <= tol;
        let umbilic = umbilic_dev <= tol;
        Ok(UmbilicEinstein {
            umbilic_deviation: umbilic_dev,
            einstein_residual: einstein_res,
            h_norm_identity_residual: h_norm_identity_res,
            einstein,
            umbilic,
            equivalence_consistent: einstein == umbilic,
        })
    }
}

/// Output of [`Immersion::weingarten_oracle`].
#[derive(Debug, Clone)]
pub struct WeingartenOracle {
    /// Operator matrix: column `j` holds `A_zeta d_j`.
    pub a: DMatrix<f64>,
    /// xi-coefficient of the normal part of `nabla~_{d_j} zeta` per direction.
    pub normal_xi: DVector<f64>,
    /// ell-coefficient of the normal part per direction.
    pub normal_ell: DVector<f64>,
}

/// Output of [`Immersion::decompose`].
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub tangent: DVector<f64>,
    pub xi: f64,
    pub ell: f64,
}

#[derive(Debug, Clone)]
pub struct CompatibilityResidual {
    pub residual: DMatrix<f64>,
    pub max_abs: f64,
    /// False for n = 2, where the condition does not single out a unique
    /// tractor connection.
    pub tractor_connection_unique: bool,
}

#[derive(Debug, Clone)]
pub struct UmbilicEinstein {
    pub umbilic_deviation: f64,
    pub einstein_residual: f64,
    pub h_norm_identity_residual: f64,
    pub einstein: bool,
    pub umbilic: bool,
    pub equivalence_consistent: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::curv::max_abs;
    use crate::grid;

    fn scales() -> Vec<(String, ScalarField)> {
        catalog::standard_scales(3)
    }

    fn immersion_points(chart: &MetricChart) -> Vec<Vec<f64>> {
        grid::random_points(chart.domain(), 10, 2024)
    }

    #[test]
    fn immerse_places_points_on_the_zero_slice() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let zero = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let p = zero.immerse(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(p.t, 1.0);
        assert_eq!(p.r, 0.0);

        let log2 = Immersion::new(&chart, &fam, ScalarField::parse("log(2)", 3).unwrap());
        let p = log2.immerse(&[0.0, 0.0, 0.0]).unwrap();
        assert!((p.t - 2.0).abs() < 1e-15);
    }

    #[test]
    fn differential_of_linear_scale_at_origin() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::parse("x1", 3).unwrap());
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let tv = im.differential(&[0.0, 0.0, 0.0], &v).unwrap();
        // e^u V(u) = 1 at the origin.
        assert!((tv[0] - 1.0).abs() < 1e-15);
        assert_eq!(tv[1], 0.0);
        assert!((tv[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn induced_metric_is_the_conformal_rescaling() {
        for chart in catalog::standard_charts() {
            let fam = AdmissibleFamily::schouten(&chart).unwrap();
            for (name, u) in scales() {
                let im = Immersion::new(&chart, &fam, u.clone());
                let ambient = im.ambient();
                for x in immersion_points(&chart) {
                    let p = im.immerse(&x).unwrap();
                    let gram = ambient.gram(&p).unwrap();
                    let t_psi = im.t_psi(&x).unwrap();
                    let induced = t_psi.transpose() * &gram * &t_psi;
                    let scale = (2.0 * u.eval(&x).unwrap()).exp();
                    let expect = chart.metric_at(&x).unwrap() * scale;
                    let dev = max_abs(&(&induced - &expect));
                    assert!(
                        dev < 1e-9,
                        "{:?} u={name}: induced dev {dev:.3e}",
                        chart.label()
                    );
                }
            }
        }
    }

    #[test]
    fn normal_frame_is_lightlike_and_normalized() {
        for chart in catalog::standard_charts() {
            let fam = AdmissibleFamily::schouten(&chart).unwrap();
            for (name, u) in scales() {
                let im = Immersion::new(&chart, &fam, u.clone());
                let ambient = im.ambient();
                for x in grid::random_points(chart.domain(), 5, 77) {
                    let p = im.immerse(&x).unwrap();
                    let gram = ambient.gram(&p).unwrap();
                    let (xi, ell) = im.normal_frame(&x).unwrap();
                    let t_psi = im.t_psi(&x).unwrap();
                    assert!((&gram * &xi).dot(&xi).abs() < 1e-10, "xi null ({name})");
                    assert!((&gram * &ell).dot(&ell).abs() < 1e-10, "ell null ({name})");
                    assert!(
                        ((&gram * &ell).dot(&xi) + 1.0).abs() < 1e-10,
                        "normalization ({name})"
                    );
                    let ortho_xi = (t_psi.transpose() * &gram * &xi).amax();
                    let ortho_ell = (t_psi.transpose() * &gram * &ell).amax();
                    assert!(
                        ortho_xi < 1e-10 && ortho_ell < 1e-10,
                        "orthogonality ({name})"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_scale_frame_is_dt_and_minus_dr() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let (xi, ell) = im.normal_frame(&[0.3, 0.1, -0.2]).unwrap();
        assert!((xi[0] - 1.0).abs() < 1e-15 && xi.rows(1, 4).amax() < 1e-15);
        assert!((ell[1] + 1.0).abs() < 1e-15 && ell[0].abs() < 1e-15);
        assert!(ell.rows(2, 3).amax() < 1e-15);
    }

    #[test]
    fn weingarten_xi_is_minus_identity_and_a_ell_reduces_to_schouten() {
        let chart = catalog::sphere(3, 1.0).unwrap();
        let fam = AdmissibleFamily::schouten(&chart).unwrap();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let x = [0.2, -0.3, 0.4];
        let (a_xi, a_ell) = im.weingarten(&x).unwrap();
        assert!(max_abs(&(&a_xi + DMatrix::identity(3, 3))) < 1e-15);
        // u = 0 and gamma'(0) = 2 P_hat collapse A_ell to P_hat.
        let p_hat = chart.curvature(&x).unwrap().schouten_hat().unwrap().clone();
        assert!(max_abs(&(&a_ell - &p_hat)) < 1e-12);
    }

    #[test]
    fn weingarten_closed_form_matches_extrinsic_oracle() {
        for chart in catalog::standard_charts() {
            let fam = AdmissibleFamily::schouten(&chart).unwrap();
            for (name, u) in scales() {
                let im = Immersion::new(&chart, &fam, u);
                for x in grid::random_points(chart.domain(), 10, 55) {
                    let (a_xi, a_ell) = im.weingarten(&x).unwrap();
                    let xi_oracle = im.weingarten_oracle(&x, NormalField::Xi).unwrap();
                    let ell_oracle = im.weingarten_oracle(&x, NormalField::Ell).unwrap();
                    let dev_xi = max_abs(&(&a_xi - &xi_oracle.a));
                    let dev_ell = max_abs(&(&a_ell - &ell_oracle.a));
                    assert!(
                        dev_xi < 1e-6 && dev_ell < 1e-6,
                        "{:?} u={name}: dev_xi {dev_xi:.3e} dev_ell {dev_ell:.3e}",
                        chart.label()
                    );
                    // The frame is parallel in the normal bundle.
                    assert!(xi_oracle.normal_xi.amax() < 1e-6);
                    assert!(xi_oracle.normal_ell.amax() < 1e-6);
                    assert!(ell_oracle.normal_xi.amax() < 1e-6);
                    assert!(ell_oracle.normal_ell.amax() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn flat_zero_scale_weingarten_ell_vanishes() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let ell_oracle = im
            .weingarten_oracle(&[0.2, 0.4, -0.1], NormalField::Ell)
            .unwrap();
        assert!(max_abs(&ell_oracle.a) < 1e-9);
    }

    #[test]
    fn second_fundamental_form_reconstructions() {
        let chart = catalog::sphere(3, 1.0).unwrap();
        let fam = AdmissibleFamily::schouten(&chart).unwrap();
        for (name, u) in scales() {
            let im = Immersion::new(&chart, &fam, u.clone());
            let mut rng = grid::Rng::new(314);
            for x in grid::random_points(chart.domain(), 4, 12) {
                let scale = (2.0 * u.eval(&x).unwrap()).exp();
                let induced = chart.metric_at(&x).unwrap() * scale;
                let (a_xi, a_ell) = im.weingarten(&x).unwrap();
                let v = DVector::from_vec(rng.unit_box_vector(3));
                let w = DVector::from_vec(rng.unit_box_vector(3));
                let ii = im.second_fundamental_form(&x, &v, &w).unwrap();

                // II(V, W) = -g(A_ell V, W) xi - g(A_xi V, W) ell with the
                // induced metric in both slots.
                let expect_xi = -(&induced * &w).dot(&(&a_ell * &v));
                let expect_ell = -(&induced * &w).dot(&(&a_xi * &v));
                assert!((ii.xi - expect_xi).abs() < 1e-9, "xi coeff ({name})");
                assert!((ii.ell - expect_ell).abs() < 1e-9, "ell coeff ({name})");

                // g(A_zeta V, W) = g~(II(V, W), zeta): pairing with xi picks
                // -ell-coefficient, pairing with ell picks -xi-coefficient.
                let a_xi_vw = (&induced * &w).dot(&(&a_xi * &v));
                let a_ell_vw = (&induced * &w).dot(&(&a_ell * &v));
                assert!((a_xi_vw - (-ii.ell)).abs() < 1e-9);
                assert!((a_ell_vw - (-ii.xi)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_second_fundamental_form_is_pure_ell() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let v = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let w = DVector::from_vec(vec![0.3, -1.0, 0.7]);
        let ii = im
            .second_fundamental_form(&[0.1, 0.2, 0.3], &v, &w)
            .unwrap();
        assert!(ii.xi.abs() < 1e-15);
        assert!((ii.ell - v.dot(&w)).abs() < 1e-12);
    }

    #[test]
    fn mean_curvature_trivial_and_sphere_values() {
        let flat = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&flat, &fam, ScalarField::zero(3));
        let h = im.mean_curvature(&[0.0, 0.5, -0.5]).unwrap();
        assert_eq!(h.ell, 1.0);
        assert!(h.xi.abs() < 1e-15);

        // Unit sphere with u = 0: H = -(1/2) xi + ell from S = 6.
        let sphere = catalog::sphere(3, 1.0).unwrap();
        let fam = AdmissibleFamily::schouten(&sphere).unwrap();
        let im = Immersion::new(&sphere, &fam, ScalarField::zero(3));
        let h = im.mean_curvature(&[0.2, -0.1, 0.3]).unwrap();
        assert!((h.xi + 0.5).abs() < 1e-10, "H_xi = {}", h.xi);
        assert_eq!(h.ell, 1.0);
    }

    #[test]
    fn mean_curvature_reconstruction_from_weingarten_traces() {
        // H = -(1/n)(trace(A_ell) xi + trace(A_xi) ell).
        for chart in catalog::standard_charts() {
            let fam = AdmissibleFamily::schouten(&chart).unwrap();
            for (name, u) in scales() {
                let im = Immersion::new(&chart, &fam, u);
                for x in grid::random_points(chart.domain(), 4, 21) {
                    let (a_xi, a_ell) = im.weingarten(&x).unwrap();
                    let h = im.mean_curvature(&x).unwrap();
                    let expect_xi = -a_ell.trace() / 3.0;
                    let expect_ell = -a_xi.trace() / 3.0;
                    assert!(
                        (h.xi - expect_xi).abs() < 1e-9 && (h.ell - expect_ell).abs() < 1e-9,
                        "{:?} u={name}",
                        chart.label()
                    );
                }
            }
        }
    }

    #[test]
    fn mean_curvature_scalar_curvature_form_for_normalized_families() {
        // With gamma'(0) = 2 P_hat: H = -S^{e^{2u}g} / (2n(n-1)) xi + ell.
        for chart in catalog::standard_charts() {
            let fam = AdmissibleFamily::schouten(&chart).unwrap();
            for (name, u) in scales() {
                let im = Immersion::new(&chart, &fam, u.clone());
                for x in grid::random_points(chart.domain(), 4, 8) {
                    let h = im.mean_curvature(&x).unwrap();
                    let s_conf = chart.conformal_scalar(&u, &x).unwrap();
                    let expect = -s_conf / (2.0 * 3.0 * 2.0);
                    assert!(
                        (h.xi - expect).abs() < 1e-8,
                        "{:?} u={name}: H_xi {} vs {expect}",
                        chart.label(),
                        h.xi
                    );
                }
            }
        }
    }

    #[test]
    fn compatibility_residual_vanishes_exactly_for_normalized_families() {
        for chart in catalog::standard_charts() {
            let fam = AdmissibleFamily::schouten(&chart).unwrap();
            for (name, u) in scales() {
                let im = Immersion::new(&chart, &fam, u);
                for x in grid::random_points(chart.domain(), 5, 3) {
                    let res = im.compatibility_residual(&x).unwrap();
                    assert!(
                        res.max_abs < 1e-6,
                        "{:?} u={name}: compat residual {:.3e}",
                        chart.label(),
                        res.max_abs
                    );
                    assert!(res.tractor_connection_unique);
                }
            }
        }
    }

    #[test]
    fn compatibility_residual_detects_the_identity_family_on_the_sphere() {
        let chart = catalog::sphere(3, 1.0).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let mut worst = 0.0f64;
        for x in grid::random_points(chart.domain(), 10, 5) {
            worst = worst.max(im.compatibility_residual(&x).unwrap().max_abs);
        }
        assert!(worst >= 0.5, "max residual {worst}");
    }

    #[test]
    fn compatibility_residual_zero_on_flat_space_with_identity_family() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let res = im.compatibility_residual(&[0.3, -0.2, 0.1]).unwrap();
        assert!(res.max_abs < 1e-14);
    }

    #[test]
    fn compatibility_residual_for_dimension_two_is_flagged() {
        let chart = catalog::flat(2).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(2));
        let res = im.compatibility_residual(&[0.1, 0.2]).unwrap();
        assert!(!res.tractor_connection_unique);
        assert!(res.max_abs < 1e-12);
    }

    #[test]
    fn sphere_is_umbilic_and_einstein() {
        let chart = catalog::sphere(3, 1.0).unwrap();
        let fam = AdmissibleFamily::schouten(&chart).unwrap();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let points = grid::random_points(chart.domain(), 10, 7);
        let report = im.umbilic_einstein_check(&points, 1e-6).unwrap();
        assert!(report.einstein && report.umbilic && report.equivalence_consistent);
        assert!(report.einstein_residual < 1e-8);
        // A_ell = Id/2, mu = 1/2.
        assert!(report.umbilic_deviation < 1e-8);
        assert!(report.h_norm_identity_residual < 1e-10);
    }

    #[test]
    fn flat_space_is_umbilic_and_einstein() {
        let chart = catalog::flat(3).unwrap();
        let fam = AdmissibleFamily::identity();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let points = grid::random_points(chart.domain(), 10, 7);
        let report = im.umbilic_einstein_check(&points, 1e-6).unwrap();
        assert!(report.einstein && report.umbilic && report.equivalence_consistent);
    }

    #[test]
    fn perturbed_metric_fails_both_sides_of_the_equivalence() {
        let chart = catalog::perturbed(3, 0.3).unwrap();
        let fam = AdmissibleFamily::schouten(&chart).unwrap();
        let im = Immersion::new(&chart, &fam, ScalarField::zero(3));
        let points = grid::random_points(chart.domain(), 10, 7);
        let report = im.umbilic_einstein_check(&points, 1e-3).unwrap();
        assert!(!report.einstein && !report.umbilic);
        assert!(report.equivalence_consistent);
        assert!(report.einstein_residual > 1e-3 && report.umbilic_deviation > 1e-3);
    }
}
