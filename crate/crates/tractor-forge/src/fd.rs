//! Finite-difference curvature oracle.
//!
//! Everything in this module is intentionally independent of the analytic
//! curvature path: derivatives come from second-order central stencils on
//! metric *values* only, and the curvature assembly goes through the lowered
//! (0,4) tensor
//! `R_{rho sigma mu nu} = 1/2 (d_mu d_sigma g_{nu rho} + d_nu d_rho g_{sigma mu}
//!   - d_mu d_rho g_{sigma nu} - d_nu d_sigma g_{rho mu})
//!   + g_{ab} (Gamma^b_{nu rho} Gamma^a_{mu sigma} - Gamma^b_{mu rho} Gamma^a_{nu sigma})`
//! rather than through derivatives of the Christoffel symbols. Agreement with
//! the symbolic path is therefore a real cross-check, not a shared-code echo.

use nalgebra::{Cholesky, DMatrix};

use crate::chart::{CurvaturePack, MetricChart};
use crate::curv::{Tensor3, Tensor4};
use crate::error::Error;
use crate::Result;

/// Default step for the curvature stencils.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Central difference of a scalar function of one variable.
pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Curvature package computed with nested central finite differences of the
/// metric values, step `h`. The point must be at distance >= 2h from the
/// domain boundary.
pub fn curvature_fd_oracle(chart: &MetricChart, x: &[f64], h: f64) -> Result<CurvaturePack> {
    let n = chart.dim();
    for (axis, (&xi, &(lo, hi))) in x.iter().zip(chart.domain()).enumerate() {
        if xi - lo < 2.0 * h || hi - xi < 2.0 * h {
            return Err(Error::BoundaryTooClose {
                point: x.to_vec(),
                axis,
                min_dist: 2.0 * h,
            });
        }
    }

    let metric = |y: &[f64]| chart.metric_at(y);
    let g = metric(x)?;
    let ginv = Cholesky::new(g.clone())
        .ok_or_else(|| Error::SingularMetric { point: x.to_vec() })?
        .inverse();

    // First derivatives: (g(x+h e_m) - g(x-h e_m)) / 2h.
    let mut dg: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for m in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[m] += h;
        xm[m] -= h;
        dg.push((metric(&xp)? - metric(&xm)?) / (2.0 * h));
    }

    // Second derivatives: diagonal and mixed central stencils.
    let mut ddg: Vec<Vec<DMatrix<f64>>> = vec![vec![DMatrix::zeros(n, n); n]; n];
    for m in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[m] += h;
        xm[m] -= h;
        ddg[m][m] = (metric(&xp)? - &g * 2.0 + metric(&xm)?) / (h * h);
        for l in (m + 1)..n {
            let displaced = |sm: f64, sl: f64| -> Result<DMatrix<f64>> {
                let mut y = x.to_vec();
                y[m] += sm * h;
                y[l] += sl * h;
                metric(&y)
            };
            let mixed = (displaced(1.0, 1.0)? - displaced(1.0, -1.0)? - displaced(-1.0, 1.0)?
                + displaced(-1.0, -1.0)?)
                / (4.0 * h * h);
            ddg[m][l] = mixed.clone();
            ddg[l][m] = mixed;
        }
    }

    // Christoffel symbols from the FD first derivatives.
    let mut gamma = Tensor3::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma.set(k, i, j, 0.5 * acc);
            }
        }
    }

    // Lowered curvature tensor from second derivatives plus Gamma*Gamma terms.
    let mut riem_low = Tensor4::zeros(n);
    for rho in 0..n {
        for sigma in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let mut acc = 0.5
                        * (ddg[mu][sigma][(nu, rho)] + ddg[nu][rho][(sigma, mu)]
                            - ddg[mu][rho][(sigma, nu)]
                            - ddg[nu][sigma][(rho, mu)]);
                    for a in 0..n {
                        for b in 0..n {
                            acc += g[(a, b)]
                                * (gamma.get(b, nu, rho) * gamma.get(a, mu, sigma)
                                    - gamma.get(b, mu, rho) * gamma.get(a, nu, sigma));
                        }
                    }
                    riem_low.set(rho, sigma, mu, nu, acc);
                }
            }
        }
    }

    // Raise the first slot, then contract for Ricci and the scalar.
    let mut riem = Tensor4::zeros(n);
    for rho in 0..n {
        for sigma in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += ginv[(rho, a)] * riem_low.get(a, sigma, mu, nu);
                    }
                    riem.set(rho, sigma, mu, nu, acc);
                }
            }
        }
    }
    let ric = DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            acc += riem.get(k, j, k, i);
        }
        acc
    });
    let mut scalar = 0.0;
    for i in 0..n {
        for j in 0..n {
            scalar += ginv[(i, j)] * ric[(i, j)];
        }
    }

    let nf = n as f64;
    let (schouten, schouten_hat, gauss) = if n >= 3 {
        let p = (&ric - &g * (scalar / (2.0 * (nf - 1.0)))) / (nf - 2.0);
        let p_hat = &ginv * &p;
        (Some(p), Some(p_hat), None)
    } else {
        (None, None, Some(scalar / 2.0))
    };
    Ok(CurvaturePack::assemble(
        x.to_vec(),
        g,
        ginv,
        gamma,
        riem,
        ric,
        scalar,
        schouten,
        schouten_hat,
        gauss,
    ))
}
