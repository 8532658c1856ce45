//! Shared Levi-Civita assembly from pointwise metric derivative data.
//!
//! The chart module feeds these routines with exact symbolic derivatives of
//! the metric entries; the ambient module feeds them with derivative jets of
//! the Lorentzian Gram matrix. The finite-difference oracle in `fd` does NOT
//! use this code: it carries its own independently written assembly so the
//! two curvature paths stay honest cross-checks.

use nalgebra::DMatrix;

/// Dense 3-index array, indexed `(k, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    v: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 {
            n,
            v: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.v[(k * self.n + i) * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.v[(k * self.n + i) * self.n + j] = value;
    }

    /// Contraction against two vectors in the lower slots:
    /// `out^k = T^k_{ij} a^i b^j`.
    pub fn contract2(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += self.get(k, i, j) * a[i] * b[j];
                }
            }
            out[k] = acc;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Dense 4-index array, indexed `(a, b, c, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    v: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 {
            n,
            v: vec![0.0; n * n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.v[((a * self.n + b) * self.n + c) * self.n + d]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, value: f64) {
        self.v[((a * self.n + b) * self.n + c) * self.n + d] = value;
    }
}

/// Pointwise metric data with derivatives up to the order the caller needs.
/// `dg[m]` is the matrix of first derivatives along coordinate `m`,
/// `ddg[m][l]` the second derivatives, `dddg[m][l][p]` the third.
pub(crate) struct MetricJet {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
    pub ddg: Vec<Vec<DMatrix<f64>>>,
    pub dddg: Vec<Vec<Vec<DMatrix<f64>>>>,
}

/// `c_{l,ij} = d_i g_jl + d_j g_il - d_l g_ij`, the bracket of the
/// Levi-Civita coefficient formula.
#[inline]
fn bracket(dg: &[DMatrix<f64>], l: usize, i: usize, j: usize) -> f64 {
    dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]
}

#[inline]
fn dbracket(ddg: &[Vec<DMatrix<f64>>], m: usize, l: usize, i: usize, j: usize) -> f64 {
    ddg[m][i][(j, l)] + ddg[m][j][(i, l)] - ddg[m][l][(i, j)]
}

#[inline]
fn ddbracket(
    dddg: &[Vec<Vec<DMatrix<f64>>>],
    m: usize,
    q: usize,
    l: usize,
    i: usize,
    j: usize,
) -> f64 {
    dddg[m][q][i][(j, l)] + dddg[m][q][j][(i, l)] - dddg[m][q][l][(i, j)]
}

/// `Gamma^k_{ij} = 1/2 g^{kl} c_{l,ij}`.
pub(crate) fn christoffel(jet: &MetricJet) -> Tensor3 {
    let n = jet.g.nrows();
    let mut out = Tensor3::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += jet.ginv[(k, l)] * bracket(&jet.dg, l, i, j);
                }
                let v = 0.5 * acc;
                out.set(k, i, j, v);
                out.set(k, j, i, v);
            }
        }
    }
    out
}

/// `d_m g^{kl} = -(g^-1 d_m g g^-1)^{kl}`.
pub(crate) fn dginv(jet: &MetricJet) -> Vec<DMatrix<f64>> {
    jet.dg
        .iter()
        .map(|d| -(&jet.ginv * d * &jet.ginv))
        .collect()
}

pub(crate) fn ddginv(jet: &MetricJet, dginv: &[DMatrix<f64>]) -> Vec<Vec<DMatrix<f64>>> {
    let n = jet.dg.len();
    (0..n)
        .map(|m| {
            (0..n)
                .map(|l| {
                    -(&dginv[l] * &jet.dg[m] * &jet.ginv
                        + &jet.ginv * &jet.ddg[m][l] * &jet.ginv
                        + &jet.ginv * &jet.dg[m] * &dginv[l])
                })
                .collect()
        })
        .collect()
}

/// First derivatives of the Christoffel symbols, one `Tensor3` per coordinate.
pub(crate) fn dchristoffel(jet: &MetricJet, dginv: &[DMatrix<f64>]) -> Vec<Tensor3> {
    let n = jet.g.nrows();
    (0..n)
        .map(|m| {
            let mut out = Tensor3::zeros(n);
            for k in 0..n {
                for i in 0..n {
                    for j in i..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += dginv[m][(k, l)] * bracket(&jet.dg, l, i, j)
                                + jet.ginv[(k, l)] * dbracket(&jet.ddg, m, l, i, j);
                        }
                        let v = 0.5 * acc;
                        out.set(k, i, j, v);
                        out.set(k, j, i, v);
                    }
                }
            }
            out
        })
        .collect()
}

/// Second derivatives of the Christoffel symbols; requires third metric
/// derivatives in the jet.
pub(crate) fn ddchristoffel(
    jet: &MetricJet,
    dginv: &[DMatrix<f64>],
    ddginv: &[Vec<DMatrix<f64>>],
) -> Vec<Vec<Tensor3>> {
    let n = jet.g.nrows();
    (0..n)
        .map(|m| {
            (0..n)
                .map(|q| {
                    let mut out = Tensor3::zeros(n);
                    for k in 0..n {
                        for i in 0..n {
                            for j in i..n {
                                let mut acc = 0.0;
                                for l in 0..n {
                                    acc += ddginv[m][q][(k, l)] * bracket(&jet.dg, l, i, j)
                                        + dginv[m][(k, l)] * dbracket(&jet.ddg, q, l, i, j)
                                        + dginv[q][(k, l)] * dbracket(&jet.ddg, m, l, i, j)
                                        + jet.ginv[(k, l)] * ddbracket(&jet.dddg, m, q, l, i, j);
                                }
                                let v = 0.5 * acc;
                                out.set(k, i, j, v);
                                out.set(k, j, i, v);
                            }
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// Curvature operator components in the convention
/// `R(d_mu, d_nu) d_sigma = R^rho_{sigma mu nu} d_rho`:
/// `R^rho_{sigma mu nu} = d_mu Gamma^rho_{nu sigma} - d_nu Gamma^rho_{mu sigma}
///  + Gamma^rho_{mu lam} Gamma^lam_{nu sigma} - Gamma^rho_{nu lam} Gamma^lam_{mu sigma}`.
pub(crate) fn riemann(gamma: &Tensor3, dgamma: &[Tensor3]) -> Tensor4 {
    let n = gamma.dim();
    let mut out = Tensor4::zeros(n);
    for rho in 0..n {
        for sigma in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let mut acc = dgamma[mu].get(rho, nu, sigma) - dgamma[nu].get(rho, mu, sigma);
                    for lam in 0..n {
                        acc += gamma.get(rho, mu, lam) * gamma.get(lam, nu, sigma)
                            - gamma.get(rho, nu, lam) * gamma.get(lam, mu, sigma);
                    }
                    out.set(rho, sigma, mu, nu, acc);
                }
            }
        }
    }
    out
}

/// `Ric(V, W) = trace(Z -> R(Z, V) W)`, i.e.
/// `Ric_{ij} = d_k Gamma^k_{ij} - d_i Gamma^k_{kj}
///  + Gamma^k_{k lam} Gamma^lam_{ij} - Gamma^k_{i lam} Gamma^lam_{kj}`.
pub(crate) fn ricci(gamma: &Tensor3, dgamma: &[Tensor3]) -> DMatrix<f64> {
    let n = gamma.dim();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            acc += dgamma[k].get(k, i, j) - dgamma[i].get(k, k, j);
            for lam in 0..n {
                acc += gamma.get(k, k, lam) * gamma.get(lam, i, j)
                    - gamma.get(k, i, lam) * gamma.get(lam, k, j);
            }
        }
        acc
    })
}

/// Derivative of the Ricci tensor along each coordinate.
pub(crate) fn dricci(
    gamma: &Tensor3,
    dgamma: &[Tensor3],
    ddgamma: &[Vec<Tensor3>],
) -> Vec<DMatrix<f64>> {
    let n = gamma.dim();
    (0..n)
        .map(|m| {
            DMatrix::from_fn(n, n, |i, j| {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += ddgamma[m][k].get(k, i, j) - ddgamma[m][i].get(k, k, j);
                    for lam in 0..n {
                        acc += dgamma[m].get(k, k, lam) * gamma.get(lam, i, j)
                            + gamma.get(k, k, lam) * dgamma[m].get(lam, i, j)
                            - dgamma[m].get(k, i, lam) * gamma.get(lam, k, j)
                            - gamma.get(k, i, lam) * dgamma[m].get(lam, k, j);
                    }
                }
                acc
            })
        })
        .collect()
}

/// `trace_g m = g^{ij} m_{ij}`.
pub(crate) fn trace_against(ginv: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let n = ginv.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += ginv[(i, j)] * m[(i, j)];
        }
    }
    acc
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
