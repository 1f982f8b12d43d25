//! Ergodic estimates of the bilinear form `B_G[u, v]` and the Fisher
//! information block matrix.
//!
//! For a path observed on `[0, t]`,
//!
//! ```text
//! B_G^(k)(t)[u, v] = (k+1) / t^{k+1} int_0^t s^k u(s/T)^T G^{-1}(Z_s) v(s/T) ds
//! ```
//!
//! converges to `B_G[u, v]` for every `k >= 0`. The Fisher matrix is
//!
//! ```text
//! I(t) = [ t B[dS, dS]                -t^2/(2T^2) B[dS, S']   ]
//!        [ -t^2/(2T^2) B[S', dS]      t^3/(3T^4) B[S', S']    ]
//! ```
//!
//! with `dS = D_theta S_theta`, and its `t`-derivative
//! `I'(t) = [B[dS,dS], -t T^{-2} B[dS,S']; ., t^2 T^{-4} B[S',S']]`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LanError, Result};
use crate::likelihood::PathContext;
use crate::linalg;
use crate::models::DiffusionModel;
use crate::signals::{ParamPoint, SignalModel};
use crate::trajectory::Trajectory;

/// Left-point estimate of `B_G^(k)(t)[u, v]` along the `Z` columns of
/// `z_traj`. `u` and `v` are 1-periodic and evaluated at `s / T`; `g`
/// writes the row-major `N x N` matrix `G(z)`.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_form_estimate(
    z_traj: &Trajectory,
    u: &dyn Fn(f64, &mut [f64]),
    v: &dyn Fn(f64, &mut [f64]),
    g: &dyn Fn(&[f64], &mut [f64]),
    p: &ParamPoint,
    k: u32,
    t: f64,
) -> Result<f64> {
    let z = z_traj.z_block()?;
    let n = z.dim();
    let steps = z.node_at(t);
    if !(t > 0.0) || steps == 0 || steps > z.steps() {
        return Err(LanError::InvalidParameter(format!(
            "horizon {t} outside (0, {}]",
            z.horizon()
        )));
    }
    let h = z.step();
    let (mut uu, mut vv, mut gz) = (vec![0.0; n], vec![0.0; n], vec![0.0; n * n]);
    let mut acc = 0.0;
    for j in 0..steps {
        let s = z.time(j);
        g(z.row(j), &mut gz);
        let gm = linalg::from_row_major(n, n, &gz);
        let (ginv, _) = linalg::spd_inverse_and_root(&gm).map_err(|_| LanError::Ellipticity {
            time: s,
            min_eigenvalue: linalg::sym_eigenvalues(&gm)[0],
        })?;
        u(s / p.period(), &mut uu);
        v(s / p.period(), &mut vv);
        let mut q = 0.0;
        for a in 0..n {
            for b in 0..n {
                q += uu[a] * ginv[(a, b)] * vv[b];
            }
        }
        acc += s.powi(k as i32) * q * h;
    }
    Ok(acc * (k + 1) as f64 / t.powi(k as i32 + 1))
}

/// Whether a [`FisherMatrix`] holds `I(t)` or `I'(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FisherKind {
    Information,
    Derivative,
}

/// Symmetric `(D+1) x (D+1)` matrix `I(t)` or `I'(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherMatrix {
    pub entries: Vec<Vec<f64>>,
    pub t: f64,
    pub kind: FisherKind,
}

impl FisherMatrix {
    fn from_matrix(m: &DMatrix<f64>, t: f64, kind: FisherKind) -> Self {
        Self {
            entries: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
            t,
            kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.entries[i][j])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[i][i]).sum()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.matrix())
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        Ok(linalg::spd_inverse_and_root(&self.matrix())?.0)
    }

    /// `1/2 h^T I h`.
    pub fn half_quadratic_form(&self, h: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += h[i] * self.entries[i][j] * h[j];
            }
        }
        0.5 * acc
    }
}

/// The three ergodic block estimates taken in one pass over a path:
/// `dd = B^(0)[dS, dS]`, `ds = B^(1)[dS, S']`, `ss = B^(2)[S', S']`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEstimate {
    pub dd: Vec<Vec<f64>>,
    pub ds: Vec<f64>,
    pub ss: f64,
    /// Horizon of the estimating path.
    pub horizon: f64,
    pub period: f64,
}

impl BlockEstimate {
    /// Estimate along the first `horizon` time units of the path in `ctx`.
    pub fn from_path(
        ctx: &PathContext<'_>,
        signal: &dyn SignalModel,
        p: &ParamPoint,
        horizon: f64,
    ) -> Result<Self> {
        let steps = ctx.steps_for(horizon)?;
        let (n, d) = (ctx.dim_n(), p.dim());
        if signal.dim_n() != n || signal.dim_d() != d {
            return Err(LanError::Dimension(
                "signal does not match the path and parameter".into(),
            ));
        }
        let h = ctx.step();
        let t = steps as f64 * h;
        let mut grad = vec![0.0; n * d];
        let mut deriv = vec![0.0; n];
        let mut wg = vec![0.0; n * d];
        let mut wd = vec![0.0; n];
        let mut dd = vec![0.0; d * d];
        let mut ds = vec![0.0; d];
        let mut ss = 0.0;
        for j in 0..steps {
            let s = ctx.path().time(j);
            let u = s / p.period();
            signal.grad_theta(p.theta(), u, &mut grad);
            signal.time_deriv(p.theta(), u, &mut deriv);
            let w = ctx.precision().inv(j);
            // W * grad (N x D) and W * deriv (N)
            for a in 0..n {
                for c in 0..d {
                    wg[a * d + c] = (0..n).map(|b| w[a * n + b] * grad[b * d + c]).sum();
                }
                wd[a] = (0..n).map(|b| w[a * n + b] * deriv[b]).sum();
            }
            for a in 0..d {
                for c in 0..d {
                    dd[a * d + c] +=
                        h * (0..n).map(|i| grad[i * d + a] * wg[i * d + c]).sum::<f64>();
                }
                ds[a] += h * s * (0..n).map(|i| grad[i * d + a] * wd[i]).sum::<f64>();
            }
            ss += h * s * s * (0..n).map(|i| deriv[i] * wd[i]).sum::<f64>();
        }
        let dd = (0..d)
            .map(|a| (0..d).map(|c| dd[a * d + c] / t).collect())
            .collect();
        let ds = ds.iter().map(|v| 2.0 * v / (t * t)).collect();
        Ok(Self {
            dd,
            ds,
            ss: 3.0 * ss / (t * t * t),
            horizon: t,
            period: p.period(),
        })
    }

    /// Exact blocks `B[dS, dS]`, `B[dS, S']`, `B[S', S']` for a given
    /// limiting form; every `k` shares the same value.
    pub fn from_limits(dd: Vec<Vec<f64>>, ds: Vec<f64>, ss: f64, period: f64) -> Self {
        Self {
            dd,
            ds,
            ss,
            horizon: f64::INFINITY,
            period,
        }
    }

    fn dim(&self) -> usize {
        self.ds.len() + 1
    }

    fn assemble(
        &self,
        diag: f64,
        cross: f64,
        corner: f64,
        t: f64,
        kind: FisherKind,
    ) -> FisherMatrix {
        let d = self.ds.len();
        let mut m = DMatrix::zeros(d + 1, d + 1);
        for a in 0..d {
            for c in 0..d {
                m[(a, c)] = diag * self.dd[a][c];
            }
            m[(a, d)] = cross * self.ds[a];
            m[(d, a)] = cross * self.ds[a];
        }
        m[(d, d)] = corner * self.ss;
        FisherMatrix::from_matrix(&m, t, kind)
    }

    /// `I(t)` from these block estimates.
    pub fn fisher(&self, t: f64) -> FisherMatrix {
        let tp = self.period;
        self.assemble(
            t,
            -t * t / (2.0 * tp * tp),
            t.powi(3) / (3.0 * tp.powi(4)),
            t,
            FisherKind::Information,
        )
    }

    /// `I'(t)` from these block estimates.
    pub fn fisher_derivative(&self, t: f64) -> FisherMatrix {
        let tp = self.period;
        self.assemble(
            1.0,
            -t / (tp * tp),
            t * t / tp.powi(4),
            t,
            FisherKind::Derivative,
        )
    }

    /// `max |int_0^t I'(s) ds - I(t)|` with the integral taken by three-point
    /// Gauss–Legendre, exact for the polynomial prefactors.
    pub fn derivative_consistency(&self, t: f64) -> f64 {
        let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let d = self.dim();
        let mut integral = DMatrix::<f64>::zeros(d, d);
        for (x, w) in nodes.iter().zip(weights) {
            let s = 0.5 * t * (x + 1.0);
            integral += self.fisher_derivative(s).matrix() * (0.5 * t * w);
        }
        (integral - self.fisher(t).matrix()).abs().max()
    }
}

/// `I(t)` with the bilinear form estimated along the path up to time `t`.
pub fn fisher_matrix(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    t: f64,
) -> Result<FisherMatrix> {
    let ctx = PathContext::new(model, z_traj)?;
    Ok(BlockEstimate::from_path(&ctx, signal, p, t)?.fisher(t))
}

/// `I'(t)` with the bilinear form estimated along the path up to time `t`.
pub fn fisher_derivative(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    t: f64,
) -> Result<FisherMatrix> {
    let ctx = PathContext::new(model, z_traj)?;
    Ok(BlockEstimate::from_path(&ctx, signal, p, t)?.fisher_derivative(t))
}

/// Smallest eigenvalues of `I(t)` and `I'(t)` against `tol * trace`.
#[derive(Debug, Clone, Serialize)]
pub struct S5PrimeReport {
    pub min_eigenvalue_information: f64,
    pub min_eigenvalue_derivative: f64,
    pub information_invertible: bool,
    pub derivative_invertible: bool,
    pub passed: bool,
}

pub fn check_s5prime(info: &FisherMatrix, deriv: &FisherMatrix, tol: f64) -> S5PrimeReport {
    let check = |m: &FisherMatrix| {
        let ev = m.eigenvalues()[0];
        let tr = m.trace();
        (ev, tr > 0.0 && ev > tol * tr)
    };
    let (ei, oi) = check(info);
    let (ed, od) = check(deriv);
    S5PrimeReport {
        min_eigenvalue_information: ei,
        min_eigenvalue_derivative: ed,
        information_invertible: oi,
        derivative_invertible: od,
        passed: oi && od,
    }
}

/// Both sides of `sum_k k (theta_k^2 + theta_{k+d}^2) != alpha sum_k k^2 theta_{k+d}^2`
/// for `alpha = 3, 4`.
#[derive(Debug, Clone, Serialize)]
pub struct FourierInvertibility {
    pub lhs: f64,
    /// `alpha * sum_k k^2 theta_{k+d}^2` for `alpha = 3` and `alpha = 4`.
    pub rhs: [f64; 2],
    pub holds: [bool; 2],
    pub passed: bool,
}

/// Relative margin required to call the two sides different.
/// Default length of an ergodic estimation path, in periods.
pub const DEFAULT_ESTIMATION_PERIODS: f64 = 1000.0;

pub const FOURIER_MARGIN: f64 = 1e-9;

/// `theta = (theta_1..theta_d, theta_{d+1}..theta_{2d})` holds the sine and
/// cosine coefficients of the normalized Fourier expansion.
pub fn check_fourier_invertibility(theta: &[f64]) -> Result<FourierInvertibility> {
    if theta.is_empty() || !theta.len().is_multiple_of(2) {
        return Err(LanError::Dimension(format!(
            "expected 2d coefficients, got {}",
            theta.len()
        )));
    }
    let d = theta.len() / 2;
    let mut lhs = 0.0;
    let mut base = 0.0;
    for k in 1..=d {
        let (a, c) = (theta[k - 1], theta[k - 1 + d]);
        let kf = k as f64;
        lhs += kf * (a * a + c * c);
        base += kf * kf * c * c;
    }
    let rhs = [3.0 * base, 4.0 * base];
    let holds = rhs.map(|r| (lhs - r).abs() > FOURIER_MARGIN * lhs.abs().max(r.abs()));
    Ok(FourierInvertibility {
        lhs,
        rhs,
        holds,
        passed: holds[0] && holds[1],
    })
}

/// Closed-form limits for models with constant `sigma`, where `G^{-1}` is
/// constant and `B` reduces to an `L^2([0, 1])` inner product.
pub mod oracle {
    use super::*;
    use crate::quadrature::{simpson_rule, DEFAULT_POINTS_PER_PERIOD};

    /// Limiting block values under a constant precision matrix `w`
    /// (row-major `N x N`).
    pub fn l2_blocks(signal: &dyn SignalModel, p: &ParamPoint, w: &[f64]) -> Result<BlockEstimate> {
        let (n, d) = (signal.dim_n(), p.dim());
        if w.len() != n * n {
            return Err(LanError::Dimension(
                "precision matrix has the wrong size".into(),
            ));
        }
        let mut grad = vec![0.0; n * d];
        let mut deriv = vec![0.0; n];
        let quad = |a: &[f64], b: &[f64]| -> f64 {
            (0..n)
                .map(|i| (0..n).map(|j| a[i] * w[i * n + j] * b[j]).sum::<f64>())
                .sum()
        };
        let mut dd = vec![vec![0.0; d]; d];
        let mut ds = vec![0.0; d];
        let mut ss = 0.0;
        let mut ca = vec![0.0; n];
        let mut cb = vec![0.0; n];
        for (s, wt) in simpson_rule(0.0, 1.0, DEFAULT_POINTS_PER_PERIOD) {
            signal.grad_theta(p.theta(), s, &mut grad);
            signal.time_deriv(p.theta(), s, &mut deriv);
            for a in 0..d {
                for i in 0..n {
                    ca[i] = grad[i * d + a];
                }
                for c in 0..d {
                    for i in 0..n {
                        cb[i] = grad[i * d + c];
                    }
                    dd[a][c] += wt * quad(&ca, &cb);
                }
                ds[a] += wt * quad(&ca, &deriv);
            }
            ss += wt * quad(&deriv, &deriv);
        }
        Ok(BlockEstimate::from_limits(dd, ds, ss, p.period()))
    }

    /// `(sigma sigma^T)^{-1}`, row-major, for a model with constant `sigma`.
    pub fn constant_precision(model: &dyn DiffusionModel) -> Result<Vec<f64>> {
        if !model.constant_sigma() {
            return Err(LanError::InvalidParameter(
                "closed-form Fisher needs a constant sigma".into(),
            ));
        }
        let (n, m) = (model.dim_n(), model.dim_m());
        let mut sig = vec![0.0; n * m];
        model.sigma(&vec![0.0; n], &mut sig);
        let (inv, _) = linalg::spd_inverse_and_root(&linalg::gram_of_rows(n, m, &sig))?;
        Ok(inv.transpose().iter().copied().collect())
    }

    /// Limiting `I(t)` for a model with constant `sigma`.
    pub fn l2_fisher(
        model: &dyn DiffusionModel,
        signal: &dyn SignalModel,
        p: &ParamPoint,
        t: f64,
    ) -> Result<FisherMatrix> {
        Ok(l2_blocks(signal, p, &constant_precision(model)?)?.fisher(t))
    }
}
