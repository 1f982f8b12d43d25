//! Girsanov likelihood ratios, Brownian reconstruction and the score along
//! an observed `Z` path.
//!
//! Stochastic integrals use left-point (Itô) sums on the sampling grid:
//! with `W = (sigma sigma^T)^{-1}` and `dm_k = Z_{k+1} - Z_k - [S(t_k) + b(Z_k)] h`,
//!
//! ```text
//! log LR(alt; ref) = sum_k (W dS_k)^T dm_k - 1/2 sum_k dS_k^T W dS_k h,   dS = S_alt - S_ref
//! dB_k             = W^{1/2} dm_k
//! score            = delta_n sum_k (W^{1/2} S-dot(t_k))^T dB_k
//! ```

use std::borrow::Cow;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LanError, Result};
use crate::linalg;
use crate::models::DiffusionModel;
use crate::signals::{ParamPoint, SdotBuffer, SignalModel};
use crate::trajectory::{Component, Role, Trajectory};

/// Symmetric positive definite inverse square root, `G^{-1/2}`.
pub fn matrix_inv_sqrt(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(linalg::spd_inverse_and_root(g)?.1)
}

/// `(sigma sigma^T)^{-1}` and its square root at every node of a path,
/// stored once when `sigma` is constant.
#[derive(Debug, Clone)]
pub struct PrecisionPath {
    n: usize,
    constant: bool,
    /// Row-major `N x N` blocks, one per node (or a single one).
    inv: Vec<f64>,
    root: Vec<f64>,
}

impl PrecisionPath {
    pub fn along(model: &dyn DiffusionModel, z: &Trajectory) -> Result<Self> {
        let (n, m) = (model.dim_n(), model.dim_m());
        let constant = model.constant_sigma();
        let nodes = if constant { 1 } else { z.rows() };
        let mut inv = Vec::with_capacity(nodes * n * n);
        let mut root = Vec::with_capacity(nodes * n * n);
        let mut sig = vec![0.0; n * m];
        for k in 0..nodes {
            model.sigma(z.row(k), &mut sig);
            let gram = linalg::gram_of_rows(n, m, &sig);
            let (gi, gr) =
                linalg::spd_inverse_and_root(&gram).map_err(|_| LanError::Ellipticity {
                    time: z.time(k),
                    min_eigenvalue: linalg::sym_eigenvalues(&gram)[0],
                })?;
            inv.extend(gi.transpose().iter());
            root.extend(gr.transpose().iter());
        }
        Ok(Self {
            n,
            constant,
            inv,
            root,
        })
    }

    fn block<'a>(&self, data: &'a [f64], k: usize) -> &'a [f64] {
        let nn = self.n * self.n;
        let k = if self.constant { 0 } else { k };
        &data[k * nn..(k + 1) * nn]
    }

    /// `(sigma sigma^T)^{-1}(Z_k)`, row-major.
    pub fn inv(&self, k: usize) -> &[f64] {
        self.block(&self.inv, k)
    }

    /// `(sigma sigma^T)^{-1/2}(Z_k)`, row-major.
    pub fn root(&self, k: usize) -> &[f64] {
        self.block(&self.root, k)
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }
}

fn mat_vec(a: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i * n..(i + 1) * n]
            .iter()
            .zip(v)
            .map(|(x, y)| x * y)
            .sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `Z` columns of a trajectory, borrowed when it holds nothing else.
fn z_only(traj: &Trajectory) -> Result<Cow<'_, Trajectory>> {
    if traj.columns().iter().all(|c| c.role == Role::Z) {
        Ok(Cow::Borrowed(traj))
    } else {
        Ok(Cow::Owned(traj.z_block()?))
    }
}

/// An observed `Z` path with everything that does not depend on the
/// parameter precomputed: `(sigma sigma^T)^{-1}`, its root and
/// `dY_k = Z_{k+1} - Z_k - b(Z_k) h`.
#[derive(Debug, Clone)]
pub struct PathContext<'a> {
    z: Cow<'a, Trajectory>,
    precision: PrecisionPath,
    /// Row-major `K x N`.
    dy: Vec<f64>,
    n: usize,
}

impl<'a> PathContext<'a> {
    pub fn new(model: &dyn DiffusionModel, traj: &'a Trajectory) -> Result<Self> {
        let z = z_only(traj)?;
        let n = model.dim_n();
        if z.dim() != n {
            return Err(LanError::Dimension(format!(
                "path has {} Z columns, model has N = {n}",
                z.dim()
            )));
        }
        if z.rows() < 2 {
            return Err(LanError::EmptyInput("path has no increments".into()));
        }
        let precision = PrecisionPath::along(model, &z)?;
        let h = z.step();
        let mut dy = Vec::with_capacity(z.steps() * n);
        let mut bz = vec![0.0; n];
        for k in 0..z.steps() {
            let (a, b) = (z.row(k), z.row(k + 1));
            model.b(a, &mut bz);
            dy.extend((0..n).map(|i| b[i] - a[i] - bz[i] * h));
        }
        Ok(Self {
            z,
            precision,
            dy,
            n,
        })
    }

    pub fn path(&self) -> &Trajectory {
        &self.z
    }

    pub fn precision(&self) -> &PrecisionPath {
        &self.precision
    }

    pub fn step(&self) -> f64 {
        self.z.step()
    }

    /// Total number of increments.
    pub fn steps(&self) -> usize {
        self.z.steps()
    }

    pub fn dim_n(&self) -> usize {
        self.n
    }

    /// `Z_{k+1} - Z_k - b(Z_k) h`.
    pub fn dy(&self, k: usize) -> &[f64] {
        &self.dy[k * self.n..(k + 1) * self.n]
    }

    /// The first `steps` rows of `dY`, row-major.
    pub fn dy_rows(&self, steps: usize) -> &[f64] {
        &self.dy[..steps * self.n]
    }

    /// Number of increments covering `[0, horizon]`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        let k = self.z.node_at(horizon);
        if !(horizon > 0.0) || k > self.steps() || k == 0 {
            return Err(LanError::InvalidParameter(format!(
                "horizon {horizon} outside (0, {}]",
                self.z.horizon()
            )));
        }
        Ok(k)
    }

    fn check(&self, signal: &dyn SignalModel, p: &ParamPoint) -> Result<()> {
        if signal.dim_n() != self.n || signal.dim_d() != p.dim() {
            return Err(LanError::Dimension(format!(
                "signal ({} x {}) does not match the path (N = {}) and parameter (D = {})",
                signal.dim_n(),
                signal.dim_d(),
                self.n,
                p.dim()
            )));
        }
        Ok(())
    }

    /// Martingale increments under `p` over the first `steps` increments.
    pub fn martingale_part(
        &self,
        signal: &dyn SignalModel,
        p: &ParamPoint,
        steps: usize,
    ) -> Result<MartingaleIncrements> {
        self.check(signal, p)?;
        let steps = steps.min(self.steps());
        let h = self.step();
        let n = self.n;
        let mut s = vec![0.0; n];
        let mut dm = Vec::with_capacity(steps * n);
        for k in 0..steps {
            signal.eval(p.theta(), self.z.time(k) / p.period(), &mut s);
            let dy = self.dy(k);
            dm.extend((0..n).map(|i| dy[i] - s[i] * h));
        }
        Ok(MartingaleIncrements { step: h, n, dm })
    }

    /// `dB_k = (sigma sigma^T)^{-1/2}(Z_k) dm_k`, row-major `K x N`.
    pub fn brownian_increments(&self, dm: &MartingaleIncrements) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; dm.dm.len()];
        for (k, (o, d)) in out.chunks_mut(n).zip(dm.dm.chunks(n)).enumerate() {
            mat_vec(self.precision.root(k), d, o);
        }
        out
    }

    /// Log-likelihood ratio of `p_alt` against `p_ref` over the first
    /// `steps` increments.
    pub fn log_lr(
        &self,
        signal: &dyn SignalModel,
        p_alt: &ParamPoint,
        p_ref: &ParamPoint,
        steps: usize,
    ) -> Result<LogLikelihoodRatio> {
        self.check(signal, p_alt)?;
        self.check(signal, p_ref)?;
        let steps = steps.min(self.steps());
        let h = self.step();
        let n = self.n;
        let (mut sa, mut sr, mut ds, mut wds, mut dm) = (
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        );
        let (mut mart, mut quad) = (0.0, 0.0);
        for k in 0..steps {
            let t = self.z.time(k);
            signal.eval(p_alt.theta(), t / p_alt.period(), &mut sa);
            signal.eval(p_ref.theta(), t / p_ref.period(), &mut sr);
            let dy = self.dy(k);
            for i in 0..n {
                ds[i] = sa[i] - sr[i];
                dm[i] = dy[i] - sr[i] * h;
            }
            mat_vec(self.precision.inv(k), &ds, &mut wds);
            mart += dot(&wds, &dm);
            quad += dot(&wds, &ds) * h;
        }
        let quadratic_term = 0.5 * quad;
        let value = mart - quadratic_term;
        if !value.is_finite() {
            return Err(LanError::NonFinite {
                context: "log-likelihood ratio".into(),
                time: self.z.time(steps),
            });
        }
        Ok(LogLikelihoodRatio {
            value,
            martingale_term: mart,
            quadratic_term,
        })
    }

    /// `sum_k (W^{1/2} S-dot(t_k))^T dB_k` over the first `steps` increments,
    /// without the local scaling.
    pub fn score_integral(
        &self,
        signal: &dyn SignalModel,
        p: &ParamPoint,
        steps: usize,
    ) -> Result<Vec<f64>> {
        self.check(signal, p)?;
        let steps = steps.min(self.steps());
        let (n, d) = (self.n, p.dim());
        let h = self.step();
        let mut buf = SdotBuffer::new(n, d);
        let (mut sdot, mut s, mut dm, mut db) = (
            vec![0.0; n * (d + 1)],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        );
        let mut acc = vec![0.0; d + 1];
        let mut col = vec![0.0; n];
        let mut rcol = vec![0.0; n];
        for k in 0..steps {
            let t = self.z.time(k);
            signal.eval(p.theta(), t / p.period(), &mut s);
            let dy = self.dy(k);
            for i in 0..n {
                dm[i] = dy[i] - s[i] * h;
            }
            let root = self.precision.root(k);
            mat_vec(root, &dm, &mut db);
            buf.fill(signal, p, t, &mut sdot);
            for (j, a) in acc.iter_mut().enumerate() {
                for i in 0..n {
                    col[i] = sdot[i * (d + 1) + j];
                }
                mat_vec(root, &col, &mut rcol);
                *a += dot(&rcol, &db);
            }
        }
        Ok(acc)
    }
}

/// Discretized martingale part, row-major `K x N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleIncrements {
    pub step: f64,
    pub n: usize,
    pub dm: Vec<f64>,
}

impl MartingaleIncrements {
    pub fn len(&self) -> usize {
        self.dm.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.dm.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.dm[k * self.n..(k + 1) * self.n]
    }
}

/// A log-likelihood ratio with its two constituents:
/// `value = martingale_term - quadratic_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLikelihoodRatio {
    pub value: f64,
    pub martingale_term: f64,
    pub quadratic_term: f64,
}

/// `dm_k = Z_{k+1} - Z_k - [S(t_k) + b(Z_k)] h` over the whole path.
pub fn martingale_part(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
) -> Result<MartingaleIncrements> {
    let ctx = PathContext::new(model, z_traj)?;
    ctx.martingale_part(signal, p, ctx.steps())
}

/// `B_t = int_0^t (sigma sigma^T)^{-1/2}(Z_s) dm_s` as a path with `b`
/// columns starting at 0.
pub fn brownian_reconstruct(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
) -> Result<Trajectory> {
    let ctx = PathContext::new(model, z_traj)?;
    let dm = ctx.martingale_part(signal, p, ctx.steps())?;
    let db = ctx.brownian_increments(&dm);
    let n = ctx.dim_n();
    let mut values = Vec::with_capacity(db.len() + n);
    let mut acc = vec![0.0; n];
    values.extend_from_slice(&acc);
    for row in db.chunks(n) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        values.extend_from_slice(&acc);
    }
    Trajectory::new(
        ctx.step(),
        (0..n).map(Component::b).collect(),
        values,
        z_traj.seed(),
    )
}

pub fn log_likelihood_ratio(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p_alt: &ParamPoint,
    p_ref: &ParamPoint,
) -> Result<LogLikelihoodRatio> {
    let ctx = PathContext::new(model, z_traj)?;
    ctx.log_lr(signal, p_alt, p_ref, ctx.steps())
}

/// `delta_n = diag(n^{-1/2}, ..., n^{-1/2}, n^{-3/2})` applied to a vector of
/// length `D + 1`.
pub fn apply_local_scale(v: &[f64], n: f64) -> Vec<f64> {
    let d = v.len() - 1;
    v.iter()
        .enumerate()
        .map(|(j, x)| {
            if j < d {
                x / n.sqrt()
            } else {
                x / (n * n.sqrt())
            }
        })
        .collect()
}

/// Unscaled score integral over `[0, n]`.
pub fn score_integral(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    n: f64,
) -> Result<Vec<f64>> {
    let ctx = PathContext::new(model, z_traj)?;
    let steps = ctx.steps_for(n)?;
    ctx.score_integral(signal, p, steps)
}

/// The score `S_n = delta_n int_0^n ((sigma sigma^T)^{-1/2} S-dot)^T dB`.
pub fn score_statistic(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    n: f64,
) -> Result<Vec<f64>> {
    Ok(apply_local_scale(
        &score_integral(z_traj, model, signal, p, n)?,
        n,
    ))
}
