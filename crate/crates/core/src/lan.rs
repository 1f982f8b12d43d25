//! Local asymptotic normality experiments: local parameters, the
//! decomposition `log LR = h^T S_n - 1/2 h^T I h + remainder`, score
//! covariance, remainder decay, joint maximum likelihood for `(theta, T)`
//! and rate checks.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{LanError, Result};
use crate::fisher::{BlockEstimate, FisherMatrix};
use crate::likelihood::{apply_local_scale, PathContext};
use crate::linalg;
use crate::models::DiffusionModel;
use crate::noise::derive_seed;
use crate::par::{self, Execution};
use crate::signals::{FourierSignal, ParamPoint, SignalModel};
use crate::simulate::simulate_external;
use crate::trajectory::Trajectory;

/// `(theta, T) + delta_n h` with `delta_n = diag(n^{-1/2}, ..., n^{-3/2})`.
pub fn local_parameter(p: &ParamPoint, h: &[f64], n: f64) -> Result<ParamPoint> {
    if h.len() != p.dim() + 1 {
        return Err(LanError::Dimension(format!(
            "h has length {}, expected {}",
            h.len(),
            p.dim() + 1
        )));
    }
    if !(n > 0.0) {
        return Err(LanError::InvalidParameter(format!(
            "n must be positive, got {n}"
        )));
    }
    let shift = apply_local_scale(h, n);
    let theta = p.theta().iter().zip(&shift).map(|(a, b)| a + b).collect();
    let period = p.period() + shift[p.dim()];
    if !(period > 0.0) {
        return Err(LanError::InvalidParameter(format!(
            "local period {period} is not positive"
        )));
    }
    ParamPoint::new(theta, period)
}

/// `log_lr = linear_term - quadratic_term + remainder`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanDecomposition {
    pub log_lr: f64,
    /// `h^T S_n`.
    pub linear_term: f64,
    /// `1/2 h^T I h`.
    pub quadratic_term: f64,
    pub remainder: f64,
    pub n: f64,
    pub h: Vec<f64>,
}

/// Fisher matrix used in the quadratic term.
#[derive(Debug, Clone)]
pub enum FisherSource {
    /// `I_n(1)`: blocks estimated along the same path over `[0, n]`.
    Ergodic,
    Given(FisherMatrix),
}

fn decompose(
    ctx: &PathContext<'_>,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    h: &[f64],
    n: f64,
    fisher: &FisherSource,
) -> Result<LanDecomposition> {
    let steps = ctx.steps_for(n)?;
    let alt = local_parameter(p, h, n)?;
    let log_lr = ctx.log_lr(signal, &alt, p, steps)?.value;
    let score = apply_local_scale(&ctx.score_integral(signal, p, steps)?, n);
    let linear_term: f64 = h.iter().zip(&score).map(|(a, b)| a * b).sum();
    let quadratic_term = match fisher {
        FisherSource::Ergodic => BlockEstimate::from_path(ctx, signal, p, n)?
            .fisher(1.0)
            .half_quadratic_form(h),
        FisherSource::Given(m) => {
            if m.dim() != h.len() {
                return Err(LanError::Dimension("Fisher matrix does not match h".into()));
            }
            m.half_quadratic_form(h)
        }
    };
    let remainder = (log_lr - linear_term) + quadratic_term;
    Ok(LanDecomposition {
        log_lr,
        linear_term,
        quadratic_term,
        remainder,
        n,
        h: h.to_vec(),
    })
}

/// Decompose the log-likelihood ratio of `local_parameter(p, h, n)` against
/// `p` on `[0, n]`.
pub fn lan_decomposition(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    h: &[f64],
    n: f64,
    fisher: &FisherSource,
) -> Result<LanDecomposition> {
    let ctx = PathContext::new(model, z_traj)?;
    decompose(&ctx, signal, p, h, n, fisher)
}

/// Shared setup of the Monte Carlo experiments: paths of the external input
/// started at `z0` under `truth`, one child seed per replication.
#[derive(Debug, Clone, Copy)]
pub struct Experiment<'a> {
    pub model: &'a dyn DiffusionModel,
    pub signal: &'a dyn SignalModel,
    pub truth: &'a ParamPoint,
    pub z0: &'a [f64],
    pub step: f64,
    pub exec: Execution,
}

impl Experiment<'_> {
    pub fn replication_seed(seed: u64, index: usize) -> u64 {
        derive_seed(seed, index as u64)
    }

    pub fn simulate(&self, horizon: f64, seed: u64, index: usize) -> Result<Trajectory> {
        simulate_external(
            self.model,
            self.signal,
            self.truth,
            self.z0,
            horizon,
            self.step,
            Self::replication_seed(seed, index),
        )
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Monte Carlo summary of the score `S_n` over independent paths.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreCovReport {
    pub n: f64,
    pub replications: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub covariance_se: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    /// `(covariance - reference) / covariance_se`.
    pub covariance_z: Vec<Vec<f64>>,
    /// `mean / mean_se`.
    pub mean_z: Vec<f64>,
    pub skewness: Vec<f64>,
    /// Skewness over its standard error under normality, `sqrt(6 / R)`.
    pub skewness_z: Vec<f64>,
    pub kurtosis: Vec<f64>,
    /// `(kurtosis - 3) / sqrt(24 / R)`.
    pub kurtosis_z: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreCovReport {
    pub fn mean_within(&self, k: f64) -> bool {
        self.mean_z.iter().all(|z| z.abs() <= k)
    }

    pub fn covariance_within(&self, k: f64) -> bool {
        self.covariance_z.iter().flatten().all(|z| z.abs() <= k)
    }
}

pub const MIN_SCORE_REPLICATIONS: usize = 100;

/// Simulate `replications` paths of horizon `n` under the true parameter and
/// compare the empirical law of `S_n` with `N(0, reference)`.
pub fn score_covariance_experiment(
    exp: &Experiment<'_>,
    n: f64,
    replications: usize,
    seed: u64,
    reference: &FisherMatrix,
) -> Result<ScoreCovReport> {
    if replications < MIN_SCORE_REPLICATIONS {
        return Err(LanError::InvalidParameter(format!(
            "{replications} replications; at least {MIN_SCORE_REPLICATIONS} are needed"
        )));
    }
    let d1 = exp.truth.dim() + 1;
    if reference.dim() != d1 {
        return Err(LanError::Dimension(
            "reference matrix does not match the parameter".into(),
        ));
    }
    let scores = par::replicate(exp.exec, replications, |r| -> Result<Vec<f64>> {
        let path = exp.simulate(n, seed, r)?;
        let ctx = PathContext::new(exp.model, &path)?;
        let steps = ctx.steps_for(n)?;
        Ok(apply_local_scale(
            &ctx.score_integral(exp.signal, exp.truth, steps)?,
            n,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let rf = replications as f64;
    let cols: Vec<Vec<f64>> = (0..d1)
        .map(|j| scores.iter().map(|s| s[j]).collect())
        .collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let mean_se: Vec<f64> = cols.iter().map(|c| sample_std(c) / rf.sqrt()).collect();
    let mut covariance = vec![vec![0.0; d1]; d1];
    let mut covariance_se = vec![vec![0.0; d1]; d1];
    let mut covariance_z = vec![vec![0.0; d1]; d1];
    for i in 0..d1 {
        for j in 0..d1 {
            let prods: Vec<f64> = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / (rf - 1.0);
            let se = sample_std(&prods) / rf.sqrt();
            covariance[i][j] = c;
            covariance_se[i][j] = se;
            covariance_z[i][j] = (c - reference.get(i, j)) / se;
        }
    }
    let mut skewness = Vec::with_capacity(d1);
    let mut kurtosis = Vec::with_capacity(d1);
    for (j, c) in cols.iter().enumerate() {
        let m2 = c.iter().map(|x| (x - means[j]).powi(2)).sum::<f64>() / rf;
        let m3 = c.iter().map(|x| (x - means[j]).powi(3)).sum::<f64>() / rf;
        let m4 = c.iter().map(|x| (x - means[j]).powi(4)).sum::<f64>() / rf;
        skewness.push(m3 / m2.powf(1.5));
        kurtosis.push(m4 / (m2 * m2));
    }
    Ok(ScoreCovReport {
        n,
        replications,
        mean_z: means.iter().zip(&mean_se).map(|(m, s)| m / s).collect(),
        mean: means,
        mean_se,
        covariance,
        covariance_se,
        reference: reference.entries.clone(),
        covariance_z,
        skewness_z: skewness.iter().map(|s| s / (6.0 / rf).sqrt()).collect(),
        skewness,
        kurtosis_z: kurtosis
            .iter()
            .map(|k| (k - 3.0) / (24.0 / rf).sqrt())
            .collect(),
        kurtosis,
        scores,
    })
}

/// Summary of `|remainder|` at one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderRow {
    pub n: f64,
    pub median_abs: f64,
    pub p90_abs: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainderReport {
    pub h: Vec<f64>,
    pub rows: Vec<RemainderRow>,
    /// Medians strictly decrease along the horizons.
    pub medians_decreasing: bool,
    /// One decomposition per replication and horizon, replication-major.
    pub decompositions: Vec<Vec<LanDecomposition>>,
}

/// Each replication simulates one path up to the largest horizon and
/// decomposes the log-likelihood ratio on every initial segment `[0, n]`.
pub fn remainder_decay_experiment(
    exp: &Experiment<'_>,
    h: &[f64],
    n_list: &[f64],
    replications: usize,
    seed: u64,
    fisher: &FisherSource,
) -> Result<RemainderReport> {
    if n_list.is_empty() || replications == 0 {
        return Err(LanError::EmptyInput(
            "need horizons and replications".into(),
        ));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LanError::InvalidParameter("horizons must increase".into()));
    }
    let n_max = *n_list.last().unwrap();
    let decompositions = par::replicate(
        exp.exec,
        replications,
        |r| -> Result<Vec<LanDecomposition>> {
            let path = exp.simulate(n_max, seed, r)?;
            let ctx = PathContext::new(exp.model, &path)?;
            n_list
                .iter()
                .map(|&n| decompose(&ctx, exp.signal, exp.truth, h, n, fisher))
                .collect()
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let rows: Vec<RemainderRow> = n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let rem: Vec<f64> = decompositions.iter().map(|d| d[i].remainder).collect();
            let abs: Vec<f64> = rem.iter().map(|v| v.abs()).collect();
            RemainderRow {
                n,
                median_abs: quantile(&abs, 0.5),
                p90_abs: quantile(&abs, 0.9),
                mean: mean(&rem),
            }
        })
        .collect();
    let medians_decreasing = rows.windows(2).all(|w| w[1].median_abs < w[0].median_abs);
    Ok(RemainderReport {
        h: h.to_vec(),
        rows,
        medians_decreasing,
        decompositions,
    })
}

/// Search settings for [`mle_joint`].
#[derive(Debug, Clone, Serialize)]
pub struct MleSearch {
    /// Half-width of the period window around the initial period; defaults
    /// to `4 T^2 / n`, four likelihood lobes on each side.
    pub half_width: Option<f64>,
    /// Period grid spacing; defaults to a quarter lobe, `T^2 / (4 n)`.
    pub spacing: Option<f64>,
    /// Golden-section refinement around the best grid node.
    pub refine: bool,
    /// Finite-difference curvature at the optimum.
    pub curvature: bool,
}

impl Default for MleSearch {
    fn default() -> Self {
        Self {
            half_width: None,
            spacing: None,
            refine: true,
            curvature: true,
        }
    }
}

/// Joint estimate of `(theta, T)` with diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct MleResult {
    pub estimate: ParamPoint,
    /// `log LR(estimate; p_init)`.
    pub log_lr: f64,
    /// The best period is an end node of the window.
    pub at_boundary: bool,
    pub grid_nodes: usize,
    pub evaluations: usize,
    /// Euclidean norm of `d log LR / d theta` at the estimate.
    pub theta_gradient_norm: f64,
    /// `-Hessian` of `log LR` at the estimate by central differences.
    pub curvature: Option<Vec<Vec<f64>>>,
}

/// Sufficient statistics of the log-likelihood `l(p) = sum S^T W dY - 1/2 sum S^T W S h`
/// over the first `steps` increments.
struct Profile<'c, 'a> {
    ctx: &'c PathContext<'a>,
    signal: &'c dyn SignalModel,
    steps: usize,
    affine: bool,
    /// Set for Fourier signals under a constant precision matrix; the
    /// likelihood then only needs trigonometric sums of the path.
    fourier: Option<&'c FourierSignal>,
}

/// Steps between exact evaluations of the rotated sines and cosines.
const REANCHOR: usize = 256;

/// `a_i = sum phi_i(t_k / T) dY_k` and `q_ij = sum phi_i phi_j h` for the
/// basis `phi_{2j} = sin(2 pi k_j s)`, `phi_{2j+1} = cos(2 pi k_j s)`.
struct TrigSums {
    a: Vec<f64>,
    q: Vec<f64>,
}

impl TrigSums {
    fn along(ctx: &PathContext<'_>, fourier: &FourierSignal, steps: usize, period: f64) -> Self {
        let n = ctx.dim_n();
        let h = ctx.step();
        let freqs: Vec<f64> = fourier
            .harmonics()
            .iter()
            .map(|hm| TAU * hm.k as f64)
            .collect();
        let rot: Vec<(f64, f64)> = freqs.iter().map(|f| (f * h / period).sin_cos()).collect();
        let b = 2 * freqs.len();
        let mut phi = vec![0.0; b];
        let mut a = vec![0.0; b * n];
        let mut q = vec![0.0; b * b];
        if n == 1 && b == 2 {
            let (sw, cw) = rot[0];
            let [mut as_, mut ac, mut qss, mut qsc, mut qcc] = [0.0; 5];
            for (block, rows) in ctx.dy_rows(steps).chunks(REANCHOR).enumerate() {
                let (mut sn, mut cs) =
                    (freqs[0] * ctx.path().time(block * REANCHOR) / period).sin_cos();
                for &dy in rows {
                    as_ += sn * dy;
                    ac += cs * dy;
                    qss += sn * sn;
                    qsc += sn * cs;
                    qcc += cs * cs;
                    (sn, cs) = (sn * cw + cs * sw, cs * cw - sn * sw);
                }
            }
            let q = vec![qss * h, qsc * h, qsc * h, qcc * h];
            return Self {
                a: vec![as_, ac],
                q,
            };
        }
        for (block, rows) in ctx.dy_rows(steps).chunks(REANCHOR * n).enumerate() {
            let u = ctx.path().time(block * REANCHOR) / period;
            for (j, f) in freqs.iter().enumerate() {
                (phi[2 * j], phi[2 * j + 1]) = (f * u).sin_cos();
            }
            for (r, dy) in rows.chunks_exact(n).enumerate() {
                if r > 0 {
                    for (pair, &(sw, cw)) in phi.chunks_exact_mut(2).zip(&rot) {
                        let (sn, cs) = (pair[0], pair[1]);
                        pair[0] = sn * cw + cs * sw;
                        pair[1] = cs * cw - sn * sw;
                    }
                }
                for (i, &pi) in phi.iter().enumerate() {
                    for (acc, d) in a[i * n..(i + 1) * n].iter_mut().zip(dy) {
                        *acc += pi * d;
                    }
                    for (acc, pj) in q[i * b + i..(i + 1) * b].iter_mut().zip(&phi[i..]) {
                        *acc += pi * pj;
                    }
                }
            }
        }
        for i in 0..b {
            for j in i..b {
                q[i * b + j] *= h;
                q[j * b + i] = q[i * b + j];
            }
        }
        Self { a, q }
    }

    /// Same triple as [`Profile::normal_equations`].
    fn normal_equations(
        &self,
        fourier: &FourierSignal,
        w: &[f64],
        theta: &[f64],
    ) -> (Vec<f64>, Vec<f64>, f64) {
        let n = fourier.dim_n();
        let d = theta.len();
        let maps: Vec<_> = fourier
            .harmonics()
            .iter()
            .flat_map(|hm| [&hm.sin, &hm.cos])
            .collect();
        let b = maps.len();
        let coef: Vec<Vec<f64>> = maps
            .iter()
            .map(|m| {
                (0..n)
                    .map(|r| m.offset[r] + dot(&m.matrix[r * d..(r + 1) * d], theta))
                    .collect()
            })
            .collect();
        let mut we = vec![vec![0.0; n]; b];
        for (out, e) in we.iter_mut().zip(&coef) {
            mat_vec(w, e, out);
        }
        let mut wa = vec![0.0; n];
        let mut v = vec![0.0; d];
        let mut ll = 0.0;
        for i in 0..b {
            mat_vec(w, &self.a[i * n..(i + 1) * n], &mut wa);
            let mut u = wa.clone();
            for (j, wej) in we.iter().enumerate() {
                let qij = self.q[i * b + j];
                for r in 0..n {
                    u[r] -= qij * wej[r];
                    wa[r] -= 0.5 * qij * wej[r];
                }
            }
            ll += dot(&coef[i], &wa);
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += (0..n)
                    .map(|r| maps[i].matrix[r * d + c] * u[r])
                    .sum::<f64>();
            }
        }
        let wm: Vec<Vec<f64>> = maps
            .iter()
            .map(|m| {
                let mut out = vec![0.0; n * d];
                for r in 0..n {
                    for c in 0..d {
                        out[r * d + c] = (0..n).map(|s| w[r * n + s] * m.matrix[s * d + c]).sum();
                    }
                }
                out
            })
            .collect();
        let mut m = vec![0.0; d * d];
        for i in 0..b {
            for j in 0..b {
                let qij = self.q[i * b + j];
                if qij == 0.0 {
                    continue;
                }
                for x in 0..d {
                    for y in 0..d {
                        m[x * d + y] += qij
                            * (0..n)
                                .map(|r| maps[i].matrix[r * d + x] * wm[j][r * d + y])
                                .sum::<f64>();
                    }
                }
            }
        }
        (v, m, ll)
    }
}

impl Profile<'_, '_> {
    /// `l(theta, T)`.
    fn loglik(&self, theta: &[f64], period: f64) -> f64 {
        if self.fourier.is_some() {
            return self.normal_equations(theta, period).2;
        }
        let n = self.ctx.dim_n();
        let h = self.ctx.step();
        let mut s = vec![0.0; n];
        let mut ws = vec![0.0; n];
        let mut acc = 0.0;
        for k in 0..self.steps {
            self.signal
                .eval(theta, self.ctx.path().time(k) / period, &mut s);
            let w = self.ctx.precision().inv(k);
            mat_vec(w, &s, &mut ws);
            let dy = self.ctx.dy(k);
            acc += dot(&ws, dy) - 0.5 * dot(&ws, &s) * h;
        }
        acc
    }

    /// `v = sum J^T W (dY - S h)`, `M = sum J^T W J h` and `l(theta, T)`,
    /// with `J = D_theta S`; for affine signals `S = J theta + c`.
    fn normal_equations(&self, theta: &[f64], period: f64) -> (Vec<f64>, Vec<f64>, f64) {
        if let Some(fourier) = self.fourier {
            let sums = TrigSums::along(self.ctx, fourier, self.steps, period);
            return sums.normal_equations(fourier, self.ctx.precision().inv(0), theta);
        }
        let n = self.ctx.dim_n();
        let d = theta.len();
        let h = self.ctx.step();
        let (mut jac, mut s, mut r, mut wr, mut ws) = (
            vec![0.0; n * d],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        );
        let mut offset = vec![0.0; n];
        let mut wj = vec![0.0; n * d];
        let mut v = vec![0.0; d];
        let mut m = vec![0.0; d * d];
        let mut ll = 0.0;
        for k in 0..self.steps {
            let u = self.ctx.path().time(k) / period;
            if self.affine {
                self.signal.affine_basis(u, &mut jac, &mut offset);
                for i in 0..n {
                    s[i] = offset[i] + (0..d).map(|c| jac[i * d + c] * theta[c]).sum::<f64>();
                }
            } else {
                self.signal.grad_theta(theta, u, &mut jac);
                self.signal.eval(theta, u, &mut s);
            }
            let w = self.ctx.precision().inv(k);
            let dy = self.ctx.dy(k);
            for i in 0..n {
                r[i] = dy[i] - s[i] * h;
            }
            mat_vec(w, &r, &mut wr);
            mat_vec(w, &s, &mut ws);
            ll += dot(&ws, dy) - 0.5 * dot(&ws, &s) * h;
            for a in 0..n {
                for c in 0..d {
                    wj[a * d + c] = (0..n).map(|b| w[a * n + b] * jac[b * d + c]).sum();
                }
            }
            for a in 0..d {
                v[a] += (0..n).map(|i| jac[i * d + a] * wr[i]).sum::<f64>();
                for c in 0..d {
                    m[a * d + c] += h * (0..n).map(|i| jac[i * d + a] * wj[i * d + c]).sum::<f64>();
                }
            }
        }
        (v, m, ll)
    }

    /// Newton step `M^{-1} v`.
    fn solve(v: Vec<f64>, m: &[f64]) -> Result<Vec<f64>> {
        let d = v.len();
        let step = linalg::from_row_major(d, d, m)
            .cholesky()
            .ok_or(LanError::NonIdentifiable)?
            .solve(&nalgebra::DVector::from_vec(v));
        Ok(step.iter().copied().collect())
    }

    /// Best `theta` for a fixed period and the log-likelihood there. For
    /// affine signals `l` is quadratic in `theta`, so one pass gives both;
    /// otherwise Gauss–Newton iterations.
    fn profile(&self, start: &[f64], period: f64) -> Result<(f64, Vec<f64>)> {
        let mut theta = start.to_vec();
        if self.affine {
            let (v, m, ll) = self.normal_equations(&theta, period);
            let step = Self::solve(v.clone(), &m)?;
            let gain = 0.5 * dot(&v, &step);
            for (t, s) in theta.iter_mut().zip(&step) {
                *t += s;
            }
            return Ok((ll + gain, theta));
        }
        for _ in 0..50 {
            let (v, m, _) = self.normal_equations(&theta, period);
            let step = Self::solve(v, &m)?;
            let size = dot(&step, &step).sqrt();
            for (t, s) in theta.iter_mut().zip(&step) {
                *t += s;
            }
            if size <= 1e-12 * (1.0 + dot(&theta, &theta).sqrt()) {
                break;
            }
        }
        Ok((self.loglik(&theta, period), theta))
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

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximize `log LR(.; p_init)` on the first `horizon` time units of the
/// path in `ctx`: a period grid around `p_init.period()`, `theta` profiled
/// out at every node, then golden-section refinement of the period.
pub fn mle_joint_on(
    ctx: &PathContext<'_>,
    signal: &dyn SignalModel,
    p_init: &ParamPoint,
    horizon: f64,
    search: &MleSearch,
) -> Result<MleResult> {
    let steps = ctx.steps_for(horizon)?;
    let n = steps as f64 * ctx.step();
    let t0 = p_init.period();
    let affine = {
        let (nn, d) = (signal.dim_n(), signal.dim_d());
        signal.affine_basis(0.0, &mut vec![0.0; nn * d], &mut vec![0.0; nn])
    };
    let fourier = signal
        .as_fourier()
        .filter(|_| ctx.precision().is_constant());
    let prof = Profile {
        ctx,
        signal,
        steps,
        affine,
        fourier,
    };
    let half = search.half_width.unwrap_or(4.0 * t0 * t0 / n);
    let spacing = search.spacing.unwrap_or(t0 * t0 / (4.0 * n));
    if !(half > 0.0 && spacing > 0.0) || half >= t0 {
        return Err(LanError::InvalidParameter(format!(
            "period window half-width {half} and spacing {spacing} are not usable for T = {t0}"
        )));
    }
    let per_side = (half / spacing).ceil() as i64;
    let mut evaluations = 0;
    let mut best: Option<(f64, f64, Vec<f64>, i64)> = None;
    let mut values = Vec::new();
    for j in -per_side..=per_side {
        let period = t0 + j as f64 * half / per_side as f64;
        let (val, theta) = prof.profile(p_init.theta(), period)?;
        evaluations += 1;
        values.push(val);
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, period, theta, j));
        }
    }
    let (mut best_val, mut best_t, mut best_theta, best_j) = best.unwrap();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Err(LanError::NonIdentifiable);
    }
    let at_boundary = best_j.abs() == per_side;
    if at_boundary {
        log::warn!("period estimate {best_t} sits on the edge of the search window");
    }

    if search.refine {
        let node = half / per_side as f64;
        let (mut a, mut b) = (best_t - node, best_t + node);
        if at_boundary {
            a = a.max(t0 - half);
            b = b.min(t0 + half);
        }
        let mut c = b - GOLDEN * (b - a);
        let mut d = a + GOLDEN * (b - a);
        let (mut fc, mut tc) = prof.profile(&best_theta, c)?;
        let (mut fd, mut td) = prof.profile(&best_theta, d)?;
        evaluations += 2;
        while b - a > 1e-4 * node {
            if fc > fd {
                b = d;
                (d, fd, td) = (c, fc, tc);
                c = b - GOLDEN * (b - a);
                (fc, tc) = prof.profile(&best_theta, c)?;
            } else {
                a = c;
                (c, fc, tc) = (d, fd, td);
                d = a + GOLDEN * (b - a);
                (fd, td) = prof.profile(&best_theta, d)?;
            }
            evaluations += 1;
        }
        for (f, t, th) in [(fc, c, tc), (fd, d, td)] {
            if f > best_val {
                (best_val, best_t, best_theta) = (f, t, th);
            }
        }
    }

    let estimate = ParamPoint::new(best_theta, best_t)?;
    let reference = prof.loglik(p_init.theta(), t0);
    let (grad, _, _) = prof.normal_equations(estimate.theta(), best_t);
    let theta_gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let curvature = search.curvature.then(|| {
        let d1 = estimate.dim() + 1;
        let x0 = estimate.to_vec();
        let steps_fd: Vec<f64> = (0..d1)
            .map(|j| {
                if j + 1 < d1 {
                    1e-3 * (1.0 + x0[j].abs())
                } else {
                    0.05 * t0 * t0 / n
                }
            })
            .collect();
        let f = |x: &[f64]| prof.loglik(&x[..d1 - 1], x[d1 - 1]);
        let f0 = f(&x0);
        let mut hess = vec![vec![0.0; d1]; d1];
        for i in 0..d1 {
            for j in i..d1 {
                let val = if i == j {
                    let mut xp = x0.clone();
                    let mut xm = x0.clone();
                    xp[i] += steps_fd[i];
                    xm[i] -= steps_fd[i];
                    (f(&xp) - 2.0 * f0 + f(&xm)) / (steps_fd[i] * steps_fd[i])
                } else {
                    let mut acc = 0.0;
                    for (si, sj, sign) in [
                        (1.0, 1.0, 1.0),
                        (1.0, -1.0, -1.0),
                        (-1.0, 1.0, -1.0),
                        (-1.0, -1.0, 1.0),
                    ] {
                        let mut x = x0.clone();
                        x[i] += si * steps_fd[i];
                        x[j] += sj * steps_fd[j];
                        acc += sign * f(&x);
                    }
                    acc / (4.0 * steps_fd[i] * steps_fd[j])
                };
                hess[i][j] = -val;
                hess[j][i] = -val;
            }
        }
        hess
    });
    Ok(MleResult {
        estimate,
        log_lr: best_val - reference,
        at_boundary,
        grid_nodes: (2 * per_side + 1) as usize,
        evaluations,
        theta_gradient_norm,
        curvature,
    })
}

/// Joint maximum likelihood over the whole path, with `p_init` as both the
/// reference parameter and the center of the period window.
pub fn mle_joint(
    z_traj: &Trajectory,
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p_init: &ParamPoint,
    search: &MleSearch,
) -> Result<MleResult> {
    let ctx = PathContext::new(model, z_traj)?;
    mle_joint_on(&ctx, signal, p_init, ctx.path().horizon(), search)
}

/// Spread of the estimation errors at one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub n: f64,
    pub successes: usize,
    pub failures: usize,
    pub std_theta: Vec<f64>,
    pub std_period: f64,
    pub mean_error_theta: Vec<f64>,
    pub mean_error_period: f64,
    /// `sqrt(n) * std_theta`.
    pub scaled_std_theta: Vec<f64>,
    /// `n^{3/2} * std_period`.
    pub scaled_std_period: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Log-log slopes of `std(theta_hat - theta)` against `n`, expected `-1/2`.
    pub slope_theta: Vec<f64>,
    /// Log-log slope of `std(T_hat - T)` against `n`, expected `-3/2`.
    pub slope_period: f64,
    /// Per replication and horizon: `Some(estimate)` or `None` on failure.
    pub estimates: Vec<Vec<Option<Vec<f64>>>>,
}

/// Joint MLE on independent paths at several horizons; each replication
/// reuses one path, truncated to every horizon.
pub fn rate_experiment(
    exp: &Experiment<'_>,
    n_list: &[f64],
    replications: usize,
    seed: u64,
    search: &MleSearch,
) -> Result<RateReport> {
    if n_list.len() < 2 || replications < 2 {
        return Err(LanError::EmptyInput(
            "need at least two horizons and two replications".into(),
        ));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LanError::InvalidParameter("horizons must increase".into()));
    }
    let n_max = *n_list.last().unwrap();
    let estimates = par::replicate(
        exp.exec,
        replications,
        |r| -> Result<Vec<Option<Vec<f64>>>> {
            let path = exp.simulate(n_max, seed, r)?;
            let ctx = PathContext::new(exp.model, &path)?;
            Ok(n_list
                .iter()
                .map(
                    |&n| match mle_joint_on(&ctx, exp.signal, exp.truth, n, search) {
                        Ok(m) => Some(m.estimate.to_vec()),
                        Err(e) => {
                            log::warn!("replication {r}, n = {n}: {e}");
                            None
                        }
                    },
                )
                .collect())
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let truth = exp.truth.to_vec();
    let d1 = truth.len();
    let mut rows = Vec::with_capacity(n_list.len());
    for (i, &n) in n_list.iter().enumerate() {
        let ok: Vec<&Vec<f64>> = estimates.iter().filter_map(|e| e[i].as_ref()).collect();
        if ok.len() < 2 {
            return Err(LanError::EmptyInput(format!(
                "fewer than two successful estimates at n = {n}"
            )));
        }
        let errors: Vec<Vec<f64>> = (0..d1)
            .map(|j| ok.iter().map(|e| e[j] - truth[j]).collect())
            .collect();
        let stds: Vec<f64> = errors.iter().map(|e| sample_std(e)).collect();
        let means: Vec<f64> = errors.iter().map(|e| mean(e)).collect();
        rows.push(RateRow {
            n,
            successes: ok.len(),
            failures: replications - ok.len(),
            std_theta: stds[..d1 - 1].to_vec(),
            std_period: stds[d1 - 1],
            mean_error_theta: means[..d1 - 1].to_vec(),
            mean_error_period: means[d1 - 1],
            scaled_std_theta: stds[..d1 - 1].iter().map(|s| s * n.sqrt()).collect(),
            scaled_std_period: stds[d1 - 1] * n.powf(1.5),
        });
    }
    let log_n: Vec<f64> = n_list.iter().map(|n| n.ln()).collect();
    let slope = |ys: Vec<f64>| linalg::linear_fit(&log_n, &ys).map_or(f64::NAN, |(_, b)| b);
    let slope_theta = (0..d1 - 1)
        .map(|j| slope(rows.iter().map(|r| r.std_theta[j].ln()).collect()))
        .collect();
    let slope_period = slope(rows.iter().map(|r| r.std_period.ln()).collect());
    Ok(RateReport {
        rows,
        slope_theta,
        slope_period,
        estimates,
    })
}
