//! Parametric periodic signals `S_(theta,T)(t) = S_theta(t / T)`.
//!
//! A [`SignalModel`] is a 1-periodic shape `S_theta(s)` together with its
//! parameter Jacobian and its derivative in `s`. The period enters only
//! through the time rescaling, which gives the period column of the full
//! derivative matrix the form `-t T^{-2} S'_theta(t / T)`.

use std::f64::consts::TAU;
use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::linalg;
use crate::quadrature::{self, DEFAULT_POINTS_PER_PERIOD};

/// The parameter `(theta, T)` indexing the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    theta: Vec<f64>,
    period: f64,
}

impl ParamPoint {
    pub fn new(theta: Vec<f64>, period: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(LanError::InvalidParameter(
                "theta must have at least one entry".into(),
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(LanError::InvalidParameter(
                "theta has non-finite entries".into(),
            ));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(LanError::InvalidParameter(format!(
                "period must be positive, got {period}"
            )));
        }
        Ok(Self { theta, period })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Shape dimension `D`.
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `(theta_1, ..., theta_D, T)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.push(self.period);
        v
    }

    /// The point `(theta, T) + delta` for a displacement of length `D + 1`.
    pub fn displaced(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.dim() + 1 {
            return Err(LanError::Dimension(format!(
                "displacement has length {}, expected {}",
                delta.len(),
                self.dim() + 1
            )));
        }
        let theta = self.theta.iter().zip(delta).map(|(a, b)| a + b).collect();
        Self::new(theta, self.period + delta[self.dim()])
    }

    pub fn with_period(&self, period: f64) -> Result<Self> {
        Self::new(self.theta.clone(), period)
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(theta, self.period)
    }
}

/// A 1-periodic shape `S_theta : [0, inf) -> R^N` with derivatives.
///
/// Implementations must be immutable and cheap to evaluate; they are shared
/// across worker threads.
pub trait SignalModel: Send + Sync + Debug {
    /// Output dimension `N`.
    fn dim_n(&self) -> usize;

    /// Shape dimension `D`.
    fn dim_d(&self) -> usize;

    /// `S_theta(s)` into `out` (length `N`).
    fn eval(&self, theta: &[f64], s: f64, out: &mut [f64]);

    /// `D_theta S_theta(s)` into `out`, row-major `N x D`.
    fn grad_theta(&self, theta: &[f64], s: f64, out: &mut [f64]);

    /// `S'_theta(s)` into `out` (length `N`).
    fn time_deriv(&self, theta: &[f64], s: f64, out: &mut [f64]);

    /// For signals affine in `theta`, `S_theta(s) = basis(s) theta + offset(s)`.
    /// Writes the row-major `N x D` basis and the offset and returns `true`;
    /// the default reports a non-affine signal.
    fn affine_basis(&self, _s: f64, _basis: &mut [f64], _offset: &mut [f64]) -> bool {
        false
    }

    /// The Fourier representation, when there is one.
    fn as_fourier(&self) -> Option<&FourierSignal> {
        None
    }
}

/// `G(theta) = offset + matrix * theta`, the coefficient map of one
/// harmonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    /// Length `N`.
    pub offset: Vec<f64>,
    /// Row-major `N x D`.
    pub matrix: Vec<f64>,
}

impl AffineMap {
    pub fn zero(n: usize, d: usize) -> Self {
        Self {
            offset: vec![0.0; n],
            matrix: vec![0.0; n * d],
        }
    }

    pub fn linear(matrix: Vec<f64>, n: usize) -> Self {
        Self {
            offset: vec![0.0; n],
            matrix,
        }
    }

    fn apply(&self, theta: &[f64], i: usize) -> f64 {
        let d = theta.len();
        let row = &self.matrix[i * d..(i + 1) * d];
        self.offset[i] + row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// One harmonic `sin(2 k pi s) G_k(theta) + cos(2 k pi s) H_k(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    pub sin: AffineMap,
    pub cos: AffineMap,
}

/// Finite Fourier signal with affine coefficient maps,
/// `S_theta(s) = sum_k sin(2 k pi s) G_k(theta) + cos(2 k pi s) H_k(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSignal {
    dim_n: usize,
    dim_d: usize,
    harmonics: Vec<Harmonic>,
}

impl FourierSignal {
    pub fn new(dim_n: usize, dim_d: usize, harmonics: Vec<Harmonic>) -> Result<Self> {
        if dim_n == 0 || dim_d == 0 {
            return Err(LanError::Dimension("signal needs N >= 1 and D >= 1".into()));
        }
        if harmonics.is_empty() {
            return Err(LanError::EmptyInput(
                "Fourier signal without harmonics".into(),
            ));
        }
        for h in &harmonics {
            if h.k == 0 {
                return Err(LanError::InvalidParameter(
                    "harmonic index must be >= 1".into(),
                ));
            }
            for map in [&h.sin, &h.cos] {
                if map.offset.len() != dim_n || map.matrix.len() != dim_n * dim_d {
                    return Err(LanError::Dimension(format!(
                        "harmonic {} coefficient map has wrong shape (expected {} x {})",
                        h.k, dim_n, dim_d
                    )));
                }
                if map.offset.iter().chain(&map.matrix).any(|v| !v.is_finite()) {
                    return Err(LanError::InvalidParameter(format!(
                        "harmonic {} has non-finite coefficients",
                        h.k
                    )));
                }
            }
        }
        Ok(Self {
            dim_n,
            dim_d,
            harmonics,
        })
    }

    /// `S_theta(s) = sum_{k=1}^d theta_k sin(2 k pi s)`, scalar output.
    pub fn linear_sine(d: usize) -> Result<Self> {
        let harmonics = (0..d)
            .map(|k| {
                let mut m = vec![0.0; d];
                m[k] = 1.0;
                Harmonic {
                    k: k as u32 + 1,
                    sin: AffineMap::linear(m, 1),
                    cos: AffineMap::zero(1, d),
                }
            })
            .collect();
        Self::new(1, d, harmonics)
    }

    /// `S_theta(s) = sum_k sqrt(2) (theta_k sin(2 k pi s) + theta_{d+k} cos(2 k pi s))`
    /// with `D = 2d`.
    pub fn normalized_expansion(d: usize) -> Result<Self> {
        let dd = 2 * d;
        let harmonics = (0..d)
            .map(|k| {
                let mut ms = vec![0.0; dd];
                let mut mc = vec![0.0; dd];
                ms[k] = std::f64::consts::SQRT_2;
                mc[d + k] = std::f64::consts::SQRT_2;
                Harmonic {
                    k: k as u32 + 1,
                    sin: AffineMap::linear(ms, 1),
                    cos: AffineMap::linear(mc, 1),
                }
            })
            .collect();
        Self::new(1, dd, harmonics)
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }
}

impl SignalModel for FourierSignal {
    fn dim_n(&self) -> usize {
        self.dim_n
    }

    fn dim_d(&self) -> usize {
        self.dim_d
    }

    fn eval(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        out.fill(0.0);
        for h in &self.harmonics {
            let (sn, cs) = (TAU * h.k as f64 * s).sin_cos();
            for (i, o) in out.iter_mut().enumerate() {
                *o += sn * h.sin.apply(theta, i) + cs * h.cos.apply(theta, i);
            }
        }
    }

    fn grad_theta(&self, _theta: &[f64], s: f64, out: &mut [f64]) {
        out.fill(0.0);
        for h in &self.harmonics {
            let (sn, cs) = (TAU * h.k as f64 * s).sin_cos();
            for (o, (a, b)) in out.iter_mut().zip(h.sin.matrix.iter().zip(&h.cos.matrix)) {
                *o += sn * a + cs * b;
            }
        }
    }

    fn time_deriv(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        out.fill(0.0);
        for h in &self.harmonics {
            let w = TAU * h.k as f64;
            let (sn, cs) = (w * s).sin_cos();
            for (i, o) in out.iter_mut().enumerate() {
                *o += w * (cs * h.sin.apply(theta, i) - sn * h.cos.apply(theta, i));
            }
        }
    }

    fn affine_basis(&self, s: f64, basis: &mut [f64], offset: &mut [f64]) -> bool {
        basis.fill(0.0);
        offset.fill(0.0);
        for h in &self.harmonics {
            let (sn, cs) = (TAU * h.k as f64 * s).sin_cos();
            for (o, (a, b)) in basis.iter_mut().zip(h.sin.matrix.iter().zip(&h.cos.matrix)) {
                *o += sn * a + cs * b;
            }
            for (i, o) in offset.iter_mut().enumerate() {
                *o += sn * h.sin.offset[i] + cs * h.cos.offset[i];
            }
        }
        true
    }

    fn as_fourier(&self) -> Option<&FourierSignal> {
        Some(self)
    }
}

fn check_dims(signal: &dyn SignalModel, p: &ParamPoint) -> Result<()> {
    if signal.dim_d() != p.dim() {
        return Err(LanError::Dimension(format!(
            "signal has D = {}, parameter has {} shape entries",
            signal.dim_d(),
            p.dim()
        )));
    }
    Ok(())
}

/// `S_(theta,T)(t) = S_theta(t / T)`.
pub fn eval_signal(signal: &dyn SignalModel, p: &ParamPoint, t: f64) -> Result<Vec<f64>> {
    check_dims(signal, p)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LanError::InvalidParameter(format!(
            "time must be >= 0, got {t}"
        )));
    }
    let mut out = vec![0.0; signal.dim_n()];
    signal.eval(p.theta(), t / p.period(), &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(LanError::NonFinite {
            context: "signal evaluation".into(),
            time: t,
        });
    }
    Ok(out)
}

/// Scratch space for repeated `S-dot` evaluations.
#[derive(Debug, Clone)]
pub(crate) struct SdotBuffer {
    grad: Vec<f64>,
    deriv: Vec<f64>,
}

impl SdotBuffer {
    pub(crate) fn new(n: usize, d: usize) -> Self {
        Self {
            grad: vec![0.0; n * d],
            deriv: vec![0.0; n],
        }
    }

    /// Row-major `N x (D+1)` derivative of `S_(theta,T)` at time `t`.
    pub(crate) fn fill(
        &mut self,
        signal: &dyn SignalModel,
        p: &ParamPoint,
        t: f64,
        out: &mut [f64],
    ) {
        let n = signal.dim_n();
        let d = signal.dim_d();
        let s = t / p.period();
        signal.grad_theta(p.theta(), s, &mut self.grad);
        signal.time_deriv(p.theta(), s, &mut self.deriv);
        let scale = -t / (p.period() * p.period());
        for i in 0..n {
            out[i * (d + 1)..i * (d + 1) + d].copy_from_slice(&self.grad[i * d..(i + 1) * d]);
            out[i * (d + 1) + d] = scale * self.deriv[i];
        }
    }
}

/// The `N x (D+1)` derivative of `S_(theta,T)(t)` in `(theta, T)`: the first
/// `D` columns are `D_theta S_theta(t/T)`, the last is `-t T^{-2} S'_theta(t/T)`.
pub fn eval_sdot(signal: &dyn SignalModel, p: &ParamPoint, t: f64) -> Result<DMatrix<f64>> {
    check_dims(signal, p)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LanError::InvalidParameter(format!(
            "time must be >= 0, got {t}"
        )));
    }
    let n = signal.dim_n();
    let d = signal.dim_d();
    let mut out = vec![0.0; n * (d + 1)];
    SdotBuffer::new(n, d).fill(signal, p, t, &mut out);
    Ok(linalg::from_row_major(n, d + 1, &out))
}

/// Outcome of the `L^2_loc` differentiability probe.
#[derive(Debug, Clone, Serialize)]
pub struct L2DiffReport {
    pub displacement_norms: Vec<f64>,
    /// `int_0^t |S_{p+delta} - S_p - S-dot_p delta|^2 / |delta|^2 ds` per displacement.
    pub ratios: Vec<f64>,
    pub tol: f64,
    pub passed: bool,
}

/// Displacements `start * 2^{-i} (1, ..., 1) / sqrt(D+1)` for `i < count`.
pub fn shrinking_displacements(dim_d: usize, count: usize, start: f64) -> Vec<Vec<f64>> {
    let unit = 1.0 / ((dim_d + 1) as f64).sqrt();
    (0..count)
        .map(|i| vec![start * unit * 0.5_f64.powi(i as i32); dim_d + 1])
        .collect()
}

/// Evaluate the difference quotient of `L^2_loc` differentiability on
/// `[0, horizon]` for each displacement. Passes when the quotient at the
/// last (smallest) displacement is below `tol`.
pub fn check_l2_differentiability(
    signal: &dyn SignalModel,
    p: &ParamPoint,
    horizon: f64,
    displacements: &[Vec<f64>],
    tol: f64,
) -> Result<L2DiffReport> {
    check_dims(signal, p)?;
    if !(horizon > 0.0) {
        return Err(LanError::InvalidParameter(
            "horizon must be positive".into(),
        ));
    }
    if displacements.is_empty() {
        return Err(LanError::EmptyInput("no displacements given".into()));
    }
    let n = signal.dim_n();
    let d = signal.dim_d();
    let intervals = ((horizon / p.period()) * DEFAULT_POINTS_PER_PERIOD as f64).ceil() as usize;
    let rule = quadrature::simpson_rule(0.0, horizon, intervals.max(2));

    let mut norms = Vec::with_capacity(displacements.len());
    let mut ratios = Vec::with_capacity(displacements.len());
    let mut base = vec![0.0; n];
    let mut moved = vec![0.0; n];
    let mut sdot = vec![0.0; n * (d + 1)];
    let mut buf = SdotBuffer::new(n, d);
    for delta in displacements {
        let q = p.displaced(delta)?;
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LanError::InvalidParameter("zero displacement".into()));
        }
        let mut acc = 0.0;
        for &(t, w) in &rule {
            signal.eval(p.theta(), t / p.period(), &mut base);
            signal.eval(q.theta(), t / q.period(), &mut moved);
            buf.fill(signal, p, t, &mut sdot);
            let mut sq = 0.0;
            for i in 0..n {
                let lin: f64 = (0..=d).map(|j| sdot[i * (d + 1) + j] * delta[j]).sum();
                let r = moved[i] - base[i] - lin;
                sq += r * r;
            }
            acc += w * sq;
        }
        if !acc.is_finite() {
            return Err(LanError::Quadrature(
                "difference quotient is not finite".into(),
            ));
        }
        norms.push(norm);
        ratios.push(acc / (norm * norm));
    }
    let passed = ratios.last().is_some_and(|r| *r < tol);
    Ok(L2DiffReport {
        displacement_norms: norms,
        ratios,
        tol,
        passed,
    })
}

/// Gram matrix of `d_theta_1 S, ..., d_theta_D S, S'` under the plain
/// `L^2([0,1])` inner product.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    pub gram: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub tolerance: f64,
    pub independent: bool,
}

/// Relative rank tolerance for the Gram matrix.
pub const INDEPENDENCE_REL_TOL: f64 = 1e-10;

pub fn check_linear_independence(
    signal: &dyn SignalModel,
    theta: &[f64],
    quad_points: usize,
) -> Result<IndependenceReport> {
    let n = signal.dim_n();
    let d = signal.dim_d();
    if theta.len() != d {
        return Err(LanError::Dimension(format!(
            "theta has length {}, expected {d}",
            theta.len()
        )));
    }
    if quad_points < 2 * (d + 1) {
        return Err(LanError::InvalidParameter(format!(
            "{quad_points} quadrature points cannot resolve {} functions",
            d + 1
        )));
    }
    let rule = quadrature::simpson_rule(0.0, 1.0, quad_points);
    let mut grad = vec![0.0; n * d];
    let mut deriv = vec![0.0; n];
    let mut gram = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut col = vec![0.0; d + 1];
    for &(s, w) in &rule {
        signal.grad_theta(theta, s, &mut grad);
        signal.time_deriv(theta, s, &mut deriv);
        for i in 0..n {
            col[..d].copy_from_slice(&grad[i * d..(i + 1) * d]);
            col[d] = deriv[i];
            for a in 0..=d {
                for b in 0..=d {
                    gram[(a, b)] += w * col[a] * col[b];
                }
            }
        }
    }
    let ev = linalg::sym_eigenvalues(&gram);
    let min = ev[0];
    let max = *ev.last().unwrap();
    let tolerance = INDEPENDENCE_REL_TOL * max.max(0.0);
    Ok(IndependenceReport {
        gram: gram
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        min_eigenvalue: min,
        max_eigenvalue: max,
        tolerance,
        independent: max > 0.0 && min > tolerance,
    })
}

/// Log-log fit of `int_0^t |D_theta S_(theta,T~) - D_theta S_(theta,T)|^2 ds
/// ~ C t^beta |T~ - T|^alpha`.
#[derive(Debug, Clone, Serialize)]
pub enum HolderFit {
    Exponents {
        alpha: f64,
        beta: f64,
        log_c: f64,
        samples: usize,
    },
    /// Every integral vanished: `D_theta S` does not depend on the period.
    PeriodInvariant,
}

impl HolderFit {
    /// Whether the fitted exponents satisfy `alpha in (0, 2]` and
    /// `beta < 1 + 3 alpha / 2` (with a small slack on the upper end of alpha).
    pub fn within_bounds(&self) -> bool {
        match *self {
            HolderFit::Exponents { alpha, beta, .. } => {
                alpha > 0.0 && alpha <= 2.0 + 0.05 && beta < 1.0 + 1.5 * alpha
            }
            HolderFit::PeriodInvariant => true,
        }
    }
}

pub fn estimate_holder_exponents(
    signal: &dyn SignalModel,
    theta: &[f64],
    period: f64,
    t_grid: &[f64],
    dt_grid: &[f64],
) -> Result<HolderFit> {
    let n = signal.dim_n();
    let d = signal.dim_d();
    if t_grid.is_empty() || dt_grid.is_empty() {
        return Err(LanError::EmptyInput("Hölder grids must be nonempty".into()));
    }
    if theta.len() != d {
        return Err(LanError::Dimension(format!(
            "theta has length {}, expected {d}",
            theta.len()
        )));
    }
    if !(period > 0.0) {
        return Err(LanError::InvalidParameter("period must be positive".into()));
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(LanError::InvalidParameter("t grid must be positive".into()));
    }
    if dt_grid
        .iter()
        .any(|&dt| dt == 0.0 || dt.abs() >= period / 2.0)
    {
        return Err(LanError::InvalidParameter(
            "period offsets must lie in (-T/2, T/2) \\ {0}".into(),
        ));
    }

    let mut g0 = vec![0.0; n * d];
    let mut g1 = vec![0.0; n * d];
    let mut rows = Vec::new();
    for &t in t_grid {
        let intervals = ((t / period) * DEFAULT_POINTS_PER_PERIOD as f64).ceil() as usize;
        for &dt in dt_grid {
            let other = period + dt;
            let value = quadrature::simpson(0.0, t, intervals.max(2), |s| {
                signal.grad_theta(theta, s / other, &mut g1);
                signal.grad_theta(theta, s / period, &mut g0);
                g1.iter().zip(&g0).map(|(a, b)| (a - b) * (a - b)).sum()
            })?;
            if value > f64::MIN_POSITIVE {
                rows.push((t.ln(), dt.abs().ln(), value.ln()));
            }
        }
    }
    if rows.is_empty() {
        return Ok(HolderFit::PeriodInvariant);
    }
    // normal equations for [log C, beta, alpha]
    let mut ata = DMatrix::<f64>::zeros(3, 3);
    let mut atb = DVector::<f64>::zeros(3);
    for &(lt, ldt, li) in &rows {
        let a = [1.0, lt, ldt];
        for i in 0..3 {
            for j in 0..3 {
                ata[(i, j)] += a[i] * a[j];
            }
            atb[i] += a[i] * li;
        }
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            LanError::InvalidParameter(
                "Hölder fit needs two distinct t and two distinct |dT|".into(),
            )
        })?;
    Ok(HolderFit::Exponents {
        log_c: sol[0],
        beta: sol[1],
        alpha: sol[2],
        samples: rows.len(),
    })
}
