//! Euler–Maruyama simulation of the full system and of the external input,
//! plus the grid chain and path segments used for mixing diagnostics.

use serde::Serialize;

use crate::error::{LanError, Result};
use crate::models::{DiffusionModel, FullState, Interval};
use crate::noise::GaussianStream;
use crate::signals::{ParamPoint, SignalModel};
use crate::trajectory::{Component, Role, Trajectory};

/// Default Euler step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Largest cumulative amount by which bounded components may be pushed back
/// into their interval before the run is aborted.
pub const CLAMP_BUDGET: f64 = 1e-3;

fn grid_steps(horizon: f64, step: f64, allow_zero: bool) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(LanError::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let ok = if allow_zero {
        horizon >= 0.0
    } else {
        horizon > 0.0
    };
    if !(ok && horizon.is_finite()) {
        return Err(LanError::InvalidParameter(format!(
            "invalid horizon {horizon}"
        )));
    }
    let k = (horizon / step).round();
    if (k * step - horizon).abs() > 1e-9 * horizon.max(step) {
        log::warn!("horizon {horizon} is not a multiple of the step {step}; using {k} steps");
    }
    if k == 0.0 && !allow_zero {
        return Err(LanError::InvalidParameter(
            "horizon is shorter than one step".into(),
        ));
    }
    Ok(k as usize)
}

fn check_signal(
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
) -> Result<()> {
    if signal.dim_n() != model.dim_n() {
        return Err(LanError::Dimension(format!(
            "signal output dimension {} differs from model N = {}",
            signal.dim_n(),
            model.dim_n()
        )));
    }
    if signal.dim_d() != p.dim() {
        return Err(LanError::Dimension(format!(
            "signal has D = {}, parameter has {}",
            signal.dim_d(),
            p.dim()
        )));
    }
    Ok(())
}

/// Per-step source of `sigma(Z_k) dW_k` that reuses `sigma` when constant.
struct NoiseKernel<'a> {
    model: &'a dyn DiffusionModel,
    stream: GaussianStream,
    sqrt_h: f64,
    sigma: Vec<f64>,
    xi: Vec<f64>,
    fresh: bool,
}

impl<'a> NoiseKernel<'a> {
    fn new(model: &'a dyn DiffusionModel, seed: u64, step: f64) -> Self {
        let (n, m) = (model.dim_n(), model.dim_m());
        Self {
            model,
            stream: GaussianStream::new(seed, m),
            sqrt_h: step.sqrt(),
            sigma: vec![0.0; n * m],
            xi: vec![0.0; m],
            fresh: false,
        }
    }

    fn increment(&mut self, k: usize, z: &[f64], out: &mut [f64]) {
        if !self.fresh || !self.model.constant_sigma() {
            self.model.sigma(z, &mut self.sigma);
            self.fresh = true;
        }
        self.stream.fill_step(k as u64, &mut self.xi);
        let m = self.xi.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.sigma[i * m..(i + 1) * m];
            *o = row.iter().zip(&self.xi).map(|(s, x)| s * x).sum::<f64>() * self.sqrt_h;
        }
    }
}

/// Pushes bounded components back into their intervals and keeps the total.
struct Clamp {
    bounds: Vec<Interval>,
    used: f64,
}

impl Clamp {
    fn apply(&mut self, values: &mut [f64], time: f64) -> Result<()> {
        for (j, (v, iv)) in values.iter_mut().zip(&self.bounds).enumerate() {
            if !v.is_finite() {
                return Err(LanError::NonFinite {
                    context: format!("state component {}", j + 1),
                    time,
                });
            }
            if *v < iv.lo {
                self.used += iv.lo - *v;
                *v = iv.lo;
            } else if *v > iv.hi {
                self.used += *v - iv.hi;
                *v = iv.hi;
            }
        }
        if self.used > CLAMP_BUDGET {
            return Err(LanError::StateEscape {
                time,
                detail: format!(
                    "cumulative clamp {:.3e} exceeds {CLAMP_BUDGET:e}",
                    self.used
                ),
            });
        }
        Ok(())
    }
}

/// Euler–Maruyama path of `(X, Y, Z)` on `[0, horizon]`.
///
/// The increment `dZ_k = [S(t_k) + b(Z_k)] h + sigma(Z_k) dW_k` is computed
/// once and added to `X` as well, so `X` and `Z` see identical noise; `Y`
/// moves by its drift only. Bounded components are clamped after each step
/// within [`CLAMP_BUDGET`].
pub fn simulate_full(
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    start: &FullState,
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<Trajectory> {
    let steps = grid_steps(horizon, step, false)?;
    check_signal(model, signal, p)?;
    start.check_dims(model)?;
    let space = model.state_space();
    if let Some(detail) = space.violation(start) {
        return Err(LanError::StateEscape { time: 0.0, detail });
    }
    let (n, l) = (model.dim_n(), model.dim_l());
    let dim = 2 * n + l;
    let mut clamp = Clamp {
        bounds: [space.x, space.y, space.z].concat(),
        used: 0.0,
    };
    let mut noise = NoiseKernel::new(model, seed, step);

    let mut values = Vec::with_capacity(dim * (steps + 1));
    let mut state = start.stacked();
    values.extend_from_slice(&state);
    let (mut s, mut bz, mut fx, mut gy, mut dw, mut dz) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; l],
        vec![0.0; n],
        vec![0.0; n],
    );
    for k in 0..steps {
        let t = k as f64 * step;
        let (x, rest) = state.split_at_mut(n);
        let (y, z) = rest.split_at_mut(l);
        signal.eval(p.theta(), t / p.period(), &mut s);
        model.b(z, &mut bz);
        model.f(x, y, &mut fx);
        model.g(x, y, &mut gy);
        noise.increment(k, z, &mut dw);
        for i in 0..n {
            dz[i] = (s[i] + bz[i]) * step + dw[i];
            x[i] += fx[i] * step + dz[i];
            z[i] += dz[i];
        }
        for (yi, gi) in y.iter_mut().zip(&gy) {
            *yi += gi * step;
        }
        clamp.apply(&mut state, (k + 1) as f64 * step)?;
        values.extend_from_slice(&state);
    }
    Trajectory::new(step, Component::full_layout(n, l), values, Some(seed))
}

/// Euler–Maruyama path of the external input alone. Uses the same noise
/// keys as [`simulate_full`], so both give the same `Z` for the same seed.
/// A zero horizon returns the single row `z0`.
pub fn simulate_external(
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    z0: &[f64],
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<Trajectory> {
    let steps = grid_steps(horizon, step, true)?;
    check_signal(model, signal, p)?;
    let n = model.dim_n();
    if z0.len() != n {
        return Err(LanError::Dimension(format!(
            "z0 has length {}, expected {n}",
            z0.len()
        )));
    }
    let space = model.state_space();
    let mut clamp = Clamp {
        bounds: space.z,
        used: 0.0,
    };
    let mut z = z0.to_vec();
    clamp.apply(&mut z, 0.0)?;
    if clamp.used > 0.0 {
        return Err(LanError::StateEscape {
            time: 0.0,
            detail: "z0 outside the state space".into(),
        });
    }
    let mut noise = NoiseKernel::new(model, seed, step);
    let mut values = Vec::with_capacity(n * (steps + 1));
    values.extend_from_slice(&z);
    let (mut s, mut bz, mut dw) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..steps {
        let t = k as f64 * step;
        signal.eval(p.theta(), t / p.period(), &mut s);
        model.b(&z, &mut bz);
        noise.increment(k, &z, &mut dw);
        for i in 0..n {
            z[i] += (s[i] + bz[i]) * step + dw[i];
        }
        clamp.apply(&mut z, (k + 1) as f64 * step)?;
        values.extend_from_slice(&z);
    }
    Trajectory::new(step, Component::block(Role::Z, n), values, Some(seed))
}

/// The Brownian increments `dW_k` (row-major `steps x width`) that a
/// simulation with this seed consumes.
pub fn brownian_increments(seed: u64, width: usize, steps: usize, step: f64) -> Vec<f64> {
    let mut stream = GaussianStream::new(seed, width);
    let mut out = vec![0.0; steps * width];
    let sqrt_h = step.sqrt();
    for (k, chunk) in out.chunks_mut(width.max(1)).enumerate() {
        stream.fill_step(k as u64, chunk);
        chunk.iter_mut().for_each(|v| *v *= sqrt_h);
    }
    out
}

/// The `Z` values at times `0, T, 2T, ...`.
#[derive(Debug, Clone, Serialize)]
pub struct GridChain {
    pub period: f64,
    /// One row of length `N` per grid time.
    pub values: Vec<Vec<f64>>,
    /// False if `T` is not a whole number of steps and nodes were rounded.
    pub exact_nodes: bool,
}

fn period_nodes(traj: &Trajectory, p: &ParamPoint) -> Result<(Vec<usize>, bool)> {
    let h = traj.step();
    let period = p.period();
    if traj.horizon() + 1e-9 * h < period {
        return Err(LanError::EmptyChain {
            horizon: traj.horizon(),
            period,
        });
    }
    let ratio = period / h;
    let exact = (ratio - ratio.round()).abs() <= 1e-9 * ratio;
    if !exact {
        log::warn!("period {period} is not a multiple of the step {h}; sampling the nearest nodes");
    }
    let count = ((traj.horizon() + 1e-9 * h) / period).floor() as usize;
    let nodes = (0..=count)
        .map(|j| traj.node_at(j as f64 * period).min(traj.steps()))
        .collect();
    Ok((nodes, exact))
}

/// Samples the `Z` block of `traj` at every whole period it covers.
pub fn grid_chain(traj: &Trajectory, p: &ParamPoint) -> Result<GridChain> {
    let z = traj.z_block()?;
    let (nodes, exact_nodes) = period_nodes(&z, p)?;
    Ok(GridChain {
        period: p.period(),
        values: nodes.iter().map(|&k| z.row(k).to_vec()).collect(),
        exact_nodes,
    })
}

/// Heuristic mixing diagnostics of a grid chain, per component.
#[derive(Debug, Clone, Serialize)]
pub struct MixingReport {
    pub length: usize,
    pub lag1_autocorrelation: Vec<f64>,
    /// Mean over the second half minus mean over the first half, divided by
    /// the naive standard error of that difference.
    pub half_mean_z: Vec<f64>,
}

/// Needs at least four grid points.
pub fn mixing_diagnostics(chain: &GridChain) -> Result<MixingReport> {
    let len = chain.values.len();
    if len < 4 {
        return Err(LanError::EmptyInput(format!(
            "grid chain of length {len} is too short for diagnostics"
        )));
    }
    let n = chain.values[0].len();
    let mut acf = Vec::with_capacity(n);
    let mut half = Vec::with_capacity(n);
    for i in 0..n {
        let xs: Vec<f64> = chain.values.iter().map(|r| r[i]).collect();
        let mean = xs.iter().sum::<f64>() / len as f64;
        let var: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        acf.push(if var > 0.0 { cov / var } else { 0.0 });

        let (a, b) = xs.split_at(len / 2);
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (m, s2 / v.len() as f64)
        };
        let ((ma, va), (mb, vb)) = (stats(a), stats(b));
        let se = (va + vb).sqrt();
        half.push(if se > 0.0 { (mb - ma) / se } else { 0.0 });
    }
    Ok(MixingReport {
        length: len,
        lag1_autocorrelation: acf,
        half_mean_z: half,
    })
}

/// Restrictions of the `Z` path to `[(k-1)T, kT]`, `k = 1, 2, ...`; each
/// segment starts at time 0 and consecutive segments share endpoints.
pub fn path_segments(traj: &Trajectory, p: &ParamPoint) -> Result<Vec<Trajectory>> {
    let z = traj.z_block()?;
    let (nodes, _) = period_nodes(&z, p)?;
    nodes.windows(2).map(|w| z.slice_rows(w[0], w[1])).collect()
}
