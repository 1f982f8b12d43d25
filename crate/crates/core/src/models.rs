//! Coefficient functions `(f, g, b, sigma)` and presets.
//!
//! State ordering everywhere is `(x, y, z)` with `x, z` in `R^N` and `y` in
//! `R^L`; matrices are row-major slices.

use std::fmt::Debug;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::linalg;
use crate::noise::GaussianStream;
use crate::signals::{ParamPoint, SignalModel};

/// Closed interval bound for one state component. Infinite ends mean
/// unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() || self.hi.is_finite()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Box constraints for `U x U'`, one interval per component of `(x, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub x: Vec<Interval>,
    pub y: Vec<Interval>,
    pub z: Vec<Interval>,
}

impl StateSpace {
    pub fn unconstrained(n: usize, l: usize) -> Self {
        Self {
            x: vec![Interval::REAL; n],
            y: vec![Interval::REAL; l],
            z: vec![Interval::REAL; n],
        }
    }

    /// Description of the first violated constraint, if any.
    pub fn violation(&self, s: &FullState) -> Option<String> {
        let blocks = [
            ("x", &self.x, &s.x),
            ("y", &self.y, &s.y),
            ("z", &self.z, &s.z),
        ];
        for (name, bounds, values) in blocks {
            for (i, (iv, v)) in bounds.iter().zip(values.iter()).enumerate() {
                if !v.is_finite() || !iv.contains(*v) {
                    return Some(format!(
                        "{name}{} = {v} outside [{}, {}]",
                        i + 1,
                        iv.lo,
                        iv.hi
                    ));
                }
            }
        }
        None
    }
}

/// A point `(x, y, z)` of the full state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl FullState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Self {
        Self { x, y, z }
    }

    /// `(x, y, z)` stacked into one vector.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.x.len() + self.y.len() + self.z.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.z);
        v
    }

    pub fn check_dims(&self, model: &dyn DiffusionModel) -> Result<()> {
        let (n, l) = (model.dim_n(), model.dim_l());
        if self.x.len() != n || self.y.len() != l || self.z.len() != n {
            return Err(LanError::Dimension(format!(
                "state has blocks ({}, {}, {}), model expects ({n}, {l}, {n})",
                self.x.len(),
                self.y.len(),
                self.z.len()
            )));
        }
        Ok(())
    }
}

/// Coefficients of
/// `dX = f(X,Y) dt + dZ`, `dY = g(X,Y) dt`, `dZ = [S(t) + b(Z)] dt + sigma(Z) dW`.
pub trait DiffusionModel: Send + Sync + Debug {
    fn name(&self) -> &str;

    /// Adjustable and external dimension `N`.
    fn dim_n(&self) -> usize;

    /// Internal dimension `L`.
    fn dim_l(&self) -> usize;

    /// Brownian dimension `M >= N`.
    fn dim_m(&self) -> usize;

    fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    fn b(&self, z: &[f64], out: &mut [f64]);

    /// `sigma(z)`, row-major `N x M`.
    fn sigma(&self, z: &[f64], out: &mut [f64]);

    /// Whether `sigma` ignores `z`, which lets callers cache matrix roots.
    fn constant_sigma(&self) -> bool {
        false
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::unconstrained(self.dim_n(), self.dim_l())
    }
}

/// `B(t, x, y, z) = (f + S + b, g, S + b)`.
pub fn drift(
    model: &dyn DiffusionModel,
    signal: &dyn SignalModel,
    p: &ParamPoint,
    t: f64,
    s: &FullState,
) -> Result<Vec<f64>> {
    s.check_dims(model)?;
    if signal.dim_n() != model.dim_n() {
        return Err(LanError::Dimension(format!(
            "signal output dimension {} differs from model N = {}",
            signal.dim_n(),
            model.dim_n()
        )));
    }
    if let Some(detail) = model.state_space().violation(s) {
        return Err(LanError::StateEscape { time: t, detail });
    }
    let (n, l) = (model.dim_n(), model.dim_l());
    let sig = crate::signals::eval_signal(signal, p, t)?;
    let mut out = vec![0.0; 2 * n + l];
    let mut bz = vec![0.0; n];
    model.b(&s.z, &mut bz);
    model.f(&s.x, &s.y, &mut out[..n]);
    model.g(&s.x, &s.y, &mut out[n..n + l]);
    for i in 0..n {
        let ext = sig[i] + bz[i];
        out[i] += ext;
        out[n + l + i] = ext;
    }
    Ok(out)
}

/// `Sigma = (sigma(z); 0_{L x M}; sigma(z))`, shape `(2N + L) x M`.
pub fn diffusion(model: &dyn DiffusionModel, s: &FullState) -> Result<DMatrix<f64>> {
    s.check_dims(model)?;
    let (n, l, m) = (model.dim_n(), model.dim_l(), model.dim_m());
    let mut sig = vec![0.0; n * m];
    model.sigma(&s.z, &mut sig);
    let mut out = DMatrix::zeros(2 * n + l, m);
    for i in 0..n {
        for j in 0..m {
            out[(i, j)] = sig[i * m + j];
            out[(n + l + i, j)] = sig[i * m + j];
        }
    }
    Ok(out)
}

/// Rate functions of the Hodgkin–Huxley gating variables,
/// `(alpha_1, beta_1, alpha_2, beta_2, alpha_3, beta_3)`.
pub fn hh_rates(x: f64) -> [f64; 6] {
    let a1 = if x == 10.0 {
        0.1
    } else {
        (0.1 - 0.01 * x) / (1.0 - 0.1 * x).exp_m1()
    };
    let a2 = if x == 25.0 {
        1.0
    } else {
        (2.5 - 0.1 * x) / (2.5 - 0.1 * x).exp_m1()
    };
    [
        a1,
        0.125 * (-x / 80.0).exp(),
        a2,
        4.0 * (-x / 18.0).exp(),
        0.07 * (-x / 20.0).exp(),
        1.0 / ((3.0 - 0.1 * x).exp() + 1.0),
    ]
}

/// Stochastic Hodgkin–Huxley neuron with Ornstein–Uhlenbeck type input:
/// `N = M = 1`, `L = 3`, `b(z) = -beta z`, constant `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HodgkinHuxley {
    pub beta: f64,
    pub sigma: f64,
}

impl HodgkinHuxley {
    pub fn new(beta: f64, sigma: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite() && sigma.is_finite()) {
            return Err(LanError::InvalidParameter(
                "HH needs finite beta >= 0 and finite sigma".into(),
            ));
        }
        Ok(Self { beta, sigma })
    }

    /// `x = 0`, `z = 0` with every gating variable at its steady state for `x = 0`.
    pub fn resting_state() -> FullState {
        let x: f64 = 0.0;
        let r = hh_rates(x);
        let y = (0..3)
            .map(|i| r[2 * i] / (r[2 * i] + r[2 * i + 1]))
            .collect();
        FullState::new(vec![x], y, vec![0.0])
    }
}

impl Default for HodgkinHuxley {
    fn default() -> Self {
        Self {
            beta: 1.0,
            sigma: 1.0,
        }
    }
}

impl DiffusionModel for HodgkinHuxley {
    fn name(&self) -> &str {
        "hodgkin-huxley"
    }

    fn dim_n(&self) -> usize {
        1
    }

    fn dim_l(&self) -> usize {
        3
    }

    fn dim_m(&self) -> usize {
        1
    }

    fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let v = x[0];
        out[0] = -36.0 * y[0].powi(4) * (v + 12.0)
            - 120.0 * y[1].powi(3) * y[2] * (v - 120.0)
            - 0.3 * (v - 10.6);
    }

    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let r = hh_rates(x[0]);
        for i in 0..3 {
            out[i] = r[2 * i] * (1.0 - y[i]) - r[2 * i + 1] * y[i];
        }
    }

    fn b(&self, z: &[f64], out: &mut [f64]) {
        out[0] = -self.beta * z[0];
    }

    fn sigma(&self, _z: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }

    fn constant_sigma(&self) -> bool {
        true
    }

    fn state_space(&self) -> StateSpace {
        StateSpace {
            x: vec![Interval::REAL],
            y: vec![Interval::UNIT; 3],
            z: vec![Interval::REAL],
        }
    }
}

/// Which outer rotors receive external torque.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driven {
    First,
    Third,
    Both,
}

impl Driven {
    fn rotors(self) -> &'static [usize] {
        match self {
            Driven::First => &[0],
            Driven::Third => &[2],
            Driven::Both => &[0, 2],
        }
    }
}

/// Interaction and pinning potential derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    Sine,
    Zero,
}

impl Potential {
    fn eval(self, r: f64) -> f64 {
        match self {
            Potential::Sine => r.sin(),
            Potential::Zero => 0.0,
        }
    }
}

/// Three rotors coupled in a row, the driven outer ones in contact with a
/// heat bath through their external torque.
///
/// `x` holds the driven momenta; `y` holds `(q1, q2, q3)` followed by the
/// undriven momenta in rotor order; `z` holds the torques.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotorChain {
    pub driven: Driven,
    /// Dissipation constants `delta_i`, indexed by rotor.
    pub delta: [f64; 3],
    /// Temperatures `tau_i`, indexed by rotor.
    pub tau: [f64; 3],
    /// Mean reversion of the torque, `b_i(z) = -beta z`.
    pub beta: f64,
    pub interaction: Potential,
    pub pinning: Potential,
}

impl RotorChain {
    pub fn new(driven: Driven, delta: [f64; 3], tau: [f64; 3], beta: f64) -> Result<Self> {
        if delta
            .iter()
            .chain(&tau)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(LanError::InvalidParameter(
                "rotor delta and tau must be finite and >= 0".into(),
            ));
        }
        if !beta.is_finite() {
            return Err(LanError::InvalidParameter(
                "rotor beta must be finite".into(),
            ));
        }
        Ok(Self {
            driven,
            delta,
            tau,
            beta,
            interaction: Potential::Sine,
            pinning: Potential::Sine,
        })
    }

    pub fn with_potentials(mut self, interaction: Potential, pinning: Potential) -> Self {
        self.interaction = interaction;
        self.pinning = pinning;
        self
    }

    fn undriven(&self) -> Vec<usize> {
        (0..3)
            .filter(|i| !self.driven.rotors().contains(i))
            .collect()
    }

    /// Rotor momenta and angles from the `(x, y)` blocks.
    fn unpack(&self, x: &[f64], y: &[f64]) -> ([f64; 3], [f64; 3]) {
        let q = [y[0], y[1], y[2]];
        let mut p = [0.0; 3];
        for (k, &i) in self.driven.rotors().iter().enumerate() {
            p[i] = x[k];
        }
        for (k, i) in self.undriven().into_iter().enumerate() {
            p[i] = y[3 + k];
        }
        (p, q)
    }

    /// Conservative forces on each rotor.
    fn forces(&self, q: &[f64; 3]) -> [f64; 3] {
        let w1 = self.interaction.eval(q[1] - q[0]);
        let w3 = self.interaction.eval(q[1] - q[2]);
        [
            w1 - self.pinning.eval(q[0]),
            -(w1 + w3) - self.pinning.eval(q[1]),
            w3 - self.pinning.eval(q[2]),
        ]
    }
}

impl Default for RotorChain {
    fn default() -> Self {
        Self {
            driven: Driven::First,
            delta: [1.0, 0.0, 1.0],
            tau: [0.5, 0.0, 0.5],
            beta: 1.0,
            interaction: Potential::Sine,
            pinning: Potential::Sine,
        }
    }
}

impl DiffusionModel for RotorChain {
    fn name(&self) -> &str {
        "rotor-chain"
    }

    fn dim_n(&self) -> usize {
        self.driven.rotors().len()
    }

    fn dim_l(&self) -> usize {
        6 - self.dim_n()
    }

    fn dim_m(&self) -> usize {
        self.dim_n()
    }

    fn f(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (p, q) = self.unpack(x, y);
        let force = self.forces(&q);
        for (k, &i) in self.driven.rotors().iter().enumerate() {
            out[k] = force[i] - self.delta[i] * p[i];
        }
    }

    fn g(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (p, q) = self.unpack(x, y);
        out[..3].copy_from_slice(&p);
        let force = self.forces(&q);
        for (k, i) in self.undriven().into_iter().enumerate() {
            out[3 + k] = force[i];
        }
    }

    fn b(&self, z: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(z) {
            *o = -self.beta * v;
        }
    }

    fn sigma(&self, _z: &[f64], out: &mut [f64]) {
        let rotors = self.driven.rotors();
        let m = rotors.len();
        out.fill(0.0);
        for (k, &i) in rotors.iter().enumerate() {
            out[k * m + k] = (2.0 * self.delta[i] * self.tau[i]).sqrt();
        }
    }

    fn constant_sigma(&self) -> bool {
        true
    }
}

/// Multidimensional Ornstein–Uhlenbeck input with `f = 0`, `L = 0`:
/// `b(z) = -beta z` with `beta` an `N x N` matrix and constant `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuExternal {
    n: usize,
    m: usize,
    /// Row-major `N x N`.
    beta: Vec<f64>,
    /// Row-major `N x M`.
    sigma: Vec<f64>,
}

impl OuExternal {
    pub fn new(n: usize, m: usize, beta: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if n == 0 || m < n {
            return Err(LanError::Dimension(format!(
                "OU needs 1 <= N <= M, got N = {n}, M = {m}"
            )));
        }
        if beta.len() != n * n || sigma.len() != n * m {
            return Err(LanError::Dimension(
                "OU beta must be N x N and sigma N x M".into(),
            ));
        }
        if beta.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(LanError::InvalidParameter(
                "OU coefficients must be finite".into(),
            ));
        }
        Ok(Self { n, m, beta, sigma })
    }

    /// One-dimensional `dZ = [S - beta Z] dt + sigma dW`.
    pub fn scalar(beta: f64, sigma: f64) -> Result<Self> {
        Self::new(1, 1, vec![beta], vec![sigma])
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma_matrix(&self) -> &[f64] {
        &self.sigma
    }
}

impl DiffusionModel for OuExternal {
    fn name(&self) -> &str {
        "ou-external"
    }

    fn dim_n(&self) -> usize {
        self.n
    }

    fn dim_l(&self) -> usize {
        0
    }

    fn dim_m(&self) -> usize {
        self.m
    }

    fn f(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn g(&self, _x: &[f64], _y: &[f64], _out: &mut [f64]) {}

    fn b(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = -self.beta[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(z)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }

    fn sigma(&self, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.sigma);
    }

    fn constant_sigma(&self) -> bool {
        true
    }
}

/// Empirical bounds of `sigma sigma^T` over sampled external states.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    /// Smallest eigenvalue of `sigma sigma^T` over the samples.
    pub sigma0_hat: f64,
    /// Largest eigenvalue of `sigma sigma^T` over the samples.
    pub sigma_inf_hat: f64,
    /// Whether `x^T (sigma sigma^T)^{-1} x` stayed within
    /// `[|x|^2 / sigma_inf, |x|^2 / sigma0]` on random directions.
    pub quadratic_bounds_hold: bool,
    /// Heuristic: the extreme eigenvalues do not drift toward 0 or infinity
    /// at the edge of the sampled range.
    pub bounds_uniform: bool,
    pub samples: usize,
}

const DIRECTIONS_PER_SAMPLE: usize = 4;
const EDGE_DRIFT: f64 = 0.1;

/// Probe the ellipticity bounds of `sigma sigma^T` on sampled `z` values.
pub fn check_ellipticity(
    model: &dyn DiffusionModel,
    sample_states: &[Vec<f64>],
) -> Result<EllipticityReport> {
    if sample_states.is_empty() {
        return Err(LanError::EmptyInput(
            "no sample states for the ellipticity check".into(),
        ));
    }
    let (n, m) = (model.dim_n(), model.dim_m());
    let mut sig = vec![0.0; n * m];
    let mut extremes = Vec::with_capacity(sample_states.len());
    let mut grams = Vec::with_capacity(sample_states.len());
    for z in sample_states {
        if z.len() != n {
            return Err(LanError::Dimension(format!(
                "sample state has length {}, expected {n}",
                z.len()
            )));
        }
        model.sigma(z, &mut sig);
        let gram = linalg::gram_of_rows(n, m, &sig);
        if !linalg::is_symmetric(&gram, 1e-10) {
            return Err(LanError::BrokenModel(
                "sigma sigma^T is not symmetric".into(),
            ));
        }
        let ev = linalg::sym_eigenvalues(&gram);
        let (lo, hi) = (ev[0], ev[n - 1]);
        if !lo.is_finite() || !hi.is_finite() || lo < -1e-12 * hi.abs().max(1.0) {
            return Err(LanError::BrokenModel(format!(
                "sigma sigma^T has eigenvalue {lo:e} at z = {z:?}"
            )));
        }
        extremes.push((lo, hi));
        grams.push(gram);
    }
    let sigma0 = extremes.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let sigma_inf = extremes
        .iter()
        .map(|e| e.1)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut quadratic_bounds_hold = sigma0 > 0.0;
    if quadratic_bounds_hold {
        let mut rng = GaussianStream::new(0x5eed_e111, n);
        let mut x = vec![0.0; n];
        let mut step = 0;
        'outer: for gram in &grams {
            let Some(inv) = gram.clone().try_inverse() else {
                quadratic_bounds_hold = false;
                break;
            };
            for _ in 0..DIRECTIONS_PER_SAMPLE {
                rng.fill_step(step, &mut x);
                step += 1;
                let xv = nalgebra::DVector::from_column_slice(&x);
                let q = xv.dot(&(&inv * &xv));
                let norm2 = xv.norm_squared();
                let slack = 1e-9 * q.abs().max(norm2 / sigma0);
                if q < norm2 / sigma_inf - slack || q > norm2 / sigma0 + slack {
                    quadratic_bounds_hold = false;
                    break 'outer;
                }
            }
        }
    }

    let bounds_uniform =
        sigma0 > 1e-12 * sigma_inf.max(1.0) && !edge_drift(sample_states, &extremes);
    Ok(EllipticityReport {
        sigma0_hat: sigma0,
        sigma_inf_hat: sigma_inf,
        quadratic_bounds_hold,
        bounds_uniform,
        samples: sample_states.len(),
    })
}

/// Compare the extreme eigenvalues on the outer decile of `|z|` with those on
/// the remaining samples. A bounded, elliptic `sigma` shows no systematic
/// change there; growth or decay signals bounds that depend on the range.
fn edge_drift(samples: &[Vec<f64>], extremes: &[(f64, f64)]) -> bool {
    if samples.len() < 10 {
        return false;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let norm = |z: &Vec<f64>| z.iter().map(|v| v * v).sum::<f64>();
    order.sort_by(|&a, &b| norm(&samples[a]).total_cmp(&norm(&samples[b])));
    let cut = samples.len() - samples.len() / 10;
    let (inner, outer) = order.split_at(cut);
    let range = |idx: &[usize]| {
        idx.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(extremes[i].0), hi.max(extremes[i].1))
            })
    };
    let (in_lo, in_hi) = range(inner);
    let (out_lo, out_hi) = range(outer);
    out_hi > in_hi * (1.0 + EDGE_DRIFT) || out_lo < in_lo * (1.0 - EDGE_DRIFT)
}
