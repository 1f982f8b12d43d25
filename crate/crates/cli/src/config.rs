//! Experiment configuration: a TOML file with `[model]`, `[signal]`,
//! `[parameter]` and `[experiment]` sections, plus `section.key=value`
//! overrides from the command line.

use std::path::{Path, PathBuf};

use lan_diffusion::fisher::DEFAULT_ESTIMATION_PERIODS;
use lan_diffusion::models::{Driven, HodgkinHuxley, OuExternal, Potential, RotorChain};
use lan_diffusion::signals::{AffineMap, Harmonic};
use lan_diffusion::{DiffusionModel, FourierSignal, FullState, ParamPoint, SignalModel};
use serde::{Deserialize, Serialize};

/// A problem with the configuration, reported as a usage error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    pub parameter: ParameterConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    #[serde(alias = "ou-external")]
    Ou,
    HodgkinHuxley,
    #[serde(alias = "rotor-chain")]
    Rotor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: ModelPreset,
    /// Mean reversion: a scalar, or a row-major `N x N` matrix for `ou`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Noise loading: a scalar, or a row-major `N x M` matrix for `ou`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    /// External dimension `N` for `ou` (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Noise dimension `M` for `ou` (default `N`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Driven rotors: `first`, `third` or `both`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driven: Option<Driven>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<Potential>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinning: Option<Potential>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalPreset {
    /// `sum_k theta_k sin(2 k pi s)` in every channel, `D = harmonics`.
    #[default]
    Sine,
    /// `sum_k sqrt(2) (theta_k sin + theta_{d+k} cos)`, `D = 2 harmonics`.
    Fourier,
    /// Harmonics listed in `[[signal.harmonic]]`.
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default)]
    pub preset: SignalPreset,
    #[serde(default = "one")]
    pub harmonics: usize,
    /// Parameter dimension `D` of a custom signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub harmonic: Vec<HarmonicConfig>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            preset: SignalPreset::Sine,
            harmonics: 1,
            dim: None,
            harmonic: Vec::new(),
        }
    }
}

/// One harmonic of a custom signal: `G` and `H` rows, row-major `N x D`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicConfig {
    pub k: u32,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin_offset: Vec<f64>,
    #[serde(default)]
    pub cos_offset: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub theta: Vec<f64>,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FisherChoice {
    /// Closed form under constant `sigma`, ergodic estimate otherwise.
    #[default]
    Oracle,
    Ergodic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Local horizon of `lan`, `score-cov` and `mle`.
    #[serde(default = "default_n")]
    pub n: f64,
    /// Horizons of `remainder` and `rates`.
    #[serde(default = "default_n_list")]
    pub n_list: Vec<f64>,
    /// Local direction; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default)]
    pub fisher: FisherChoice,
    /// Path length of ergodic Fisher estimates; defaults to 1000 periods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher_horizon: Option<f64>,
    /// Alternative point for `loglik`; defaults to the local parameter at `h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_period: Option<f64>,
    /// Start state; defaults to the preset's rest state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_z: Option<Vec<f64>>,
    /// Trajectory file read by `reconstruct`, `loglik` and `mle`, relative
    /// to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// MLE period window half-width and spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

fn one() -> usize {
    1
}
fn default_horizon() -> f64 {
    10.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_replications() -> usize {
    200
}
fn default_n() -> f64 {
    100.0
}
fn default_n_list() -> Vec<f64> {
    vec![50.0, 100.0, 200.0]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("every experiment field has a default")
    }
}

/// A parsed config with the text it was resolved to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    /// Canonical TOML of `config`; hashed into the run directory name.
    pub text: String,
    pub base_dir: PathBuf,
}

/// Read `path`, apply `key=value` overrides and validate.
pub fn load(path: &Path, overrides: &[String]) -> Result<Resolved, ConfigError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(&raw, overrides, base_dir)
}

pub fn resolve(
    raw: &str,
    overrides: &[String],
    base_dir: PathBuf,
) -> Result<Resolved, ConfigError> {
    let mut table: toml::Table = raw
        .parse()
        .map_err(|e| bad(format!("malformed config: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: Config = table
        .try_into()
        .map_err(|e| bad(format!("malformed config: {e}")))?;
    config.validate()?;
    let text = toml::to_string(&config).map_err(|e| bad(e.to_string()))?;
    Ok(Resolved {
        config,
        text,
        base_dir,
    })
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{spec}` is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| bad(format!("override key `{key}` is not section.field")))?;
    let value = value.trim();
    let parsed: toml::Value = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sect = entry
        .as_table_mut()
        .ok_or_else(|| bad(format!("`{section}` is not a section")))?;
    sect.insert(field.to_string(), parsed);
    Ok(())
}

impl Config {
    fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.experiment;
        if !(e.horizon > 0.0 && e.horizon.is_finite()) {
            return Err(bad(format!(
                "experiment.horizon must be positive, got {}",
                e.horizon
            )));
        }
        if !(e.step > 0.0 && e.step < e.horizon) {
            return Err(bad(format!(
                "experiment.step must lie in (0, horizon), got {}",
                e.step
            )));
        }
        if let Some(t) = e.fisher_horizon.filter(|t| !(*t > e.step && t.is_finite())) {
            return Err(bad(format!(
                "experiment.fisher_horizon must exceed the step, got {t}"
            )));
        }
        if !(e.n > 0.0) {
            return Err(bad("experiment.n must be positive"));
        }
        if e.n_list.is_empty() || e.n_list.iter().any(|v| !(*v > 0.0)) {
            return Err(bad("experiment.n_list needs positive horizons"));
        }
        let model = self.model()?;
        let signal = self.signal(model.dim_n())?;
        let p = self.parameter()?;
        if signal.dim_d() != p.dim() {
            return Err(bad(format!(
                "signal has D = {}, parameter.theta has {}",
                signal.dim_d(),
                p.dim()
            )));
        }
        if let Some(h) = &e.h {
            if h.len() != p.dim() + 1 {
                return Err(bad(format!("experiment.h needs {} entries", p.dim() + 1)));
            }
        }
        self.start_state(model.as_ref())?
            .check_dims(model.as_ref())
            .map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn model(&self) -> Result<Box<dyn DiffusionModel>, ConfigError> {
        let m = &self.model;
        let scalar = |v: &Option<Vec<f64>>, name: &str| -> Result<f64, ConfigError> {
            match v.as_deref() {
                None => Ok(1.0),
                Some([x]) => Ok(*x),
                Some(_) => Err(bad(format!(
                    "model.{name} must be a single number for {:?}",
                    m.preset
                ))),
            }
        };
        let lan = |e: lan_diffusion::LanError| bad(e.to_string());
        Ok(match m.preset {
            ModelPreset::Ou => {
                let n = m.n.unwrap_or(1);
                let dm = m.m.unwrap_or(n);
                let eye = |r: usize, c: usize| {
                    (0..r * c)
                        .map(|i| if i / c == i % c { 1.0 } else { 0.0 })
                        .collect::<Vec<_>>()
                };
                let expand = |v: &Option<Vec<f64>>, r: usize, c: usize| match v.as_deref() {
                    None => eye(r, c),
                    Some([x]) => eye(r, c).iter().map(|e| e * x).collect(),
                    Some(full) => full.to_vec(),
                };
                Box::new(
                    OuExternal::new(n, dm, expand(&m.beta, n, n), expand(&m.sigma, n, dm))
                        .map_err(lan)?,
                )
            }
            ModelPreset::HodgkinHuxley => Box::new(
                HodgkinHuxley::new(scalar(&m.beta, "beta")?, scalar(&m.sigma, "sigma")?)
                    .map_err(lan)?,
            ),
            ModelPreset::Rotor => {
                let base = RotorChain::default();
                let rotor = RotorChain::new(
                    m.driven.unwrap_or(base.driven),
                    m.delta.unwrap_or(base.delta),
                    m.tau.unwrap_or(base.tau),
                    m.beta
                        .as_ref()
                        .map_or(Ok(base.beta), |_| scalar(&m.beta, "beta"))?,
                )
                .map_err(lan)?
                .with_potentials(
                    m.interaction.unwrap_or(base.interaction),
                    m.pinning.unwrap_or(base.pinning),
                );
                Box::new(rotor)
            }
        })
    }

    pub fn signal(&self, n: usize) -> Result<FourierSignal, ConfigError> {
        let s = &self.signal;
        let lan = |e: lan_diffusion::LanError| bad(format!("signal: {e}"));
        match s.preset {
            SignalPreset::Sine => {
                if n == 1 {
                    return FourierSignal::linear_sine(s.harmonics).map_err(lan);
                }
                // theta_{k} drives harmonic k + 1 in every channel
                let d = s.harmonics;
                let harmonics = (0..d)
                    .map(|k| {
                        let mut g = vec![0.0; n * d];
                        (0..n).for_each(|i| g[i * d + k] = 1.0);
                        Harmonic {
                            k: k as u32 + 1,
                            sin: AffineMap::linear(g, n),
                            cos: AffineMap::zero(n, d),
                        }
                    })
                    .collect();
                FourierSignal::new(n, d, harmonics).map_err(lan)
            }
            SignalPreset::Fourier if n != 1 => Err(bad(
                "the fourier preset is scalar; use a custom signal for N > 1",
            )),
            SignalPreset::Fourier => FourierSignal::normalized_expansion(s.harmonics).map_err(lan),
            SignalPreset::Custom => {
                let d = s
                    .dim
                    .ok_or_else(|| bad("a custom signal needs signal.dim"))?;
                let fill = |v: &[f64], len: usize| {
                    if v.is_empty() {
                        vec![0.0; len]
                    } else {
                        v.to_vec()
                    }
                };
                let harmonics = s
                    .harmonic
                    .iter()
                    .map(|h| Harmonic {
                        k: h.k,
                        sin: AffineMap {
                            offset: fill(&h.sin_offset, n),
                            matrix: fill(&h.sin, n * d),
                        },
                        cos: AffineMap {
                            offset: fill(&h.cos_offset, n),
                            matrix: fill(&h.cos, n * d),
                        },
                    })
                    .collect();
                FourierSignal::new(n, d, harmonics).map_err(lan)
            }
        }
    }

    pub fn parameter(&self) -> Result<ParamPoint, ConfigError> {
        ParamPoint::new(self.parameter.theta.clone(), self.parameter.period)
            .map_err(|e| bad(format!("parameter: {e}")))
    }

    pub fn fisher_horizon(&self) -> f64 {
        self.experiment
            .fisher_horizon
            .unwrap_or(DEFAULT_ESTIMATION_PERIODS * self.parameter.period)
    }

    pub fn direction(&self) -> Vec<f64> {
        self.experiment
            .h
            .clone()
            .unwrap_or_else(|| vec![1.0; self.parameter.theta.len() + 1])
    }

    pub fn start_state(&self, model: &dyn DiffusionModel) -> Result<FullState, ConfigError> {
        let (n, l) = (model.dim_n(), model.dim_l());
        let rest = match self.model.preset {
            ModelPreset::HodgkinHuxley => HodgkinHuxley::resting_state(),
            _ => FullState::new(vec![0.0; n], vec![0.0; l], vec![0.0; n]),
        };
        let e = &self.experiment;
        Ok(FullState::new(
            e.start_x.clone().unwrap_or(rest.x),
            e.start_y.clone().unwrap_or(rest.y),
            e.start_z.clone().unwrap_or(rest.z),
        ))
    }

    pub fn input_path(&self, base: &Path) -> Option<PathBuf> {
        self.experiment.input.as_ref().map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        })
    }
}
