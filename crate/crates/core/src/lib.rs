//! Degenerate diffusions whose external input is a periodic signal plus noise.
//!
//! The system has three blocks of variables: an adjustable block `X` that
//! receives the noisy input, an internal block `Y` driven only through `X`,
//! and the external input `Z` itself,
//!
//! ```text
//! dX = f(X, Y) dt + dZ
//! dY = g(X, Y) dt
//! dZ = [S(t) + b(Z)] dt + sigma(Z) dW
//! ```
//!
//! where the signal `S(t) = S_theta(t / T)` depends on a shape parameter
//! `theta` and a period `T`. The crate simulates such systems, reconstructs
//! the hidden blocks from an observed `X`, evaluates Girsanov likelihood
//! ratios along the `Z` path, estimates the Fisher information by ergodic
//! time averages and runs Monte Carlo experiments probing local asymptotic
//! normality with local scales `n^{-1/2}` (shape) and `n^{-3/2}` (period).

pub mod error;
pub mod fisher;
pub mod lan;
pub mod likelihood;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod par;
pub mod quadrature;
pub mod reconstruct;
pub mod signals;
pub mod simulate;
pub mod trajectory;

pub use error::{LanError, Result};
pub use models::{DiffusionModel, FullState};
pub use signals::{FourierSignal, ParamPoint, SignalModel};
pub use trajectory::{Component, Role, Trajectory};
