//! Recovery of the hidden blocks from an observed `X` path.
//!
//! Given `X` on a grid and the exact starting point, `Y` solves the ODE
//! `dY = g(X, Y) dt` and `Z_t = Z_0 + X_t - X_0 - int_0^t f(X_s, Y_s) ds`.

use crate::error::{LanError, Result};
use crate::models::{DiffusionModel, FullState};
use crate::simulate::CLAMP_BUDGET;
use crate::trajectory::{Component, Role, Trajectory};

/// Reconstruct the full `(x, y, z)` path from the `X` block of `x_traj`.
///
/// `Y` is advanced by the classical Runge–Kutta scheme with `X` linearly
/// interpolated at half steps; `int f` uses the trapezoidal rule. Bounded
/// `Y` components are clamped within [`CLAMP_BUDGET`].
pub fn reconstruct_yz(
    model: &dyn DiffusionModel,
    x_traj: &Trajectory,
    start: &FullState,
) -> Result<Trajectory> {
    start.check_dims(model)?;
    let xs = x_traj.block(Role::X)?;
    let (n, l) = (model.dim_n(), model.dim_l());
    if xs.dim() != n {
        return Err(LanError::Dimension(format!(
            "X path has {} columns, model has N = {n}",
            xs.dim()
        )));
    }
    let x0 = xs.row(0);
    if x0
        .iter()
        .zip(&start.x)
        .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        log::warn!("first X sample differs from the given start; using the observed value");
    }
    let h = xs.step();
    let bounds = model.state_space().y;

    let dim = 2 * n + l;
    let mut values = Vec::with_capacity(dim * xs.rows());
    let mut y = start.y.clone();
    let mut f_prev = vec![0.0; n];
    let mut f_next = vec![0.0; n];
    model.f(x0, &y, &mut f_prev);
    let mut integral = vec![0.0; n];
    let mut clamped = 0.0;

    let push_row = |values: &mut Vec<f64>, x: &[f64], y: &[f64], integral: &[f64]| {
        values.extend_from_slice(x);
        values.extend_from_slice(y);
        values.extend((0..n).map(|i| start.z[i] + x[i] - x0[i] - integral[i]));
    };
    push_row(&mut values, x0, &y, &integral);

    let mut xm = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; l],
        vec![0.0; l],
        vec![0.0; l],
        vec![0.0; l],
        vec![0.0; l],
    );
    for k in 0..xs.steps() {
        let (xa, xb) = (xs.row(k), xs.row(k + 1));
        for i in 0..n {
            xm[i] = 0.5 * (xa[i] + xb[i]);
        }
        if l > 0 {
            model.g(xa, &y, &mut k1);
            axpy(&y, 0.5 * h, &k1, &mut tmp);
            model.g(&xm, &tmp, &mut k2);
            axpy(&y, 0.5 * h, &k2, &mut tmp);
            model.g(&xm, &tmp, &mut k3);
            axpy(&y, h, &k3, &mut tmp);
            model.g(xb, &tmp, &mut k4);
            for j in 0..l {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            let time = (k + 1) as f64 * h;
            for (j, (v, iv)) in y.iter_mut().zip(&bounds).enumerate() {
                if !v.is_finite() {
                    return Err(LanError::ReconstructionDivergence {
                        time,
                        detail: format!("y{} is not finite", j + 1),
                    });
                }
                let c = v.clamp(iv.lo, iv.hi);
                clamped += (c - *v).abs();
                *v = c;
            }
            if clamped > CLAMP_BUDGET {
                return Err(LanError::ReconstructionDivergence {
                    time,
                    detail: format!("cumulative clamp {clamped:.3e} exceeds {CLAMP_BUDGET:e}"),
                });
            }
        }
        model.f(xb, &y, &mut f_next);
        for i in 0..n {
            integral[i] += 0.5 * h * (f_prev[i] + f_next[i]);
        }
        std::mem::swap(&mut f_prev, &mut f_next);
        push_row(&mut values, xb, &y, &integral);
    }
    Trajectory::new(h, Component::full_layout(n, l), values, xs.seed())
}

fn axpy(y: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for ((o, yv), kv) in out.iter_mut().zip(y).zip(k) {
        *o = yv + a * kv;
    }
}
