use std::f64::consts::{PI, TAU};

use lan_diffusion::signals::{
    check_l2_differentiability, check_linear_independence, estimate_holder_exponents, eval_sdot,
    eval_signal, shrinking_displacements, AffineMap, Harmonic, HolderFit,
};
use lan_diffusion::{FourierSignal, ParamPoint, SignalModel};
use proptest::prelude::*;

fn mixed_signal() -> FourierSignal {
    FourierSignal::new(
        2,
        2,
        vec![
            Harmonic {
                k: 1,
                sin: AffineMap {
                    offset: vec![0.3, 0.0],
                    matrix: vec![1.0, 0.5, 0.0, -1.0],
                },
                cos: AffineMap::linear(vec![0.0, 0.2, 0.7, 0.0], 2),
            },
            Harmonic {
                k: 4,
                sin: AffineMap::zero(2, 2),
                cos: AffineMap {
                    offset: vec![0.0, 1.0],
                    matrix: vec![0.1, 0.0, 0.0, 0.4],
                },
            },
        ],
    )
    .unwrap()
}

/// Wraps a signal and shifts every gradient entry by a constant.
#[derive(Debug)]
struct BiasedGradient(FourierSignal, f64);

impl SignalModel for BiasedGradient {
    fn dim_n(&self) -> usize {
        self.0.dim_n()
    }
    fn dim_d(&self) -> usize {
        self.0.dim_d()
    }
    fn eval(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        self.0.eval(theta, s, out)
    }
    fn grad_theta(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        self.0.grad_theta(theta, s, out);
        out.iter_mut().for_each(|v| *v += self.1);
    }
    fn time_deriv(&self, theta: &[f64], s: f64, out: &mut [f64]) {
        self.0.time_deriv(theta, s, out)
    }
}

/// `S_theta(s) = theta`, constant in `s`.
#[derive(Debug)]
struct Constant;

impl SignalModel for Constant {
    fn dim_n(&self) -> usize {
        1
    }
    fn dim_d(&self) -> usize {
        1
    }
    fn eval(&self, theta: &[f64], _s: f64, out: &mut [f64]) {
        out[0] = theta[0];
    }
    fn grad_theta(&self, _theta: &[f64], _s: f64, out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn time_deriv(&self, _theta: &[f64], _s: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }
}

#[test]
fn sdot_at_period_two() {
    let sig = FourierSignal::linear_sine(1).unwrap();
    let p = ParamPoint::new(vec![1.0], 2.0).unwrap();
    let m = eval_sdot(&sig, &p, 1.0).unwrap();
    assert!(m[(0, 0)].abs() < 1e-15);
    assert!((m[(0, 1)] - PI / 2.0).abs() < 1e-14);
}

#[test]
fn biased_gradient_fails_l2_check() {
    let p = ParamPoint::new(vec![1.0, -0.5], 1.0).unwrap();
    let deltas = shrinking_displacements(2, 14, 0.1);
    let good = check_l2_differentiability(&mixed_signal(), &p, 3.0, &deltas, 1e-4).unwrap();
    assert!(good.passed, "{:?}", good.ratios);
    assert!(good.ratios.windows(2).all(|w| w[1] < w[0]));
    let bad =
        check_l2_differentiability(&BiasedGradient(mixed_signal(), 0.1), &p, 3.0, &deltas, 1e-4)
            .unwrap();
    assert!(!bad.passed);
    assert!(*bad.ratios.last().unwrap() > 1e-3);
}

#[test]
fn l2_check_needs_displacements() {
    let p = ParamPoint::new(vec![1.0], 1.0).unwrap();
    assert!(check_l2_differentiability(
        &FourierSignal::linear_sine(1).unwrap(),
        &p,
        1.0,
        &[],
        1e-4
    )
    .is_err());
}

#[test]
fn gram_of_two_sines() {
    // d/dtheta_k = sin(2 k pi s); S' = 2 pi cos(2 pi s) + 4 pi cos(4 pi s)
    let sig = FourierSignal::linear_sine(2).unwrap();
    let r = check_linear_independence(&sig, &[1.0, 1.0], 4096).unwrap();
    assert!(r.independent);
    let want = [
        [0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.0, 0.0, 2.0 * PI * PI + 8.0 * PI * PI],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!(
                (r.gram[i][j] - want[i][j]).abs() < 1e-9,
                "gram[{i}][{j}] = {}",
                r.gram[i][j]
            );
        }
    }
    assert!(check_linear_independence(&sig, &[1.0, 1.0], 5).is_err());
}

#[test]
fn constant_signal_is_period_invariant() {
    let fit =
        estimate_holder_exponents(&Constant, &[1.0], 1.0, &[1.0, 2.0, 4.0], &[0.01, 0.02]).unwrap();
    assert!(matches!(fit, HolderFit::PeriodInvariant));
}

#[test]
fn holder_bound_for_fourier_preset() {
    let sig = FourierSignal::normalized_expansion(2).unwrap();
    let fit = estimate_holder_exponents(
        &sig,
        &[1.0, 0.5, -0.3, 0.2],
        1.0,
        &[0.5, 1.0, 2.0],
        &[1e-4, 2e-4, 4e-4],
    )
    .unwrap();
    match fit {
        HolderFit::Exponents { alpha, beta, .. } => {
            assert!((alpha - 2.0).abs() < 0.05, "alpha = {alpha}");
            assert!((beta - 3.0).abs() < 0.2, "beta = {beta}");
            assert!(beta < 1.0 + 1.5 * alpha);
        }
        HolderFit::PeriodInvariant => panic!("expected exponents"),
    }
}

fn theta2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

proptest! {
    #[test]
    fn periodic_in_s(theta in theta2(), s in -5.0..5.0f64) {
        let sig = mixed_signal();
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        sig.eval(&theta, s, &mut a);
        sig.eval(&theta, s + 1.0, &mut b);
        for i in 0..2 {
            prop_assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences(theta in theta2(), s in 0.0..1.0f64) {
        let sig = mixed_signal();
        let eps = 1e-5;
        let mut grad = [0.0; 4];
        sig.grad_theta(&theta, s, &mut grad);
        let (mut up, mut dn) = ([0.0; 2], [0.0; 2]);
        for c in 0..2 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[c] += eps;
            tm[c] -= eps;
            sig.eval(&tp, s, &mut up);
            sig.eval(&tm, s, &mut dn);
            for i in 0..2 {
                let fd = (up[i] - dn[i]) / (2.0 * eps);
                prop_assert!((fd - grad[i * 2 + c]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
        let mut ds = [0.0; 2];
        sig.time_deriv(&theta, s, &mut ds);
        sig.eval(&theta, s + eps, &mut up);
        sig.eval(&theta, s - eps, &mut dn);
        for i in 0..2 {
            let fd = (up[i] - dn[i]) / (2.0 * eps);
            prop_assert!((fd - ds[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn period_column_vanishes_at_zero(theta in theta2(), period in 0.1..10.0f64) {
        let p = ParamPoint::new(theta, period).unwrap();
        let m = eval_sdot(&mixed_signal(), &p, 0.0).unwrap();
        prop_assert!(m.column(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_in_theta(t1 in theta2(), t2 in theta2(), a in -2.0..2.0f64, b in -2.0..2.0f64, s in 0.0..1.0f64) {
        let sig = FourierSignal::linear_sine(2).unwrap();
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let (mut u, mut v, mut w) = ([0.0], [0.0], [0.0]);
        sig.eval(&t1, s, &mut u);
        sig.eval(&t2, s, &mut v);
        sig.eval(&mix, s, &mut w);
        prop_assert!((w[0] - (a * u[0] + b * v[0])).abs() < 1e-13 * (1.0 + w[0].abs()));
    }

    #[test]
    fn time_scaling(theta in -3.0..3.0f64, period in 0.2..5.0f64, t in 0.0..20.0f64) {
        let sig = FourierSignal::linear_sine(1).unwrap();
        let p = ParamPoint::new(vec![theta], period).unwrap();
        let v = eval_signal(&sig, &p, t).unwrap()[0];
        prop_assert!((v - theta * (TAU * t / period).sin()).abs() < 1e-12);
    }
}
