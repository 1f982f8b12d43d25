use lan_diffusion::models::{
    check_ellipticity, diffusion, drift, hh_rates, Driven, HodgkinHuxley, OuExternal, RotorChain,
};
use lan_diffusion::signals::{AffineMap, Harmonic};
use lan_diffusion::{DiffusionModel, FourierSignal, FullState, LanError, ParamPoint};
use proptest::prelude::*;

/// `N = M = 1`, `L = 0`, `sigma(z) = z`.
#[derive(Debug)]
struct LinearVolatility;

impl DiffusionModel for LinearVolatility {
    fn name(&self) -> &str {
        "linear-volatility"
    }
    fn dim_n(&self) -> usize {
        1
    }
    fn dim_l(&self) -> usize {
        0
    }
    fn dim_m(&self) -> usize {
        1
    }
    fn f(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn g(&self, _x: &[f64], _y: &[f64], _out: &mut [f64]) {}
    fn b(&self, z: &[f64], out: &mut [f64]) {
        out[0] = -z[0];
    }
    fn sigma(&self, z: &[f64], out: &mut [f64]) {
        out[0] = z[0];
    }
}

/// `S_theta(s) = theta sin(2 pi s)` componentwise, `D = N`.
fn diagonal_sine(n: usize) -> FourierSignal {
    let mut eye = vec![0.0; n * n];
    (0..n).for_each(|i| eye[i * n + i] = 1.0);
    FourierSignal::new(
        n,
        n,
        vec![Harmonic {
            k: 1,
            sin: AffineMap::linear(eye, n),
            cos: AffineMap::zero(n, n),
        }],
    )
    .unwrap()
}

fn presets() -> Vec<Box<dyn DiffusionModel>> {
    vec![
        Box::new(HodgkinHuxley::default()),
        Box::new(RotorChain::default()),
        Box::new(RotorChain {
            driven: Driven::Third,
            ..RotorChain::default()
        }),
        Box::new(RotorChain::new(Driven::Both, [0.5, 1.0, 1.0], [1.0, 0.3, 2.0], 0.7).unwrap()),
        Box::new(
            OuExternal::new(
                2,
                3,
                vec![1.0, 0.1, 0.0, 2.0],
                vec![1.0, 0.0, 0.5, 0.2, 1.0, 0.0],
            )
            .unwrap(),
        ),
    ]
}

#[test]
fn hh_diffusion_column() {
    let m = HodgkinHuxley::default();
    let sig = diffusion(&m, &HodgkinHuxley::resting_state()).unwrap();
    assert_eq!(sig.as_slice(), &[1.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn rotor_diffusion_diagonal() {
    // delta_1 tau_1 = 0.5, delta_3 tau_3 = 2
    let m = RotorChain::new(Driven::Both, [1.0, 1.0, 4.0], [0.5, 0.0, 0.5], 1.0).unwrap();
    let s = FullState::new(vec![0.0; 2], vec![0.0; 4], vec![0.0; 2]);
    let sig = diffusion(&m, &s).unwrap();
    assert_eq!(sig.nrows(), 8);
    for (row, want) in [
        (0, [1.0, 0.0]),
        (1, [0.0, 2.0]),
        (6, [1.0, 0.0]),
        (7, [0.0, 2.0]),
    ] {
        for j in 0..2 {
            assert!((sig[(row, j)] - want[j]).abs() < 1e-15);
        }
    }
}

#[test]
fn gate_outside_unit_interval_is_an_escape() {
    let m = HodgkinHuxley::default();
    let sig = FourierSignal::linear_sine(1).unwrap();
    let p = ParamPoint::new(vec![1.0], 1.0).unwrap();
    let s = FullState::new(vec![0.0], vec![0.3, 1.2, 0.5], vec![0.0]);
    assert!(matches!(
        drift(&m, &sig, &p, 2.5, &s),
        Err(LanError::StateEscape { .. })
    ));
}

#[test]
fn ellipticity_of_scalar_unit_noise() {
    let r = check_ellipticity(
        &OuExternal::scalar(1.0, 1.0).unwrap(),
        &[vec![0.0], vec![3.0], vec![-7.0]],
    )
    .unwrap();
    assert_eq!((r.sigma0_hat, r.sigma_inf_hat), (1.0, 1.0));
    assert!(r.quadratic_bounds_hold);
}

#[test]
fn unbounded_volatility_is_flagged() {
    let samples: Vec<Vec<f64>> = (1..=100).map(|i| vec![i as f64 / 10.0]).collect();
    let r = check_ellipticity(&LinearVolatility, &samples).unwrap();
    assert!((r.sigma_inf_hat - 100.0).abs() < 1e-9);
    assert!(!r.bounds_uniform);
    let narrow: Vec<Vec<f64>> = (1..=100).map(|i| vec![i as f64 / 100.0]).collect();
    let r2 = check_ellipticity(&LinearVolatility, &narrow).unwrap();
    assert!(r2.sigma_inf_hat < r.sigma_inf_hat);

    let bounded =
        OuExternal::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 2.0]).unwrap();
    let planar: Vec<Vec<f64>> = samples.iter().map(|z| vec![z[0], -z[0]]).collect();
    let r3 = check_ellipticity(&bounded, &planar).unwrap();
    assert_eq!((r3.sigma0_hat, r3.sigma_inf_hat), (1.0, 4.0));
    assert!(r3.bounds_uniform && r3.quadratic_bounds_hold);
}

#[test]
fn hh_rates_positive_on_grid() {
    for i in 0..=24_000 {
        let x = -120.0 + i as f64 * 1e-2;
        assert!(
            hh_rates(x).iter().all(|r| *r > 0.0 && r.is_finite()),
            "x = {x}"
        );
    }
}

#[test]
fn hh_rates_continuous_at_removable_points() {
    for eps in [1e-8, -1e-8] {
        assert!((hh_rates(10.0 + eps)[0] - 0.1).abs() < 1e-6);
        assert!((hh_rates(25.0 + eps)[2] - 1.0).abs() < 1e-6);
    }
}

fn state_for(model: &dyn DiffusionModel, seed: &[f64]) -> FullState {
    let (n, l) = (model.dim_n(), model.dim_l());
    let pick = |i: usize| seed[i % seed.len()];
    let bounds = model.state_space().y;
    let y = (0..l)
        .map(|j| {
            let v = pick(n + j);
            if bounds[j].is_bounded() {
                bounds[j].lo + (v.abs() % 1.0) * (bounds[j].hi - bounds[j].lo)
            } else {
                v
            }
        })
        .collect();
    FullState::new(
        (0..n).map(pick).collect(),
        y,
        (0..n).map(|i| pick(n + l + i)).collect(),
    )
}

proptest! {
    #[test]
    fn sigma_blocks_are_copies(seed in prop::collection::vec(-50.0..50.0f64, 1..8)) {
        for model in presets() {
            let s = state_for(model.as_ref(), &seed);
            let sig = diffusion(model.as_ref(), &s).unwrap();
            let (n, l) = (model.dim_n(), model.dim_l());
            for j in 0..sig.ncols() {
                for r in n..n + l {
                    prop_assert_eq!(sig[(r, j)], 0.0);
                }
                for i in 0..n {
                    prop_assert_eq!(sig[(i, j)].to_bits(), sig[(n + l + i, j)].to_bits());
                }
            }
        }
    }

    #[test]
    fn drift_blocks_share_the_external_part(seed in prop::collection::vec(-50.0..50.0f64, 1..8), t in 0.0..10.0f64) {
        for model in presets() {
            let n = model.dim_n();
            let l = model.dim_l();
            let s = state_for(model.as_ref(), &seed);
            let p = ParamPoint::new(vec![1.3, -0.4][..n].to_vec(), 0.7).unwrap();
            let d = drift(model.as_ref(), &diagonal_sine(n), &p, t, &s).unwrap();
            let mut f = vec![0.0; n];
            model.f(&s.x, &s.y, &mut f);
            for i in 0..n {
                prop_assert!((d[i] - f[i] - d[n + l + i]).abs() <= 1e-12 * (1.0 + d[i].abs()));
            }
        }
    }

    #[test]
    fn ou_drift_is_affine(z1 in prop::collection::vec(-10.0..10.0f64, 2), z2 in prop::collection::vec(-10.0..10.0f64, 2), a in -3.0..3.0f64) {
        let m = OuExternal::new(2, 2, vec![1.0, 0.3, -0.2, 0.8], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let sig = diagonal_sine(2);
        let p = ParamPoint::new(vec![1.0, 0.5], 1.0).unwrap();
        let at = |z: Vec<f64>| drift(&m, &sig, &p, 0.3, &FullState::new(vec![0.0; 2], vec![], z)).unwrap();
        let base = at(vec![0.0; 2]);
        let comb: Vec<f64> = z1.iter().zip(&z2).map(|(u, v)| a * u + v).collect();
        let (d1, d2, dc) = (at(z1), at(z2), at(comb));
        for i in 2..4 {
            let lin = a * (d1[i] - base[i]) + (d2[i] - base[i]);
            prop_assert!((dc[i] - base[i] - lin).abs() < 1e-12 * (1.0 + lin.abs()));
        }
    }
}
