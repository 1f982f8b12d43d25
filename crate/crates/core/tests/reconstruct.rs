use lan_diffusion::models::{HodgkinHuxley, OuExternal, RotorChain};
use lan_diffusion::reconstruct::reconstruct_yz;
use lan_diffusion::simulate::simulate_full;
use lan_diffusion::{
    DiffusionModel, FourierSignal, FullState, LanError, ParamPoint, Role, Trajectory,
};

fn sine() -> FourierSignal {
    FourierSignal::linear_sine(1).unwrap()
}

fn presets() -> Vec<(Box<dyn DiffusionModel>, FullState)> {
    vec![
        (
            Box::new(HodgkinHuxley::default()),
            HodgkinHuxley::resting_state(),
        ),
        (
            Box::new(RotorChain::default()),
            FullState::new(vec![0.0], vec![0.0; 5], vec![0.0]),
        ),
        (
            Box::new(OuExternal::scalar(1.0, 1.0).unwrap()),
            FullState::new(vec![0.0], vec![], vec![0.0]),
        ),
    ]
}

/// Sup-norm distance between the `Y` and `Z` columns of two full paths.
fn hidden_error(a: &Trajectory, b: &Trajectory, n: usize) -> f64 {
    (0..a.rows())
        .flat_map(|k| {
            a.row(k)[n..]
                .iter()
                .zip(&b.row(k)[n..])
                .map(|(x, y)| (x - y).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn round_trip(
    model: &dyn DiffusionModel,
    start: &FullState,
    p: &ParamPoint,
    horizon: f64,
    h: f64,
    seed: u64,
) -> f64 {
    let full = simulate_full(model, &sine(), p, start, horizon, h, seed).unwrap();
    let rec = reconstruct_yz(model, &full.block(Role::X).unwrap(), start).unwrap();
    hidden_error(&full, &rec, model.dim_n())
}

#[test]
fn round_trip_on_every_preset() {
    let p = ParamPoint::new(vec![1.0], 1.0).unwrap();
    let horizon = 20.0;
    for (model, start) in presets() {
        let mut means = Vec::new();
        for h in [1e-3, 1e-4] {
            let errs: Vec<f64> = (0..4)
                .map(|s| round_trip(model.as_ref(), &start, &p, horizon, h, 40 + s))
                .collect();
            let bound = 10.0 * h * (1.0 + horizon);
            assert!(
                errs.iter().all(|e| *e < bound),
                "{}: {errs:?} at h = {h}",
                model.name()
            );
            means.push(errs.iter().sum::<f64>() / 4.0);
        }
        println!("{}: mean sup errors {means:?}", model.name());
        if means[0] > 1e-12 {
            assert!(means[0] / means[1] >= 9.0, "{}: {means:?}", model.name());
        }
    }
}

#[test]
fn reconstruction_is_deterministic() {
    let m = HodgkinHuxley::default();
    let start = HodgkinHuxley::resting_state();
    let p = ParamPoint::new(vec![2.0], 3.0).unwrap();
    let x = simulate_full(&m, &sine(), &p, &start, 5.0, 1e-3, 2)
        .unwrap()
        .block(Role::X)
        .unwrap();
    let a = reconstruct_yz(&m, &x, &start).unwrap();
    let b = reconstruct_yz(&m, &x, &start).unwrap();
    assert!(a
        .values()
        .iter()
        .zip(b.values())
        .all(|(u, v)| u.to_bits() == v.to_bits()));
}

#[test]
fn refining_the_x_grid_changes_y_by_order_h() {
    let m = HodgkinHuxley::default();
    let start = HodgkinHuxley::resting_state();
    let p = ParamPoint::new(vec![5.0], 10.0).unwrap();
    let h = 2e-4;
    let fine = simulate_full(&m, &sine(), &p, &start, 10.0, h / 2.0, 3)
        .unwrap()
        .block(Role::X)
        .unwrap();
    let coarse_rows: Vec<f64> = (0..fine.rows())
        .step_by(2)
        .map(|k| fine.row(k)[0])
        .collect();
    let coarse = Trajectory::new(h, fine.columns().to_vec(), coarse_rows, None).unwrap();
    let yf = reconstruct_yz(&m, &fine, &start).unwrap();
    let yc = reconstruct_yz(&m, &coarse, &start).unwrap();
    let mut gap = 0.0_f64;
    for k in 0..yc.rows() {
        for j in 1..4 {
            gap = gap.max((yc.row(k)[j] - yf.row(2 * k)[j]).abs());
        }
    }
    assert!(gap < h, "gap {gap}");
}

#[test]
fn spiking_neuron_converges_at_first_order() {
    // during spikes |f| reaches hundreds, and the gap between the simulator's
    // left-point drift and the trapezoidal integral, h/2 (f_t - f_0), sits in Z
    let m = HodgkinHuxley::default();
    let start = HodgkinHuxley::resting_state();
    let p = ParamPoint::new(vec![5.0], 10.0).unwrap();
    let mut scaled = Vec::new();
    for h in [2e-4, 1e-4, 5e-5] {
        let full = simulate_full(&m, &sine(), &p, &start, 20.0, h, 66).unwrap();
        let rec = reconstruct_yz(&m, &full.block(Role::X).unwrap(), &start).unwrap();
        let y_err = hidden_error(
            &full.block(Role::Y).unwrap(),
            &rec.block(Role::Y).unwrap(),
            0,
        );
        let z_err = hidden_error(&full.z_block().unwrap(), &rec.z_block().unwrap(), 0);
        assert!(y_err < 1e-2 * z_err, "y {y_err}, z {z_err}");
        scaled.push(z_err / h);
    }
    assert!(
        scaled.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() < 0.1),
        "{scaled:?}"
    );
}

#[test]
fn x_block_is_required() {
    let m = HodgkinHuxley::default();
    let start = HodgkinHuxley::resting_state();
    let p = ParamPoint::new(vec![1.0], 1.0).unwrap();
    let full = simulate_full(&m, &sine(), &p, &start, 1.0, 1e-3, 0).unwrap();
    assert!(matches!(
        reconstruct_yz(&m, &full.z_block().unwrap(), &start),
        Err(LanError::Dimension(_)) | Err(LanError::InvalidParameter(_))
    ));
}
