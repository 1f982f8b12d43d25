use lan_diffusion::{Component, LanError, Role, Trajectory};
use proptest::prelude::*;

fn layout(n: usize, l: usize) -> Vec<Component> {
    Component::full_layout(n, l)
}

fn arb_trajectory() -> impl Strategy<Value = Trajectory> {
    (
        1usize..3,
        0usize..4,
        1usize..30,
        1e-4..0.5f64,
        any::<Option<u64>>(),
    )
        .prop_flat_map(|(n, l, rows, step, seed)| {
            let dim = 2 * n + l;
            prop::collection::vec(-1e6..1e6f64, dim * rows)
                .prop_map(move |values| Trajectory::new(step, layout(n, l), values, seed).unwrap())
        })
}

proptest! {
    #[test]
    fn binary_round_trip_is_exact(t in arb_trajectory()) {
        let mut buf = Vec::new();
        t.write_bin(&mut buf).unwrap();
        prop_assert_eq!(&buf[..8], b"LANTRAJ1");
        let back = Trajectory::read_bin(buf.as_slice()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn csv_round_trip_keeps_values(t in arb_trajectory()) {
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice(), Some(t.step())).unwrap();
        prop_assert_eq!(back.values(), t.values());
        prop_assert_eq!(back.columns(), t.columns());
        prop_assert!((back.step() - t.step()).abs() <= 1e-9 * t.step());
    }

    #[test]
    fn truncation_keeps_the_prefix(t in arb_trajectory(), frac in 0.0..1.0f64) {
        let cut = t.truncate(frac * t.horizon()).unwrap();
        prop_assert!(cut.rows() <= t.rows());
        prop_assert_eq!(cut.values(), &t.values()[..cut.values().len()]);
    }
}

#[test]
fn labels_and_blocks() {
    let t = Trajectory::new(0.5, layout(1, 2), (0..8).map(f64::from).collect(), None).unwrap();
    assert_eq!(t.labels(), ["x1", "y1", "y2", "z1"]);
    assert_eq!(t.block(Role::Y).unwrap().values(), &[1.0, 2.0, 5.0, 6.0]);
    assert_eq!(t.z_block().unwrap().values(), &[3.0, 7.0]);
    assert_eq!(t.horizon(), 0.5);
    assert!(t.block(Role::B).is_err());
}

#[test]
fn csv_header_and_rows() {
    let t = Trajectory::new(0.25, vec![Component::z(0)], vec![1.0, 1.5, -2.0], Some(3)).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "time,z1\n0,1\n0.25,1.5\n0.5,-2\n"
    );
}

#[test]
fn malformed_inputs_are_rejected() {
    let uneven = "time,z1\n0,1\n0.1,2\n0.3,3\n";
    assert!(matches!(
        Trajectory::read_csv(uneven.as_bytes(), None),
        Err(LanError::Format(_))
    ));
    let unknown = "time,q1\n0,1\n0.1,2\n";
    assert!(matches!(
        Trajectory::read_csv(unknown.as_bytes(), None),
        Err(LanError::Format(_))
    ));
    let single = "time,z1\n0,1\n";
    assert!(Trajectory::read_csv(single.as_bytes(), None).is_err());
    assert_eq!(
        Trajectory::read_csv(single.as_bytes(), Some(0.1))
            .unwrap()
            .values(),
        &[1.0]
    );
    assert!(matches!(
        Trajectory::read_bin(&b"NOTATRAJ........"[..]),
        Err(LanError::Format(_))
    ));
    assert!(Trajectory::new(0.1, vec![Component::z(0)], vec![1.0, f64::NAN], None).is_err());
    assert!(Trajectory::new(0.0, vec![Component::z(0)], vec![1.0], None).is_err());
}
