use proptest::prelude::*;
use spinphoton::analysis::{correct_readout, fidelity};
use spinphoton::config::{parse_config, ConfigFile, Preset};
use spinphoton::io::{apd_to_string, clicks_to_string, parse_apd, parse_clicks};
use spinphoton::noise::{kick_sigma, Channel, NoiseTrajectory, OpticalKickModel};
use spinphoton::photonics::*;
use spinphoton::sequencer::{build_sequence, parse_timeline_table, SequenceKind, SequenceSpec};
use spinphoton::spin_model::Manifold;

fn herald() -> impl Strategy<Value = Herald> {
    prop_oneof![
        Just(Herald::EarlyBin),
        Just(Herald::LateBin),
        Just(Herald::CentralBin(Detector::One)),
        Just(Herald::CentralBin(Detector::Two)),
    ]
}

fn record() -> impl Strategy<Value = ClickRecord> {
    (
        0u64..1 << 40,
        herald(),
        0i64..100_000_000,
        0i64..6_283_185,
        prop_oneof![Just(SpinBasis::X), Just(SpinBasis::Y), Just(SpinBasis::Z)],
        any::<bool>(),
        1u8..3,
        0u32..50,
    )
        .prop_map(|(id, herald, t, phi, basis, up, w, n)| ClickRecord {
            attempt_id: id,
            herald,
            // Values on the 6-decimal grid the writer uses.
            detection_time_us: t as f64 * 1e-6,
            phi_at_attempt: phi as f64 * 1e-6,
            spin_basis: basis,
            spin_result: if up { SpinResult::Up } else { SpinResult::Down },
            window_index: w,
            photon_count: n,
        })
}

proptest! {
    #[test]
    fn readout_correction_inverts_scaling(e in -1.0f64..1.0, f_up in 0.5f64..1.0, f_down in 0.5f64..1.0) {
        prop_assume!(f_up + f_down > 1.05);
        let c = correct_readout(e * (f_up + f_down - 1.0), f_up, f_down).unwrap();
        prop_assert!((c.value - e).abs() < 1e-12);
        prop_assert!(!c.clamped);
    }

    #[test]
    fn fidelity_bounds(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let f = fidelity(x, y, z);
        prop_assert!((-0.5..=1.0).contains(&f));
    }

    #[test]
    fn clicks_round_trip(records in prop::collection::vec(record(), 0..40)) {
        let text = clicks_to_string(&["seed = 3".into()], &records);
        let back = parse_clicks(&text).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(a.attempt_id, b.attempt_id);
            prop_assert_eq!(a.herald, b.herald);
            prop_assert!((a.detection_time_us - b.detection_time_us).abs() < 1e-9);
            prop_assert!((a.phi_at_attempt - b.phi_at_attempt).abs() < 1e-9);
            prop_assert_eq!(a.spin_basis, b.spin_basis);
            prop_assert_eq!(a.spin_result, b.spin_result);
            prop_assert_eq!(a.window_index, b.window_index);
            prop_assert_eq!(a.photon_count, b.photon_count);
        }
    }

    #[test]
    fn apd_round_trip(points in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..30)) {
        let back = parse_apd(&apd_to_string(&points)).unwrap();
        prop_assert_eq!(back.len(), points.len());
        for (a, b) in back.iter().zip(&points) {
            prop_assert!((a.0 - b.0).abs() <= 5.1e-7 && (a.1 - b.1).abs() <= 5.1e-7);
        }
    }

    #[test]
    fn config_round_trip(
        preset in prop_oneof![Just(Preset::Xy16), Just(Preset::Xy20), Just(Preset::Ideal)],
        seed in 0u64..i64::MAX as u64,
        phase in -3.0f64..3.0,
        f_op in 0.1f64..1.0,
    ) {
        let mut cfg = ConfigFile::from_preset(preset);
        cfg.run.seed = seed;
        cfg.mzi.phase_phi = phase;
        cfg.budget.f_op = f_op;
        let back = parse_config(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn timeline_table_round_trip(n in 2usize..12, gap in 0usize..5, t in 20.0f64..120.0) {
        let kind = SequenceKind::Generalized(2 * n);
        let slots = (0, 2 * gap + 1);
        prop_assume!(slots.1 < 2 * n);
        let tl = build_sequence(kind, t, slots).unwrap();
        let back = parse_timeline_table(&tl.to_table()).unwrap();
        prop_assert_eq!(back.len(), tl.events.len());
        for (a, b) in back.iter().zip(&tl.events) {
            prop_assert_eq!(a.kind, b.kind);
            prop_assert!((a.time_us - b.time_us).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_integral_is_additive(
        vals in prop::collection::vec(-5.0f64..5.0, 1..10),
        a in 0.0f64..50.0, b in 0.0f64..50.0, c in 0.0f64..50.0,
    ) {
        let bps: Vec<f64> = (0..vals.len()).map(|i| 5.0 * i as f64).collect();
        let noise = NoiseTrajectory::from_ground(bps, vals, 0.9).unwrap();
        let total = noise.integral(Channel::Ground, a, c);
        let split = noise.integral(Channel::Ground, a, b) + noise.integral(Channel::Ground, b, c);
        prop_assert!((total - split).abs() < 1e-9);
    }

    #[test]
    fn kicks_never_exceed_saturation(p in 0.0f64..1e6, w in 0.0f64..1e4, angle in 0.0f64..360.0) {
        let m = OpticalKickModel::default();
        let s = kick_sigma(p, w, &m, angle);
        prop_assert!(s >= 0.0 && s <= m.sigma_sat);
    }

    #[test]
    fn parsers_never_panic(text in "(?s).{0,300}", header in any::<bool>()) {
        let body = if header { format!("{}\n{text}", spinphoton::io::CLICKS_HEADER.join(",")) } else { text.clone() };
        let _ = parse_clicks(&body);
        let _ = parse_apd(&format!("apd1,apd2\n{text}"));
        let _ = parse_config(&text);
        let _ = parse_timeline_table(&format!("time_us,kind,manifold,axis\n{text}"));
    }

    #[test]
    fn f_op_is_a_fraction(t1 in 0.0f64..20.0, len in 0.01f64..20.0, life in 1.0f64..100.0, tphi in 1.0f64..1e4) {
        let f = f_op(t1, t1 + len, life, tphi).unwrap();
        prop_assert!(f > 0.0 && f <= 1.0 + 1e-12);
    }
}

#[test]
fn decoupling_cancels_static_shifts() {
    for spec in [SequenceSpec::xy16(), SequenceSpec::xy20()] {
        let tl = spec.build().unwrap();
        let g = tl.toggling(Manifold::Ground);
        assert!(g.integral(0.0, tl.end_us()).abs() < 1e-9);
    }
}
