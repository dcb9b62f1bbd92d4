//! Residual Bell phase against a direct evaluation of the mid-unit emission
//! formula, using the test-side step integrator rather than the library's.

mod common;

use common::{expected_residual, random_trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinphoton::noise::NoiseTrajectory;
use spinphoton::sequencer::{residual_phase, SequenceSpec, WhichPulse};

const R: f64 = 0.89;

fn check_random(spec: SequenceSpec, max_delay: f64, seed: u64) {
    let tl = spec.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (bps, vals) = random_trajectory(&mut rng, tl.end_us());
        let noise = NoiseTrajectory::from_ground(bps.clone(), vals.clone(), R).unwrap();
        let t = rng.random_range(0.0..max_delay);
        let got = residual_phase(&tl, &noise, t).unwrap();
        let want = expected_residual(&tl, &bps, &vals, t, R);
        worst = worst.max((got - want).abs());
        assert!((got - want).abs() < 1e-9, "t = {t}: {got} vs {want}");
    }
    assert!(worst < 1e-9);
}

#[test]
fn xy16_matches_direct_formula() {
    // Up to the end of the heralding window: later emission meets the
    // omitted excited-manifold π and is never heralded anyway.
    check_random(SequenceSpec::xy16(), 2.5, 11);
}

#[test]
fn xy20_matches_direct_formula_inside_both_windows() {
    check_random(SequenceSpec::xy20(), 12.5, 12);
}

#[test]
fn constant_noise_leaves_no_residual() {
    let tl = SequenceSpec::xy16().build().unwrap();
    let noise = NoiseTrajectory::constant(2.7, R);
    for t in [0.3, 0.9, 1.7, 2.4] {
        assert!(residual_phase(&tl, &noise, t).unwrap().abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn boundary_emission_is_exactly_zero() {
    let tl = SequenceSpec::xy16().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (bps, vals) = random_trajectory(&mut rng, tl.end_us());
    let noise = NoiseTrajectory::from_ground(bps, vals, R).unwrap();
    for t in [0.0, 2.0 * tl.tau_us] {
        assert_eq!(residual_phase(&tl, &noise, t).unwrap(), 0.0);
    }
}

#[test]
fn equal_shifts_cancel() {
    let tl = SequenceSpec::xy16().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (bps, vals) = random_trajectory(&mut rng, tl.end_us());
        let noise = NoiseTrajectory::from_ground(bps, vals, 1.0).unwrap();
        let t = rng.random_range(0.0..2.0 * tl.tau_us);
        assert!(residual_phase(&tl, &noise, t).unwrap().abs() < 1e-12);
    }
}

#[test]
fn second_optical_pulse_sits_at_bin_separation() {
    let tl = SequenceSpec::xy16().build().unwrap();
    assert_eq!(tl.optical_time(WhichPulse::Second), 75.5);
}
