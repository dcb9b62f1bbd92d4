//! Test-side oracles shared by several integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinphoton::photonics::{ClickRecord, Detector, Herald, SpinBasis, SpinResult};
use spinphoton::runner::ReadoutModel;
use spinphoton::sequencer::PulseTimeline;

/// ∫_a^b of a right-continuous step function that is zero before `bps[0]`.
/// Handles b < a by antisymmetry.
pub fn step_integral(bps: &[f64], vals: &[f64], a: f64, b: f64) -> f64 {
    if b < a {
        return -step_integral(bps, vals, b, a);
    }
    let mut acc = 0.0;
    for i in 0..bps.len() {
        let lo = bps[i].max(a);
        let hi = bps.get(i + 1).copied().unwrap_or(f64::INFINITY).min(b);
        if hi > lo {
            acc += vals[i] * (hi - lo);
        }
    }
    acc
}

/// (1−r)/2 · (b − t) · (β̄(t, b) − β̄(T+t, T+b)), b the nearest unit boundary.
pub fn expected_residual(tl: &PulseTimeline, bps: &[f64], vals: &[f64], t: f64, r: f64) -> f64 {
    let two_tau = tl.bin_separation_us / (tl.slots.1 - tl.slots.0) as f64;
    let b = two_tau * (t / two_tau).round();
    let big_t = tl.bin_separation_us;
    if (b - t).abs() < 1e-15 {
        return 0.0;
    }
    let mean = |a: f64, c: f64| step_integral(bps, vals, a, c) / (c - a);
    0.5 * (1.0 - r) * (b - t) * (mean(t, b) - mean(big_t + t, big_t + b))
}

/// Random step function on [0, end) with a breakpoint at 0.
pub fn random_trajectory(rng: &mut ChaCha8Rng, end: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..40);
    let mut bps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..end)).collect();
    bps.push(0.0);
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let vals = bps.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
    (bps, vals)
}

pub fn central_record(id: u64, phi: f64, basis: SpinBasis, sign: f64, rng: &mut ChaCha8Rng) -> ClickRecord {
    let one = rng.random::<bool>();
    let d = if one { 1.0 } else { -1.0 };
    ClickRecord {
        attempt_id: id,
        herald: Herald::CentralBin(if one { Detector::One } else { Detector::Two }),
        detection_time_us: 1.0,
        phi_at_attempt: phi,
        spin_basis: basis,
        spin_result: if sign * d > 0.0 { SpinResult::Up } else { SpinResult::Down },
        window_index: 1,
        photon_count: 0,
    }
}

/// X-basis clicks whose correlation sign is +1 with probability (1 + α·cos φ)/2.
pub fn synthetic_clicks(alpha: f64, n: usize, seed: u64) -> Vec<ClickRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64)
        .map(|i| {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let sign = if rng.random::<f64>() < 0.5 * (1.0 + alpha * phi.cos()) { 1.0 } else { -1.0 };
            central_record(i, phi, SpinBasis::X, sign, &mut rng)
        })
        .collect()
}

/// Brute-force X-basis likelihood maximum on a 1e-4 grid.
pub fn grid_argmax(records: &[ClickRecord]) -> f64 {
    let obs: Vec<(f64, f64)> = records
        .iter()
        .map(|r| {
            let d = if r.herald == Herald::CentralBin(Detector::One) { 1.0 } else { -1.0 };
            let s = if r.spin_result == SpinResult::Up { 1.0 } else { -1.0 };
            (d * s, r.phi_at_attempt.cos())
        })
        .collect();
    let ll = |a: f64| obs.iter().map(|&(s, c)| ((1.0 + a * s * c) / 2.0).max(1e-300).ln()).sum::<f64>();
    (0..=20_000).map(|i| -1.0 + i as f64 * 1e-4).max_by(|a, b| ll(*a).total_cmp(&ll(*b))).unwrap()
}

/// Threshold-1 fidelities (bright, dark) by forward recursion over the pulses.
pub fn readout_oracle(m: &ReadoutModel) -> (f64, f64) {
    let (p, q, b) = (m.p_detect, m.p_flip, m.p_background);
    let (mut lit, mut dark) = (1.0, 0.0);
    for _ in 0..m.n_pulses {
        let lit_quiet = lit * (1.0 - p);
        lit = lit_quiet * (1.0 - q) * (1.0 - b);
        dark = (dark + lit_quiet * q) * (1.0 - b);
    }
    let f_down = (1.0 - b).powi(m.n_pulses as i32);
    (1.0 - (lit + dark), f_down)
}
