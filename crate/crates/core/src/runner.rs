//! Full entanglement experiments: attempts, conditional readout, datasets.
//!
//! Each attempt evolves the no-jump amplitudes of the four-level emitter over
//! the pulse timeline. Emission inside a heralding window is resolved on a
//! fine slice grid; the conditional spin state of every detection outcome is
//! the jump vector propagated to the end of the sequence. Early and late bins
//! see one time bin, the central bin sees both with the interferometer phase.
//!
//! Long runs use thinning: candidate attempts are drawn with a rigorous upper
//! bound on the herald probability and accepted with the exact ratio, so the
//! click statistics are those of simulating every attempt.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::noise::{build_attempt_noise, Channel, NoiseConfig, NoiseError, NoiseTrajectory};
use crate::photonics::{
    background_trace, bell_phase, BackgroundMode, ClickRecord, Detector, Herald, MziConfig, PhotonicsError, SpinBasis,
    SpinResult, SpinVector,
};
use crate::sequencer::{EventKind, PulseTimeline, SequenceError, SequenceSpec};
use crate::spin_model::{
    apply_phases, rotate, swap_optical, Amplitudes, Axis, EmitterState, Manifold, PhysicalParams, SpinError, DOWN_E,
    DOWN_G, UP_E, UP_G,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
    #[error("invalid experiment configuration: {0}")]
    Invalid(String),
}

type Mat4 = [[Complex64; 4]; 4];
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub n_pulses: u32,
    pub collection_window_us: f64,
    /// Duration of one readout pulse including its collection window.
    pub pulse_period_us: f64,
    pub threshold_photons: u32,
    /// Readout fidelities the per-pulse rates are calibrated to.
    pub f_up: f64,
    pub f_down: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self::mzi_path()
    }
}

impl ReadoutConfig {
    /// Fluorescence routed through the interferometer.
    pub fn mzi_path() -> Self {
        Self {
            n_pulses: 432,
            collection_window_us: 70.0,
            pulse_period_us: 48.9e3 / 432.0,
            threshold_photons: 1,
            f_up: 0.81,
            f_down: 0.69,
        }
    }

    /// Fluorescence sent straight to the detectors.
    pub fn bypass_path() -> Self {
        Self { n_pulses: 240, f_up: 0.93, f_down: 0.85, ..Self::mzi_path() }
    }

    pub fn ideal() -> Self {
        Self { f_up: 1.0, f_down: 1.0, ..Self::mzi_path() }
    }

    pub fn duration_us(&self) -> f64 {
        self.n_pulses as f64 * self.pulse_period_us
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.n_pulses == 0 {
            return Err(RunError::Invalid("readout.n_pulses must be positive".into()));
        }
        if self.threshold_photons == 0 {
            return Err(RunError::Invalid("readout.threshold_photons must be at least 1".into()));
        }
        for (n, v) in [("readout.f_up", self.f_up), ("readout.f_down", self.f_down)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RunError::Invalid(format!("{n} must lie in [0, 1], got {v}")));
            }
        }
        if self.f_up + self.f_down <= 1.0 {
            return Err(RunError::Invalid("readout fidelities must sum above 1".into()));
        }
        if !(self.pulse_period_us >= 0.0 && self.collection_window_us >= 0.0) {
            return Err(RunError::Invalid("readout durations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-pulse readout channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutModel {
    pub n_pulses: u32,
    pub threshold: u32,
    /// Detection probability per pulse while bright.
    pub p_detect: f64,
    /// Background count probability per pulse.
    pub p_background: f64,
    /// Bright-to-dark flip probability per excitation.
    pub p_flip: f64,
}

/// `P(no signal photon | bright)` for the truncated bright sequence.
fn p_no_signal(n: u32, p: f64, q: f64) -> f64 {
    let mut total = 0.0;
    let mut stay = 1.0;
    let mut dark = 1.0;
    for _ in 1..n {
        dark *= 1.0 - p;
        total += stay * q * dark;
        stay *= 1.0 - q;
    }
    total + stay * dark * (1.0 - p)
}

impl ReadoutModel {
    /// Solves the per-pulse rates from target fidelities at threshold 1.
    pub fn calibrate(cfg: &ReadoutConfig, cyclicity: f64) -> Self {
        let n = cfg.n_pulses;
        let q = if cyclicity.is_finite() && cyclicity > 0.0 { 1.0 / cyclicity } else { 0.0 };
        let p_background = 1.0 - cfg.f_down.powf(1.0 / n as f64);
        let target = if cfg.f_down > 0.0 { (1.0 - cfg.f_up) / cfg.f_down } else { 0.0 };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p_no_signal(n, mid, q) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self { n_pulses: n, threshold: cfg.threshold_photons, p_detect: hi, p_background, p_flip: q }
    }

    pub fn mean_counts(&self, bright: bool) -> f64 {
        let bg = self.n_pulses as f64 * self.p_background;
        if !bright {
            return bg;
        }
        let q = self.p_flip;
        let excitations = if q > 0.0 { (1.0 - (1.0 - q).powi(self.n_pulses as i32)) / q } else { self.n_pulses as f64 };
        bg + self.p_detect * excitations
    }
}

/// Photon count of one readout.
pub fn simulate_readout<R: Rng + ?Sized>(bright: bool, model: &ReadoutModel, rng: &mut R) -> u32 {
    let mut count = 0;
    let mut lit = bright;
    for _ in 0..model.n_pulses {
        if lit {
            if rng.random::<f64>() < model.p_detect {
                count += 1;
            }
            if rng.random::<f64>() < model.p_flip {
                lit = false;
            }
        }
        if rng.random::<f64>() < model.p_background {
            count += 1;
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub eta_cav: f64,
    pub eta_gc: f64,
    pub eta_net: f64,
    pub eta_det: f64,
    pub eta_mzi: f64,
    /// Unexplained loss that brings the predicted success probability down
    /// to the measured one. A fudge factor, not a physical model.
    pub excess_loss: f64,
    /// Reject A-transition photons before the detectors.
    pub a_filter: bool,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self {
            eta_cav: 0.24,
            eta_gc: 0.33,
            eta_net: 0.61,
            eta_det: 0.85,
            eta_mzi: 0.28,
            excess_loss: 0.67,
            a_filter: false,
        }
    }
}

impl EfficiencyConfig {
    pub fn ideal() -> Self {
        Self { eta_cav: 1.0, eta_gc: 1.0, eta_net: 1.0, eta_det: 1.0, eta_mzi: 1.0, excess_loss: 1.0, a_filter: true }
    }

    pub fn signal(&self) -> f64 {
        self.eta_cav * self.eta_gc * self.eta_net * self.eta_det * self.eta_mzi * self.excess_loss
    }

    pub fn validate(&self) -> Result<(), RunError> {
        for (n, v) in [
            ("eta_cav", self.eta_cav),
            ("eta_gc", self.eta_gc),
            ("eta_net", self.eta_net),
            ("eta_det", self.eta_det),
            ("eta_mzi", self.eta_mzi),
            ("excess_loss", self.excess_loss),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RunError::Invalid(format!("efficiency.{n} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub physics: PhysicalParams,
    pub noise: NoiseConfig,
    pub sequence: SequenceSpec,
    pub mzi: MziConfig,
    pub readout: ReadoutConfig,
    pub efficiency: EfficiencyConfig,
    pub attempt_rate_hz: f64,
    pub init_fidelity: f64,
    /// XY-16 spin coherence over the sequence; sets the Markovian spin
    /// dephasing time when present.
    pub spin_coherence: Option<f64>,
    /// Phase-tracking pulses raise the central-bin background.
    pub phase_tracking: bool,
    /// Interferometer phase diffusion per attempt (rad).
    pub phase_walk_sigma: f64,
    /// Emission-time resolution inside heralding windows.
    pub slice_us: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::xy16()
    }
}

impl ExperimentConfig {
    pub fn xy16() -> Self {
        Self {
            physics: PhysicalParams::default(),
            noise: NoiseConfig::default(),
            sequence: SequenceSpec::xy16(),
            mzi: MziConfig::default(),
            readout: ReadoutConfig::mzi_path(),
            efficiency: EfficiencyConfig::default(),
            attempt_rate_hz: 2.2e3,
            init_fidelity: 0.985,
            spin_coherence: Some(0.75),
            phase_tracking: true,
            phase_walk_sigma: 0.05,
            slice_us: 0.02,
            seed: 1,
        }
    }

    /// Two heralding windows; the scattering bump moves behind the second.
    pub fn xy20() -> Self {
        let base = Self::xy16();
        Self {
            sequence: SequenceSpec::xy20(),
            spin_coherence: Some(0.67),
            mzi: MziConfig { scatter_delay_us: 14.6, ..base.mzi },
            ..base
        }
    }

    /// Noiseless, lossless, perfect pulses and readout.
    pub fn ideal() -> Self {
        let base = Self::xy16();
        Self {
            physics: PhysicalParams { pulse_error: 0.0, pulse_error_excited: Some(0.0), ..base.physics },
            noise: NoiseConfig::off(),
            mzi: MziConfig { dark_rate_hz: 0.0, scatter_rate_hz: 0.0, scatter_bump_hz: 0.0, ..base.mzi },
            readout: ReadoutConfig::ideal(),
            efficiency: EfficiencyConfig::ideal(),
            init_fidelity: 1.0,
            spin_coherence: None,
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.physics.validate()?;
        self.noise.validate()?;
        self.mzi.validate()?;
        self.readout.validate()?;
        self.efficiency.validate()?;
        self.sequence.build()?;
        if !(self.attempt_rate_hz > 0.0 && self.attempt_rate_hz.is_finite()) {
            return Err(RunError::Invalid("attempt_rate_hz must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.init_fidelity) {
            return Err(RunError::Invalid(format!("init_fidelity must lie in [0, 1], got {}", self.init_fidelity)));
        }
        if let Some(f) = self.spin_coherence {
            if !(f > 0.0 && f <= 1.0) {
                return Err(RunError::Invalid(format!("spin_coherence must lie in (0, 1], got {f}")));
            }
        }
        if !(self.phase_walk_sigma >= 0.0 && self.phase_walk_sigma.is_finite()) {
            return Err(RunError::Invalid("phase_walk_sigma must be non-negative".into()));
        }
        if !(self.slice_us > 0.0 && self.slice_us <= 0.5) {
            return Err(RunError::Invalid(format!("slice_us must lie in (0, 0.5], got {}", self.slice_us)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    E,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpldEvent {
    NoClick,
    Click,
    ReadoutPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cpld {
    pub mode: Mode,
    pub remaining: u32,
    pub readout_pulses: u32,
}

impl Cpld {
    pub fn new(readout_pulses: u32) -> Self {
        Self { mode: Mode::E, remaining: 0, readout_pulses }
    }
}

/// Attempt mode E until a click, then R for the readout pulses.
pub fn cpld_step(state: Cpld, event: CpldEvent) -> Cpld {
    match (state.mode, event) {
        (Mode::E, CpldEvent::Click) => Cpld { mode: Mode::R, remaining: state.readout_pulses, ..state },
        (Mode::E, _) => state,
        (Mode::R, CpldEvent::ReadoutPulse) => {
            let remaining = state.remaining.saturating_sub(1);
            let mode = if remaining == 0 { Mode::E } else { Mode::R };
            Cpld { mode, remaining, ..state }
        }
        (Mode::R, _) => state,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinReadout {
    pub basis: SpinBasis,
    pub result: SpinResult,
    pub photon_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptOutcome {
    pub herald: Option<ClickRecord>,
    pub spin_readout: Option<SpinReadout>,
    pub mode_trace: Vec<Mode>,
}

/// Unnormalized spin after a click: a coherent ground part plus the
/// density matrix of population that left the excited state unheralded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalSpin {
    /// Ground amplitudes `(↓, ↑)`.
    pub coherent: SpinVector,
    pub decayed: [[Complex64; 2]; 2],
}

impl ConditionalSpin {
    /// Excited components of `v` are already counted in `decayed`.
    fn new(v: &Amplitudes, decayed: Rho) -> Self {
        Self { coherent: [v[DOWN_G], v[UP_G]], decayed }
    }

    pub fn norm(&self) -> f64 {
        self.coherent[0].norm_sqr() + self.coherent[1].norm_sqr() + self.decayed[0][0].re + self.decayed[1][1].re
    }

    /// Probability of reading `|↑⟩` after an optional `(angle, phase)` rotation.
    pub fn p_up(&self, rotation: Option<(f64, f64)>) -> f64 {
        let row = |amps: [Complex64; 2]| -> Complex64 {
            let mut a = [amps[0], amps[1], ZERO, ZERO];
            if let Some((angle, phase)) = rotation {
                rotate(&mut a, Manifold::Ground, angle, phase);
            }
            a[UP_G]
        };
        let r = [row([ONE, ZERO]), row([ZERO, ONE])];
        let mut up = row(self.coherent).norm_sqr();
        for a in 0..2 {
            for b in 0..2 {
                up += (r[a] * self.decayed[a][b] * r[b].conj()).re;
            }
        }
        up / self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    prob: f64,
    herald: Herald,
    window_index: u8,
    /// Detection time on the first bin's clock.
    time_us: f64,
    spin: Option<ConditionalSpin>,
}

/// Everything fixed for a configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub timeline: PulseTimeline,
    pub noise: NoiseConfig,
    pub readout: ReadoutModel,
    pub eta: f64,
    pub p_max: f64,
    /// Added to the interferometer phase before recording.
    pub phase_offset: f64,
    /// Basis-pulse phases for X and Y.
    pub basis_phase: [f64; 2],
    slices: Vec<Vec<(f64, f64)>>,
    background: Vec<[f64; 3]>,
    optical_times: Vec<f64>,
    separation_us: f64,
}

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[ZERO; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik == ZERO {
                continue;
            }
            for j in 0..4 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

type Rho = [[Complex64; 2]; 2];

const GROUND: [usize; 2] = [DOWN_G, UP_G];

fn adjoint(a: &Mat4) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[j][i].conj();
        }
    }
    m
}

fn identity() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

/// Matrix of a linear map given by its action on amplitude vectors.
fn matrix_of(op: impl Fn(&mut Amplitudes)) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for j in 0..4 {
        let mut v = [ZERO; 4];
        v[j] = ONE;
        op(&mut v);
        for i in 0..4 {
            m[i][j] = v[i];
        }
    }
    m
}

struct Attempt<'a> {
    prep: &'a Prepared,
    noise: NoiseTrajectory,
    times: Vec<f64>,
    after: Vec<Amplitudes>,
    /// Propagator from just before event k to the end of the sequence.
    back: Vec<Mat4>,
    /// Final ground density matrix reached through unheralded decays by a
    /// ground level populated just before event k, indexed `[k][level]`.
    decayed: Vec<[Rho; 2]>,
}

impl<'a> Attempt<'a> {
    fn diag(&self, t0: f64, t1: f64) -> Amplitudes {
        let p = &self.prep.config.physics;
        let mut d = [ONE; 4];
        apply_phases(
            &mut d,
            self.noise.integral_ground(t0, t1),
            self.noise.integral_excited(t0, t1),
            self.noise.integral_optical(t0, t1),
        );
        let dt = t1 - t0;
        d[DOWN_E] *= (-0.5 * p.gamma_b() * dt).exp();
        d[UP_E] *= (-0.5 * p.gamma_a() * dt).exp();
        d
    }

    fn new(prep: &'a Prepared, noise: NoiseTrajectory, pulse_eps: &[f64], init_up: bool) -> Self {
        let events: Vec<_> = prep.timeline.events.iter().filter(|e| e.kind != EventKind::BasisPulse).collect();
        let times: Vec<f64> = events.iter().map(|e| e.time_us).collect();
        let mut ops = Vec::with_capacity(events.len());
        let mut eps = pulse_eps.iter();
        for e in &events {
            let m = match e.kind {
                EventKind::MwPi { manifold, axis } => {
                    let a = std::f64::consts::PI * (1.0 + eps.next().copied().unwrap_or(0.0));
                    Some(matrix_of(|v| rotate(v, manifold, a, axis.phase())))
                }
                EventKind::MwHalfPi { phase } => {
                    let a = std::f64::consts::FRAC_PI_2 * (1.0 + eps.next().copied().unwrap_or(0.0));
                    Some(matrix_of(|v| rotate(v, Manifold::Ground, a, phase)))
                }
                EventKind::OpticalPi { transition } => Some(matrix_of(|v| swap_optical(v, transition))),
                _ => None,
            };
            ops.push(m);
        }
        let mut att = Self { prep, noise, times, after: Vec::new(), back: Vec::new(), decayed: Vec::new() };
        let end = prep.timeline.end_us();

        let mut s = [ZERO; 4];
        s[if init_up { UP_G } else { DOWN_G }] = ONE;
        let mut t = 0.0;
        for (k, op) in ops.iter().enumerate() {
            let d = att.diag(t, att.times[k]);
            for i in 0..4 {
                s[i] *= d[i];
            }
            t = att.times[k];
            if let Some(m) = op {
                let mut out = [ZERO; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        out[i] += m[i][j] * s[j];
                    }
                }
                s = out;
            }
            att.after.push(s);
        }

        let n = ops.len();
        let mut back = vec![identity(); n + 1];
        let q = prep.config.physics.spin_flip_probability();
        let (gb, ga) = (prep.config.physics.gamma_b(), prep.config.physics.gamma_a());
        // forms[a][b] maps a state before event k to element (a, b) of the
        // final ground density matrix fed by decays; starts with the
        // excited population left at the end.
        let mut forms = [[[[ZERO; 4]; 4]; 2]; 2];
        for (level, own, other) in [(DOWN_E, 0, 1), (UP_E, 1, 0)] {
            forms[own][own][level][level] += 1.0 - q;
            forms[other][other][level][level] += q;
        }
        let mut decayed = vec![[[[ZERO; 2]; 2]; 2]; n + 1];
        let mut next_t = end;
        for k in (0..n).rev() {
            let d = att.diag(att.times[k], next_t);
            let dt = next_t - att.times[k];
            let inject: [Rho; 2] = [DOWN_G, UP_G].map(|g| {
                let w = &back[k + 1];
                std::array::from_fn(|a| {
                    std::array::from_fn(|b| w[GROUND[a]][g] * w[GROUND[b]][g].conj() + forms[a][b][g][g])
                })
            });
            let (lb, la) = (-(-gb * dt).exp_m1(), -(-ga * dt).exp_m1());
            for a in 0..2 {
                for b in 0..2 {
                    let m = &mut forms[a][b];
                    for i in 0..4 {
                        for j in 0..4 {
                            m[i][j] *= d[i].conj() * d[j];
                        }
                    }
                    m[DOWN_E][DOWN_E] += lb * ((1.0 - q) * inject[0][a][b] + q * inject[1][a][b]);
                    m[UP_E][UP_E] += la * ((1.0 - q) * inject[1][a][b] + q * inject[0][a][b]);
                    if let Some(op) = &ops[k] {
                        *m = matmul(&adjoint(op), &matmul(m, op));
                    }
                }
            }
            for (c, g) in [DOWN_G, UP_G].into_iter().enumerate() {
                decayed[k][c] = std::array::from_fn(|a| std::array::from_fn(|b| forms[a][b][g][g]));
            }
            let mut m = back[k + 1];
            for row in m.iter_mut() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x *= d[j];
                }
            }
            back[k] = match &ops[k] {
                Some(op) => matmul(&m, op),
                None => m,
            };
            next_t = att.times[k];
        }
        att.back = back;
        att.decayed = decayed;
        att
    }

    /// Last event at or before `t`, given `t` lies strictly between events.
    fn interval(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }

    /// No-jump amplitudes at `t` and the propagator columns of both ground
    /// levels from `t` to the end.
    fn at(&self, t: f64) -> (Amplitudes, [[Complex64; 4]; 2], [Rho; 2]) {
        let k = self.interval(t);
        let d = self.diag(self.times[k], t);
        let mut a = self.after[k];
        for i in 0..4 {
            a[i] *= d[i];
        }
        let next_t = self.times.get(k + 1).copied().unwrap_or(self.prep.timeline.end_us());
        let dn = self.diag(t, next_t);
        let p = &self.back[k + 1];
        let mut cols = [[ZERO; 4]; 2];
        for (c, g) in [DOWN_G, UP_G].into_iter().enumerate() {
            for i in 0..4 {
                cols[c][i] = p[i][g] * dn[g];
            }
        }
        (a, cols, self.decayed[k + 1])
    }

    fn outcomes(&self, phi_mzi: f64) -> Vec<Outcome> {
        let prep = self.prep;
        let cfg = &prep.config;
        let mzi = &cfg.mzi;
        let p = &cfg.physics;
        let q = p.spin_flip_probability();
        let s = mzi.splitter_ratio;
        let (eff1, eff2) = (mzi.detector_efficiency[0], mzi.detector_efficiency[1]);
        let eff_mean = 0.5 * (eff1 + eff2);
        let short = (s * mzi.transmission_short).sqrt();
        let long = ((1.0 - s) * mzi.transmission_long).sqrt();
        let eta = prep.eta;
        let sep = prep.separation_us;
        let (t1, t2) = (prep.optical_times[0], prep.optical_times[1]);
        // (level, rate, non-flip target, flip target)
        let mut modes = vec![(DOWN_E, p.gamma_b(), 0usize, 1usize)];
        if !cfg.efficiency.a_filter {
            modes.push((UP_E, p.gamma_a(), 1, 0));
        }
        let mut out = Vec::new();
        for (wi, slices) in prep.slices.iter().enumerate() {
            let window_index = wi as u8 + 1;
            for &(delta, h) in slices {
                let (ae, ce, se) = self.at(t1 + delta);
                let (al, cl, sl) = self.at(t2 + delta);
                let det_phase = 0.5
                    * (self.noise.value(Channel::Optical, t1 + delta) + self.noise.value(Channel::Optical, t2 + delta));
                let phi_b = bell_phase(det_phase, &MziConfig { phase_phi: phi_mzi, ..*mzi });
                let ph = Complex64::from_polar(1.0, phi_b);
                for &(level, gamma, nf, fl) in &modes {
                    let w = -(-gamma * h).exp_m1() * (0.5 * gamma * h).exp();
                    for (target, frac) in [(nf, 1.0 - q), (fl, q)] {
                        if frac <= 0.0 {
                            continue;
                        }
                        let k = (w * frac).sqrt();
                        let ce4 = ae[level] * k;
                        let cl4 = al[level] * k;
                        let ve: Amplitudes = std::array::from_fn(|i| ce4 * ce[target][i]);
                        let vl: Amplitudes = std::array::from_fn(|i| cl4 * cl[target][i]);
                        let scaled = |c: Complex64, r: &Rho| -> Rho { r.map(|row| row.map(|x| x * c.norm_sqr())) };
                        let extra_e = scaled(ce4, &se[target]);
                        let extra_l = scaled(cl4, &sl[target]);
                        if ce4.norm_sqr() > 0.0 {
                            out.push(Outcome {
                                prob: eta * eff_mean * short * short * ce4.norm_sqr(),
                                herald: Herald::EarlyBin,
                                window_index,
                                time_us: delta,
                                spin: Some(ConditionalSpin::new(&ve, extra_e)),
                            });
                        }
                        if cl4.norm_sqr() > 0.0 {
                            out.push(Outcome {
                                prob: eta * eff_mean * long * long * cl4.norm_sqr(),
                                herald: Herald::LateBin,
                                window_index,
                                time_us: 2.0 * sep + delta,
                                spin: Some(ConditionalSpin::new(&vl, extra_l)),
                            });
                        }
                        // Decayed parts add incoherently.
                        let extra: Rho = std::array::from_fn(|a| {
                            std::array::from_fn(|b| 0.5 * (long * long * extra_e[a][b] + short * short * extra_l[a][b]))
                        });
                        for (det, sign, eff) in [(Detector::One, 1.0, eff1), (Detector::Two, -1.0, eff2)] {
                            let v: Amplitudes =
                                std::array::from_fn(|i| FRAC_1_SQRT_2 * (long * ve[i] + sign * ph * short * vl[i]));
                            let spin = ConditionalSpin::new(&v, extra);
                            let pr = eta * eff * spin.norm();
                            if pr > 0.0 {
                                out.push(Outcome {
                                    prob: pr,
                                    herald: Herald::CentralBin(det),
                                    window_index,
                                    time_us: sep + delta,
                                    spin: Some(spin),
                                });
                            }
                        }
                    }
                }
            }
        }
        for (wi, bg) in prep.background.iter().enumerate() {
            let w = cfg.sequence.windows[wi];
            let window_index = wi as u8 + 1;
            let mid = 0.5 * (w.start_us + w.end_us);
            let items = [
                (Herald::EarlyBin, bg[0], mid),
                (Herald::LateBin, bg[1], 2.0 * sep + mid),
                (Herald::CentralBin(Detector::One), 0.5 * bg[2], sep + mid),
                (Herald::CentralBin(Detector::Two), 0.5 * bg[2], sep + mid),
            ];
            for (herald, prob, time_us) in items {
                if prob > 0.0 {
                    out.push(Outcome { prob, herald, window_index, time_us, spin: None });
                }
            }
        }
        out
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Fractional flip errors for every microwave pulse of the timeline.
fn draw_pulse_errors<R: Rng + ?Sized>(timeline: &PulseTimeline, params: &PhysicalParams, rng: &mut R) -> Vec<f64> {
    let (sg, se) = (params.pulse_error, params.excited_pulse_error());
    timeline
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::MwPi { manifold: Manifold::Ground, .. } | EventKind::MwHalfPi { .. } => Some(gaussian(sg, rng)),
            EventKind::MwPi { manifold: Manifold::Excited, .. } => Some(gaussian(se, rng)),
            _ => None,
        })
        .collect()
}

fn window_slices(timeline: &PulseTimeline, slice_us: f64) -> Vec<Vec<(f64, f64)>> {
    let optical = timeline.optical_times();
    let rel_events: Vec<f64> =
        timeline.events.iter().flat_map(|e| optical.iter().map(move |&tp| e.time_us - tp)).collect();
    timeline
        .windows
        .iter()
        .map(|w| {
            let n = (w.width() / slice_us).ceil() as usize;
            let mut b: Vec<f64> = (0..=n).map(|j| w.start_us + w.width() * j as f64 / n as f64).collect();
            b.extend(rel_events.iter().copied().filter(|&t| t > w.start_us + 1e-9 && t < w.end_us - 1e-9));
            b.sort_by(f64::total_cmp);
            b.dedup_by(|a, c| (*a - *c).abs() < 1e-9);
            b.windows(2).map(|p| (0.5 * (p[0] + p[1]), p[1] - p[0])).collect()
        })
        .collect()
}

/// Noise-free, error-free amplitudes of the ground spin after the timeline.
fn ideal_correlation(v: &SpinVector, basis_phase: f64) -> f64 {
    let mut a = [v[0], v[1], ZERO, ZERO];
    rotate(&mut a, Manifold::Ground, std::f64::consts::FRAC_PI_2, basis_phase);
    let (d, u) = (a[DOWN_G].norm_sqr(), a[UP_G].norm_sqr());
    (u - d) / (u + d)
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self, RunError> {
        config.validate()?;
        let timeline = config.sequence.build()?;
        let optical_times = timeline.optical_times();
        if optical_times.len() != 2 {
            return Err(RunError::Invalid("timeline must contain two optical pulses".into()));
        }
        let mut noise = config.noise;
        if let Some(f_s) = config.spin_coherence {
            noise.spin_t_phi_us = calibrate_spin_t_phi(config, &timeline, f_s)?;
        }
        let readout = ReadoutModel::calibrate(&config.readout, config.physics.cyclicity);
        let eta = config.efficiency.signal();
        let slices = window_slices(&timeline, config.slice_us);

        let mzi = &config.mzi;
        let zz = background_trace(BackgroundMode::Zz, mzi);
        let central =
            background_trace(if config.phase_tracking { BackgroundMode::Xxyy } else { BackgroundMode::Zz }, mzi);
        let background: Vec<[f64; 3]> = timeline
            .windows
            .iter()
            .map(|w| [zz.click_probability(w), zz.click_probability(w), central.click_probability(w)])
            .collect();

        let eff_max = mzi.detector_efficiency[0].max(mzi.detector_efficiency[1]);
        let gamma_max = config.physics.gamma_b().max(config.physics.gamma_a());
        let emit: f64 = timeline.windows.iter().map(|w| -(-gamma_max * w.width()).exp_m1()).sum();
        let bg_total: f64 = background.iter().map(|b| b.iter().sum::<f64>()).sum();
        let p_max = (2.0 * eta * eff_max * emit * 1.02 + bg_total).min(1.0);

        let separation_us = optical_times[1] - optical_times[0];
        let mut prep = Self {
            config: config.clone(),
            timeline,
            noise,
            readout,
            eta,
            p_max,
            phase_offset: 0.0,
            basis_phase: [0.0, std::f64::consts::FRAC_PI_2],
            slices,
            background,
            optical_times,
            separation_us,
        };
        prep.calibrate_phase_reference()?;
        Ok(prep)
    }

    /// Fixes the recorded phase so that detector-1 clicks give
    /// `⟨X⟩ = cos φ` and `⟨Y⟩ = sin φ` for the ideal state.
    fn calibrate_phase_reference(&mut self) -> Result<(), RunError> {
        let (offset, y_phase) = self.phase_reference()?;
        self.phase_offset = offset;
        self.basis_phase = [0.0, y_phase];
        Ok(())
    }

    fn phase_reference(&self) -> Result<(f64, f64), RunError> {
        let att = Attempt::new(self, NoiseTrajectory::zero(), &[], false);
        let spin = |phi: f64| -> Option<SpinVector> {
            att.outcomes(phi)
                .into_iter()
                .filter(|o| o.herald == Herald::CentralBin(Detector::One) && o.spin.is_some())
                .max_by(|a, b| a.prob.total_cmp(&b.prob))
                .and_then(|o| o.spin)
                .map(|c| c.coherent)
        };
        let (Some(v0), Some(v1)) = (spin(0.0), spin(std::f64::consts::FRAC_PI_2)) else {
            return Err(RunError::Invalid("no central-bin emission: cannot reference the phase".into()));
        };
        // cos(φ + c) sampled at φ = 0 and π/2.
        let offset = (-ideal_correlation(&v1, 0.0)).atan2(ideal_correlation(&v0, 0.0));
        let v = spin(std::f64::consts::FRAC_PI_2 - offset).expect("central emission exists");
        let y_plus = ideal_correlation(&v, std::f64::consts::FRAC_PI_2);
        let y_minus = ideal_correlation(&v, -std::f64::consts::FRAC_PI_2);
        let y_phase = if y_plus >= y_minus { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 };
        Ok((offset, y_phase))
    }

    fn attempt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Attempt<'_>, RunError> {
        let init_up = rng.random::<f64>() >= self.config.init_fidelity;
        let eps = draw_pulse_errors(&self.timeline, &self.config.physics, rng);
        let noise = build_attempt_noise(&self.noise, &self.optical_times, self.timeline.end_us(), rng)?;
        Ok(Attempt::new(self, noise, &eps, init_up))
    }

    /// Exact herald probability of one attempt under fresh noise.
    pub fn herald_probability<R: Rng + ?Sized>(&self, phi_mzi: f64, rng: &mut R) -> Result<f64, RunError> {
        let att = self.attempt(rng)?;
        Ok(att.outcomes(phi_mzi).iter().map(|o| o.prob).sum())
    }
}

/// One attempt's heralded click before the readout.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Heralded {
    herald: Herald,
    window_index: u8,
    time_us: f64,
    spin: Option<ConditionalSpin>,
}

fn pick<R: Rng + ?Sized>(outcomes: &[Outcome], target: f64, rng: &mut R) -> Option<Heralded> {
    let _ = rng;
    let mut acc = 0.0;
    for o in outcomes {
        acc += o.prob;
        if target < acc {
            return Some(Heralded { herald: o.herald, window_index: o.window_index, time_us: o.time_us, spin: o.spin });
        }
    }
    outcomes.last().map(|o| Heralded {
        herald: o.herald,
        window_index: o.window_index,
        time_us: o.time_us,
        spin: o.spin,
    })
}

fn read_spin<R: Rng + ?Sized>(
    prep: &Prepared,
    spin: Option<ConditionalSpin>,
    basis: SpinBasis,
    rng: &mut R,
) -> SpinReadout {
    let p_up = match spin {
        None => 0.5,
        Some(c) => {
            let rotation = (basis != SpinBasis::Z).then(|| {
                let phase = prep.basis_phase[if basis == SpinBasis::X { 0 } else { 1 }];
                (std::f64::consts::FRAC_PI_2 * (1.0 + gaussian(prep.config.physics.pulse_error, rng)), phase)
            });
            c.p_up(rotation)
        }
    };
    let bright = rng.random::<f64>() < p_up;
    let count = simulate_readout(bright, &prep.readout, rng);
    let result = if count >= prep.readout.threshold { SpinResult::Up } else { SpinResult::Down };
    SpinReadout { basis, result, photon_count: count }
}

/// Measurement basis for a herald: early/late bins measure Z, central-bin
/// heralds alternate X and Y.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasisSchedule {
    central_count: u64,
}

impl BasisSchedule {
    pub fn next(&mut self, herald: Herald) -> SpinBasis {
        if !herald.is_central() {
            return SpinBasis::Z;
        }
        self.central_count += 1;
        if self.central_count % 2 == 1 {
            SpinBasis::X
        } else {
            SpinBasis::Y
        }
    }
}

fn wrap(phi: f64) -> f64 {
    phi.rem_euclid(std::f64::consts::TAU)
}

fn record(prep: &Prepared, id: u64, h: &Heralded, phi_mzi: f64, r: &SpinReadout) -> ClickRecord {
    ClickRecord {
        attempt_id: id,
        herald: h.herald,
        detection_time_us: h.time_us,
        phi_at_attempt: wrap(phi_mzi + prep.phase_offset),
        spin_basis: r.basis,
        spin_result: r.result,
        window_index: h.window_index,
        photon_count: r.photon_count,
    }
}

fn candidate_rng(seed: u64, id: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(id);
    rng
}

/// A single attempt simulated directly, including the conditional readout.
pub fn run_attempt<R: Rng + ?Sized>(
    prep: &Prepared,
    attempt_id: u64,
    phi_mzi: f64,
    schedule: &mut BasisSchedule,
    rng: &mut R,
) -> Result<AttemptOutcome, RunError> {
    let att = prep.attempt(rng)?;
    let outcomes = att.outcomes(phi_mzi);
    let total: f64 = outcomes.iter().map(|o| o.prob).sum();
    let u: f64 = rng.random();
    if u >= total {
        return Ok(AttemptOutcome { herald: None, spin_readout: None, mode_trace: vec![Mode::E] });
    }
    let h = pick(&outcomes, u, rng).expect("non-empty");
    let basis = schedule.next(h.herald);
    let r = read_spin(prep, h.spin, basis, rng);
    Ok(AttemptOutcome {
        herald: Some(record(prep, attempt_id, &h, phi_mzi, &r)),
        spin_readout: Some(r),
        mode_trace: vec![Mode::E, Mode::R, Mode::E],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopCriterion {
    Attempts(u64),
    Heralds(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub attempts: u64,
    pub heralds: u64,
    pub candidates: u64,
    pub herald_probability: f64,
    /// Includes the time spent in readout mode after each herald.
    pub rate_hz: f64,
    pub rate_without_readout_hz: f64,
    pub readout_time_s: f64,
    pub p_max: f64,
    pub phase_offset: f64,
    pub spin_t_phi_us: f64,
    pub eta_signal: f64,
    pub readout_model: ReadoutModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickDataset {
    pub records: Vec<ClickRecord>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    id: u64,
    phi: f64,
}

/// Outcome of one candidate: the click, if accepted by thinning.
fn process_candidate(prep: &Prepared, c: Candidate) -> Result<Option<Heralded>, RunError> {
    let mut rng = candidate_rng(prep.config.seed, c.id, 1);
    let att = prep.attempt(&mut rng)?;
    let outcomes = att.outcomes(c.phi);
    let total: f64 = outcomes.iter().map(|o| o.prob).sum();
    if total > prep.p_max * (1.0 + 1e-9) {
        return Err(RunError::Invalid(format!("herald probability {total} exceeds its bound {}", prep.p_max)));
    }
    let u: f64 = rng.random::<f64>() * prep.p_max;
    if u >= total {
        return Ok(None);
    }
    Ok(pick(&outcomes, u, &mut rng))
}

/// Runs attempts until the stop criterion. Output depends only on the
/// configuration and seed, not on the thread count.
pub fn run_experiment(config: &ExperimentConfig, stop: StopCriterion) -> Result<ClickDataset, RunError> {
    let prep = Prepared::new(config)?;
    run_prepared(&prep, stop)
}

pub fn run_prepared(prep: &Prepared, stop: StopCriterion) -> Result<ClickDataset, RunError> {
    let cfg = &prep.config;
    let mut sched = ChaCha8Rng::seed_from_u64(cfg.seed);
    sched.set_stream(u64::MAX);
    let geo = Geometric::new(prep.p_max).map_err(|e| RunError::Invalid(format!("herald bound: {e}")))?;
    let mut next_id: u64 = 0;
    let mut phi: f64 = sched.random::<f64>() * std::f64::consts::TAU;
    let mut last_id: Option<u64> = None;

    let mut records = Vec::new();
    let mut schedule = BasisSchedule::default();
    let mut candidates = 0u64;
    let batch = 256usize;
    'outer: loop {
        let mut cands = Vec::with_capacity(batch);
        for _ in 0..batch {
            let gap = geo.sample(&mut sched);
            let id = next_id.saturating_add(gap);
            let steps = match last_id {
                Some(l) => (id - l) as f64,
                None => (id + 1) as f64,
            };
            phi += gaussian(cfg.phase_walk_sigma * steps.sqrt(), &mut sched);
            phi = wrap(phi);
            last_id = Some(id);
            next_id = id + 1;
            cands.push(Candidate { id, phi });
        }
        let results: Vec<Result<Option<Heralded>, RunError>> =
            cands.par_iter().map(|&c| process_candidate(prep, c)).collect();
        for (c, res) in cands.iter().zip(results) {
            if let StopCriterion::Attempts(n) = stop {
                if c.id >= n {
                    break 'outer;
                }
            }
            candidates += 1;
            if let Some(h) = res? {
                let basis = schedule.next(h.herald);
                let mut rng = candidate_rng(cfg.seed, c.id, 2);
                let r = read_spin(prep, h.spin, basis, &mut rng);
                records.push(record(prep, c.id, &h, c.phi, &r));
                if let StopCriterion::Heralds(n) = stop {
                    if records.len() as u64 >= n {
                        break 'outer;
                    }
                }
            }
        }
    }
    let attempts = match stop {
        StopCriterion::Attempts(n) => n,
        StopCriterion::Heralds(_) => records.last().map(|r| r.attempt_id + 1).unwrap_or(0),
    };
    let heralds = records.len() as u64;
    let attempt_time = attempts as f64 / cfg.attempt_rate_hz;
    let readout_time = heralds as f64 * cfg.readout.duration_us() * 1e-6;
    let rate = |t: f64| if t > 0.0 { heralds as f64 / t } else { 0.0 };
    let summary = RunSummary {
        attempts,
        heralds,
        candidates,
        herald_probability: if attempts > 0 { heralds as f64 / attempts as f64 } else { 0.0 },
        rate_hz: rate(attempt_time + readout_time),
        rate_without_readout_hz: rate(attempt_time),
        readout_time_s: readout_time,
        p_max: prep.p_max,
        phase_offset: prep.phase_offset,
        spin_t_phi_us: prep.noise.spin_t_phi_us,
        eta_signal: prep.eta,
        readout_model: prep.readout,
    };
    Ok(ClickDataset { records, summary })
}

/// Mean `P(start) − P(other)` after an XY-16 composition on `|↓g⟩` and
/// `|↑g⟩`, with independent flip errors on every pulse.
pub fn identity_contrast(pulse_error: f64, n_samples: usize, seed: u64) -> f64 {
    let pattern = crate::sequencer::SequenceKind::Xy16.axis_pattern();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for i in 0..n_samples {
        let start = if i % 2 == 0 { DOWN_G } else { UP_G };
        let mut s = EmitterState::basis(start);
        for &axis in &pattern {
            s = s
                .apply_mw_pulse(Manifold::Ground, std::f64::consts::PI, axis, gaussian(pulse_error, &mut rng))
                .expect("finite angle");
        }
        let other = if start == DOWN_G { UP_G } else { DOWN_G };
        total += s.population(start) - s.population(other);
    }
    total / n_samples as f64
}

/// Flip-error spread giving the requested identity contrast.
pub fn calibrate_pulse_error(target: f64, n_samples: usize, seed: u64) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if identity_contrast(mid, n_samples, seed) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ramsey coherence of the ground spin under the timeline's decoupling
/// pulses, with pulse errors and quasi-static noise but no Markovian part.
pub fn decoupled_coherence(config: &ExperimentConfig, timeline: &PulseTimeline, n_samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pis: Vec<(f64, Axis)> = timeline
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::MwPi { manifold: Manifold::Ground, axis } => Some((e.time_us, axis)),
            _ => None,
        })
        .collect();
    let end = timeline.end_us();
    let sg = config.physics.pulse_error;
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..n_samples {
        let beta = gaussian(config.noise.quasi_static_sigma, &mut rng);
        let noise = NoiseTrajectory::constant(beta, 1.0);
        let mut s = EmitterState::basis(DOWN_G)
            .apply_mw_pulse(Manifold::Ground, std::f64::consts::FRAC_PI_2, Axis::X, gaussian(sg, &mut rng))
            .expect("finite");
        let mut t = 0.0;
        for &(tp, axis) in &pis {
            s = s.evolve_free(t, tp, &noise).expect("ordered");
            s = s.apply_mw_pulse(Manifold::Ground, std::f64::consts::PI, axis, gaussian(sg, &mut rng)).expect("finite");
            t = tp;
        }
        s = s.evolve_free(t, end, &noise).expect("ordered");
        acc += 2.0 * s.amplitudes[UP_G] * s.amplitudes[DOWN_G].conj();
    }
    acc.norm() / n_samples as f64
}

/// Markovian spin dephasing time that brings the decoupled coherence down to
/// `f_s` over the sequence. Infinite if the other channels already do.
pub fn calibrate_spin_t_phi(config: &ExperimentConfig, timeline: &PulseTimeline, f_s: f64) -> Result<f64, RunError> {
    let other = decoupled_coherence(config, timeline, 4000, 0x5eed);
    if other <= f_s {
        return Ok(f64::INFINITY);
    }
    Ok(timeline.end_us() / (other / f_s).ln())
}

/// Hahn-echo contrast with one optical kick at `kick_time_us`.
pub fn hahn_kick_contrast(kick_sigma: f64, two_tau_us: f64, kick_time_us: f64, n_samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 0.5 * two_tau_us;
    let normal = Normal::new(0.0, kick_sigma.max(0.0)).expect("finite sigma");
    let mut total = 0.0;
    for _ in 0..n_samples {
        let k = normal.sample(&mut rng);
        let noise = NoiseTrajectory::from_ground(vec![kick_time_us], vec![k], 1.0).expect("single breakpoint");
        let s = EmitterState::basis(DOWN_G)
            .apply_mw_pulse(Manifold::Ground, std::f64::consts::FRAC_PI_2, Axis::X, 0.0)
            .and_then(|s| s.evolve_free(0.0, tau, &noise))
            .and_then(|s| s.apply_mw_pulse(Manifold::Ground, std::f64::consts::PI, Axis::X, 0.0))
            .and_then(|s| s.evolve_free(tau, two_tau_us, &noise))
            .and_then(|s| s.apply_mw_pulse(Manifold::Ground, std::f64::consts::FRAC_PI_2, Axis::X, 0.0))
            .expect("valid Hahn sequence");
        total += s.population(DOWN_G) - s.population(UP_G);
    }
    total / n_samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpld_machine() {
        let s = Cpld::new(432);
        assert_eq!(cpld_step(s, CpldEvent::NoClick).mode, Mode::E);
        let mut r = cpld_step(s, CpldEvent::Click);
        assert_eq!(r.mode, Mode::R);
        for _ in 0..431 {
            r = cpld_step(r, CpldEvent::ReadoutPulse);
            assert_eq!(r.mode, Mode::R);
        }
        r = cpld_step(r, CpldEvent::ReadoutPulse);
        assert_eq!(r.mode, Mode::E);
    }

    #[test]
    fn readout_calibration_hits_targets() {
        for cfg in [ReadoutConfig::mzi_path(), ReadoutConfig::bypass_path()] {
            let m = ReadoutModel::calibrate(&cfg, 600.0);
            let f_down = (1.0 - m.p_background).powi(cfg.n_pulses as i32);
            let f_up = 1.0 - p_no_signal(cfg.n_pulses, m.p_detect, m.p_flip) * f_down;
            assert!((f_down - cfg.f_down).abs() < 1e-9);
            assert!((f_up - cfg.f_up).abs() < 1e-9);
        }
    }

    #[test]
    fn dark_readout_without_background_is_silent() {
        let m = ReadoutModel { n_pulses: 432, threshold: 1, p_detect: 0.01, p_background: 0.0, p_flip: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..200).all(|_| simulate_readout(false, &m, &mut rng) == 0));
    }

    #[test]
    fn ideal_phase_reference() {
        let prep = Prepared::new(&ExperimentConfig::ideal()).unwrap();
        let att = Attempt::new(&prep, NoiseTrajectory::zero(), &[], false);
        for phi_cal in [0.3, 1.7, 4.0] {
            let out = att.outcomes(phi_cal - prep.phase_offset);
            let v = out
                .iter()
                .filter(|o| o.herald == Herald::CentralBin(Detector::One))
                .max_by(|a, b| a.prob.total_cmp(&b.prob))
                .unwrap()
                .spin
                .unwrap()
                .coherent;
            assert!((ideal_correlation(&v, prep.basis_phase[0]) - phi_cal.cos()).abs() < 1e-6);
            assert!((ideal_correlation(&v, prep.basis_phase[1]) - phi_cal.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn conditional_spin_keeps_norm() {
        let prep = Prepared::new(&ExperimentConfig::xy16()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let att = prep.attempt(&mut rng).unwrap();
        for o in att.outcomes(0.4) {
            if let (Herald::EarlyBin | Herald::LateBin, Some(c)) = (o.herald, o.spin) {
                let mzi = &prep.config.mzi;
                let eff = 0.5 * (mzi.detector_efficiency[0] + mzi.detector_efficiency[1]);
                let split = match o.herald {
                    Herald::EarlyBin => mzi.splitter_ratio * mzi.transmission_short,
                    _ => (1.0 - mzi.splitter_ratio) * mzi.transmission_long,
                };
                let from_spin = prep.eta * eff * split * c.norm();
                assert!((from_spin - o.prob).abs() <= 1e-9 * o.prob, "{from_spin} {}", o.prob);
            }
        }
    }

    #[test]
    fn bound_holds_for_ideal() {
        let prep = Prepared::new(&ExperimentConfig::ideal()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..20 {
            let p = prep.herald_probability(i as f64 * 0.3, &mut rng).unwrap();
            assert!(p <= prep.p_max && p > 0.05, "{p} vs {}", prep.p_max);
        }
    }
}
