//! Time-bin photons through the unbalanced interferometer.
//!
//! A spin-photon state is written as `|s_E⟩|E⟩ + |s_L⟩|L⟩` with unnormalized
//! spin vectors `(↓, ↑)`. With a balanced splitter, the photon reaches the
//! early bin with probability `|s_E|²/2`, the late bin with `|s_L|²/2`, and
//! the central bin at detector 1/2 with amplitude `(s_E ± e^{iφ}s_L)/2`,
//! i.e. a projection onto `|±φ⟩ = (|E⟩ ± e^{−iφ}|L⟩)/√2`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sequencer::Window;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PhotonicsError {
    #[error("window must satisfy 0 <= t1 < t2, got [{0}, {1}]")]
    BadWindow(f64, f64),
    #[error("invalid interferometer configuration: {0}")]
    InvalidConfig(String),
}

pub type SpinVector = [Complex64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MziConfig {
    /// Long-arm delay, matched to the bin separation.
    pub delay_t_us: f64,
    /// Propagation mismatch ΔT.
    pub delta_t_ns: f64,
    /// Interferometer phase at the laser frequency.
    pub phase_phi: f64,
    pub splitter_ratio: f64,
    pub transmission_short: f64,
    pub transmission_long: f64,
    pub detector_efficiency: [f64; 2],
    /// Detector dark counts, both detectors together.
    pub dark_rate_hz: f64,
    /// Extra counts in the heralding windows while phase-tracking pulses run.
    pub scatter_rate_hz: f64,
    /// Delay of the phase-tracking scatter bump after each optical pulse.
    pub scatter_delay_us: f64,
    pub scatter_bump_hz: f64,
    pub scatter_bump_us: f64,
}

impl Default for MziConfig {
    fn default() -> Self {
        Self {
            delay_t_us: 75.5,
            delta_t_ns: 10.0,
            phase_phi: 0.0,
            splitter_ratio: 0.5,
            transmission_short: 1.0,
            transmission_long: 1.0,
            detector_efficiency: [1.0, 1.0],
            dark_rate_hz: 6.0,
            scatter_rate_hz: 9.0,
            scatter_delay_us: 7.3,
            scatter_bump_hz: 5.0e3,
            scatter_bump_us: 2.0,
        }
    }
}

impl MziConfig {
    pub fn validate(&self) -> Result<(), PhotonicsError> {
        let unit = [
            ("splitter_ratio", self.splitter_ratio),
            ("transmission_short", self.transmission_short),
            ("transmission_long", self.transmission_long),
            ("detector_efficiency[0]", self.detector_efficiency[0]),
            ("detector_efficiency[1]", self.detector_efficiency[1]),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(PhotonicsError::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("delay_t_us", self.delay_t_us),
            ("dark_rate_hz", self.dark_rate_hz),
            ("scatter_rate_hz", self.scatter_rate_hz),
            ("scatter_delay_us", self.scatter_delay_us),
            ("scatter_bump_hz", self.scatter_bump_hz),
            ("scatter_bump_us", self.scatter_bump_us),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PhotonicsError::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.delta_t_ns.is_finite() || !self.phase_phi.is_finite() {
            return Err(PhotonicsError::InvalidConfig("delta_t_ns and phase_phi must be finite".into()));
        }
        Ok(())
    }
}

/// `φ_Bell = φ + Δω·ΔT`.
pub fn bell_phase(delta_omega: f64, mzi: &MziConfig) -> f64 {
    mzi.phase_phi + delta_omega * mzi.delta_t_ns * 1e-3
}

/// Mean optical coherence of photons emitted in `[t1, t2]`.
///
/// `(T₂/2T₁)·(e^{−2t₁/T₂} − e^{−2t₂/T₂})/(e^{−t₁/T₁} − e^{−t₂/T₁})` with
/// `1/T₂ = 1/(2T₁) + 1/T_φ`.
pub fn f_op(t1_us: f64, t2_us: f64, t1_life_us: f64, t_phi_us: f64) -> Result<f64, PhotonicsError> {
    if !(t1_us >= 0.0 && t2_us > t1_us) {
        return Err(PhotonicsError::BadWindow(t1_us, t2_us));
    }
    let t2c = 1.0 / (0.5 / t1_life_us + 1.0 / t_phi_us);
    let num = (-2.0 * t1_us / t2c).exp() - (-2.0 * t2_us / t2c).exp();
    let den = (-t1_us / t1_life_us).exp() - (-t2_us / t1_life_us).exp();
    Ok(t2c / (2.0 * t1_life_us) * num / den)
}

/// Expected two-photon interference visibility for a detection window
/// `[0, window]`; tends to 1 for a vanishing window.
pub fn hom_visibility(window_us: f64, t1_life_us: f64, t_phi_us: f64) -> f64 {
    if window_us <= 0.0 {
        return 1.0;
    }
    f_op(0.0, window_us, t1_life_us, t_phi_us).unwrap_or(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Herald {
    EarlyBin,
    LateBin,
    CentralBin(Detector),
}

impl Herald {
    pub fn label(&self) -> &'static str {
        match self {
            Herald::EarlyBin => "early",
            Herald::LateBin => "late",
            Herald::CentralBin(Detector::One) => "central1",
            Herald::CentralBin(Detector::Two) => "central2",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "early" => Some(Herald::EarlyBin),
            "late" => Some(Herald::LateBin),
            "central1" => Some(Herald::CentralBin(Detector::One)),
            "central2" => Some(Herald::CentralBin(Detector::Two)),
            _ => None,
        }
    }

    pub fn is_central(&self) -> bool {
        matches!(self, Herald::CentralBin(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinBasis {
    X,
    Y,
    Z,
}

impl SpinBasis {
    pub fn label(&self) -> &'static str {
        match self {
            SpinBasis::X => "X",
            SpinBasis::Y => "Y",
            SpinBasis::Z => "Z",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "X" => Some(SpinBasis::X),
            "Y" => Some(SpinBasis::Y),
            "Z" => Some(SpinBasis::Z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinResult {
    Up,
    Down,
}

impl SpinResult {
    pub fn label(&self) -> &'static str {
        match self {
            SpinResult::Up => "up",
            SpinResult::Down => "down",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "up" => Some(SpinResult::Up),
            "down" => Some(SpinResult::Down),
            _ => None,
        }
    }

    pub fn sign(&self) -> f64 {
        match self {
            SpinResult::Up => 1.0,
            SpinResult::Down => -1.0,
        }
    }
}

/// One heralded attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub attempt_id: u64,
    pub herald: Herald,
    /// Detection time on the first bin's clock.
    pub detection_time_us: f64,
    pub phi_at_attempt: f64,
    pub spin_basis: SpinBasis,
    pub spin_result: SpinResult,
    /// Heralding window after the optical pulse, from 1.
    pub window_index: u8,
    pub photon_count: u32,
}

/// Unnormalized spin vectors attached to the early and late photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinPhotonState {
    pub early: SpinVector,
    pub late: SpinVector,
}

fn vnorm(v: &SpinVector) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

impl SpinPhotonState {
    /// `(|↓⟩|E⟩ + |↑⟩|L⟩)/√2`.
    pub fn ideal_bell() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        Self { early: [Complex64::new(h, 0.0), z], late: [z, Complex64::new(h, 0.0)] }
    }

    pub fn photon_probability(&self) -> f64 {
        vnorm(&self.early) + vnorm(&self.late)
    }
}

/// Spin vectors reaching detectors 1 and 2 in the central bin, including the
/// balanced-splitter factor 1/2.
pub fn central_amplitudes(early: &SpinVector, late: &SpinVector, phi_bell: f64) -> (SpinVector, SpinVector) {
    let ph = Complex64::from_polar(1.0, phi_bell);
    let d1 = [0.5 * (early[0] + ph * late[0]), 0.5 * (early[1] + ph * late[1])];
    let d2 = [0.5 * (early[0] - ph * late[0]), 0.5 * (early[1] - ph * late[1])];
    (d1, d2)
}

/// Probabilities of each detection outcome for one photon, excluding
/// background: (early, late, central detector 1, central detector 2).
pub fn detection_probabilities(state: &SpinPhotonState, phi_bell: f64) -> [f64; 4] {
    let (d1, d2) = central_amplitudes(&state.early, &state.late, phi_bell);
    [0.5 * vnorm(&state.early), 0.5 * vnorm(&state.late), vnorm(&d1), vnorm(&d2)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectWindow {
    ZEarly,
    ZLate,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub herald: Herald,
    /// Normalized conditional spin state; `None` for background clicks.
    pub spin: Option<SpinVector>,
}

/// Samples a click in one detection window.
///
/// `efficiency` scales the photon probability; `background_probability` is
/// the chance of a background count in the window. Background clicks carry no
/// spin information and are otherwise identical to signal clicks.
pub fn sample_detection<R: Rng + ?Sized>(
    state: &SpinPhotonState,
    mzi: &MziConfig,
    window: DetectWindow,
    efficiency: f64,
    background_probability: f64,
    rng: &mut R,
) -> Option<Detection> {
    let phi = mzi.phase_phi;
    let (d1, d2) = central_amplitudes(&state.early, &state.late, phi);
    let norm = |v: &SpinVector| -> SpinVector {
        let n = vnorm(v).sqrt();
        [v[0] / n, v[1] / n]
    };
    let outcomes: Vec<(Herald, SpinVector)> = match window {
        DetectWindow::ZEarly => vec![(Herald::EarlyBin, state.early.map(|a| a * std::f64::consts::FRAC_1_SQRT_2))],
        DetectWindow::ZLate => vec![(Herald::LateBin, state.late.map(|a| a * std::f64::consts::FRAC_1_SQRT_2))],
        DetectWindow::Central => vec![(Herald::CentralBin(Detector::One), d1), (Herald::CentralBin(Detector::Two), d2)],
    };
    let mut u: f64 = rng.random();
    for (h, v) in &outcomes {
        let p = efficiency * vnorm(v);
        if u < p {
            return Some(Detection { herald: *h, spin: Some(norm(v)) });
        }
        u -= p;
    }
    if u < background_probability {
        let herald = match window {
            DetectWindow::ZEarly => Herald::EarlyBin,
            DetectWindow::ZLate => Herald::LateBin,
            DetectWindow::Central => {
                if rng.random::<bool>() {
                    Herald::CentralBin(Detector::One)
                } else {
                    Herald::CentralBin(Detector::Two)
                }
            }
        };
        return Some(Detection { herald, spin: None });
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundMode {
    /// No phase-tracking pulses.
    Zz,
    /// Phase-tracking pulses through the interferometer.
    Xxyy,
}

/// Background count rate versus time after an optical pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundTrace {
    pub floor_hz: f64,
    pub excess_hz: f64,
    pub bump_start_us: f64,
    pub bump_us: f64,
    pub bump_hz: f64,
}

pub fn background_trace(mode: BackgroundMode, mzi: &MziConfig) -> BackgroundTrace {
    match mode {
        BackgroundMode::Zz => BackgroundTrace {
            floor_hz: mzi.dark_rate_hz,
            excess_hz: 0.0,
            bump_start_us: mzi.scatter_delay_us,
            bump_us: 0.0,
            bump_hz: 0.0,
        },
        BackgroundMode::Xxyy => BackgroundTrace {
            floor_hz: mzi.dark_rate_hz,
            excess_hz: mzi.scatter_rate_hz,
            bump_start_us: mzi.scatter_delay_us,
            bump_us: mzi.scatter_bump_us,
            bump_hz: mzi.scatter_bump_hz,
        },
    }
}

impl BackgroundTrace {
    pub fn rate_hz(&self, t_us: f64) -> f64 {
        let bump =
            if t_us >= self.bump_start_us && t_us < self.bump_start_us + self.bump_us { self.bump_hz } else { 0.0 };
        self.floor_hz + self.excess_hz + bump
    }

    /// Mean rate over a window.
    pub fn mean_rate_hz(&self, w: &Window) -> f64 {
        let lo = w.start_us.max(self.bump_start_us);
        let hi = w.end_us.min(self.bump_start_us + self.bump_us);
        let overlap = (hi - lo).max(0.0);
        self.floor_hz + self.excess_hz + self.bump_hz * overlap / w.width()
    }

    /// Probability of at least one count in the window.
    pub fn click_probability(&self, w: &Window) -> f64 {
        -(-self.mean_rate_hz(w) * w.width() * 1e-6).exp_m1()
    }
}
