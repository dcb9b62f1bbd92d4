//! Four-level emitter: two spin ground states and two spin excited states.
//!
//! Basis order is fixed as `(↓g, ↑g, ↓e, ↑e)`. A microwave rotation by angle
//! θ about an in-plane axis at phase φ acts on the `(↓, ↑)` pair of one
//! manifold as
//!
//! ```text
//! R(θ, φ) = cos(θ/2)·I − i·sin(θ/2)·(cos φ·σx + sin φ·σy)
//! ```
//!
//! so a π pulse about X takes `|↓⟩` to `−i|↑⟩`. Free evolution under a
//! frequency shift β multiplies `|↑⟩` by `e^{−i∫β/2}` and `|↓⟩` by
//! `e^{+i∫β/2}`; a common optical detuning multiplies both excited levels by
//! `e^{−i∫δ}`. The optical π pulses swap amplitudes without a phase, laser
//! phases are tracked in [`crate::photonics`].

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::noise::NoiseTrajectory;

pub const DOWN_G: usize = 0;
pub const UP_G: usize = 1;
pub const DOWN_E: usize = 2;
pub const UP_E: usize = 3;

const NORM_TOL: f64 = 1e-9;

/// Complex amplitudes in the fixed basis order.
pub type Amplitudes = [Complex64; 4];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpinError {
    #[error("rotation angle is not finite")]
    NonFiniteAngle,
    #[error("free evolution interval is reversed: t0 = {t0} µs > t1 = {t1} µs")]
    ReversedInterval { t0: f64, t1: f64 },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("emission window must be positive, got {0} µs")]
    NonPositiveWindow(f64),
    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
}

impl Manifold {
    fn indices(self) -> (usize, usize) {
        match self {
            Manifold::Ground => (DOWN_G, UP_G),
            Manifold::Excited => (DOWN_E, UP_E),
        }
    }
}

/// Rotation axis in the equatorial plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    NegX,
    NegY,
}

impl Axis {
    pub fn phase(self) -> f64 {
        match self {
            Axis::X => 0.0,
            Axis::Y => FRAC_PI_2,
            Axis::NegX => 2.0 * FRAC_PI_2,
            Axis::NegY => 3.0 * FRAC_PI_2,
        }
    }

    pub fn inverted(self) -> Axis {
        match self {
            Axis::X => Axis::NegX,
            Axis::Y => Axis::NegY,
            Axis::NegX => Axis::X,
            Axis::NegY => Axis::Y,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::NegX => "-X",
            Axis::NegY => "-Y",
        }
    }

    pub fn from_label(s: &str) -> Option<Axis> {
        match s {
            "X" => Some(Axis::X),
            "Y" => Some(Axis::Y),
            "-X" => Some(Axis::NegX),
            "-Y" => Some(Axis::NegY),
            _ => None,
        }
    }
}

/// Optical transition driven by a π pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// `|↑g⟩ ↔ |↑e⟩`
    A,
    /// `|↓g⟩ ↔ |↓e⟩`
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `↓e → ↓g`
    B,
    /// `↑e → ↑g`
    A,
    /// cross decay into the opposite ground spin
    SpinFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowParity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeBin {
    Early,
    Late,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvent {
    /// Time since the most recent optical pulse.
    pub time_us: f64,
    pub branch: Branch,
    pub window_parity: WindowParity,
    pub bin: TimeBin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// Lifetime of `|↓e⟩` (B transition, Purcell enhanced).
    pub tau_b_us: f64,
    /// Lifetime of `|↑e⟩` (A transition).
    pub tau_a_us: f64,
    pub purcell: f64,
    pub cyclicity: f64,
    pub omega_g_ghz: f64,
    pub omega_e_ghz: f64,
    pub rabi_g_mhz: f64,
    pub rabi_e_mhz: f64,
    /// Standard deviation of the fractional flip-angle error of ground
    /// manifold pulses.
    pub pulse_error: f64,
    /// Same for excited manifold pulses. `None` scales `pulse_error` by the
    /// ratio of Rabi frequencies.
    pub pulse_error_excited: Option<f64>,
    /// Expected `τ_a/τ_b` and the relative tolerance applied to it.
    pub lifetime_ratio: f64,
    pub lifetime_ratio_tol: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            tau_b_us: 18.4,
            tau_a_us: 85.2,
            purcell: 342.0,
            cyclicity: 600.0,
            omega_g_ghz: 10.7,
            omega_e_ghz: 9.5,
            rabi_g_mhz: 13.0,
            rabi_e_mhz: 7.0,
            pulse_error: DEFAULT_PULSE_ERROR,
            pulse_error_excited: None,
            lifetime_ratio: 4.6,
            lifetime_ratio_tol: 0.05,
        }
    }
}

/// Per-pulse flip-angle spread that gives a 16-pulse XY-16 identity
/// contrast of 0.86 (see `runner::identity_contrast`).
pub const DEFAULT_PULSE_ERROR: f64 = 0.0436;

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), SpinError> {
        let bad = |m: String| Err(SpinError::InvalidParams(m));
        for (name, v) in [
            ("tau_b_us", self.tau_b_us),
            ("tau_a_us", self.tau_a_us),
            ("purcell", self.purcell),
            ("omega_g_ghz", self.omega_g_ghz),
            ("omega_e_ghz", self.omega_e_ghz),
            ("rabi_g_mhz", self.rabi_g_mhz),
            ("rabi_e_mhz", self.rabi_e_mhz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.cyclicity > 1.0) {
            return bad(format!("cyclicity must exceed 1, got {}", self.cyclicity));
        }
        let ex = self.excited_pulse_error();
        for (name, v) in [("pulse_error", self.pulse_error), ("pulse_error_excited", ex)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        let ratio = self.tau_a_us / self.tau_b_us;
        if (ratio / self.lifetime_ratio - 1.0).abs() > self.lifetime_ratio_tol {
            return bad(format!(
                "tau_a_us/tau_b_us = {ratio:.3} is inconsistent with the expected {} (tolerance {})",
                self.lifetime_ratio, self.lifetime_ratio_tol
            ));
        }
        Ok(())
    }

    pub fn gamma_b(&self) -> f64 {
        1.0 / self.tau_b_us
    }

    pub fn gamma_a(&self) -> f64 {
        1.0 / self.tau_a_us
    }

    /// Excited over ground gyromagnetic ratio, `r = ω_e/ω_g`.
    pub fn ratio_r(&self) -> f64 {
        self.omega_e_ghz / self.omega_g_ghz
    }

    pub fn excited_pulse_error(&self) -> f64 {
        self.pulse_error_excited.unwrap_or(self.pulse_error * self.rabi_g_mhz / self.rabi_e_mhz)
    }

    pub fn spin_flip_probability(&self) -> f64 {
        1.0 / self.cyclicity
    }
}

/// SU(2) rotation on one manifold of a raw amplitude vector.
pub fn rotate(amps: &mut Amplitudes, manifold: Manifold, angle: f64, phase: f64) {
    let (d, u) = manifold.indices();
    let (s, c) = (angle / 2.0).sin_cos();
    let e_minus = Complex64::from_polar(1.0, -phase);
    let e_plus = e_minus.conj();
    let mi_s = Complex64::new(0.0, -s);
    let a_d = amps[d];
    let a_u = amps[u];
    amps[d] = a_d * c + mi_s * e_minus * a_u;
    amps[u] = mi_s * e_plus * a_d + a_u * c;
}

/// Optical π pulse: swap the ground and excited level of one spin.
pub fn swap_optical(amps: &mut Amplitudes, transition: Transition) {
    match transition {
        Transition::B => amps.swap(DOWN_G, DOWN_E),
        Transition::A => amps.swap(UP_G, UP_E),
    }
}

/// Phase factors from integrated ground, excited and optical shifts.
pub fn apply_phases(amps: &mut Amplitudes, int_g: f64, int_e: f64, int_opt: f64) {
    amps[DOWN_G] *= Complex64::from_polar(1.0, 0.5 * int_g);
    amps[UP_G] *= Complex64::from_polar(1.0, -0.5 * int_g);
    amps[DOWN_E] *= Complex64::from_polar(1.0, 0.5 * int_e - int_opt);
    amps[UP_E] *= Complex64::from_polar(1.0, -0.5 * int_e - int_opt);
}

pub fn norm_sqr(amps: &Amplitudes) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterState {
    pub amplitudes: Amplitudes,
    pub emission: Option<EmissionEvent>,
}

impl EmitterState {
    pub fn basis(index: usize) -> Self {
        let mut amplitudes = [Complex64::new(0.0, 0.0); 4];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self { amplitudes, emission: None }
    }

    /// Normalizes the given amplitudes. Returns an error for the zero vector.
    pub fn from_amplitudes(amps: Amplitudes) -> Result<Self, SpinError> {
        let n = norm_sqr(&amps);
        if !(n.is_finite() && n > 0.0) {
            return Err(SpinError::NotNormalized(n));
        }
        let k = 1.0 / n.sqrt();
        Ok(Self { amplitudes: amps.map(|a| a * k), emission: None })
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn population(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    pub fn excited_population(&self) -> f64 {
        self.population(DOWN_E) + self.population(UP_E)
    }

    fn check_normalized(&self) -> Result<(), SpinError> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(SpinError::NotNormalized(n));
        }
        Ok(())
    }

    /// Rotation by `angle·(1 + flip_error)` about `axis` on one manifold.
    pub fn apply_mw_pulse(
        &self,
        manifold: Manifold,
        angle: f64,
        axis: Axis,
        flip_error: f64,
    ) -> Result<Self, SpinError> {
        self.apply_rotation(manifold, angle * (1.0 + flip_error), axis.phase())
    }

    pub fn apply_rotation(&self, manifold: Manifold, angle: f64, phase: f64) -> Result<Self, SpinError> {
        if !angle.is_finite() || !phase.is_finite() {
            return Err(SpinError::NonFiniteAngle);
        }
        let mut out = *self;
        rotate(&mut out.amplitudes, manifold, angle, phase);
        Ok(out)
    }

    pub fn apply_optical_pi(&self, transition: Transition) -> Self {
        let mut out = *self;
        swap_optical(&mut out.amplitudes, transition);
        out
    }

    pub fn evolve_free(&self, t0_us: f64, t1_us: f64, noise: &NoiseTrajectory) -> Result<Self, SpinError> {
        if t1_us < t0_us {
            return Err(SpinError::ReversedInterval { t0: t0_us, t1: t1_us });
        }
        let mut out = *self;
        apply_phases(
            &mut out.amplitudes,
            noise.integral_ground(t0_us, t1_us),
            noise.integral_excited(t0_us, t1_us),
            noise.integral_optical(t0_us, t1_us),
        );
        Ok(out)
    }

    /// One quantum-jump step over a window of free decay.
    ///
    /// `time_us` of the returned event is measured from the start of the
    /// window. Without an emission the excited amplitudes are damped by the
    /// no-jump factor and the state is renormalized.
    pub fn sample_emission<R: Rng + ?Sized>(
        &self,
        window_us: f64,
        params: &PhysicalParams,
        bin: TimeBin,
        rng: &mut R,
    ) -> Result<(Self, Option<EmissionEvent>), SpinError> {
        if !(window_us > 0.0) {
            return Err(SpinError::NonPositiveWindow(window_us));
        }
        self.check_normalized()?;
        let (gb, ga) = (params.gamma_b(), params.gamma_a());
        let p_b = self.population(DOWN_E) * -(-gb * window_us).exp_m1();
        let p_a = self.population(UP_E) * -(-ga * window_us).exp_m1();
        let u: f64 = rng.random();
        if u < p_b + p_a {
            let from_down = u < p_b;
            let (gamma, level) = if from_down { (gb, DOWN_E) } else { (ga, UP_E) };
            let t = sample_truncated_exp(gamma, window_us, rng);
            let flip = rng.random::<f64>() < params.spin_flip_probability();
            let target = match (from_down, flip) {
                (true, false) | (false, true) => DOWN_G,
                (false, false) | (true, true) => UP_G,
            };
            let mut amplitudes = [Complex64::new(0.0, 0.0); 4];
            let a = self.amplitudes[level];
            amplitudes[target] = a / a.norm();
            let branch = match (from_down, flip) {
                (_, true) => Branch::SpinFlip,
                (true, false) => Branch::B,
                (false, false) => Branch::A,
            };
            let event = EmissionEvent {
                time_us: t,
                branch,
                window_parity: if from_down { WindowParity::Even } else { WindowParity::Odd },
                bin,
            };
            Ok((Self { amplitudes, emission: Some(event) }, Some(event)))
        } else {
            let mut amps = self.amplitudes;
            amps[DOWN_E] *= (-0.5 * gb * window_us).exp();
            amps[UP_E] *= (-0.5 * ga * window_us).exp();
            let mut out = Self::from_amplitudes(amps)?;
            out.emission = self.emission;
            Ok((out, None))
        }
    }
}

/// Inverse-CDF draw from `γ e^{−γt}` restricted to `[0, w]`.
pub fn sample_truncated_exp<R: Rng + ?Sized>(gamma: f64, w: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mass = -(-gamma * w).exp_m1();
    let t = -(-u * mass).ln_1p() / gamma;
    t.clamp(0.0, w)
}
