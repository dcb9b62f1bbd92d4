//! Dephasing channels.
//!
//! A [`NoiseTrajectory`] carries three piecewise-constant frequency shifts
//! (rad/µs) on a shared set of breakpoints: the ground-manifold spin shift
//! β_g, the excited-manifold spin shift β_e and a detuning δ common to both
//! excited levels (optical dephasing). Integrals are exact.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NoiseError {
    #[error("breakpoints must be finite and strictly increasing")]
    UnorderedBreakpoints,
    #[error("channel length {got} does not match {expected} breakpoints")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dephasing time must be positive, got {0} µs")]
    NonPositiveTphi(f64),
    #[error("time step must be positive, got {0} µs")]
    NonPositiveStep(f64),
    #[error("g_perp must be non-zero")]
    ZeroGPerp,
    #[error("invalid noise configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Ground,
    Excited,
    Optical,
}

/// Piecewise-constant shifts. Segment `i` covers `[t_i, t_{i+1})`; the last
/// value extends to infinity and all channels are zero before `t_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    breakpoints: Vec<f64>,
    values: [Vec<f64>; 3],
    prefix: [Vec<f64>; 3],
}

fn channel_index(c: Channel) -> usize {
    match c {
        Channel::Ground => 0,
        Channel::Excited => 1,
        Channel::Optical => 2,
    }
}

impl NoiseTrajectory {
    pub fn new(
        breakpoints: Vec<f64>,
        ground: Vec<f64>,
        excited: Vec<f64>,
        optical: Vec<f64>,
    ) -> Result<Self, NoiseError> {
        if breakpoints.is_empty()
            || breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(NoiseError::UnorderedBreakpoints);
        }
        for ch in [&ground, &excited, &optical] {
            if ch.len() != breakpoints.len() {
                return Err(NoiseError::LengthMismatch { expected: breakpoints.len(), got: ch.len() });
            }
        }
        let values = [ground, excited, optical];
        let prefix = std::array::from_fn(|c| {
            let mut acc = Vec::with_capacity(breakpoints.len());
            let mut s = 0.0;
            acc.push(0.0);
            for i in 1..breakpoints.len() {
                s += values[c][i - 1] * (breakpoints[i] - breakpoints[i - 1]);
                acc.push(s);
            }
            acc
        });
        Ok(Self { breakpoints, values, prefix })
    }

    pub fn zero() -> Self {
        Self::constant(0.0, 1.0)
    }

    /// Constant ground shift from t = 0 with `β_e = r·β_g`.
    pub fn constant(beta_g: f64, ratio_r: f64) -> Self {
        Self::new(vec![0.0], vec![beta_g], vec![ratio_r * beta_g], vec![0.0]).expect("single breakpoint")
    }

    /// Ground-channel trajectory with the excited channel slaved by `r`.
    pub fn from_ground(breakpoints: Vec<f64>, values: Vec<f64>, ratio_r: f64) -> Result<Self, NoiseError> {
        let excited = values.iter().map(|v| v * ratio_r).collect();
        let optical = vec![0.0; values.len()];
        Self::new(breakpoints, values, excited, optical)
    }

    /// Optical-detuning-only trajectory.
    pub fn from_optical(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, NoiseError> {
        let n = values.len();
        Self::new(breakpoints, vec![0.0; n], vec![0.0; n], values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self, channel: Channel) -> &[f64] {
        &self.values[channel_index(channel)]
    }

    fn segment(&self, t: f64) -> Option<usize> {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        k.checked_sub(1)
    }

    pub fn value(&self, channel: Channel, t: f64) -> f64 {
        self.segment(t).map_or(0.0, |i| self.values[channel_index(channel)][i])
    }

    fn antiderivative(&self, c: usize, t: f64) -> f64 {
        match self.segment(t) {
            None => 0.0,
            Some(i) => self.prefix[c][i] + self.values[c][i] * (t - self.breakpoints[i]),
        }
    }

    pub fn integral(&self, channel: Channel, t0: f64, t1: f64) -> f64 {
        let c = channel_index(channel);
        self.antiderivative(c, t1) - self.antiderivative(c, t0)
    }

    pub fn integral_ground(&self, t0: f64, t1: f64) -> f64 {
        self.integral(Channel::Ground, t0, t1)
    }

    pub fn integral_excited(&self, t0: f64, t1: f64) -> f64 {
        self.integral(Channel::Excited, t0, t1)
    }

    pub fn integral_optical(&self, t0: f64, t1: f64) -> f64 {
        self.integral(Channel::Optical, t0, t1)
    }

    /// Pointwise sum on the union of breakpoints.
    pub fn sum(&self, other: &Self) -> Self {
        let mut bps: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let ch = |c: Channel| -> Vec<f64> { bps.iter().map(|&t| self.value(c, t) + other.value(c, t)).collect() };
        let (g, e, o) = (ch(Channel::Ground), ch(Channel::Excited), ch(Channel::Optical));
        Self::new(bps, g, e, o).expect("merged breakpoints are ordered")
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|&x| x == 0.0))
    }
}

/// Optically induced spectral-diffusion kicks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalKickModel {
    /// rad/µs per √(nW·ns).
    pub k_n: f64,
    pub sigma_sat: f64,
    pub phi0_deg: f64,
    /// Angular amplitude measured in the saturated regime.
    pub amp_a: f64,
    pub ref_power_nw: f64,
    pub ref_width_ns: f64,
}

/// Kick width at the calibration point (65 nW, 200 ns): T_d = 2.1 µs.
pub const REFERENCE_KICK_SIGMA: f64 = std::f64::consts::SQRT_2 / 2.1;

impl Default for OpticalKickModel {
    fn default() -> Self {
        let mut m = Self {
            k_n: 0.0,
            sigma_sat: TWO_PI * 0.364,
            phi0_deg: 35.0,
            amp_a: TWO_PI * 0.103,
            ref_power_nw: 65.0,
            ref_width_ns: 200.0,
        };
        m.k_n = m.calibrated_k_n(REFERENCE_KICK_SIGMA);
        m
    }
}

impl OpticalKickModel {
    /// `k_n` such that the reference pulse gives `sigma` at the angular
    /// maximum.
    pub fn calibrated_k_n(&self, sigma: f64) -> f64 {
        let x = sigma / self.sigma_sat;
        let s = x / (1.0 - x * x).sqrt();
        s * self.sigma_sat / (self.ref_power_nw * self.ref_width_ns).sqrt()
    }

    pub fn angular_factor(&self, field_angle_deg: f64) -> f64 {
        (2.0 * (field_angle_deg - self.phi0_deg).to_radians()).sin().abs()
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.sigma_sat > 0.0 && self.sigma_sat.is_finite()) {
            return Err(NoiseError::InvalidConfig("kick sigma_sat must be positive".into()));
        }
        if !(self.k_n >= 0.0 && self.k_n.is_finite()) {
            return Err(NoiseError::InvalidConfig("kick k_n must be non-negative".into()));
        }
        Ok(())
    }
}

/// Hahn-echo contrast for a static Gaussian shift of width σ acting for τ_e.
pub fn hahn_contrast(tau_e_us: f64, sigma_omega: f64) -> f64 {
    (-(sigma_omega * tau_e_us).powi(2) / 2.0).exp()
}

/// Width of the per-pulse frequency kick.
///
/// `σ_P = k_n·√(P·W)` is saturated as `σ_sat·S/√(1+S²)` with
/// `S = σ_P/σ_sat`, and the angular factor `|sin(2φ − 2φ₀)|` scales σ_sat
/// and k_n together, so it multiplies the saturated value.
pub fn kick_sigma(power_nw: f64, width_ns: f64, model: &OpticalKickModel, field_angle_deg: f64) -> f64 {
    let sigma_p = model.k_n * (power_nw.max(0.0) * width_ns.max(0.0)).sqrt();
    let s = sigma_p / model.sigma_sat;
    model.angular_factor(field_angle_deg) * model.sigma_sat * s / (1.0 + s * s).sqrt()
}

/// Electro-g parameters for a static field along z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GShift {
    pub phi0_deg: f64,
    /// (V/cm)⁻¹
    pub alpha: f64,
    pub g_perp: f64,
}

impl Default for GShift {
    fn default() -> Self {
        Self { phi0_deg: 31.0, alpha: 11e-6, g_perp: 8.38 }
    }
}

/// `Δω = ω_g·α·sin(2φ − 2φ₀)/(2g⊥²)·E_z` with φ₀ = 31°.
pub fn g_shift(e_z_v_per_cm: f64, phi_deg: f64, omega_g: f64, g_perp: f64, alpha_e: f64) -> Result<f64, NoiseError> {
    g_shift_with_phi0(e_z_v_per_cm, phi_deg, omega_g, g_perp, alpha_e, GShift::default().phi0_deg)
}

pub fn g_shift_with_phi0(
    e_z_v_per_cm: f64,
    phi_deg: f64,
    omega_g: f64,
    g_perp: f64,
    alpha_e: f64,
    phi0_deg: f64,
) -> Result<f64, NoiseError> {
    if g_perp == 0.0 {
        return Err(NoiseError::ZeroGPerp);
    }
    let ang = (2.0 * (phi_deg - phi0_deg).to_radians()).sin();
    Ok(omega_g * alpha_e * ang / (2.0 * g_perp * g_perp) * e_z_v_per_cm)
}

pub fn sample_quasi_static<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    sigma * z
}

/// Segment values of white frequency noise with dephasing time `t_phi`.
fn markovian_values<R: Rng + ?Sized>(
    t_phi_us: f64,
    dt_us: f64,
    duration_us: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), NoiseError> {
    if !(t_phi_us > 0.0) {
        return Err(NoiseError::NonPositiveTphi(t_phi_us));
    }
    if !(dt_us > 0.0 && dt_us.is_finite()) {
        return Err(NoiseError::NonPositiveStep(dt_us));
    }
    if t_phi_us.is_infinite() {
        return Ok((vec![0.0], vec![0.0]));
    }
    let n = ((duration_us / dt_us).ceil() as usize).max(1);
    let sd = (2.0 / (t_phi_us * dt_us)).sqrt();
    let normal = Normal::new(0.0, sd).expect("finite sd");
    let bps = (0..=n).map(|i| i as f64 * dt_us).collect();
    let mut vals: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    vals.push(0.0);
    Ok((bps, vals))
}

/// White-noise ground trajectory (r = 1). After `duration_us` it is zero.
///
/// The accumulated phase over an interval t has variance `2t/T_φ`, so a
/// single interval keeps coherence `e^{−t/T_φ}` and the relative phase of two
/// independent intervals of length t decays as `e^{−2t/T_φ}`.
pub fn sample_markovian<R: Rng + ?Sized>(
    t_phi_us: f64,
    dt_us: f64,
    duration_us: f64,
    rng: &mut R,
) -> Result<NoiseTrajectory, NoiseError> {
    let (bps, vals) = markovian_values(t_phi_us, dt_us, duration_us, rng)?;
    NoiseTrajectory::from_ground(bps, vals, 1.0)
}

/// Per-attempt noise configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Spin spectral diffusion, one draw per attempt (rad/µs).
    pub quasi_static_sigma: f64,
    /// Excited/ground ratio for magnetic noise.
    pub ratio_magnetic: f64,
    /// Excited/ground ratio for electric (kick) noise.
    pub ratio_electric: f64,
    /// Markovian spin dephasing time; infinite disables the channel.
    pub spin_t_phi_us: f64,
    /// Quasi-static optical detuning, one draw per attempt (rad/µs).
    pub optical_sigma: f64,
    /// Markovian optical dephasing time.
    pub optical_t_phi_us: f64,
    pub kicks: bool,
    pub kick: OpticalKickModel,
    pub kick_power_nw: f64,
    pub kick_width_ns: f64,
    pub field_angle_deg: f64,
    pub markov_dt_us: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            quasi_static_sigma: TWO_PI * 0.98,
            ratio_magnetic: 9.5 / 10.7,
            ratio_electric: 1.0,
            spin_t_phi_us: f64::INFINITY,
            // 470 kHz FWHM spectral diffusion
            optical_sigma: TWO_PI * 0.47 / (8.0 * 2f64.ln()).sqrt(),
            optical_t_phi_us: 31.5,
            kicks: true,
            kick: OpticalKickModel::default(),
            kick_power_nw: 1.6,
            kick_width_ns: 200.0,
            field_angle_deg: -22.0,
            markov_dt_us: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self {
            quasi_static_sigma: 0.0,
            spin_t_phi_us: f64::INFINITY,
            optical_sigma: 0.0,
            optical_t_phi_us: f64::INFINITY,
            kicks: false,
            ..Self::default()
        }
    }

    pub fn kick_sigma(&self) -> f64 {
        if !self.kicks {
            return 0.0;
        }
        kick_sigma(self.kick_power_nw, self.kick_width_ns, &self.kick, self.field_angle_deg)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let bad = |m: String| Err(NoiseError::InvalidConfig(m));
        for (name, v) in [
            ("quasi_static_sigma", self.quasi_static_sigma),
            ("optical_sigma", self.optical_sigma),
            ("kick_power_nw", self.kick_power_nw),
            ("kick_width_ns", self.kick_width_ns),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        for (name, v) in [("spin_t_phi_us", self.spin_t_phi_us), ("optical_t_phi_us", self.optical_t_phi_us)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive (use inf to disable), got {v}"));
            }
        }
        if !(self.markov_dt_us > 0.0 && self.markov_dt_us.is_finite()) {
            return bad(format!("markov_dt_us must be positive, got {}", self.markov_dt_us));
        }
        if !(self.ratio_magnetic.is_finite() && self.ratio_electric.is_finite()) {
            return bad("manifold ratios must be finite".into());
        }
        self.kick.validate()
    }
}

/// Quasi-static draws plus Markovian trajectories plus one static kick at
/// each optical pulse, over `[0, duration_us]`.
pub fn build_attempt_noise<R: Rng + ?Sized>(
    config: &NoiseConfig,
    optical_pulse_times: &[f64],
    duration_us: f64,
    rng: &mut R,
) -> Result<NoiseTrajectory, NoiseError> {
    let qs = sample_quasi_static(config.quasi_static_sigma, rng);
    let opt = sample_quasi_static(config.optical_sigma, rng);
    let ks = config.kick_sigma();
    let kicks: Vec<f64> = optical_pulse_times.iter().map(|_| sample_quasi_static(ks, rng)).collect();

    let (mut bps, spin) = markovian_values(config.spin_t_phi_us, config.markov_dt_us, duration_us, rng)?;
    let (obps, optical) = markovian_values(config.optical_t_phi_us, config.markov_dt_us, duration_us, rng)?;
    let spin_traj = NoiseTrajectory::from_ground(std::mem::take(&mut bps), spin, 1.0)?;
    let opt_traj = NoiseTrajectory::from_optical(obps, optical)?;
    let base = spin_traj.sum(&opt_traj);

    // Merge static pieces onto the Markovian grid, adding kick breakpoints.
    let mut grid: Vec<f64> = base.breakpoints().to_vec();
    grid.extend(optical_pulse_times.iter().copied());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rm = config.ratio_magnetic;
    let re = config.ratio_electric;
    let mut g = Vec::with_capacity(grid.len());
    let mut e = Vec::with_capacity(grid.len());
    let mut o = Vec::with_capacity(grid.len());
    for &t in &grid {
        let kick: f64 = optical_pulse_times.iter().zip(&kicks).filter(|(&tp, _)| tp <= t).map(|(_, &k)| k).sum();
        let m = base.value(Channel::Ground, t);
        g.push(qs + m + kick);
        e.push(rm * (qs + m) + re * kick);
        o.push(opt + base.value(Channel::Optical, t));
    }
    NoiseTrajectory::new(grid, g, e, o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn integrals_are_exact_and_extend_last_value() {
        let t = NoiseTrajectory::from_ground(vec![0.0, 1.0, 3.0], vec![2.0, -1.0, 0.5], 0.5).unwrap();
        assert!((t.integral_ground(0.0, 3.0) - 0.0).abs() < 1e-15);
        assert!((t.integral_ground(0.5, 2.0) - (1.0 - 1.0)).abs() < 1e-15);
        assert!((t.integral_ground(3.0, 5.0) - 1.0).abs() < 1e-15);
        assert!((t.integral_excited(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(t.integral_ground(-2.0, 0.0), 0.0);
        assert_eq!(t.value(Channel::Ground, 10.0), 0.5);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert_eq!(
            NoiseTrajectory::from_ground(vec![0.0, 0.0], vec![1.0, 1.0], 1.0),
            Err(NoiseError::UnorderedBreakpoints)
        );
        assert!(NoiseTrajectory::from_ground(vec![0.0, 1.0], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn sum_adds_channels() {
        let a = NoiseTrajectory::from_ground(vec![0.0, 2.0], vec![1.0, 3.0], 1.0).unwrap();
        let b = NoiseTrajectory::from_optical(vec![1.0], vec![5.0]).unwrap();
        let s = a.sum(&b);
        assert_eq!(s.breakpoints(), &[0.0, 1.0, 2.0]);
        assert!((s.integral_ground(0.0, 4.0) - 8.0).abs() < 1e-12);
        assert!((s.integral_optical(0.0, 4.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn hahn_contrast_reference_points() {
        assert_eq!(hahn_contrast(0.0, 3.0), 1.0);
        let s = REFERENCE_KICK_SIGMA;
        assert!((hahn_contrast(2.1, s) - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kick_model_calibration_point() {
        let m = OpticalKickModel::default();
        let at_max = m.phi0_deg + 45.0;
        assert!((kick_sigma(65.0, 200.0, &m, at_max) - REFERENCE_KICK_SIGMA).abs() < 1e-12);
        assert_eq!(kick_sigma(0.0, 200.0, &m, at_max), 0.0);
        let sat = kick_sigma(1e12, 200.0, &m, 10.0);
        assert!((sat - m.sigma_sat * m.angular_factor(10.0)).abs() < 1e-6);
    }

    #[test]
    fn g_shift_reference() {
        assert_eq!(g_shift(200.0, 31.0, 1.0, 8.38, 11e-6).unwrap(), 0.0);
        assert_eq!(g_shift(0.0, 70.0, 1.0, 8.38, 11e-6).unwrap(), 0.0);
        assert_eq!(g_shift(1.0, 0.0, 1.0, 0.0, 11e-6), Err(NoiseError::ZeroGPerp));
    }

    #[test]
    fn markovian_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_markovian(0.0, 0.1, 1.0, &mut rng).is_err());
        assert!(sample_markovian(1.0, 0.0, 1.0, &mut rng).is_err());
        assert!(sample_markovian(f64::INFINITY, 0.1, 10.0, &mut rng).unwrap().is_zero());
    }

    #[test]
    fn all_channels_off_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = build_attempt_noise(&NoiseConfig::off(), &[0.0, 75.5], 80.0, &mut rng).unwrap();
        assert!(n.is_zero());
    }

    #[test]
    fn kick_is_step_at_pulse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = NoiseConfig { kicks: true, kick_power_nw: 65.0, ..NoiseConfig::off() };
        let n = build_attempt_noise(&cfg, &[10.0], 30.0, &mut rng).unwrap();
        assert_eq!(n.value(Channel::Ground, 9.999), 0.0);
        let k = n.value(Channel::Ground, 10.0);
        assert!(k != 0.0);
        assert_eq!(n.value(Channel::Ground, 25.0), k);
        assert_eq!(n.value(Channel::Excited, 25.0), k * cfg.ratio_electric);
    }
}
