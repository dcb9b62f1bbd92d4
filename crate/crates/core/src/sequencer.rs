//! Protocol compilation into pulse timelines.
//!
//! A sequence of N π pulses sits at `τ(2j+1)`, `j = 0..N`, so decoupling
//! units `τ−π−τ` have boundaries at multiples of 2τ. Optical π_B pulses sit
//! on two boundaries `2τ·k₁` and `2τ·k₂` with `k₂ − k₁` odd; the bin
//! separation is `T = 2τ(k₂ − k₁)`. The spin superposition is prepared at
//! t = 0 and the basis pulse closes the sequence at `2Nτ`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::noise::NoiseTrajectory;
use crate::spin_model::{Axis, Manifold, Transition};

/// Optical pulses must sit on a unit boundary to within this (µs).
pub const REFOCUS_TOL_US: f64 = 1e-3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SequenceError {
    #[error("optical slots ({0}, {1}) are invalid: need k1 < k2 <= N and an odd separation")]
    InvalidSlots(usize, usize),
    #[error("optical pulse at {0} µs does not sit on a decoupling-unit boundary")]
    NonRefocusingSlot(f64),
    #[error("emission time {0} µs is outside the allowed range for this pulse")]
    EmissionOutOfRange(f64),
    #[error("invalid heralding window [{0}, {1}] µs")]
    InvalidWindow(f64, f64),
    #[error("bin separation must be positive, got {0} µs")]
    InvalidSeparation(f64),
    #[error("sequence needs at least one π pulse")]
    Empty,
    #[error("π pulses are not on the (τ−π−τ)^N grid: {0}")]
    BrokenSpacing(String),
    #[error("timeline table line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Hahn,
    Xy8,
    Xy16,
    Xy20,
    Generalized(usize),
}

const XY8: [Axis; 8] = [Axis::X, Axis::Y, Axis::X, Axis::Y, Axis::Y, Axis::X, Axis::Y, Axis::X];

impl SequenceKind {
    pub fn n_pulses(&self) -> usize {
        match self {
            SequenceKind::Hahn => 1,
            SequenceKind::Xy8 => 8,
            SequenceKind::Xy16 => 16,
            SequenceKind::Xy20 => 20,
            SequenceKind::Generalized(n) => *n,
        }
    }

    /// XY-16 is XY-8 followed by its phase-inverted copy; XY-20 appends an
    /// XY-4 block; generalized sequences cycle XY-4.
    pub fn axis_pattern(&self) -> Vec<Axis> {
        let xy16 = || -> Vec<Axis> { XY8.iter().copied().chain(XY8.iter().map(|a| a.inverted())).collect() };
        match self {
            SequenceKind::Hahn => vec![Axis::X],
            SequenceKind::Xy8 => XY8.to_vec(),
            SequenceKind::Xy16 => xy16(),
            SequenceKind::Xy20 => {
                let mut v = xy16();
                v.extend([Axis::X, Axis::Y, Axis::X, Axis::Y]);
                v
            }
            SequenceKind::Generalized(n) => (0..*n).map(|j| if j % 2 == 0 { Axis::X } else { Axis::Y }).collect(),
        }
    }
}

/// Heralding window relative to its optical pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_us: f64,
    pub end_us: f64,
}

impl Window {
    pub fn new(start_us: f64, end_us: f64) -> Self {
        Self { start_us, end_us }
    }

    pub fn width(&self) -> f64 {
        self.end_us - self.start_us
    }
}

/// 0.2 µs pulse, window opening 0.4 µs after its falling edge, 1.9 µs wide.
pub const DEFAULT_WINDOW: Window = Window { start_us: 0.6, end_us: 2.5 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowLabel {
    /// Optical pulse, 1 or 2.
    pub pulse: u8,
    /// Window index after that pulse, from 1.
    pub window: u8,
}

impl WindowLabel {
    fn text(&self) -> String {
        format!("p{}w{}", self.pulse, self.window)
    }

    fn parse(s: &str) -> Option<Self> {
        let rest = s.strip_prefix('p')?;
        let (p, w) = rest.split_once('w')?;
        Some(Self { pulse: p.parse().ok()?, window: w.parse().ok()? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    MwPi {
        manifold: Manifold,
        axis: Axis,
    },
    /// Preparation pulse on the ground manifold.
    MwHalfPi {
        phase: f64,
    },
    /// Ground-manifold π/2 whose phase is set by the measurement basis.
    BasisPulse,
    OpticalPi {
        transition: Transition,
    },
    WindowOpen(WindowLabel),
    WindowClose(WindowLabel),
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::WindowClose(_) => 0,
            EventKind::MwHalfPi { .. } => 1,
            EventKind::OpticalPi { .. } => 2,
            EventKind::MwPi { manifold: Manifold::Ground, .. } => 3,
            EventKind::MwPi { manifold: Manifold::Excited, .. } => 4,
            EventKind::WindowOpen(_) => 5,
            EventKind::BasisPulse => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time_us: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    pub bin_separation_us: f64,
    pub slots: (usize, usize),
    pub windows: Vec<Window>,
    pub axis_pattern: Option<Vec<Axis>>,
}

impl SequenceSpec {
    pub fn xy16() -> Self {
        Self {
            kind: SequenceKind::Xy16,
            bin_separation_us: 75.5,
            slots: (0, 15),
            windows: vec![DEFAULT_WINDOW],
            axis_pattern: None,
        }
    }

    pub fn xy20() -> Self {
        Self { kind: SequenceKind::Xy20, windows: vec![DEFAULT_WINDOW, Window::new(7.5, 12.5)], ..Self::xy16() }
    }

    pub fn build(&self) -> Result<PulseTimeline, SequenceError> {
        build_timeline(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTimeline {
    pub events: Vec<TimelineEvent>,
    pub tau_us: f64,
    pub n_pi: usize,
    pub bin_separation_us: f64,
    pub slots: (usize, usize),
    pub windows: Vec<Window>,
}

/// Which optical pulse a photon branch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhichPulse {
    First,
    Second,
}

/// ±1 sign function of a π-pulse train.
#[derive(Debug, Clone, PartialEq)]
pub struct TogglingFunction {
    pub manifold: Manifold,
    pub flips: Vec<f64>,
    pub start_us: f64,
    pub end_us: f64,
}

impl TogglingFunction {
    pub fn value(&self, t: f64) -> f64 {
        let n = self.flips.partition_point(|&f| f <= t);
        if n % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `∫ s(t) dt` over `[a, b]` within the domain.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut edges = vec![a];
        edges.extend(self.flips.iter().copied().filter(|&f| f > a && f < b));
        edges.push(b);
        edges.windows(2).map(|w| self.value(0.5 * (w[0] + w[1])) * (w[1] - w[0])).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integral(self.start_us, self.end_us) / (self.end_us - self.start_us)
    }
}

pub fn build_sequence(kind: SequenceKind, t_us: f64, slots: (usize, usize)) -> Result<PulseTimeline, SequenceError> {
    build_timeline(&SequenceSpec {
        kind,
        bin_separation_us: t_us,
        slots,
        windows: vec![DEFAULT_WINDOW],
        axis_pattern: None,
    })
}

fn build_timeline(spec: &SequenceSpec) -> Result<PulseTimeline, SequenceError> {
    let n = spec.kind.n_pulses();
    if n == 0 {
        return Err(SequenceError::Empty);
    }
    let (k1, k2) = spec.slots;
    if k1 >= k2 || k2 > n || (k2 - k1) % 2 == 0 {
        return Err(SequenceError::InvalidSlots(k1, k2));
    }
    if !(spec.bin_separation_us > 0.0 && spec.bin_separation_us.is_finite()) {
        return Err(SequenceError::InvalidSeparation(spec.bin_separation_us));
    }
    let tau = spec.bin_separation_us / (2.0 * (k2 - k1) as f64);
    let end = 2.0 * n as f64 * tau;
    let t1 = 2.0 * tau * k1 as f64;
    let t2 = 2.0 * tau * k2 as f64;
    for w in &spec.windows {
        let ok = w.start_us >= 0.0 && w.end_us > w.start_us && t1 + w.end_us < t2 && t2 + w.end_us <= end;
        if !ok {
            return Err(SequenceError::InvalidWindow(w.start_us, w.end_us));
        }
    }
    let pattern = spec.axis_pattern.clone().unwrap_or_else(|| spec.kind.axis_pattern());
    if pattern.is_empty() {
        return Err(SequenceError::Empty);
    }
    let last_window_close = spec.windows.iter().map(|w| t2 + w.end_us).fold(f64::NEG_INFINITY, f64::max);

    let mut events = vec![TimelineEvent { time_us: 0.0, kind: EventKind::MwHalfPi { phase: 0.0 } }];
    for (p, &tp) in [t1, t2].iter().enumerate() {
        events.push(TimelineEvent { time_us: tp, kind: EventKind::OpticalPi { transition: Transition::B } });
        for (wi, w) in spec.windows.iter().enumerate() {
            let label = WindowLabel { pulse: p as u8 + 1, window: wi as u8 + 1 };
            events.push(TimelineEvent { time_us: tp + w.start_us, kind: EventKind::WindowOpen(label) });
            events.push(TimelineEvent { time_us: tp + w.end_us, kind: EventKind::WindowClose(label) });
        }
    }
    for j in 0..n {
        let t = tau * (2 * j + 1) as f64;
        let axis = pattern[j % pattern.len()];
        events.push(TimelineEvent { time_us: t, kind: EventKind::MwPi { manifold: Manifold::Ground, axis } });
        // Excited pulses are only needed while a heralded photon can still be emitted.
        if spec.windows.is_empty() || t < last_window_close {
            events.push(TimelineEvent { time_us: t, kind: EventKind::MwPi { manifold: Manifold::Excited, axis } });
        }
    }
    events.push(TimelineEvent { time_us: end, kind: EventKind::BasisPulse });
    events.sort_by(|a, b| a.time_us.total_cmp(&b.time_us).then(a.kind.priority().cmp(&b.kind.priority())));

    Ok(PulseTimeline {
        events,
        tau_us: tau,
        n_pi: n,
        bin_separation_us: spec.bin_separation_us,
        slots: spec.slots,
        windows: spec.windows.clone(),
    })
}

impl PulseTimeline {
    pub fn end_us(&self) -> f64 {
        2.0 * self.n_pi as f64 * self.tau_us
    }

    pub fn optical_times(&self) -> Vec<f64> {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::OpticalPi { .. })).map(|e| e.time_us).collect()
    }

    pub fn optical_time(&self, which: WhichPulse) -> f64 {
        let k = match which {
            WhichPulse::First => self.slots.0,
            WhichPulse::Second => self.slots.1,
        };
        2.0 * self.tau_us * k as f64
    }

    pub fn pi_times(&self, manifold: Manifold) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::MwPi { manifold: m, .. } if m == manifold))
            .map(|e| e.time_us)
            .collect()
    }

    /// Toggling function of one manifold. The excited domain ends at the
    /// last complete unit of excited pulses.
    pub fn toggling(&self, manifold: Manifold) -> TogglingFunction {
        let flips = self.pi_times(manifold);
        let end_us = match manifold {
            Manifold::Ground => self.end_us(),
            Manifold::Excited => 2.0 * self.tau_us * flips.len() as f64,
        };
        TogglingFunction { manifold, flips, start_us: 0.0, end_us }
    }

    /// Absolute heralding windows as (label, start, end).
    pub fn window_intervals(&self) -> Vec<(WindowLabel, f64, f64)> {
        let mut out = Vec::new();
        for (p, which) in [WhichPulse::First, WhichPulse::Second].into_iter().enumerate() {
            let tp = self.optical_time(which);
            for (wi, w) in self.windows.iter().enumerate() {
                out.push((WindowLabel { pulse: p as u8 + 1, window: wi as u8 + 1 }, tp + w.start_us, tp + w.end_us));
            }
        }
        out
    }

    /// Nearest unit boundary to a delay `t` after an optical pulse.
    pub fn nearest_boundary_delay(&self, t: f64) -> f64 {
        let two_tau = 2.0 * self.tau_us;
        (t / two_tau).round() * two_tau
    }

    /// Ordered tabular text: `time_us,kind,manifold,axis`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("time_us,kind,manifold,axis\n");
        for e in &self.events {
            let (kind, manifold, axis) = match e.kind {
                EventKind::MwPi { manifold, axis } => ("mw_pi", manifold_text(manifold), axis.label().to_string()),
                EventKind::MwHalfPi { phase } => ("mw_half_pi", "ground", format!("{phase:.9}")),
                EventKind::BasisPulse => ("mw_half_pi", "ground", "basis".to_string()),
                EventKind::OpticalPi { transition } => (
                    "optical_pi",
                    "-",
                    match transition {
                        Transition::A => "A".to_string(),
                        Transition::B => "B".to_string(),
                    },
                ),
                EventKind::WindowOpen(l) => ("window_open", "-", l.text()),
                EventKind::WindowClose(l) => ("window_close", "-", l.text()),
            };
            let _ = writeln!(s, "{:.9},{},{},{}", e.time_us, kind, manifold, axis);
        }
        s
    }
}

fn manifold_text(m: Manifold) -> &'static str {
    match m {
        Manifold::Ground => "ground",
        Manifold::Excited => "excited",
    }
}

/// Parses the output of [`PulseTimeline::to_table`] back into events.
pub fn parse_timeline_table(text: &str) -> Result<Vec<TimelineEvent>, SequenceError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "time_us,kind,manifold,axis" => {}
        Some((i, _)) => return Err(SequenceError::Parse { line: i + 1, msg: "missing header".into() }),
        None => return Err(SequenceError::Parse { line: 0, msg: "empty table".into() }),
    }
    let mut out = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, line) in lines {
        let err = |msg: &str| SequenceError::Parse { line: i + 1, msg: msg.to_string() };
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 4 {
            return Err(err("expected 4 columns"));
        }
        let time_us: f64 = cols[0].parse().map_err(|_| err("bad time"))?;
        if !time_us.is_finite() || time_us < last {
            return Err(err("times must be finite and non-decreasing"));
        }
        last = time_us;
        let manifold = match cols[2] {
            "ground" => Some(Manifold::Ground),
            "excited" => Some(Manifold::Excited),
            "-" => None,
            _ => return Err(err("bad manifold")),
        };
        let kind = match (cols[1], manifold) {
            ("mw_pi", Some(m)) => {
                EventKind::MwPi { manifold: m, axis: Axis::from_label(cols[3]).ok_or_else(|| err("bad axis"))? }
            }
            ("mw_half_pi", Some(Manifold::Ground)) if cols[3] == "basis" => EventKind::BasisPulse,
            ("mw_half_pi", Some(Manifold::Ground)) => {
                let phase: f64 = cols[3].parse().map_err(|_| err("bad phase"))?;
                if !phase.is_finite() {
                    return Err(err("bad phase"));
                }
                EventKind::MwHalfPi { phase }
            }
            ("optical_pi", None) => EventKind::OpticalPi {
                transition: match cols[3] {
                    "A" => Transition::A,
                    "B" => Transition::B,
                    _ => return Err(err("bad transition")),
                },
            },
            ("window_open", None) => {
                EventKind::WindowOpen(WindowLabel::parse(cols[3]).ok_or_else(|| err("bad label"))?)
            }
            ("window_close", None) => {
                EventKind::WindowClose(WindowLabel::parse(cols[3]).ok_or_else(|| err("bad label"))?)
            }
            _ => return Err(err("bad kind/manifold combination")),
        };
        out.push(TimelineEvent { time_us, kind });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    ForbiddenTau { tau_us: f64, center_us: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub warnings: Vec<Warning>,
}

/// τ values to avoid, e.g. near nuclear-spin resonances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenTau {
    pub center_us: f64,
    pub half_width_us: f64,
}

/// Checks the timeline invariants and the forbidden-τ list.
pub fn validate_refocusing(timeline: &PulseTimeline, forbidden: &[ForbiddenTau]) -> Result<Diagnostics, SequenceError> {
    let tau = timeline.tau_us;
    let ground = timeline.pi_times(Manifold::Ground);
    if ground.len() != timeline.n_pi {
        return Err(SequenceError::BrokenSpacing(format!(
            "{} ground π pulses, expected {}",
            ground.len(),
            timeline.n_pi
        )));
    }
    for (j, &t) in ground.iter().enumerate() {
        if (t - tau * (2 * j + 1) as f64).abs() > REFOCUS_TOL_US {
            return Err(SequenceError::BrokenSpacing(format!("pulse {j} at {t} µs")));
        }
    }
    for &t in &timeline.pi_times(Manifold::Excited) {
        if !ground.iter().any(|&g| (g - t).abs() <= REFOCUS_TOL_US) {
            return Err(SequenceError::BrokenSpacing(format!("excited pulse at {t} µs has no ground partner")));
        }
    }
    let optical = timeline.optical_times();
    let two_tau = 2.0 * tau;
    let mut units = Vec::new();
    for &t in &optical {
        let k = (t / two_tau).round();
        if (t - k * two_tau).abs() > REFOCUS_TOL_US {
            return Err(SequenceError::NonRefocusingSlot(t));
        }
        units.push(k as i64);
    }
    if optical.len() != 2 || (units[1] - units[0]).rem_euclid(2) != 1 {
        return Err(SequenceError::InvalidSlots(
            units.first().copied().unwrap_or(0) as usize,
            units.get(1).copied().unwrap_or(0) as usize,
        ));
    }
    let sep = optical[1] - optical[0];
    if (sep - timeline.bin_separation_us).abs() > REFOCUS_TOL_US {
        return Err(SequenceError::BrokenSpacing(format!("optical separation {sep} µs")));
    }
    let basis = timeline.events.iter().filter(|e| e.kind == EventKind::BasisPulse).count();
    let end_ok = timeline
        .events
        .last()
        .is_some_and(|e| e.kind == EventKind::BasisPulse && (e.time_us - timeline.end_us()).abs() <= REFOCUS_TOL_US);
    if basis != 1 || !end_ok {
        return Err(SequenceError::BrokenSpacing("basis pulse must close the sequence at 2Nτ".into()));
    }
    let mut diag = Diagnostics::default();
    for f in forbidden {
        if (tau - f.center_us).abs() <= f.half_width_us {
            diag.warnings.push(Warning::ForbiddenTau { tau_us: tau, center_us: f.center_us });
        }
    }
    Ok(diag)
}

/// Spin phase of one photon branch over the whole sequence.
///
/// The branch follows a classical path through the levels: the first branch
/// starts in `|↓g⟩` and is excited by the first optical pulse, the second
/// starts in `|↑g⟩` and is excited by the second. π pulses flip the spin of
/// their manifold, emission returns the branch to the ground manifold after
/// `emission_time_us` (measured from the branch's optical pulse). The phase
/// is `−½∫σ(t)·β_m(t)dt` with σ = ±1 for ↑/↓ and β_m the active manifold's
/// shift, integrated exactly. The Bell-state spin phase is
/// `accumulated_phase(first) − accumulated_phase(second)`.
pub fn accumulated_phase(
    timeline: &PulseTimeline,
    noise: &NoiseTrajectory,
    emission_time_us: f64,
    which: WhichPulse,
) -> Result<f64, SequenceError> {
    let tp = timeline.optical_time(which);
    let t_em = tp + emission_time_us;
    let limit = match which {
        WhichPulse::First => timeline.optical_time(WhichPulse::Second),
        WhichPulse::Second => timeline.end_us(),
    };
    if !(emission_time_us >= 0.0) || t_em > limit {
        return Err(SequenceError::EmissionOutOfRange(emission_time_us));
    }
    let mut sigma: f64 = match which {
        WhichPulse::First => -1.0,
        WhichPulse::Second => 1.0,
    };
    let mut excited = false;
    let mut emitted = false;
    let mut phase = 0.0;
    let mut t_prev = 0.0;
    let integrate = |a: f64, b: f64, sigma: f64, excited: bool| -> f64 {
        if b <= a {
            return 0.0;
        }
        let i = if excited { noise.integral_excited(a, b) } else { noise.integral_ground(a, b) };
        -0.5 * sigma * i
    };
    for ev in &timeline.events {
        let t = ev.time_us;
        if !emitted && excited && t_em <= t {
            phase += integrate(t_prev, t_em, sigma, true);
            t_prev = t_em;
            excited = false;
            emitted = true;
        }
        phase += integrate(t_prev, t, sigma, excited);
        t_prev = t;
        match ev.kind {
            EventKind::MwPi { manifold, .. } => {
                let active = if excited { Manifold::Excited } else { Manifold::Ground };
                if manifold == active {
                    sigma = -sigma;
                }
            }
            EventKind::OpticalPi { transition: Transition::B }
                if !excited && !emitted && sigma < 0.0 && (t - tp).abs() <= REFOCUS_TOL_US =>
            {
                excited = true;
            }
            _ => {}
        }
    }
    Ok(phase)
}

/// Relative spin phase of the two branches for equal emission delays.
pub fn bell_spin_phase(timeline: &PulseTimeline, noise: &NoiseTrajectory, delay_us: f64) -> Result<f64, SequenceError> {
    Ok(accumulated_phase(timeline, noise, delay_us, WhichPulse::First)?
        - accumulated_phase(timeline, noise, delay_us, WhichPulse::Second)?)
}

/// Phase left over because emission happened mid-unit rather than on the
/// nearest unit boundary. Signed so that it equals
/// `(1−r)/2·[∫_t^b β_g − ∫_{T+t}^{T+b} β_g]` with `b` the nearest boundary.
pub fn residual_phase(timeline: &PulseTimeline, noise: &NoiseTrajectory, delay_us: f64) -> Result<f64, SequenceError> {
    let b = timeline.nearest_boundary_delay(delay_us);
    let sign = timeline.toggling(Manifold::Ground).value(timeline.optical_time(WhichPulse::First) + b);
    let at_t = bell_spin_phase(timeline, noise, delay_us)?;
    let at_b = bell_spin_phase(timeline, noise, b)?;
    Ok(sign * (at_t - at_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xy16_geometry() {
        let tl = SequenceSpec::xy16().build().unwrap();
        assert!((tl.tau_us - 75.5 / 30.0).abs() < 1e-12);
        assert!((tl.end_us() - 32.0 * 75.5 / 30.0).abs() < 1e-9);
        assert_eq!(tl.pi_times(Manifold::Ground).len(), 16);
        assert_eq!(tl.pi_times(Manifold::Excited).len(), 15);
        assert_eq!(tl.optical_times(), vec![0.0, 75.5]);
        assert!(validate_refocusing(&tl, &[]).unwrap().warnings.is_empty());
    }

    #[test]
    fn xy16_axes() {
        let p = SequenceKind::Xy16.axis_pattern();
        use Axis::*;
        assert_eq!(p, vec![X, Y, X, Y, Y, X, Y, X, NegX, NegY, NegX, NegY, NegY, NegX, NegY, NegX]);
    }

    #[test]
    fn even_separation_rejected() {
        assert_eq!(build_sequence(SequenceKind::Xy16, 75.5, (0, 14)), Err(SequenceError::InvalidSlots(0, 14)));
        assert_eq!(build_sequence(SequenceKind::Xy16, 75.5, (3, 3)), Err(SequenceError::InvalidSlots(3, 3)));
    }

    #[test]
    fn hahn_is_tau_pi_tau() {
        let tl = SequenceSpec {
            kind: SequenceKind::Generalized(1),
            bin_separation_us: 20.0,
            slots: (0, 1),
            windows: vec![],
            axis_pattern: None,
        }
        .build()
        .unwrap();
        assert_eq!(tl.pi_times(Manifold::Ground), vec![10.0]);
        assert_eq!(tl.end_us(), 20.0);
    }

    #[test]
    fn window_must_fit() {
        let spec = SequenceSpec { windows: vec![Window::new(0.6, 6.0)], ..SequenceSpec::xy16() };
        assert!(matches!(spec.build(), Err(SequenceError::InvalidWindow(..))));
    }

    #[test]
    fn mid_unit_optical_pulse_detected() {
        let mut tl = SequenceSpec::xy16().build().unwrap();
        for e in tl.events.iter_mut() {
            if matches!(e.kind, EventKind::OpticalPi { .. }) && e.time_us > 1.0 {
                e.time_us += 1.0;
            }
        }
        assert!(matches!(validate_refocusing(&tl, &[]), Err(SequenceError::NonRefocusingSlot(_))));
    }

    #[test]
    fn forbidden_tau_warns() {
        let tl = SequenceSpec::xy16().build().unwrap();
        let f = [ForbiddenTau { center_us: 2.5, half_width_us: 0.05 }];
        let d = validate_refocusing(&tl, &f).unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn table_round_trip() {
        let tl = SequenceSpec::xy20().build().unwrap();
        let text = tl.to_table();
        let parsed = parse_timeline_table(&text).unwrap();
        assert_eq!(parsed.len(), tl.events.len());
        for (a, b) in parsed.iter().zip(&tl.events) {
            assert_eq!(a.kind, b.kind);
            assert!((a.time_us - b.time_us).abs() < 1e-8);
        }
        assert!(parse_timeline_table("").is_err());
        assert!(parse_timeline_table("time_us,kind,manifold,axis\n1.0,mw_pi,ground,Z\n").is_err());
    }

    #[test]
    fn toggling_means_vanish() {
        let tl = SequenceSpec::xy16().build().unwrap();
        assert!(tl.toggling(Manifold::Ground).mean().abs() < 1e-12);
        assert!(tl.toggling(Manifold::Excited).mean().abs() < 1e-12);
    }

    #[test]
    fn constant_noise_boundary_emission_gives_zero() {
        let tl = SequenceSpec::xy16().build().unwrap();
        let n = NoiseTrajectory::constant(3.7, 0.89);
        for k in 0..15 {
            let t = 2.0 * tl.tau_us * k as f64;
            assert!(accumulated_phase(&tl, &n, t, WhichPulse::First).unwrap().abs() < 1e-11);
        }
        assert!(accumulated_phase(&tl, &n, 0.0, WhichPulse::Second).unwrap().abs() < 1e-11);
        assert!(accumulated_phase(&tl, &n, 1.3, WhichPulse::First).unwrap().abs() > 1e-3);
        let unit = NoiseTrajectory::constant(3.7, 1.0);
        assert!(accumulated_phase(&tl, &unit, 1.3, WhichPulse::First).unwrap().abs() < 1e-12);
    }

    #[test]
    fn emission_range_checked() {
        let tl = SequenceSpec::xy16().build().unwrap();
        let n = NoiseTrajectory::zero();
        assert!(accumulated_phase(&tl, &n, 80.0, WhichPulse::First).is_err());
        assert!(accumulated_phase(&tl, &n, -0.1, WhichPulse::Second).is_err());
    }
}
