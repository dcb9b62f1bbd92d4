//! TOML experiment configuration.
//!
//! A document may name a `preset` (`xy16`, `xy20`, `ideal`) and override any
//! key in the sections `[physics]`, `[noise]`, `[sequence]`, `[mzi]`,
//! `[readout]`, `[efficiency]`, `[run]`, `[budget]` and `[rate]`. Unknown
//! keys are errors. Every error carries the 1-based line it refers to when
//! one can be found.

use serde::{Deserialize, Serialize};

use crate::analysis::{BudgetInputs, RateInputs};
use crate::noise::NoiseConfig;
use crate::photonics::MziConfig;
use crate::runner::{EfficiencyConfig, ExperimentConfig, ReadoutConfig, StopCriterion};
use crate::sequencer::{SequenceKind, SequenceSpec, Window};
use crate::spin_model::{Axis, PhysicalParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { line: Option<usize>, msg: String },
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } => Some(*line),
            ConfigError::Invalid { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Xy16,
    Xy20,
    Ideal,
}

impl Preset {
    pub fn experiment(self) -> ExperimentConfig {
        match self {
            Preset::Xy16 => ExperimentConfig::xy16(),
            Preset::Xy20 => ExperimentConfig::xy20(),
            Preset::Ideal => ExperimentConfig::ideal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    pub kind: SequenceKind,
    pub bin_separation_us: f64,
    /// Decoupling-unit boundaries of the two optical pulses.
    pub slots: [usize; 2],
    /// `[start, end]` of each heralding window after its optical pulse (µs).
    pub windows: Vec<[f64; 2]>,
    pub axis_pattern: Option<Vec<Axis>>,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self::from(&SequenceSpec::xy16())
    }
}

impl From<&SequenceSpec> for SequenceSection {
    fn from(s: &SequenceSpec) -> Self {
        Self {
            kind: s.kind.clone(),
            bin_separation_us: s.bin_separation_us,
            slots: [s.slots.0, s.slots.1],
            windows: s.windows.iter().map(|w| [w.start_us, w.end_us]).collect(),
            axis_pattern: s.axis_pattern.clone(),
        }
    }
}

impl From<&SequenceSection> for SequenceSpec {
    fn from(s: &SequenceSection) -> Self {
        Self {
            kind: s.kind.clone(),
            bin_separation_us: s.bin_separation_us,
            slots: (s.slots[0], s.slots[1]),
            windows: s.windows.iter().map(|w| Window::new(w[0], w[1])).collect(),
            axis_pattern: s.axis_pattern.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub attempt_rate_hz: f64,
    pub init_fidelity: f64,
    /// Spin coherence at the end of the sequence; 1 disables Markovian
    /// spin dephasing.
    pub spin_coherence: f64,
    pub phase_tracking: bool,
    pub phase_walk_sigma: f64,
    pub slice_us: f64,
    pub heralds: Option<u64>,
    pub attempts: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self::from(&ExperimentConfig::xy16())
    }
}

impl From<&ExperimentConfig> for RunSection {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            seed: c.seed,
            attempt_rate_hz: c.attempt_rate_hz,
            init_fidelity: c.init_fidelity,
            spin_coherence: c.spin_coherence.unwrap_or(1.0),
            phase_tracking: c.phase_tracking,
            phase_walk_sigma: c.phase_walk_sigma,
            slice_us: c.slice_us,
            heralds: None,
            attempts: None,
        }
    }
}

/// The whole document after preset expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Preset,
    pub physics: PhysicalParams,
    pub noise: NoiseConfig,
    pub sequence: SequenceSection,
    pub mzi: MziConfig,
    pub readout: ReadoutConfig,
    pub efficiency: EfficiencyConfig,
    pub run: RunSection,
    pub budget: BudgetInputs,
    pub rate: RateInputs,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self::from_preset(Preset::Xy16)
    }
}

impl ConfigFile {
    pub fn from_preset(preset: Preset) -> Self {
        let e = preset.experiment();
        Self {
            preset,
            physics: e.physics,
            noise: e.noise,
            sequence: SequenceSection::from(&e.sequence),
            mzi: e.mzi,
            readout: e.readout,
            efficiency: e.efficiency,
            run: RunSection::from(&e),
            budget: BudgetInputs::default(),
            rate: RateInputs::default(),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            physics: self.physics,
            noise: self.noise,
            sequence: SequenceSpec::from(&self.sequence),
            mzi: self.mzi,
            readout: self.readout,
            efficiency: self.efficiency,
            attempt_rate_hz: self.run.attempt_rate_hz,
            init_fidelity: self.run.init_fidelity,
            spin_coherence: (self.run.spin_coherence < 1.0).then_some(self.run.spin_coherence),
            phase_tracking: self.run.phase_tracking,
            phase_walk_sigma: self.run.phase_walk_sigma,
            slice_us: self.run.slice_us,
            seed: self.run.seed,
        }
    }

    /// Stop criterion from `[run]`; heralds take precedence.
    pub fn stop(&self) -> Option<StopCriterion> {
        match (self.run.heralds, self.run.attempts) {
            (Some(h), _) => Some(StopCriterion::Heralds(h)),
            (None, Some(a)) => Some(StopCriterion::Attempts(a)),
            _ => None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.experiment().validate().map_err(|e| e.to_string())?;
        let b = &self.budget;
        for (n, v) in [
            ("f_op", b.f_op),
            ("f_s", b.f_s),
            ("f_p", b.f_p),
            ("f_bg_xy", b.f_bg_xy),
            ("f_bg_z", b.f_bg_z),
            ("f_i", b.f_i),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("budget.{n} must lie in [0, 1], got {v}"));
            }
        }
        let r = &self.rate;
        for (n, v) in [
            ("eta_cav", r.eta_cav),
            ("eta_gc", r.eta_gc),
            ("eta_net", r.eta_net),
            ("eta_det", r.eta_det),
            ("eta_mzi", r.eta_mzi),
            ("eta_pc", r.eta_pc),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("rate.{n} must lie in [0, 1], got {v}"));
            }
        }
        if !(r.attempt_rate_hz > 0.0 && r.attempt_rate_hz.is_finite()) {
            return Err(format!("rate.attempt_rate_hz must be positive, got {}", r.attempt_rate_hz));
        }
        if r.improvements.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err("rate.improvements must all be positive".into());
        }
        if self.run.heralds == Some(0) || self.run.attempts == Some(0) {
            return Err("run.heralds and run.attempts must be positive".into());
        }
        Ok(())
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    // Strict pass against the typed schema; keeps spans for unknown keys
    // and type errors.
    let strict: ConfigFile = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    let user: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;

    let base = toml::Table::try_from(ConfigFile::from_preset(strict.preset)).expect("preset serializes");
    let merged = merge(base, user.clone());
    let cfg: ConfigFile =
        merged.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid { line: None, msg: e.to_string() })?;
    cfg.validate().map_err(|msg| ConfigError::Invalid { line: locate(text, &user, &msg), msg })?;
    Ok(cfg)
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
    ConfigError::Parse { line, column, msg: e.message().to_string() }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// Line of the first user-supplied key named in a validation message.
fn locate(text: &str, user: &toml::Table, msg: &str) -> Option<usize> {
    let mentioned = |key: &str| {
        msg.match_indices(key).any(|(i, _)| {
            let before = msg[..i].chars().next_back();
            let after = msg[i + key.len()..].chars().next();
            let ident = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
            !ident(before) && !ident(after)
        })
    };
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = h.trim().to_string();
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let key = key.trim().trim_matches('"');
        let top = section.split('.').next().unwrap_or("");
        let known = match user.get(top) {
            Some(toml::Value::Table(_)) => true,
            _ => section.is_empty() && user.contains_key(key),
        };
        if known && mentioned(key) {
            return Some(n + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_preset() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ConfigFile::default());
        assert_eq!(c.experiment(), ExperimentConfig::xy16());
    }

    #[test]
    fn preset_then_override() {
        let c = parse_config("preset = \"xy20\"\n[run]\nseed = 9\n").unwrap();
        let e = c.experiment();
        assert_eq!(e.sequence, SequenceSpec::xy20());
        assert_eq!(e.seed, 9);
        assert_eq!(e.spin_coherence, Some(0.67));
    }

    #[test]
    fn ideal_round_trips() {
        let c = ConfigFile::from_preset(Preset::Ideal);
        let back = parse_config(&c.to_toml()).unwrap();
        assert_eq!(back.experiment(), ExperimentConfig::ideal());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("[physics]\ntau_b_us = 18.4\ntau_bee = 1\n").unwrap_err();
        assert_eq!(err.line(), Some(3), "{err}");
    }

    #[test]
    fn validation_reports_line() {
        let err = parse_config("[run]\nseed = 1\n\n[efficiency]\neta_cav = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: Some(5), .. }), "{err}");
    }
}
