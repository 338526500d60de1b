//! Session configuration: the JSON document, its defaults, and validation.
//!
//! Every field is optional; an empty object is a valid honest session. A
//! validated [`SessionConfig`] serializes back to a normalized document in
//! which every default is explicit and the detectors are listed per outcome.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{ChannelSpec, EveInterceptConfig, TrojanProbe};
use crate::devices::{DetectorBank, DetectorSpec, WavelengthTable};
use crate::quantum::BellOutcome;

pub const DEFAULT_EFFICIENCY: f64 = 0.2;
pub const DEFAULT_WAVELENGTH_NM: f64 = 1550.0;
pub const DEFAULT_BLIND_THRESHOLD_MW: f64 = 1.0;
pub const DEFAULT_N_SLOTS: u64 = 100_000;
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleClickPolicy {
    /// Double clicks never enter the key but are counted for monitoring.
    #[default]
    DiscardAndCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovertParams {
    /// Efficiency of the detectors the malicious device really uses.
    pub eta_true: f64,
    #[serde(default)]
    pub trojan: TrojanProbe,
    /// Seed of the key stream shared with the eavesdropper; `null` sends
    /// Bob's bits in the clear.
    #[serde(default)]
    pub key_seed: Option<u64>,
    /// When false every parity-valid detection is reported.
    #[serde(default = "default_true")]
    pub thinning: bool,
    /// Defaults to `transmittance · eta_expected`.
    #[serde(default)]
    pub target_report_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSearch {
    pub wavelengths: Vec<f64>,
    pub powers: Vec<f64>,
}

/// Exactly one of `intercept` (a fixed pulse) or `search` (optimize the
/// pulse over a grid before the session) must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<EveInterceptConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<PlanSearch>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Honest,
    CovertAttack(CovertParams),
    Blinding(BlindingParams),
    /// Eve measures each photon in a random basis and resends a single photon.
    InterceptResend,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Honest => "honest",
            Mode::CovertAttack(_) => "covert_attack",
            Mode::Blinding(_) => "blinding",
            Mode::InterceptResend => "intercept_resend",
        }
    }
}

fn default_true() -> bool {
    true
}

/// One detector entry as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorDoc {
    #[serde(default = "DetectorDoc::default_efficiency")]
    pub efficiency: WavelengthTable,
    #[serde(default)]
    pub dark_count_prob: f64,
    #[serde(default = "DetectorDoc::default_threshold")]
    pub blind_threshold: WavelengthTable,
}

impl DetectorDoc {
    fn default_efficiency() -> WavelengthTable {
        WavelengthTable::Flat(DEFAULT_EFFICIENCY)
    }

    fn default_threshold() -> WavelengthTable {
        WavelengthTable::Flat(DEFAULT_BLIND_THRESHOLD_MW)
    }

    fn into_spec(self, outcome: BellOutcome) -> DetectorSpec {
        DetectorSpec {
            outcome,
            efficiency: self.efficiency,
            dark_count_prob: self.dark_count_prob,
            blind_threshold: self.blind_threshold,
        }
    }

    fn from_spec(spec: &DetectorSpec) -> Self {
        Self {
            efficiency: spec.efficiency.clone(),
            dark_count_prob: spec.dark_count_prob,
            blind_threshold: spec.blind_threshold.clone(),
        }
    }
}

impl Default for DetectorDoc {
    fn default() -> Self {
        Self {
            efficiency: Self::default_efficiency(),
            dark_count_prob: 0.0,
            blind_threshold: Self::default_threshold(),
        }
    }
}

/// Either one entry applied to all four detectors, or four entries in the
/// order PhiPlus, PhiMinus, PsiPlus, PsiMinus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectorsDoc {
    Uniform(DetectorDoc),
    PerOutcome(Vec<DetectorDoc>),
}

impl Default for DetectorsDoc {
    fn default() -> Self {
        DetectorsDoc::Uniform(DetectorDoc::default())
    }
}

/// The config file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default = "default_n_slots")]
    pub n_slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub detectors: DetectorsDoc,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default = "default_efficiency")]
    pub eta_expected: f64,
    #[serde(default = "default_half")]
    pub basis_choice_prob: f64,
    #[serde(default = "default_half")]
    pub bob_bit_one_prob: f64,
    #[serde(default)]
    pub double_click_policy: DoubleClickPolicy,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mode: Mode,
}

fn default_n_slots() -> u64 {
    DEFAULT_N_SLOTS
}
fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}
fn default_efficiency() -> f64 {
    DEFAULT_EFFICIENCY
}
fn default_half() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// A validated session description.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub n_slots: u64,
    pub seed: u64,
    pub channel: ChannelSpec,
    pub detectors: DetectorBank,
    /// Wavelength of the legitimate single photons, nm.
    pub wavelength_nm: f64,
    /// Bob's belief about the Bell-measurement efficiency.
    pub eta_expected: f64,
    /// Probability that either party picks the Z basis.
    pub basis_choice_prob: f64,
    /// Probability that Bob's encoded bit is 1.
    pub bob_bit_one_prob: f64,
    pub double_click_policy: DoubleClickPolicy,
    /// Significance level of the detectability monitors.
    pub alpha: f64,
    pub mode: Mode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        parse_config("{}").expect("defaults are valid")
    }
}

fn check_prob(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is not a probability in [0, 1]")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be a positive number")))
    }
}

impl ConfigDoc {
    pub fn validate(self) -> Result<SessionConfig, ConfigError> {
        if self.n_slots == 0 {
            return Err(invalid("n_slots", "must be at least 1"));
        }
        check_prob("channel.transmittance", self.channel.transmittance)?;
        let detectors = match self.detectors {
            DetectorsDoc::Uniform(d) => {
                let spec = d.into_spec(BellOutcome::PhiPlus);
                spec.validate()
                    .map_err(|(field, reason)| invalid(format!("detectors.{field}"), reason))?;
                DetectorBank::new(BellOutcome::ALL.map(|_| spec.clone()))
            }
            DetectorsDoc::PerOutcome(list) => {
                let list: [DetectorDoc; 4] = list.try_into().map_err(|l: Vec<DetectorDoc>| {
                    invalid("detectors", format!("expected 4 detectors, got {}", l.len()))
                })?;
                let mut i = 0;
                let specs = list.map(|d| {
                    let s = d.into_spec(BellOutcome::ALL[i]);
                    i += 1;
                    s
                });
                for (i, s) in specs.iter().enumerate() {
                    s.validate()
                        .map_err(|(field, reason)| invalid(format!("detectors[{i}].{field}"), reason))?;
                }
                DetectorBank::new(specs)
            }
        };
        check_positive("wavelength_nm", self.wavelength_nm)?;
        check_prob("eta_expected", self.eta_expected)?;
        check_prob("basis_choice_prob", self.basis_choice_prob)?;
        check_prob("bob_bit_one_prob", self.bob_bit_one_prob)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("{} is not in (0, 1)", self.alpha)));
        }
        match &self.mode {
            Mode::Honest | Mode::InterceptResend => {}
            Mode::CovertAttack(c) => {
                check_prob("mode.eta_true", c.eta_true)?;
                check_prob("mode.trojan.readout_success_prob", c.trojan.readout_success_prob)?;
                if let Some(r) = c.target_report_rate {
                    check_positive("mode.target_report_rate", r)?;
                }
            }
            Mode::Blinding(b) => match (&b.intercept, &b.search) {
                (Some(i), None) => {
                    if i.enabled {
                        check_positive("mode.intercept.pulse_power", i.pulse_power)?;
                    }
                    check_positive("mode.intercept.wavelength", i.wavelength)?;
                }
                (None, Some(s)) => {
                    if s.wavelengths.is_empty() {
                        return Err(invalid("mode.search.wavelengths", "must not be empty"));
                    }
                    if s.powers.is_empty() {
                        return Err(invalid("mode.search.powers", "must not be empty"));
                    }
                    for (i, w) in s.wavelengths.iter().enumerate() {
                        check_positive(&format!("mode.search.wavelengths[{i}]"), *w)?;
                    }
                    for (i, p) in s.powers.iter().enumerate() {
                        check_positive(&format!("mode.search.powers[{i}]"), *p)?;
                    }
                }
                _ => {
                    return Err(invalid(
                        "mode",
                        "blinding mode needs exactly one of `intercept` or `search`",
                    ))
                }
            },
        }
        Ok(SessionConfig {
            n_slots: self.n_slots,
            seed: self.seed,
            channel: self.channel,
            detectors,
            wavelength_nm: self.wavelength_nm,
            eta_expected: self.eta_expected,
            basis_choice_prob: self.basis_choice_prob,
            bob_bit_one_prob: self.bob_bit_one_prob,
            double_click_policy: self.double_click_policy,
            alpha: self.alpha,
            mode: self.mode,
        })
    }
}

impl SessionConfig {
    /// Normalized document: all defaults explicit, detectors listed per outcome.
    pub fn to_doc(&self) -> ConfigDoc {
        ConfigDoc {
            n_slots: self.n_slots,
            seed: self.seed,
            channel: self.channel,
            detectors: DetectorsDoc::PerOutcome(self.detectors.iter().map(DetectorDoc::from_spec).collect()),
            wavelength_nm: self.wavelength_nm,
            eta_expected: self.eta_expected,
            basis_choice_prob: self.basis_choice_prob,
            bob_bit_one_prob: self.bob_bit_one_prob,
            double_click_policy: self.double_click_policy,
            alpha: self.alpha,
            mode: self.mode.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("config serializes")
    }

    /// SHA-256 of the compact normalized document, hex encoded.
    pub fn config_hash(&self) -> String {
        let compact = serde_json::to_string(&self.to_doc()).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    /// Reports per slot Bob expects from an honest device.
    pub fn expected_report_rate(&self) -> f64 {
        self.channel.transmittance * self.eta_expected
    }
}

pub fn parse_config(text: &str) -> Result<SessionConfig, ConfigError> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    doc.validate()
}

pub fn parse_config_value(value: serde_json::Value) -> Result<SessionConfig, ConfigError> {
    let doc: ConfigDoc = serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
    doc.validate()
}
