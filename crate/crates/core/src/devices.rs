//! Detector models for the four-detector Bell measurement.
//!
//! Two response regimes are modelled. In Geiger mode a detector sees a single
//! photon and clicks with its efficiency, plus independent dark counts. In
//! linear (blinded) mode it only responds to classical light whose power at
//! that detector reaches its threshold; single photons never click.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quantum::{bell_probabilities, tensor, BellOutcome, JointPhotonState, PolarizationQubit, SpatialQubit};

/// A wavelength-indexed scalar. A flat value applies at every wavelength; a
/// table is looked up at the nearest listed wavelength (ties go to the shorter
/// one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WavelengthTable {
    Flat(f64),
    Table(Vec<(f64, f64)>),
}

impl WavelengthTable {
    pub fn at(&self, wavelength_nm: f64) -> f64 {
        match self {
            WavelengthTable::Flat(v) => *v,
            WavelengthTable::Table(entries) => {
                let mut best: Option<(f64, f64, f64)> = None;
                for &(nm, value) in entries {
                    let d = (nm - wavelength_nm).abs();
                    let better = match best {
                        None => true,
                        Some((bd, bnm, _)) => d < bd || (d == bd && nm < bnm),
                    };
                    if better {
                        best = Some((d, nm, value));
                    }
                }
                best.map(|(_, _, v)| v).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            WavelengthTable::Flat(v) => vec![*v],
            WavelengthTable::Table(entries) => entries.iter().map(|e| e.1).collect(),
        }
    }

    /// Validates every entry with `check`; returns the first failure message.
    pub(crate) fn check(&self, check: impl Fn(f64) -> bool, what: &str) -> Result<(), String> {
        if let WavelengthTable::Table(entries) = self {
            if entries.is_empty() {
                return Err("wavelength table is empty".into());
            }
            if let Some((nm, _)) = entries.iter().find(|(nm, _)| !nm.is_finite() || *nm <= 0.0) {
                return Err(format!("wavelength {nm} nm is not a positive number"));
            }
        }
        match self.values().into_iter().find(|v| !check(*v)) {
            Some(v) => Err(format!("{v} is not {what}")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub outcome: BellOutcome,
    pub efficiency: WavelengthTable,
    pub dark_count_prob: f64,
    /// Linear-mode click threshold in mW.
    pub blind_threshold: WavelengthTable,
}

impl DetectorSpec {
    pub fn uniform(outcome: BellOutcome, efficiency: f64, blind_threshold: f64) -> Self {
        Self {
            outcome,
            efficiency: WavelengthTable::Flat(efficiency),
            dark_count_prob: 0.0,
            blind_threshold: WavelengthTable::Flat(blind_threshold),
        }
    }

    pub fn efficiency_at(&self, wavelength_nm: f64) -> f64 {
        self.efficiency.at(wavelength_nm)
    }

    pub fn threshold_at(&self, wavelength_nm: f64) -> f64 {
        self.blind_threshold.at(wavelength_nm)
    }

    /// Range checks; errors name the offending field relative to the detector.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        self.efficiency
            .check(|v| (0.0..=1.0).contains(&v), "a probability in [0, 1]")
            .map_err(|e| ("efficiency", e))?;
        if !(0.0..=1.0).contains(&self.dark_count_prob) {
            return Err((
                "dark_count_prob",
                format!("{} is not a probability in [0, 1]", self.dark_count_prob),
            ));
        }
        self.blind_threshold
            .check(|v| v.is_finite() && v > 0.0, "a positive power")
            .map_err(|e| ("blind_threshold", e))?;
        Ok(())
    }
}

/// Four detectors, one per Bell outcome, stored in [`BellOutcome::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank([DetectorSpec; 4]);

impl DetectorBank {
    /// Builds a bank from detectors listed in outcome order; each detector's
    /// `outcome` is set from its position.
    pub fn new(mut detectors: [DetectorSpec; 4]) -> Self {
        for (d, o) in detectors.iter_mut().zip(BellOutcome::ALL) {
            d.outcome = o;
        }
        Self(detectors)
    }

    pub fn uniform(efficiency: f64, blind_threshold: f64) -> Self {
        Self(BellOutcome::ALL.map(|o| DetectorSpec::uniform(o, efficiency, blind_threshold)))
    }

    /// Flat thresholds listed in detector order, ideal efficiency.
    pub fn with_thresholds(thresholds: [f64; 4]) -> Self {
        Self(std::array::from_fn(|i| {
            DetectorSpec::uniform(BellOutcome::ALL[i], 1.0, thresholds[i])
        }))
    }

    pub fn get(&self, outcome: BellOutcome) -> &DetectorSpec {
        &self.0[outcome.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetectorSpec> {
        self.0.iter()
    }

    pub fn as_array(&self) -> &[DetectorSpec; 4] {
        &self.0
    }

    /// Replaces every detector's efficiency with a flat value.
    pub fn with_efficiency(&self, efficiency: f64) -> Self {
        let mut bank = self.0.clone();
        for d in bank.iter_mut() {
            d.efficiency = WavelengthTable::Flat(efficiency);
        }
        Self(bank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClickPattern(pub [bool; 4]);

impl ClickPattern {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|c| **c).count()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = BellOutcome> + '_ {
        BellOutcome::ALL.into_iter().filter(|o| self.0[o.index()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionResult {
    NoClick,
    Single(BellOutcome),
    /// Two or more detectors fired; the pattern holds which.
    Double(ClickPattern),
}

impl DetectionResult {
    pub fn is_double(&self) -> bool {
        matches!(self, DetectionResult::Double(_))
    }

    pub fn single(&self) -> Option<BellOutcome> {
        match self {
            DetectionResult::Single(o) => Some(*o),
            _ => None,
        }
    }
}

pub fn classify(pattern: ClickPattern) -> DetectionResult {
    match pattern.count() {
        0 => DetectionResult::NoClick,
        1 => DetectionResult::Single(pattern.outcomes().next().expect("one click")),
        _ => DetectionResult::Double(pattern),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrightPulse {
    peak_power: f64,
    pub wavelength: f64,
    pub polarization: PolarizationQubit,
}

impl BrightPulse {
    pub fn new(peak_power: f64, wavelength: f64, polarization: PolarizationQubit) -> Option<Self> {
        (peak_power.is_finite() && peak_power > 0.0).then_some(Self {
            peak_power,
            wavelength,
            polarization,
        })
    }

    pub fn peak_power(&self) -> f64 {
        self.peak_power
    }
}

/// Samples an index from a discrete distribution given one uniform draw.
fn sample_index(probs: &[f64; 4], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(3)
}

/// Single-photon measurement by Geiger-mode detectors.
pub fn bsm_measure_photon<R: Rng + ?Sized>(
    state: &JointPhotonState,
    detectors: &DetectorBank,
    wavelength_nm: f64,
    rng: &mut R,
) -> DetectionResult {
    let probs = bell_probabilities(state);
    let k = sample_index(&probs, rng.random::<f64>());
    let mut clicks = [false; 4];
    let eta = detectors.0[k].efficiency_at(wavelength_nm);
    clicks[k] = rng.random::<f64>() < eta;
    for (click, d) in clicks.iter_mut().zip(detectors.iter()) {
        if d.dark_count_prob > 0.0 && rng.random::<f64>() < d.dark_count_prob {
            *click = true;
        }
    }
    classify(ClickPattern(clicks))
}

/// Optical power landing on each detector when a bright pulse passes Bob's encoder.
pub fn bright_power_split(pulse: &BrightPulse, bob_spatial: &SpatialQubit) -> [f64; 4] {
    bell_probabilities(&tensor(&pulse.polarization, bob_spatial)).map(|p| p * pulse.peak_power)
}

/// Linear-mode response of blinded detectors to a bright pulse.
pub fn bsm_respond_bright(pulse: &BrightPulse, bob_spatial: &SpatialQubit, detectors: &DetectorBank) -> ClickPattern {
    let power = bright_power_split(pulse, bob_spatial);
    let mut clicks = [false; 4];
    for (i, d) in detectors.iter().enumerate() {
        clicks[i] = power[i] >= d.threshold_at(pulse.wavelength);
    }
    ClickPattern(clicks)
}

/// Per-slot probability of a double click for an honest single-photon
/// session, marginalised over uniformly random bases and bits (each outcome
/// then has marginal probability 1/4).
pub fn expected_double_click_prob(transmittance: f64, detectors: &DetectorBank, wavelength_nm: f64) -> f64 {
    let dark: Vec<f64> = detectors.iter().map(|d| d.dark_count_prob).collect();
    let at_least_two = |fixed: Option<usize>| -> f64 {
        // probability that the dark counts (excluding `fixed`) bring the total
        // click count to two or more, given `fixed` already clicked
        let others: Vec<f64> = (0..4).filter(|i| Some(*i) != fixed).map(|i| dark[i]).collect();
        let none: f64 = others.iter().map(|p| 1.0 - p).product();
        let exactly_one: f64 = (0..others.len())
            .map(|j| {
                others
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if i == j { *p } else { 1.0 - p })
                    .product::<f64>()
            })
            .sum();
        match fixed {
            Some(_) => 1.0 - none,
            None => 1.0 - none - exactly_one,
        }
    };
    let no_photon = at_least_two(None);
    let mut arrived = 0.0;
    for (k, d) in detectors.iter().enumerate() {
        let eta = d.efficiency_at(wavelength_nm);
        arrived += 0.25 * (eta * at_least_two(Some(k)) + (1.0 - eta) * no_photon);
    }
    transmittance * arrived + (1.0 - transmittance) * no_photon
}
