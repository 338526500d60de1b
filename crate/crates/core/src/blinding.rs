//! Detector-blinding attack against the four-detector Bell measurement.
//!
//! Eve holds the detectors in linear mode, measures Alice's photon in a
//! random basis and resends a bright pulse in the state she found. Bob's
//! encoder then splits the pulse power over two detectors (Eve and Bob in the
//! same basis) or four (different bases). A pulse that clears the thresholds
//! only in the two-detector case gives Eve control of which events Bob keeps.
//! With identical detectors both detectors fire together; asymmetric
//! thresholds let a well-chosen wavelength and power leave a single click.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{intercept_resend, EveInterceptConfig, EveMeasurement, InterceptError};
use crate::devices::{bsm_respond_bright, classify, BrightPulse, DetectionResult, DetectorBank};
use crate::protocol::{compute_qber, sift, EvePrivate, Transcript};
use crate::quantum::{prepare_polarization, prepare_spatial, Basis, Bit, PolarizationQubit, SpatialQubit};

#[derive(Debug, Error, PartialEq)]
pub enum BlindingError {
    #[error("wavelength and power grids must be non-empty")]
    EmptyGrid,
    #[error("no viable blinding plan: no grid point gives same-basis clicks without cross-basis clicks")]
    NoViablePlan,
}

/// Pulse settings and the click statistics they produce, averaged over Eve's
/// four possible results and Bob's four encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindingPlan {
    pub wavelength: f64,
    pub peak_power: f64,
    pub same_basis_single_prob: f64,
    pub same_basis_double_prob: f64,
    pub cross_basis_click_prob: f64,
}

impl BlindingPlan {
    pub fn is_viable(&self) -> bool {
        self.cross_basis_click_prob == 0.0 && self.same_basis_single_prob + self.same_basis_double_prob > 0.0
    }

    pub fn intercept_config(&self) -> EveInterceptConfig {
        EveInterceptConfig {
            enabled: true,
            pulse_power: self.peak_power,
            wavelength: self.wavelength,
        }
    }
}

/// Exhaustive evaluation of one pulse setting over the 16 (Eve result, Bob
/// setting) combinations.
pub fn evaluate_pulse(detectors: &DetectorBank, wavelength: f64, peak_power: f64) -> BlindingPlan {
    let mut same = (0usize, 0usize, 0usize);
    let mut cross = (0usize, 0usize);
    for eve_basis in Basis::ALL {
        for eve_bit in Bit::ALL {
            let pol = prepare_polarization(eve_basis, eve_bit);
            let pulse = BrightPulse::new(peak_power, wavelength, pol).expect("grid powers are positive");
            for bob_basis in Basis::ALL {
                for bob_bit in Bit::ALL {
                    let result = classify(bsm_respond_bright(
                        &pulse,
                        &prepare_spatial(bob_basis, bob_bit),
                        detectors,
                    ));
                    if eve_basis == bob_basis {
                        same.0 += 1;
                        match result {
                            DetectionResult::Single(_) => same.1 += 1,
                            DetectionResult::Double(_) => same.2 += 1,
                            DetectionResult::NoClick => {}
                        }
                    } else {
                        cross.0 += 1;
                        if result != DetectionResult::NoClick {
                            cross.1 += 1;
                        }
                    }
                }
            }
        }
    }
    BlindingPlan {
        wavelength,
        peak_power,
        same_basis_single_prob: same.1 as f64 / same.0 as f64,
        same_basis_double_prob: same.2 as f64 / same.0 as f64,
        cross_basis_click_prob: cross.1 as f64 / cross.0 as f64,
    }
}

/// Grid search for the pulse that maximises same-basis single clicks with no
/// cross-basis clicks. Ties go to fewer double clicks, then lower power, then
/// the earlier grid point.
pub fn optimize_pulse(
    detectors: &DetectorBank,
    wavelength_grid: &[f64],
    power_grid: &[f64],
) -> Result<BlindingPlan, BlindingError> {
    if wavelength_grid.is_empty() || power_grid.is_empty() {
        return Err(BlindingError::EmptyGrid);
    }
    let points: Vec<(f64, f64)> = wavelength_grid
        .iter()
        .flat_map(|&w| power_grid.iter().map(move |&p| (w, p)))
        .collect();
    let plans: Vec<BlindingPlan> = points
        .par_iter()
        .map(|&(w, p)| evaluate_pulse(detectors, w, p))
        .collect();
    let mut best: Option<BlindingPlan> = None;
    for plan in plans.into_iter().filter(BlindingPlan::is_viable) {
        let better = match &best {
            None => true,
            Some(b) => {
                (
                    plan.same_basis_single_prob,
                    -plan.same_basis_double_prob,
                    -plan.peak_power,
                ) > (b.same_basis_single_prob, -b.same_basis_double_prob, -b.peak_power)
            }
        };
        if better {
            best = Some(plan);
        }
    }
    best.ok_or(BlindingError::NoViablePlan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlindingRound {
    pub eve: EveMeasurement,
    pub result: DetectionResult,
}

/// One intercepted slot: Eve measures and resends, blinded detectors respond.
pub fn blinding_round<R: Rng + ?Sized>(
    alice_pol: &PolarizationQubit,
    bob_spatial: &SpatialQubit,
    cfg: &EveInterceptConfig,
    detectors: &DetectorBank,
    rng: &mut R,
) -> Result<BlindingRound, InterceptError> {
    let interception = intercept_resend(alice_pol, cfg, rng)?;
    let result = classify(bsm_respond_bright(&interception.pulse, bob_spatial, detectors));
    Ok(BlindingRound {
        eve: interception.measurement,
        result,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindingStats {
    /// Reported single clicks per slot.
    pub detection_rate: f64,
    pub qber: Option<f64>,
    /// Double clicks per slot.
    pub double_click_rate: f64,
    /// Double clicks per arrived (and so intercepted) slot.
    pub double_click_per_arrived: f64,
    /// Fraction of sifted bits Eve holds; absent when nothing was sifted.
    pub eve_key_fraction: Option<f64>,
}

pub fn blinding_session_stats(transcript: &Transcript) -> BlindingStats {
    let n = transcript.records.len().max(1) as f64;
    let arrived = transcript.records.iter().filter(|r| r.arrived).count();
    let doubles = transcript.records.iter().filter(|r| r.double_click).count();
    let reported = transcript.records.iter().filter(|r| r.reported.is_some()).count();
    let sifted = sift(transcript);
    let mut known = 0usize;
    for ev in &sifted {
        if let Some(EvePrivate::Intercept(m)) = transcript.records[ev.slot as usize].eve_private {
            if m.bit == ev.alice_bit {
                known += 1;
            }
        }
    }
    BlindingStats {
        detection_rate: reported as f64 / n,
        qber: compute_qber(&sifted),
        double_click_rate: doubles as f64 / n,
        double_click_per_arrived: if arrived == 0 {
            0.0
        } else {
            doubles as f64 / arrived as f64
        },
        eve_key_fraction: (!sifted.is_empty()).then(|| known as f64 / sifted.len() as f64),
    }
}
