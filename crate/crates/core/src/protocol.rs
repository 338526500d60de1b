//! Full sessions: per-slot simulation for every mode, sifting, error rate and
//! key-rate estimation, and the session report.
//!
//! Each slot draws, in order: Alice's basis and bit, Bob's basis and bit, the
//! channel transmission, then whatever the mode needs. All randomness comes
//! from one ChaCha8 stream seeded with the session seed, so a config and seed
//! fully determine the transcript.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, DetectabilityReport};
use crate::blinding::{blinding_round, optimize_pulse, BlindingError, BlindingPlan};
use crate::channel::{
    intercept_resend_photon, transmit, trojan_readout, EveInterceptConfig, EveMeasurement, InterceptError,
};
use crate::config::{BlindingParams, CovertParams, Mode, SessionConfig};
use crate::covert::{eve_decode, feasibility, Candidate, CovertError, Feasibility, FredState, ParityKeyStream};
use crate::devices::{
    bsm_measure_photon, classify, expected_double_click_prob, ClickPattern, DetectionResult, DetectorBank,
};
use crate::quantum::{infer_bit, prepare_polarization, prepare_spatial, tensor, Basis, BellOutcome, Bit};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(
        "infeasible covert attack: achievable report rate {achievable:.6} per slot < required {required:.6} \
         (2p/(4-p) with p = T·eta_true·readout_prob must be at least T·eta_expected)"
    )]
    Infeasible { achievable: f64, required: f64 },
    #[error(transparent)]
    Covert(#[from] CovertError),
    #[error(transparent)]
    Blinding(#[from] BlindingError),
    #[error(transparent)]
    Intercept(#[from] InterceptError),
}

impl SessionError {
    /// Whether the scenario itself cannot run (as opposed to a bad input).
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            SessionError::Infeasible { .. }
                | SessionError::Covert(CovertError::InfeasibleRate { .. })
                | SessionError::Blinding(BlindingError::NoViablePlan)
        )
    }
}

/// Attack-side bookkeeping that never reaches the public view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvePrivate {
    /// Bob's setting as read out by the Trojan probe.
    Trojan { basis: Basis, bit: Bit },
    /// Eve's measurement of Alice's photon.
    Intercept(EveMeasurement),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub alice_basis: Basis,
    pub alice_bit: Bit,
    pub bob_basis: Basis,
    pub bob_bit: Bit,
    pub arrived: bool,
    /// The device registered a detection (ground truth, before any post-selection).
    pub fred_detected: bool,
    pub reported: Option<BellOutcome>,
    pub double_click: bool,
    pub eve_private: Option<EvePrivate>,
}

/// What Bob announces and what his monitors see.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PublicView {
    pub n_slots: u64,
    pub reported_slots: Vec<u64>,
    pub outcomes: Vec<BellOutcome>,
    /// Bob's bases for the reported slots.
    pub bob_bases: Vec<Basis>,
    pub double_click_slots: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub records: Vec<SlotRecord>,
}

impl Transcript {
    pub fn public_view(&self) -> PublicView {
        let mut view = PublicView {
            n_slots: self.records.len() as u64,
            ..PublicView::default()
        };
        for r in &self.records {
            if let Some(o) = r.reported {
                view.reported_slots.push(r.slot);
                view.outcomes.push(o);
                view.bob_bases.push(r.bob_basis);
            }
            if r.double_click {
                view.double_click_slots.push(r.slot);
            }
        }
        view
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftedEvent {
    pub slot: u64,
    pub basis: Basis,
    pub outcome: BellOutcome,
    pub alice_bit: Bit,
    pub bob_bit: Bit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub mode: String,
    pub sent: u64,
    pub arrived: u64,
    pub reported: u64,
    pub sifted: u64,
    /// Absent when nothing was sifted.
    pub qber: Option<f64>,
    pub key_rate: f64,
    pub reported_rate: f64,
    pub double_click_rate: f64,
    pub eve_leak_fraction: f64,
    pub detectability: DetectabilityReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blinding_plan: Option<BlindingPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covert_thinning_prob: Option<f64>,
}

/// Per-session seed for session `index` of a sweep.
pub fn derive_session_seed(master: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix(index))
}

/// Keeps reported single clicks where Alice's and Bob's bases agree.
/// Double clicks are never reported, so they never reach the key.
pub fn sift(transcript: &Transcript) -> Vec<SiftedEvent> {
    transcript
        .records
        .iter()
        .filter(|r| r.alice_basis == r.bob_basis)
        .filter_map(|r| {
            r.reported.map(|outcome| SiftedEvent {
                slot: r.slot,
                basis: r.bob_basis,
                outcome,
                alice_bit: r.alice_bit,
                bob_bit: r.bob_bit,
            })
        })
        .collect()
}

/// Fraction of sifted events where Bob's inferred bit differs from Alice's.
pub fn compute_qber(sifted: &[SiftedEvent]) -> Option<f64> {
    if sifted.is_empty() {
        return None;
    }
    let errors = sifted
        .iter()
        .filter(|e| infer_bit(e.outcome, e.basis, e.bob_bit) != e.alice_bit)
        .count();
    Some(errors as f64 / sifted.len() as f64)
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Asymptotic one-way rate: `sifted_fraction · max(0, 1 − 2·H2(qber))`.
pub fn key_rate(qber: f64, sifted_fraction: f64) -> f64 {
    sifted_fraction * (1.0 - 2.0 * binary_entropy(qber)).max(0.0)
}

struct SlotDraws {
    alice: (Basis, Bit),
    bob: (Basis, Bit),
    arrived: bool,
}

fn draw_slot<R: Rng + ?Sized>(cfg: &SessionConfig, rng: &mut R) -> SlotDraws {
    let basis = |rng: &mut R| {
        if rng.random::<f64>() < cfg.basis_choice_prob {
            Basis::Z
        } else {
            Basis::X
        }
    };
    let alice_basis = basis(rng);
    let alice_bit = Bit::from(rng.random::<bool>());
    let bob_basis = basis(rng);
    let bob_bit = Bit::from(rng.random::<f64>() < cfg.bob_bit_one_prob);
    let arrived = transmit(cfg.channel.transmittance, rng);
    SlotDraws {
        alice: (alice_basis, alice_bit),
        bob: (bob_basis, bob_bit),
        arrived,
    }
}

fn dark_only<R: Rng + ?Sized>(detectors: &DetectorBank, rng: &mut R) -> DetectionResult {
    let mut clicks = [false; 4];
    for (c, d) in clicks.iter_mut().zip(detectors.iter()) {
        *c = d.dark_count_prob > 0.0 && rng.random::<f64>() < d.dark_count_prob;
    }
    classify(ClickPattern(clicks))
}

fn record(slot: u64, d: &SlotDraws) -> SlotRecord {
    SlotRecord {
        slot,
        alice_basis: d.alice.0,
        alice_bit: d.alice.1,
        bob_basis: d.bob.0,
        bob_bit: d.bob.1,
        arrived: d.arrived,
        fred_detected: false,
        reported: None,
        double_click: false,
        eve_private: None,
    }
}

/// Honest device, or single-photon intercept-resend when `intercept` is set.
fn run_photon_path(cfg: &SessionConfig, intercept: bool, rng: &mut ChaCha8Rng) -> Vec<SlotRecord> {
    (0..cfg.n_slots)
        .map(|slot| {
            let d = draw_slot(cfg, rng);
            let mut rec = record(slot, &d);
            let result = if d.arrived {
                let mut pol = prepare_polarization(d.alice.0, d.alice.1);
                if intercept {
                    let (m, resent) = intercept_resend_photon(&pol, rng);
                    rec.eve_private = Some(EvePrivate::Intercept(m));
                    pol = resent;
                }
                let spa = prepare_spatial(d.bob.0, d.bob.1);
                bsm_measure_photon(&tensor(&pol, &spa), &cfg.detectors, cfg.wavelength_nm, rng)
            } else {
                dark_only(&cfg.detectors, rng)
            };
            rec.fred_detected = result != DetectionResult::NoClick;
            rec.reported = result.single();
            rec.double_click = result.is_double();
            rec
        })
        .collect()
}

fn covert_detection_prob(cfg: &SessionConfig, p: &CovertParams) -> f64 {
    let readout = if p.trojan.enabled {
        p.trojan.readout_success_prob
    } else {
        0.0
    };
    cfg.channel.transmittance * p.eta_true * readout
}

fn covert_target(cfg: &SessionConfig, p: &CovertParams) -> f64 {
    p.target_report_rate.unwrap_or_else(|| cfg.expected_report_rate())
}

/// Achievable versus required report rate for a covert config; `None` for
/// other modes.
pub fn covert_feasibility(cfg: &SessionConfig) -> Option<Feasibility> {
    match &cfg.mode {
        Mode::CovertAttack(p) => Some(feasibility(1.0, covert_detection_prob(cfg, p), covert_target(cfg, p))),
        _ => None,
    }
}

fn build_fred(cfg: &SessionConfig, p: &CovertParams) -> Result<FredState, SessionError> {
    let detect = covert_detection_prob(cfg, p);
    let target = covert_target(cfg, p);
    let f = feasibility(1.0, detect, target);
    if !f.is_feasible() {
        return Err(SessionError::Infeasible {
            achievable: f.achievable,
            required: f.required,
        });
    }
    Ok(if p.thinning {
        FredState::new(p.eta_true, detect, target)?
    } else {
        FredState::unthinned(p.eta_true, detect)?
    })
}

fn run_covert(cfg: &SessionConfig, p: &CovertParams, fred: &mut FredState, rng: &mut ChaCha8Rng) -> Vec<SlotRecord> {
    let detectors = cfg.detectors.with_efficiency(p.eta_true);
    let mut key = ParityKeyStream::from_seed(p.key_seed);
    (0..cfg.n_slots)
        .map(|slot| {
            let d = draw_slot(cfg, rng);
            let mut rec = record(slot, &d);
            let result = if d.arrived {
                let state = tensor(
                    &prepare_polarization(d.alice.0, d.alice.1),
                    &prepare_spatial(d.bob.0, d.bob.1),
                );
                bsm_measure_photon(&state, &detectors, cfg.wavelength_nm, rng)
            } else {
                dark_only(&detectors, rng)
            };
            // Double clicks on the device's own detectors are swallowed.
            let candidate = match result.single() {
                Some(outcome) => {
                    rec.fred_detected = true;
                    trojan_readout(d.bob.0, d.bob.1, &p.trojan, rng).map(|(basis, bit)| {
                        rec.eve_private = Some(EvePrivate::Trojan { basis, bit });
                        Candidate { outcome, bob_bit: bit }
                    })
                }
                None => None,
            };
            rec.reported = fred.step(slot, candidate, &mut key, rng);
            rec
        })
        .collect()
}

fn run_blinding(
    cfg: &SessionConfig,
    eve: &EveInterceptConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SlotRecord>, SessionError> {
    let mut records = Vec::with_capacity(cfg.n_slots as usize);
    for slot in 0..cfg.n_slots {
        let d = draw_slot(cfg, rng);
        let mut rec = record(slot, &d);
        if d.arrived {
            let round = blinding_round(
                &prepare_polarization(d.alice.0, d.alice.1),
                &prepare_spatial(d.bob.0, d.bob.1),
                eve,
                &cfg.detectors,
                rng,
            )?;
            rec.eve_private = Some(EvePrivate::Intercept(round.eve));
            rec.fred_detected = round.result != DetectionResult::NoClick;
            rec.reported = round.result.single();
            rec.double_click = round.result.is_double();
        }
        records.push(rec);
    }
    Ok(records)
}

fn resolve_blinding(
    cfg: &SessionConfig,
    b: &BlindingParams,
) -> Result<(EveInterceptConfig, Option<BlindingPlan>), SessionError> {
    match (&b.intercept, &b.search) {
        (Some(i), _) => Ok((*i, None)),
        (None, Some(s)) => {
            let plan = optimize_pulse(&cfg.detectors, &s.wavelengths, &s.powers)?;
            Ok((plan.intercept_config(), Some(plan)))
        }
        (None, None) => unreachable!("validated config has an intercept or a search"),
    }
}

/// Match fraction of Eve's knowledge over all reported (covert) or sifted
/// (intercepting attacks) bits.
fn eve_leak(cfg: &SessionConfig, transcript: &Transcript) -> f64 {
    match &cfg.mode {
        Mode::Honest => 0.0,
        Mode::CovertAttack(p) => {
            let view = transcript.public_view();
            let m = view.reported_slots.len();
            if m == 0 {
                return 0.0;
            }
            let decoded = eve_decode(&view.reported_slots, &mut ParityKeyStream::from_seed(p.key_seed))
                .expect("reported slots are increasing");
            let bob: Vec<Bit> = view
                .reported_slots
                .iter()
                .take(m - 1)
                .map(|s| transcript.records[*s as usize].bob_bit)
                .collect();
            let frac = analysis::leakage(&decoded.bits, &bob).expect("aligned");
            frac * (m - 1) as f64 / m as f64
        }
        Mode::Blinding(_) | Mode::InterceptResend => {
            // a sifted event Eve never measured counts as a miss
            let sifted = sift(transcript);
            let (eve, key): (Vec<Bit>, Vec<Bit>) = sifted
                .iter()
                .map(|e| match transcript.records[e.slot as usize].eve_private {
                    Some(EvePrivate::Intercept(m)) => (m.bit, e.alice_bit),
                    _ => (e.alice_bit ^ Bit::One, e.alice_bit),
                })
                .unzip();
            analysis::leakage(&eve, &key).expect("aligned")
        }
    }
}

pub fn run_session(cfg: &SessionConfig) -> Result<(Transcript, SessionReport), SessionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut plan = None;
    let mut thinning = None;
    let records = match &cfg.mode {
        Mode::Honest => run_photon_path(cfg, false, &mut rng),
        Mode::InterceptResend => run_photon_path(cfg, true, &mut rng),
        Mode::CovertAttack(p) => {
            let mut fred = build_fred(cfg, p)?;
            thinning = Some(fred.thinning_prob());
            run_covert(cfg, p, &mut fred, &mut rng)
        }
        Mode::Blinding(b) => {
            let (eve, found) = resolve_blinding(cfg, b)?;
            plan = found;
            if eve.enabled {
                run_blinding(cfg, &eve, &mut rng)?
            } else {
                run_photon_path(cfg, false, &mut rng)
            }
        }
    };
    let transcript = Transcript { records };
    let report = build_report(cfg, &transcript, plan, thinning);
    Ok((transcript, report))
}

fn build_report(
    cfg: &SessionConfig,
    transcript: &Transcript,
    blinding_plan: Option<BlindingPlan>,
    covert_thinning_prob: Option<f64>,
) -> SessionReport {
    let sent = transcript.records.len() as u64;
    let arrived = transcript.records.iter().filter(|r| r.arrived).count() as u64;
    let reported = transcript.records.iter().filter(|r| r.reported.is_some()).count() as u64;
    let sifted_events = sift(transcript);
    let sifted = sifted_events.len() as u64;
    let qber = compute_qber(&sifted_events);
    let sifted_fraction = sifted as f64 / sent as f64;
    let view = transcript.public_view();
    let expected_double = expected_double_click_prob(cfg.channel.transmittance, &cfg.detectors, cfg.wavelength_nm);
    let detectability = analysis::detectability(&view, Some(cfg.expected_report_rate()), expected_double, cfg.alpha);
    SessionReport {
        tool_version: TOOL_VERSION.to_string(),
        config_sha256: cfg.config_hash(),
        seed: cfg.seed,
        mode: cfg.mode.name().to_string(),
        sent,
        arrived,
        reported,
        sifted,
        qber,
        key_rate: qber.map_or(0.0, |q| key_rate(q, sifted_fraction)),
        reported_rate: reported as f64 / sent as f64,
        double_click_rate: detectability.double_click_rate,
        eve_leak_fraction: eve_leak(cfg, transcript),
        detectability,
        blinding_plan,
        covert_thinning_prob,
    }
}
