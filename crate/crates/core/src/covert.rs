//! Gap-parity covert channel run by a malicious Bell-measurement device.
//!
//! The device sees far more detections than Bob expects and reports only
//! some of them. After reporting an event it waits for a detection whose slot
//! distance `k` from that event has the parity assigned to Bob's bit for the
//! event (bit 1 → even, bit 0 → odd), optionally flipped by a key bit shared
//! with the outside eavesdropper. Anyone holding the key can read Bob's bits
//! off the public list of reported slots.
//!
//! Rate bookkeeping: with per-slot detection probability `p` and per-candidate
//! acceptance `q`, write `s = p·q`. An even-target gap has mean `2/s`, an
//! odd-target gap `2/s − 1`, so for uniform bits the report rate is
//! `2s/(4 − s)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{BellOutcome, Bit};

#[derive(Debug, Error, PartialEq)]
pub enum CovertError {
    #[error("detection probability must be in (0, 1], got {0}")]
    DetectionProbability(f64),
    #[error("target report rate must be positive, got {0}")]
    TargetRate(f64),
    #[error(
        "infeasible report rate: target {required:.6} per slot exceeds achievable {achievable:.6} \
         (thinning acceptance would be {acceptance:.4} > 1)"
    )]
    InfeasibleRate {
        required: f64,
        achievable: f64,
        acceptance: f64,
    },
    #[error("reported slots must be strictly increasing (position {index}: {prev} then {next})")]
    NonMonotonic { index: usize, prev: u64, next: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(k: u64) -> Parity {
        if k.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Bit 1 → even gap and bit 0 → odd gap; a key bit of 1 swaps the two.
pub fn required_parity(bit: Bit, key_bit: Bit) -> Parity {
    match bit ^ key_bit {
        Bit::One => Parity::Even,
        Bit::Zero => Parity::Odd,
    }
}

/// Key bits shared by the device and the eavesdropper, one per reported
/// event.
///
/// Keyed streams use ChaCha8 seeded with `seed` through
/// `SeedableRng::seed_from_u64`; key bit `i` is bit `i mod 64` (LSB first) of
/// the `⌊i/64⌋`-th `next_u64` output. The unkeyed stream yields 0 forever.
#[derive(Debug, Clone)]
pub struct ParityKeyStream {
    rng: Option<ChaCha8Rng>,
    word: u64,
    position: u64,
}

impl ParityKeyStream {
    pub fn keyed(seed: u64) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            word: 0,
            position: 0,
        }
    }

    pub fn unkeyed() -> Self {
        Self {
            rng: None,
            word: 0,
            position: 0,
        }
    }

    pub fn from_seed(seed: Option<u64>) -> Self {
        seed.map_or_else(Self::unkeyed, Self::keyed)
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_bit(&mut self) -> Bit {
        let Some(rng) = self.rng.as_mut() else {
            self.position += 1;
            return Bit::Zero;
        };
        let offset = self.position % 64;
        if offset == 0 {
            self.word = rng.next_u64();
        }
        self.position += 1;
        Bit::from((self.word >> offset) & 1 == 1)
    }
}

/// Long-run reports per slot when every parity-valid detection is reported.
pub fn achievable_report_rate(p: f64) -> Result<f64, CovertError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(CovertError::DetectionProbability(p));
    }
    Ok(2.0 * p / (4.0 - p))
}

/// Acceptance probability for parity-valid detections that brings the
/// report rate down to `target_rate`.
pub fn thinning_acceptance(p: f64, target_rate: f64) -> Result<f64, CovertError> {
    let achievable = achievable_report_rate(p)?;
    if target_rate.is_nan() || target_rate <= 0.0 {
        return Err(CovertError::TargetRate(target_rate));
    }
    let q = 4.0 * target_rate / (p * (2.0 + target_rate));
    if q > 1.0 {
        return Err(CovertError::InfeasibleRate {
            required: target_rate,
            achievable,
            acceptance: q,
        });
    }
    Ok(q)
}

/// Whether the device can hide a detection rate of `T·eta_true` behind the
/// rate `T·eta_expected` Bob expects.
pub fn attack_feasible(transmittance: f64, eta_true: f64, eta_expected: f64) -> bool {
    feasibility(transmittance, eta_true, eta_expected).is_feasible()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub achievable: f64,
    pub required: f64,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.achievable > 0.0 && self.achievable >= self.required
    }
}

pub fn feasibility(transmittance: f64, eta_true: f64, eta_expected: f64) -> Feasibility {
    Feasibility {
        achievable: achievable_report_rate(transmittance * eta_true).unwrap_or(0.0),
        required: transmittance * eta_expected,
    }
}

/// A detection the device could report: its honest Bell outcome and Bob's
/// bit as read out by the Trojan probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub outcome: BellOutcome,
    pub bob_bit: Bit,
}

/// Encoder state of the malicious Bell-measurement device.
#[derive(Debug, Clone, PartialEq)]
pub struct FredState {
    last_reported_slot: Option<u64>,
    pending_bit: Option<Bit>,
    pending_parity: Option<Parity>,
    pub eta_true: f64,
    pub target_report_rate: f64,
    thinning_prob: f64,
}

impl FredState {
    /// Thinned encoder whose long-run report rate is `target_report_rate`
    /// given per-slot detection probability `detection_prob`.
    pub fn new(eta_true: f64, detection_prob: f64, target_report_rate: f64) -> Result<Self, CovertError> {
        let q = thinning_acceptance(detection_prob, target_report_rate)?;
        Ok(Self::with_acceptance(eta_true, target_report_rate, q))
    }

    /// Reports every parity-valid detection.
    pub fn unthinned(eta_true: f64, detection_prob: f64) -> Result<Self, CovertError> {
        let rate = achievable_report_rate(detection_prob)?;
        Ok(Self::with_acceptance(eta_true, rate, 1.0))
    }

    fn with_acceptance(eta_true: f64, target_report_rate: f64, q: f64) -> Self {
        Self {
            last_reported_slot: None,
            pending_bit: None,
            pending_parity: None,
            eta_true,
            target_report_rate,
            thinning_prob: q,
        }
    }

    pub fn thinning_prob(&self) -> f64 {
        self.thinning_prob
    }

    pub fn last_reported_slot(&self) -> Option<u64> {
        self.last_reported_slot
    }

    pub fn pending_bit(&self) -> Option<Bit> {
        self.pending_bit
    }

    /// Processes one slot. Slots must arrive in ascending order. Returns the
    /// outcome to report, unchanged from the honest measurement, or `None`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        slot: u64,
        candidate: Option<Candidate>,
        key: &mut ParityKeyStream,
        rng: &mut R,
    ) -> Option<BellOutcome> {
        let c = candidate?;
        if let (Some(last), Some(parity)) = (self.last_reported_slot, self.pending_parity) {
            debug_assert!(slot > last);
            if Parity::of(slot - last) != parity {
                return None;
            }
            if self.thinning_prob < 1.0 && rng.random::<f64>() >= self.thinning_prob {
                return None;
            }
        }
        self.last_reported_slot = Some(slot);
        self.pending_bit = Some(c.bob_bit);
        self.pending_parity = Some(required_parity(c.bob_bit, key.next_bit()));
        Some(c.outcome)
    }
}

/// Bits recovered by the eavesdropper, one per reported event except the last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovertDecodeResult {
    pub bits: Vec<Bit>,
}

pub fn eve_decode(reported_slots: &[u64], key: &mut ParityKeyStream) -> Result<CovertDecodeResult, CovertError> {
    let mut bits = Vec::with_capacity(reported_slots.len().saturating_sub(1));
    for (index, w) in reported_slots.windows(2).enumerate() {
        let (prev, next) = (w[0], w[1]);
        if next <= prev {
            return Err(CovertError::NonMonotonic {
                index: index + 1,
                prev,
                next,
            });
        }
        let even = Bit::from(Parity::of(next - prev) == Parity::Even);
        bits.push(even ^ key.next_bit());
    }
    Ok(CovertDecodeResult { bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cand(bit: Bit) -> Option<Candidate> {
        Some(Candidate {
            outcome: BellOutcome::PhiPlus,
            bob_bit: bit,
        })
    }

    /// Runs `state` over `n` slots of Bernoulli(p) detections with uniform
    /// Bob bits and returns the report count.
    fn drive(state: &mut FredState, p: f64, n: u64, seed: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut key = ParityKeyStream::keyed(seed ^ 0xabcd);
        let mut reports = 0;
        for slot in 0..n {
            let detected = rng.random::<f64>() < p;
            let bit = Bit::from(rng.random::<bool>());
            let c = detected.then_some(Candidate {
                outcome: BellOutcome::PsiPlus,
                bob_bit: bit,
            });
            if state.step(slot, c, &mut key, &mut rng).is_some() {
                reports += 1;
            }
        }
        reports
    }

    /// Independent reporter: waits for a Bernoulli(p) detection at a slot
    /// distance of the wanted parity, drawing a fresh uniform bit per report.
    fn oracle_rate(p: f64, n: u64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reports = 0u64;
        let mut distance: Option<u64> = None;
        let mut want_even = false;
        for _ in 0..n {
            if let Some(d) = distance.as_mut() {
                *d += 1;
            }
            if rng.random::<f64>() >= p {
                continue;
            }
            let ok = match distance {
                None => true,
                Some(d) => (d % 2 == 0) == want_even,
            };
            if ok {
                reports += 1;
                distance = Some(0);
                want_even = rng.random::<bool>();
            }
        }
        reports as f64 / n as f64
    }

    #[test]
    fn parity_rule() {
        assert_eq!(required_parity(Bit::One, Bit::Zero), Parity::Even);
        assert_eq!(required_parity(Bit::Zero, Bit::Zero), Parity::Odd);
        assert_eq!(required_parity(Bit::One, Bit::One), Parity::Odd);
        assert_eq!(required_parity(Bit::Zero, Bit::One), Parity::Even);
    }

    #[test]
    fn fred_reports_even_gap_for_bit_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut key = ParityKeyStream::unkeyed();
        let mut fred = FredState::unthinned(0.9, 0.5).unwrap();
        assert!(fred.step(3, cand(Bit::One), &mut key, &mut rng).is_some());
        assert!(fred.step(5, cand(Bit::Zero), &mut key, &mut rng).is_some());
        assert_eq!(fred.last_reported_slot(), Some(5));
    }

    #[test]
    fn fred_skips_wrong_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut key = ParityKeyStream::unkeyed();
        let mut fred = FredState::unthinned(0.9, 0.5).unwrap();
        fred.step(3, cand(Bit::Zero), &mut key, &mut rng).unwrap();
        assert!(fred.step(5, cand(Bit::One), &mut key, &mut rng).is_none());
        assert!(fred.step(8, cand(Bit::One), &mut key, &mut rng).is_some());
        assert_eq!(fred.pending_bit(), Some(Bit::One));
    }

    #[test]
    fn first_detection_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut key = ParityKeyStream::keyed(1);
        let mut fred = FredState::new(0.9, 0.09, 0.02).unwrap();
        assert!(fred.step(6, None, &mut key, &mut rng).is_none());
        assert_eq!(
            fred.step(7, cand(Bit::Zero), &mut key, &mut rng),
            Some(BellOutcome::PhiPlus)
        );
    }

    #[test]
    fn decode_examples() {
        let bits = |v: &[u8]| v.iter().map(|b| Bit::try_from(*b).unwrap()).collect::<Vec<_>>();
        let r = eve_decode(&[3, 5, 8, 9], &mut ParityKeyStream::unkeyed()).unwrap();
        assert_eq!(r.bits, bits(&[1, 0, 0]));
        assert!(eve_decode(&[7], &mut ParityKeyStream::unkeyed())
            .unwrap()
            .bits
            .is_empty());
        assert!(eve_decode(&[], &mut ParityKeyStream::unkeyed())
            .unwrap()
            .bits
            .is_empty());

        // find a seed whose first key bit is 1
        let seed = (0..)
            .find(|s| ParityKeyStream::keyed(*s).next_bit() == Bit::One)
            .unwrap();
        let r = eve_decode(&[3, 5], &mut ParityKeyStream::keyed(seed)).unwrap();
        assert_eq!(r.bits, bits(&[0]));
    }

    #[test]
    fn decode_rejects_non_monotonic() {
        let err = eve_decode(&[3, 5, 5], &mut ParityKeyStream::unkeyed()).unwrap_err();
        assert_eq!(
            err,
            CovertError::NonMonotonic {
                index: 2,
                prev: 5,
                next: 5
            }
        );
        assert!(eve_decode(&[9, 4], &mut ParityKeyStream::unkeyed()).is_err());
    }

    #[test]
    fn key_stream_is_reproducible_and_unbiased() {
        let a: Vec<Bit> = {
            let mut k = ParityKeyStream::keyed(99);
            (0..1000).map(|_| k.next_bit()).collect()
        };
        let mut k = ParityKeyStream::keyed(99);
        assert!(a.iter().all(|b| *b == k.next_bit()));
        assert_eq!(k.position(), 1000);

        let n = 100_000;
        let mut k = ParityKeyStream::keyed(7);
        let ones = (0..n).filter(|_| k.next_bit() == Bit::One).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());

        let mut u = ParityKeyStream::unkeyed();
        assert!((0..100).all(|_| u.next_bit() == Bit::Zero));
    }

    #[test]
    fn achievable_rate_values() {
        assert!((achievable_report_rate(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((achievable_report_rate(0.3).unwrap() - 0.162162).abs() < 1e-6);
        assert!((achievable_report_rate(0.01).unwrap() - 0.0050125).abs() < 1e-7);
        assert!(matches!(
            achievable_report_rate(0.0),
            Err(CovertError::DetectionProbability(_))
        ));
        assert!(achievable_report_rate(-0.5).is_err());
        assert!(achievable_report_rate(1.5).is_err());
    }

    #[test]
    fn achievable_rate_at_full_detection_alternates_gaps() {
        // p = 1: an odd target is met at k = 1, an even one at k = 2, so
        // enumerating both bits gives mean gap 3/2.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut key = ParityKeyStream::unkeyed();
        let mut fred = FredState::unthinned(1.0, 1.0).unwrap();
        let mut slots = vec![];
        let pattern = [Bit::One, Bit::Zero];
        for slot in 0..12u64 {
            let bit = pattern[slots.len() % 2];
            if fred.step(slot, cand(bit), &mut key, &mut rng).is_some() {
                slots.push(slot);
            }
        }
        let gaps: Vec<u64> = slots.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(gaps, vec![2, 1, 2, 1, 2, 1, 2]);
        let rate = slots.len() as f64 / 12.0;
        assert!((rate - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_oracle_agrees_with_formula() {
        for (p, n) in [(0.3, 2_000_000u64), (0.01, 50_000_000)] {
            let sim = oracle_rate(p, n, 17);
            let formula = achievable_report_rate(p).unwrap();
            assert!((sim / formula - 1.0).abs() < 0.01, "p={p}: sim {sim} formula {formula}");
        }
        let r = achievable_report_rate(1e-6).unwrap();
        assert!((r / 1e-6 - 0.5).abs() < 1e-6);
    }

    #[test]
    fn thinning_values() {
        assert!((thinning_acceptance(0.09, 0.02).unwrap() - 0.4400).abs() < 5e-5);
        for p in [0.05, 0.3, 0.9, 1.0] {
            let q = thinning_acceptance(p, achievable_report_rate(p).unwrap()).unwrap();
            assert!((q - 1.0).abs() < 1e-12);
        }
        match thinning_acceptance(0.09, 0.05) {
            Err(CovertError::InfeasibleRate { acceptance, .. }) => assert!((acceptance - 1.084).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert!(thinning_acceptance(0.09, 0.0).is_err());
    }

    #[test]
    fn feasibility_examples() {
        assert!(attack_feasible(0.1, 0.9, 0.2));
        assert!(!attack_feasible(0.1, 0.9, 0.5));
        let f = feasibility(0.1, 0.9, 0.2);
        assert!((f.achievable - 0.04604).abs() < 1e-5);
        for t in [0.01, 0.1, 0.5, 1.0] {
            for eta in [0.05, 0.2, 0.9, 1.0] {
                assert!(!attack_feasible(t, eta, eta));
            }
        }
        assert!(!attack_feasible(0.0, 0.9, 0.0));
    }

    #[test]
    fn thinned_rate_hits_target() {
        for p in [0.05, 0.1, 0.3, 0.9] {
            let target = 0.5 * achievable_report_rate(p).unwrap();
            let mut fred = FredState::new(1.0, p, target).unwrap();
            let n = 4_000_000;
            let rate = drive(&mut fred, p, n, 5) as f64 / n as f64;
            assert!((rate / target - 1.0).abs() < 0.01, "p={p}: {rate} vs {target}");
        }
    }

    #[test]
    fn keyed_parity_is_balanced_despite_biased_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut key = ParityKeyStream::keyed(22);
        let mut fred = FredState::unthinned(1.0, 0.3).unwrap();
        let mut slots = vec![];
        for slot in 0..400_000u64 {
            let detected = rng.random::<f64>() < 0.3;
            // Bob's bits heavily biased towards 1
            let bit = Bit::from(rng.random::<f64>() < 0.9);
            let c = detected.then_some(Candidate {
                outcome: BellOutcome::PhiMinus,
                bob_bit: bit,
            });
            if fred.step(slot, c, &mut key, &mut rng).is_some() {
                slots.push(slot);
            }
        }
        let gaps = slots.len() - 1;
        let even = slots.windows(2).filter(|w| (w[1] - w[0]) % 2 == 0).count();
        let sigma = (0.25 / gaps as f64).sqrt();
        assert!((even as f64 / gaps as f64 - 0.5).abs() < 3.0 * sigma);

        // unkeyed with constant bits: every gap has the same parity
        let mut key = ParityKeyStream::unkeyed();
        let mut fred = FredState::unthinned(1.0, 0.3).unwrap();
        let mut slots = vec![];
        for slot in 0..10_000u64 {
            let c = (rng.random::<f64>() < 0.3).then_some(Candidate {
                outcome: BellOutcome::PhiMinus,
                bob_bit: Bit::Zero,
            });
            if fred.step(slot, c, &mut key, &mut rng).is_some() {
                slots.push(slot);
            }
        }
        assert!(slots.windows(2).all(|w| (w[1] - w[0]) % 2 == 1));
    }

    proptest! {
        #[test]
        fn decode_round_trips_every_reported_bit(
            detections in prop::collection::vec((any::<bool>(), any::<bool>()), 1..400),
            key_seed in prop::option::of(any::<u64>()),
            q_seed in any::<u64>(),
            thin in prop::bool::ANY,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(q_seed);
            let mut fred_key = ParityKeyStream::from_seed(key_seed);
            let mut fred = if thin {
                FredState::new(1.0, 0.6, 0.1).unwrap()
            } else {
                FredState::unthinned(1.0, 0.6).unwrap()
            };
            let mut slots = vec![];
            let mut bob_bits = vec![];
            for (slot, (detected, bit)) in detections.iter().enumerate() {
                let c = detected.then_some(Candidate { outcome: BellOutcome::PsiMinus, bob_bit: Bit::from(*bit) });
                if let Some(o) = fred.step(slot as u64, c, &mut fred_key, &mut rng) {
                    prop_assert_eq!(o, BellOutcome::PsiMinus);
                    slots.push(slot as u64);
                    bob_bits.push(Bit::from(*bit));
                }
            }
            let decoded = eve_decode(&slots, &mut ParityKeyStream::from_seed(key_seed)).unwrap();
            prop_assert_eq!(decoded.bits.len(), slots.len().saturating_sub(1));
            prop_assert_eq!(&decoded.bits[..], &bob_bits[..bob_bits.len().saturating_sub(1)]);
        }
    }
}
