//! The insecure channel and Eve's actions on it: loss, the Trojan-horse
//! readout of Bob's encoder, and measure-and-resend front ends.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::BrightPulse;
use crate::quantum::{prepare_polarization, Basis, Bit, PolarizationQubit};

#[derive(Debug, Error, PartialEq)]
pub enum InterceptError {
    #[error("intercept-resend called while the interceptor is disabled")]
    Disabled,
    #[error("pulse power must be positive, got {0} mW")]
    NonPositivePower(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default = "ChannelSpec::default_transmittance")]
    pub transmittance: f64,
}

impl ChannelSpec {
    fn default_transmittance() -> f64 {
        1.0
    }
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { transmittance: 1.0 }
    }
}

/// Abstract readout of Bob's encoder setting by the accomplice inside the BSM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrojanProbe {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_one")]
    pub readout_success_prob: f64,
}

impl Default for TrojanProbe {
    fn default() -> Self {
        Self {
            enabled: true,
            readout_success_prob: 1.0,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EveInterceptConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Peak power of the resent bright pulse, mW.
    pub pulse_power: f64,
    /// Pulse wavelength, nm.
    pub wavelength: f64,
}

/// What Eve learned when she measured Alice's photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveMeasurement {
    pub basis: Basis,
    pub bit: Bit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interception {
    pub measurement: EveMeasurement,
    pub pulse: BrightPulse,
}

pub fn transmit<R: Rng + ?Sized>(transmittance: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < transmittance
}

/// Returns Bob's true setting when the probe is enabled and the readout
/// succeeds. Never returns a wrong setting.
pub fn trojan_readout<R: Rng + ?Sized>(
    bob_basis: Basis,
    bob_bit: Bit,
    probe: &TrojanProbe,
    rng: &mut R,
) -> Option<(Basis, Bit)> {
    if !probe.enabled {
        return None;
    }
    (rng.random::<f64>() < probe.readout_success_prob).then_some((bob_basis, bob_bit))
}

/// Projective measurement of `state` in a uniformly random BB84 basis.
pub fn measure_random_basis<R: Rng + ?Sized>(state: &PolarizationQubit, rng: &mut R) -> EveMeasurement {
    let basis = if rng.random::<bool>() { Basis::X } else { Basis::Z };
    let p0 = state.born_probability(basis, Bit::Zero);
    let bit = Bit::from(rng.random::<f64>() >= p0);
    EveMeasurement { basis, bit }
}

/// Eve measures Alice's photon and prepares a bright pulse in the eigenstate
/// she found.
pub fn intercept_resend<R: Rng + ?Sized>(
    alice_pol: &PolarizationQubit,
    cfg: &EveInterceptConfig,
    rng: &mut R,
) -> Result<Interception, InterceptError> {
    if !cfg.enabled {
        return Err(InterceptError::Disabled);
    }
    let measurement = measure_random_basis(alice_pol, rng);
    let pol = prepare_polarization(measurement.basis, measurement.bit);
    let pulse = BrightPulse::new(cfg.pulse_power, cfg.wavelength, pol)
        .ok_or(InterceptError::NonPositivePower(cfg.pulse_power))?;
    Ok(Interception { measurement, pulse })
}

/// Single-photon intercept-resend: Eve forwards one photon in her measured
/// eigenstate instead of a bright pulse.
pub fn intercept_resend_photon<R: Rng + ?Sized>(
    alice_pol: &PolarizationQubit,
    rng: &mut R,
) -> (EveMeasurement, PolarizationQubit) {
    let m = measure_random_basis(alice_pol, rng);
    (m, prepare_polarization(m.basis, m.bit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const N: usize = 100_000;

    fn three_sigma(p: f64, n: usize) -> f64 {
        3.0 * (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn transmit_extremes_and_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!((0..1000).all(|_| transmit(1.0, &mut rng)));
        assert!((0..1000).all(|_| !transmit(0.0, &mut rng)));
        let arrived = (0..N).filter(|_| transmit(0.5, &mut rng)).count();
        assert!((arrived as f64 / N as f64 - 0.5).abs() < 0.0047);
    }

    #[test]
    fn trojan_readout_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let probe = TrojanProbe::default();
        assert_eq!(
            trojan_readout(Basis::Z, Bit::One, &probe, &mut rng),
            Some((Basis::Z, Bit::One))
        );
        let off = TrojanProbe {
            enabled: false,
            ..probe
        };
        assert_eq!(trojan_readout(Basis::Z, Bit::One, &off, &mut rng), None);

        let lossy = TrojanProbe {
            enabled: true,
            readout_success_prob: 0.8,
        };
        let mut present = 0;
        for i in 0..N {
            let basis = Basis::ALL[i % 2];
            let bit = Bit::from(i % 3 == 0);
            if let Some(r) = trojan_readout(basis, bit, &lossy, &mut rng) {
                assert_eq!(r, (basis, bit));
                present += 1;
            }
        }
        assert!((present as f64 / N as f64 - 0.8).abs() < three_sigma(0.8, N));
    }

    #[test]
    fn intercept_requires_enabled() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = EveInterceptConfig {
            enabled: false,
            pulse_power: 2.0,
            wavelength: 1550.0,
        };
        let h = prepare_polarization(Basis::Z, Bit::Zero);
        assert_eq!(
            intercept_resend(&h, &cfg, &mut rng).unwrap_err(),
            InterceptError::Disabled
        );
        let cfg = EveInterceptConfig {
            enabled: true,
            pulse_power: 0.0,
            wavelength: 1550.0,
        };
        assert!(matches!(
            intercept_resend(&h, &cfg, &mut rng),
            Err(InterceptError::NonPositivePower(_))
        ));
    }

    #[test]
    fn intercept_obeys_born_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = EveInterceptConfig {
            enabled: true,
            pulse_power: 2.2,
            wavelength: 1550.0,
        };
        for (alice_basis, alice_bit) in [(Basis::Z, Bit::Zero), (Basis::X, Bit::Zero)] {
            let alice = prepare_polarization(alice_basis, alice_bit);
            let mut x_count = 0;
            let mut cross_ones = 0;
            let mut cross_total = 0;
            for _ in 0..N {
                let i = intercept_resend(&alice, &cfg, &mut rng).unwrap();
                let m = i.measurement;
                assert_eq!(i.pulse.polarization, prepare_polarization(m.basis, m.bit));
                assert_eq!(i.pulse.peak_power(), 2.2);
                if m.basis == Basis::X {
                    x_count += 1;
                }
                if m.basis == alice_basis {
                    // eigenstate: deterministic outcome
                    assert_eq!(m.bit, alice_bit);
                } else {
                    cross_total += 1;
                    cross_ones += m.bit.as_u8() as usize;
                }
            }
            assert!((x_count as f64 / N as f64 - 0.5).abs() < three_sigma(0.5, N));
            let frac = cross_ones as f64 / cross_total as f64;
            assert!((frac - 0.5).abs() < three_sigma(0.5, cross_total));
        }
    }

    #[test]
    fn photon_resend_matches_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let alice = prepare_polarization(Basis::X, Bit::One);
        for _ in 0..100 {
            let (m, pol) = intercept_resend_photon(&alice, &mut rng);
            assert_eq!(pol, prepare_polarization(m.basis, m.bit));
        }
    }
}
