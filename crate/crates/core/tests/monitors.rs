//! Calibration and power of the public-view monitors.

use ddiqkd_core::analysis::{gap_parity_uniformity, leakage, Verdict};
use ddiqkd_core::protocol::{derive_session_seed, run_session};
use ddiqkd_core::quantum::Bit;
use ddiqkd_core::{parse_config, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const ALPHA: f64 = 0.01;

fn rejection_rates(cfgs: Vec<SessionConfig>) -> [f64; 4] {
    let n = cfgs.len() as f64;
    let rejects: Vec<[bool; 4]> = cfgs
        .into_par_iter()
        .map(|c| {
            let d = run_session(&c).unwrap().1.detectability;
            [
                d.gap_parity_verdict,
                d.rate_verdict,
                d.outcome_uniformity_verdict,
                Some(d.double_click_verdict),
            ]
            .map(|v| v == Some(Verdict::Reject))
        })
        .collect();
    std::array::from_fn(|k| rejects.iter().filter(|r| r[k]).count() as f64 / n)
}

fn honest_sessions(dark: f64, master: u64) -> Vec<SessionConfig> {
    (0..1000)
        .map(|i| {
            parse_config(&format!(
                r#"{{"n_slots": 20000, "seed": {}, "channel": {{"transmittance": 0.1}},
                    "detectors": {{"efficiency": 0.2, "dark_count_prob": {dark}}}, "eta_expected": 0.2}}"#,
                derive_session_seed(master, i)
            ))
            .unwrap()
        })
        .collect()
}

#[test]
fn honest_false_positive_rates_stay_below_two_alpha() {
    let rates = rejection_rates(honest_sessions(0.0, 100));
    assert!(rates.iter().all(|r| *r <= 2.0 * ALPHA), "{rates:?}");
    assert_eq!(rates[3], 0.0);
}

#[test]
fn double_click_monitor_is_calibrated_with_dark_counts() {
    // dark clicks also shift the report rate, so only the double-click
    // monitor is judged here
    let rates = rejection_rates(honest_sessions(1e-3, 101));
    assert!(rates[3] <= 2.0 * ALPHA, "{rates:?}");
}

#[test]
fn symmetric_blinding_double_clicks_are_caught() {
    let cfgs = (0..200)
        .map(|i| {
            parse_config(&format!(
                r#"{{"n_slots": 10000, "seed": {}, "channel": {{"transmittance": 0.1}},
                    "mode": {{"type": "blinding", "search": {{"wavelengths": [1550], "powers": [1.0, 2.0, 3.0]}}}}}}"#,
                derive_session_seed(102, i)
            ))
            .unwrap()
        })
        .collect();
    let rates = rejection_rates(cfgs);
    assert!(rates[3] >= 0.99, "{rates:?}");
}

fn covert(n: u64, seed: u64, extra: &str, key: &str) -> SessionConfig {
    parse_config(&format!(
        r#"{{"n_slots": {n}, "seed": {seed}, "channel": {{"transmittance": 0.1}}, "eta_expected": 0.2, {extra}
            "mode": {{"type": "covert_attack", "eta_true": 0.9, "key_seed": {key}}}}}"#
    ))
    .unwrap()
}

#[test]
fn unthinned_covert_rate_is_flagged() {
    let cfgs: Vec<SessionConfig> = (0..50)
        .map(|i| {
            let mut c = covert(50_000, derive_session_seed(103, i), "", "1");
            if let ddiqkd_core::config::Mode::CovertAttack(p) = &mut c.mode {
                p.thinning = false;
            }
            c
        })
        .collect();
    let z: Vec<f64> = cfgs
        .par_iter()
        .map(|c| run_session(c).unwrap().1.detectability.rate_z_score.unwrap())
        .collect();
    assert!(z.iter().all(|z| *z > 3.0), "{z:?}");
}

#[test]
fn keying_hides_biased_bits() {
    // Bob's bits all 1: keyed gaps stay balanced, unkeyed gaps are all even
    let (t, _) = run_session(&covert(200_000, 7, r#""bob_bit_one_prob": 1.0,"#, "99")).unwrap();
    let slots = t.public_view().reported_slots;
    let gaps = (slots.len() - 1) as f64;
    let even = slots.windows(2).filter(|w| (w[1] - w[0]) % 2 == 0).count() as f64;
    assert!(
        (even / gaps - 0.5).abs() < 3.0 * (0.25 / gaps).sqrt(),
        "{even} of {gaps}"
    );

    let (t, _) = run_session(&covert(20_000, 7, r#""bob_bit_one_prob": 1.0,"#, "null")).unwrap();
    let slots = t.public_view().reported_slots;
    assert!(slots.windows(2).all(|w| (w[1] - w[0]) % 2 == 0));
    assert!(gap_parity_uniformity(&slots).unwrap().p_value < 1e-6);
}

#[test]
fn guessing_eve_matches_half_of_an_honest_key() {
    let c = parse_config(r#"{"n_slots": 200000, "seed": 8, "channel": {"transmittance": 0.5}}"#).unwrap();
    let (t, _) = run_session(&c).unwrap();
    let bob: Vec<Bit> = t
        .records
        .iter()
        .filter(|r| r.reported.is_some())
        .map(|r| r.bob_bit)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let eve: Vec<Bit> = bob.iter().map(|_| Bit::from(rng.random::<bool>())).collect();
    let f = leakage(&eve, &bob).unwrap();
    assert!((f - 0.5).abs() < 3.0 * (0.25 / bob.len() as f64).sqrt(), "{f}");
}
