//! Monitors Bob can run on what he sees, and leakage metrics for the
//! experimenter.
//!
//! Every monitor takes the public view only: reported slots, their Bell
//! outcomes and the double-click slots.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};
use thiserror::Error;

use crate::protocol::PublicView;
use crate::quantum::{BellOutcome, Bit};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Reject,
}

impl Verdict {
    fn reject_if(cond: bool) -> Verdict {
        if cond {
            Verdict::Reject
        } else {
            Verdict::Pass
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub p_value: f64,
}

fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("positive dof")
        .sf(statistic)
        .clamp(0.0, 1.0)
}

/// Chi-square test (1 dof) of even against odd gaps between consecutive
/// reports, expecting a 50/50 split. Absent with fewer than two reports.
pub fn gap_parity_uniformity(reported_slots: &[u64]) -> Option<ChiSquareTest> {
    if reported_slots.len() < 2 {
        return None;
    }
    let gaps = reported_slots.len() - 1;
    let even = reported_slots
        .windows(2)
        .filter(|w| w[1].wrapping_sub(w[0]) % 2 == 0)
        .count();
    let expected = gaps as f64 / 2.0;
    let odd = gaps - even;
    let statistic = ((even as f64 - expected).powi(2) + (odd as f64 - expected).powi(2)) / expected;
    Some(ChiSquareTest {
        statistic,
        p_value: chi_square_sf(statistic, 1.0),
    })
}

/// Normal-approximation z-score of the report count against the binomial
/// rate Bob expects. Absent when the expected rate is 0 or 1.
pub fn rate_consistency(observed_reports: u64, n_slots: u64, expected_rate: f64) -> Option<f64> {
    let n = n_slots as f64;
    let var = n * expected_rate * (1.0 - expected_rate);
    (var > 0.0).then(|| (observed_reports as f64 - n * expected_rate) / var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeHistogram {
    pub counts: [u64; 4],
    pub frequencies: [f64; 4],
    pub chi_square: f64,
    pub p_value: f64,
}

/// Reported outcome frequencies tested (3 dof) against the uniform
/// distribution an honest device produces with uniform bases and bits.
pub fn outcome_histogram(outcomes: &[BellOutcome]) -> Option<OutcomeHistogram> {
    if outcomes.is_empty() {
        return None;
    }
    let mut counts = [0u64; 4];
    for o in outcomes {
        counts[o.index()] += 1;
    }
    let n = outcomes.len() as f64;
    let expected = n / 4.0;
    let chi_square = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    Some(OutcomeHistogram {
        counts,
        frequencies: counts.map(|c| c as f64 / n),
        chi_square,
        p_value: chi_square_sf(chi_square, 3.0),
    })
}

/// Fraction of positions where Eve's bit equals Bob's; 0 for empty input.
pub fn leakage(eve_bits: &[Bit], bob_bits: &[Bit]) -> Result<f64, AnalysisError> {
    if eve_bits.len() != bob_bits.len() {
        return Err(AnalysisError::LengthMismatch(eve_bits.len(), bob_bits.len()));
    }
    if eve_bits.is_empty() {
        return Ok(0.0);
    }
    let matched = eve_bits.iter().zip(bob_bits).filter(|(a, b)| a == b).count();
    Ok(matched as f64 / eve_bits.len() as f64)
}

/// Double-click slots per slot.
pub fn double_click_rate(view: &PublicView) -> f64 {
    if view.n_slots == 0 {
        return 0.0;
    }
    view.double_click_slots.len() as f64 / view.n_slots as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov–Smirnov distance between the gap distribution and a geometric
/// law with success probability `rate`. Goes beyond the parity monitor by
/// looking at the whole gap distribution; the asymptotic p-value is
/// conservative for discrete data.
pub fn gap_geometric_ks(reported_slots: &[u64], rate: f64) -> Option<KsTest> {
    if reported_slots.len() < 2 || !(rate > 0.0 && rate < 1.0) {
        return None;
    }
    let mut gaps: Vec<u64> = reported_slots.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let m = gaps.len() as f64;
    let cdf = |k: u64| 1.0 - (1.0 - rate).powf(k as f64);
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < gaps.len() {
        let k = gaps[i];
        let below = i as f64 / m;
        while i < gaps.len() && gaps[i] == k {
            i += 1;
        }
        let at = i as f64 / m;
        // both step functions jump only at integers
        d = d.max((at - cdf(k)).abs()).max((below - cdf(k - 1)).abs());
    }
    let sqrt_m = m.sqrt();
    let lambda = (sqrt_m + 0.12 + 0.11 / sqrt_m) * d;
    Some(KsTest {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    })
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    pub alpha: f64,
    pub reports: u64,
    pub n_slots: u64,
    pub gap_parity_chi_square: Option<f64>,
    pub gap_parity_p_value: Option<f64>,
    pub gap_parity_verdict: Option<Verdict>,
    pub expected_report_rate: Option<f64>,
    pub rate_z_score: Option<f64>,
    pub rate_verdict: Option<Verdict>,
    pub outcome_counts: Option<[u64; 4]>,
    pub outcome_uniformity_p_value: Option<f64>,
    pub outcome_uniformity_verdict: Option<Verdict>,
    pub double_click_rate: f64,
    pub expected_double_click_prob: f64,
    /// Exact binomial probability of at least the observed double clicks.
    pub double_click_p_value: f64,
    pub double_click_verdict: Verdict,
    /// Informational; not part of the verdict set.
    pub gap_ks_statistic: Option<f64>,
    pub gap_ks_p_value: Option<f64>,
    pub notes: Vec<String>,
}

impl DetectabilityReport {
    /// Every verdict present is a pass.
    pub fn all_pass(&self) -> bool {
        [
            self.gap_parity_verdict,
            self.rate_verdict,
            self.outcome_uniformity_verdict,
            Some(self.double_click_verdict),
        ]
        .iter()
        .flatten()
        .all(|v| *v == Verdict::Pass)
    }
}

/// Upper-tail probability `P(X >= doubles)` for `X ~ Binomial(n_slots, p)`.
/// Exact rather than normal, since honest double clicks are rare.
pub fn double_click_p_value(doubles: u64, n_slots: u64, p: f64) -> f64 {
    if doubles == 0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    Binomial::new(p.min(1.0), n_slots).map_or(0.0, |b| b.sf(doubles - 1).clamp(0.0, 1.0))
}

/// Runs every monitor on the public view.
///
/// `expected_rate` is the per-slot report rate Bob expects; without it the
/// rate monitor is skipped. `expected_double` is the honest per-slot
/// double-click probability; the double-click monitor rejects when the
/// exact binomial upper tail falls below `alpha`, so with an expectation of 0
/// any double click rejects.
pub fn detectability(
    view: &PublicView,
    expected_rate: Option<f64>,
    expected_double: f64,
    alpha: f64,
) -> DetectabilityReport {
    let normal = Normal::standard();
    let two_sided = normal.inverse_cdf(1.0 - alpha / 2.0);
    let mut notes = Vec::new();

    let gap = gap_parity_uniformity(&view.reported_slots);
    if gap.is_none() {
        notes.push("fewer than two reports: gap-parity monitor absent".to_string());
    }
    let reports = view.reported_slots.len() as u64;
    let z = expected_rate.and_then(|r| rate_consistency(reports, view.n_slots, r));
    if z.is_none() {
        notes.push("no usable expected report rate: rate monitor absent".to_string());
    }
    let hist = outcome_histogram(&view.outcomes);
    if hist.is_none() {
        notes.push("no reports: outcome-uniformity monitor absent".to_string());
    }
    let dc_rate = double_click_rate(view);
    let dc_p = double_click_p_value(view.double_click_slots.len() as u64, view.n_slots, expected_double);
    let ks_rate = expected_rate.filter(|r| *r > 0.0 && *r < 1.0);
    let ks = ks_rate.and_then(|r| gap_geometric_ks(&view.reported_slots, r));

    DetectabilityReport {
        alpha,
        reports,
        n_slots: view.n_slots,
        gap_parity_chi_square: gap.map(|g| g.statistic),
        gap_parity_p_value: gap.map(|g| g.p_value),
        gap_parity_verdict: gap.map(|g| Verdict::reject_if(g.p_value < alpha)),
        expected_report_rate: expected_rate,
        rate_z_score: z,
        rate_verdict: z.map(|z| Verdict::reject_if(z.abs() > two_sided)),
        outcome_counts: hist.map(|h| h.counts),
        outcome_uniformity_p_value: hist.map(|h| h.p_value),
        outcome_uniformity_verdict: hist.map(|h| Verdict::reject_if(h.p_value < alpha)),
        double_click_rate: dc_rate,
        expected_double_click_prob: expected_double,
        double_click_p_value: dc_p,
        double_click_verdict: Verdict::reject_if(dc_p < alpha),
        gap_ks_statistic: ks.map(|k| k.statistic),
        gap_ks_p_value: ks.map(|k| k.p_value),
        notes,
    }
}
