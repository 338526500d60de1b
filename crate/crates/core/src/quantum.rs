//! Single-photon state algebra for the receiver-side Bell measurement.
//!
//! A photon carries two qubits: Alice writes a BB84 state into its
//! polarization, Bob writes a BB84 state into its spatial mode. The joint
//! state lives in the four-dimensional space spanned by `H·a, H·b, V·a, V·b`
//! and the untrusted device projects it onto the Bell basis
//!
//! ```text
//! Φ± = (H·a ± V·b)/√2      Ψ± = (H·b ± V·a)/√2
//! ```
//!
//! With this pairing a same-basis event reveals `alice_bit ⊕ bob_bit`:
//! in Z the Φ/Ψ distinction carries it, in X the +/− sign does.

use std::fmt;
use std::ops::BitXor;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("state is not normalized: squared norm {0}")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => f.write_str("Z"),
            Basis::X => f.write_str("X"),
        }
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Z" => Ok(Basis::Z),
            "X" => Ok(Basis::X),
            other => Err(format!("unknown basis {other:?}")),
        }
    }
}

/// One classical bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub const ALL: [Bit; 2] = [Bit::Zero, Bit::One];

    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.as_u8()
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            other => Err(format!("bit must be 0 or 1, got {other}")),
        }
    }
}

impl BitXor for Bit {
    type Output = Bit;

    fn bitxor(self, rhs: Bit) -> Bit {
        Bit::from(self != rhs)
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The four Bell states; each is served by its own detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellOutcome {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellOutcome {
    /// Detector order used by every 4-element array in the crate.
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BellOutcome::PhiPlus => "PhiPlus",
            BellOutcome::PhiMinus => "PhiMinus",
            BellOutcome::PsiPlus => "PsiPlus",
            BellOutcome::PsiMinus => "PsiMinus",
        }
    }

    fn is_phi(self) -> bool {
        matches!(self, BellOutcome::PhiPlus | BellOutcome::PhiMinus)
    }

    fn is_plus(self) -> bool {
        matches!(self, BellOutcome::PhiPlus | BellOutcome::PsiPlus)
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BellOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BellOutcome::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown Bell outcome {s:?}"))
    }
}

fn check_norm(amps: &[Complex64]) -> Result<(), StateError> {
    let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if (n - 1.0).abs() <= NORM_TOLERANCE {
        Ok(())
    } else {
        Err(StateError::NotNormalized(n))
    }
}

/// BB84 amplitudes `(|0⟩, |1⟩)` for a basis/bit pair.
fn bb84_amplitudes(basis: Basis, bit: Bit) -> [Complex64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match (basis, bit) {
        (Basis::Z, Bit::Zero) => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        (Basis::Z, Bit::One) => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        (Basis::X, Bit::Zero) => [Complex64::new(s, 0.0), Complex64::new(s, 0.0)],
        (Basis::X, Bit::One) => [Complex64::new(s, 0.0), Complex64::new(-s, 0.0)],
    }
}

/// Polarization qubit with amplitudes over (H, V).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationQubit {
    h: Complex64,
    v: Complex64,
}

impl PolarizationQubit {
    pub fn new(h: Complex64, v: Complex64) -> Result<Self, StateError> {
        check_norm(&[h, v])?;
        Ok(Self { h, v })
    }

    pub fn h(&self) -> Complex64 {
        self.h
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    /// Probability of finding `bit` when measuring in `basis`.
    pub fn born_probability(&self, basis: Basis, bit: Bit) -> f64 {
        let [e0, e1] = bb84_amplitudes(basis, bit);
        (e0.conj() * self.h + e1.conj() * self.v).norm_sqr()
    }
}

/// Spatial qubit with amplitudes over Bob's output modes (a, b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialQubit {
    a: Complex64,
    b: Complex64,
}

impl SpatialQubit {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self, StateError> {
        check_norm(&[a, b])?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn b(&self) -> Complex64 {
        self.b
    }
}

/// H→0, V→1 in Z; D→0, A→1 in X.
pub fn prepare_polarization(basis: Basis, bit: Bit) -> PolarizationQubit {
    let [h, v] = bb84_amplitudes(basis, bit);
    PolarizationQubit { h, v }
}

/// a→0, b→1 in Z; (a±b)/√2 → 0/1 in X.
pub fn prepare_spatial(basis: Basis, bit: Bit) -> SpatialQubit {
    let [a, b] = bb84_amplitudes(basis, bit);
    SpatialQubit { a, b }
}

/// Amplitudes ordered `(H·a, H·b, V·a, V·b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPhotonState {
    amps: [Complex64; 4],
}

impl JointPhotonState {
    pub fn new(amps: [Complex64; 4]) -> Result<Self, StateError> {
        check_norm(&amps)?;
        Ok(Self { amps })
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amps
    }

    /// The Bell state itself, as a joint state.
    pub fn bell_state(outcome: BellOutcome) -> Self {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let amps = match outcome {
            BellOutcome::PhiPlus => [s, z, z, s],
            BellOutcome::PhiMinus => [s, z, z, -s],
            BellOutcome::PsiPlus => [z, s, s, z],
            BellOutcome::PsiMinus => [z, s, -s, z],
        };
        Self { amps }
    }
}

/// Product state of a polarization and a spatial qubit. Both inputs are
/// normalized by construction, so the product is too.
pub fn tensor(pol: &PolarizationQubit, spa: &SpatialQubit) -> JointPhotonState {
    JointPhotonState {
        amps: [pol.h * spa.a, pol.h * spa.b, pol.v * spa.a, pol.v * spa.b],
    }
}

/// Born probabilities of the four Bell outcomes, indexed like [`BellOutcome::ALL`].
pub fn bell_probabilities(state: &JointPhotonState) -> [f64; 4] {
    let [ha, hb, va, vb] = state.amps;
    [
        (ha + vb).norm_sqr() / 2.0,
        (ha - vb).norm_sqr() / 2.0,
        (hb + va).norm_sqr() / 2.0,
        (hb - va).norm_sqr() / 2.0,
    ]
}

/// `alice_bit ⊕ bob_bit` implied by a same-basis outcome.
pub fn xor_from_outcome(outcome: BellOutcome, basis: Basis) -> Bit {
    match basis {
        Basis::Z => Bit::from(!outcome.is_phi()),
        Basis::X => Bit::from(!outcome.is_plus()),
    }
}

/// Recovers the partner's bit from an announced outcome and one's own bit.
pub fn infer_bit(outcome: BellOutcome, basis: Basis, known_bit: Bit) -> Bit {
    known_bit ^ xor_from_outcome(outcome, basis)
}
