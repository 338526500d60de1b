//! Simulation of detector-device-independent QKD, where Bob encodes onto the
//! received photon with trusted optics and an untrusted device performs a
//! single-photon Bell measurement.
//!
//! Besides honest sessions the crate runs two attacks on that untrusted
//! device and measures how visible they are to Bob:
//!
//! * a covert channel in which the device reports a post-selected subset of
//!   its detections and encodes Bob's bits (learned through a Trojan-horse
//!   readout) in the parity of the slot gaps between reports;
//! * detector blinding, where Eve intercepts Alice's photons and resends
//!   bright pulses that only click when her basis matches Bob's.
//!
//! Modules, bottom up: [`quantum`], [`devices`], [`channel`], [`covert`],
//! [`blinding`], [`protocol`], [`analysis`], plus [`config`] and [`export`]
//! for the file formats.

pub mod analysis;
pub mod blinding;
pub mod channel;
pub mod config;
pub mod covert;
pub mod devices;
pub mod export;
pub mod protocol;
pub mod quantum;

pub use config::{parse_config, SessionConfig};
pub use protocol::{run_session, SessionReport, Transcript};
