//! File formats: per-slot transcript CSV and JSON reports.
//!
//! A transcript file starts with `# key=value` metadata lines (tool version,
//! config hash, seed and the expectations the monitors need), followed by a
//! CSV table with the fixed column order of [`TRANSCRIPT_COLUMNS`]. Booleans
//! are written as `0`/`1`; an unreported slot has an empty outcome.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::config::SessionConfig;
use crate::devices::expected_double_click_prob;
use crate::protocol::{PublicView, SessionReport, Transcript, TOOL_VERSION};
use crate::quantum::{Basis, BellOutcome};

pub const TRANSCRIPT_COLUMNS: [&str; 8] = [
    "slot",
    "alice_basis",
    "alice_bit",
    "bob_basis",
    "bob_bit",
    "arrived",
    "reported_outcome",
    "double_click",
];

/// Columns Bob's monitors are allowed to read.
pub const PUBLIC_COLUMNS: [&str; 4] = ["slot", "bob_basis", "reported_outcome", "double_click"];

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("transcript line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn parse_err(line: u64, message: impl Into<String>) -> ExportError {
    ExportError::Parse {
        line,
        message: message.into(),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Metadata written ahead of the table.
pub fn transcript_metadata(cfg: &SessionConfig) -> Vec<(String, String)> {
    let expected_double = expected_double_click_prob(cfg.channel.transmittance, &cfg.detectors, cfg.wavelength_nm);
    vec![
        ("tool".into(), TOOL_VERSION.into()),
        ("config_sha256".into(), cfg.config_hash()),
        ("seed".into(), cfg.seed.to_string()),
        ("mode".into(), cfg.mode.name().into()),
        ("n_slots".into(), cfg.n_slots.to_string()),
        ("expected_report_rate".into(), cfg.expected_report_rate().to_string()),
        ("expected_double_click_prob".into(), expected_double.to_string()),
        ("alpha".into(), cfg.alpha.to_string()),
    ]
}

pub fn write_transcript_csv<W: Write>(
    mut out: W,
    transcript: &Transcript,
    metadata: &[(String, String)],
) -> Result<(), ExportError> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSCRIPT_COLUMNS).map_err(io::Error::from)?;
    for r in &transcript.records {
        let outcome = r.reported.map(|o| o.name()).unwrap_or("");
        w.write_record([
            r.slot.to_string().as_str(),
            &r.alice_basis.to_string(),
            &r.alice_bit.to_string(),
            &r.bob_basis.to_string(),
            &r.bob_bit.to_string(),
            flag(r.arrived),
            outcome,
            flag(r.double_click),
        ])
        .map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn transcript_csv_string(cfg: &SessionConfig, transcript: &Transcript) -> String {
    let mut buf = Vec::new();
    write_transcript_csv(&mut buf, transcript, &transcript_metadata(cfg)).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn report_json(report: &SessionReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// A transcript file read back through its public columns only.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicTranscript {
    pub view: PublicView,
    pub metadata: BTreeMap<String, String>,
}

impl PublicTranscript {
    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.parse().ok())
    }
}

fn parse_flag(s: &str, line: u64, column: &str) -> Result<bool, ExportError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(
            line,
            format!("column {column}: expected 0 or 1, got {other:?}"),
        )),
    }
}

pub fn read_public_transcript(text: &str) -> Result<PublicTranscript, ExportError> {
    let mut metadata = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let column = |name: &str| -> Result<usize, ExportError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1 + metadata.len() as u64, format!("missing column {name:?}")))
    };
    let [slot_i, basis_i, outcome_i, double_i] = [
        column(PUBLIC_COLUMNS[0])?,
        column(PUBLIC_COLUMNS[1])?,
        column(PUBLIC_COLUMNS[2])?,
        column(PUBLIC_COLUMNS[3])?,
    ];

    let mut view = PublicView::default();
    let mut last_slot: Option<u64> = None;
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let slot: u64 = field(slot_i)
            .parse()
            .map_err(|_| parse_err(line, format!("column slot: invalid index {:?}", field(slot_i))))?;
        if last_slot.is_some_and(|l| slot <= l) {
            return Err(parse_err(line, "slots must be strictly increasing"));
        }
        last_slot = Some(slot);
        view.n_slots += 1;
        let outcome = field(outcome_i);
        if !outcome.is_empty() {
            let o: BellOutcome = outcome.parse().map_err(|e: String| parse_err(line, e))?;
            let b: Basis = field(basis_i).parse().map_err(|e: String| parse_err(line, e))?;
            view.reported_slots.push(slot);
            view.outcomes.push(o);
            view.bob_bases.push(b);
        }
        if parse_flag(field(double_i), line, "double_click")? {
            view.double_click_slots.push(slot);
        }
    }
    Ok(PublicTranscript { view, metadata })
}
