//! Offline detectability analysis of a transcript file. Only the public
//! columns are read.

use std::path::Path;

use ddiqkd_core::analysis::{detectability, DetectabilityReport};
use ddiqkd_core::export::read_public_transcript;
use ddiqkd_core::protocol::TOOL_VERSION;
use serde::Serialize;

use crate::{read_file, write_file, CliError};

const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Serialize)]
pub struct AnalysisOutput {
    pub tool_version: String,
    /// Tool that wrote the transcript, from its metadata.
    pub transcript_tool: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub detectability: DetectabilityReport,
}

pub fn analyze_text(text: &str, expected_rate: Option<f64>, alpha: Option<f64>) -> Result<AnalysisOutput, CliError> {
    let t = read_public_transcript(text).map_err(|source| CliError::Transcript {
        path: "transcript".into(),
        source,
    })?;
    let alpha = alpha.or_else(|| t.meta_f64("alpha")).unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let rate = expected_rate.or_else(|| t.meta_f64("expected_report_rate"));
    let expected_double = t.meta_f64("expected_double_click_prob");
    let mut report = detectability(&t.view, rate, expected_double.unwrap_or(0.0), alpha);
    if expected_double.is_none() {
        report
            .notes
            .push("no expected double-click probability in metadata: any double click rejects".into());
    }
    Ok(AnalysisOutput {
        tool_version: TOOL_VERSION.to_string(),
        transcript_tool: t.metadata.get("tool").cloned(),
        config_sha256: t.metadata.get("config_sha256").cloned(),
        seed: t.metadata.get("seed").and_then(|s| s.parse().ok()),
        mode: t.metadata.get("mode").cloned(),
        detectability: report,
    })
}

pub fn analyze(
    transcript: &Path,
    out: &Path,
    expected_rate: Option<f64>,
    alpha: Option<f64>,
) -> Result<String, CliError> {
    let text = read_file(transcript)?;
    let output = analyze_text(&text, expected_rate, alpha).map_err(|e| match e {
        CliError::Transcript { source, .. } => CliError::Transcript {
            path: transcript.to_path_buf(),
            source,
        },
        other => other,
    })?;
    let mut json = serde_json::to_string_pretty(&output).expect("report serializes");
    json.push('\n');
    write_file(out, json.as_bytes())?;
    let d = &output.detectability;
    Ok(format!(
        "{} reports over {} slots, all monitors pass: {}; wrote {}",
        d.reports,
        d.n_slots,
        d.all_pass(),
        out.display()
    ))
}
