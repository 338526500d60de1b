//! Cartesian parameter sweeps.
//!
//! The grid file is a JSON object mapping parameter names to non-empty
//! lists of numbers. Points enumerate the cartesian product with keys in
//! sorted order and the last key varying fastest. Session `s` of every point
//! uses the seed `derive_session_seed(master, s)`, so points share random
//! streams and curves across a sweep are smooth. Rows come out ordered by
//! (point, session) whatever order the worker pool finishes in.

use std::collections::BTreeMap;
use std::path::Path;

use ddiqkd_core::config::parse_config_value;
use ddiqkd_core::protocol::{covert_feasibility, derive_session_seed, run_session, SessionReport, TOOL_VERSION};
use ddiqkd_core::SessionConfig;
use rayon::prelude::*;
use serde_json::Value;

use crate::{load_config, read_file, write_file, CliError};

/// Parameters a grid may vary, with the JSON pointer each one sets in the
/// normalized config (`*` expands to all four detectors).
pub const PARAMETERS: [(&str, &str); 8] = [
    ("transmittance", "/channel/transmittance"),
    ("eta_expected", "/eta_expected"),
    ("efficiency", "/detectors/*/efficiency"),
    ("dark_count_prob", "/detectors/*/dark_count_prob"),
    ("basis_choice_prob", "/basis_choice_prob"),
    ("eta_true", "/mode/eta_true"),
    ("readout_success_prob", "/mode/trojan/readout_success_prob"),
    ("pulse_power", "/mode/intercept/pulse_power"),
];

pub type Grid = BTreeMap<String, Vec<f64>>;

pub fn parse_grid(text: &str) -> Result<Grid, CliError> {
    let grid: Grid = serde_json::from_str(text)
        .map_err(|e| CliError::Usage(format!("grid must map parameter names to lists of numbers: {e}")))?;
    if grid.is_empty() {
        return Err(CliError::Usage("grid is empty".into()));
    }
    for (name, values) in &grid {
        if !PARAMETERS.iter().any(|(p, _)| p == name) {
            let known: Vec<&str> = PARAMETERS.iter().map(|(p, _)| *p).collect();
            return Err(CliError::Usage(format!(
                "unknown grid parameter `{name}` (known: {})",
                known.join(", ")
            )));
        }
        if values.is_empty() {
            return Err(CliError::Usage(format!("grid parameter `{name}` has no values")));
        }
    }
    Ok(grid)
}

/// Cartesian product of the grid, one `(name, value)` list per point.
pub fn grid_points(grid: &Grid) -> Vec<Vec<(String, f64)>> {
    let mut points = vec![Vec::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((name.clone(), *v));
                    q
                })
            })
            .collect();
    }
    points
}

fn set(doc: &mut Value, pointer: &str, value: f64, name: &str) -> Result<(), CliError> {
    let slot = doc
        .pointer_mut(pointer)
        .ok_or_else(|| CliError::Usage(format!("grid parameter `{name}` does not apply to this config")))?;
    *slot = Value::from(value);
    Ok(())
}

/// Applies one grid point to the base config and revalidates it.
pub fn apply_point(base: &SessionConfig, point: &[(String, f64)]) -> Result<SessionConfig, CliError> {
    let mut doc = serde_json::to_value(base.to_doc()).expect("config serializes");
    for (name, value) in point {
        let pointer = PARAMETERS
            .iter()
            .find(|(p, _)| p == name)
            .map(|(_, ptr)| *ptr)
            .ok_or_else(|| CliError::Usage(format!("unknown grid parameter `{name}`")))?;
        if pointer.contains('*') {
            for i in 0..4 {
                set(&mut doc, &pointer.replace('*', &i.to_string()), *value, name)?;
            }
        } else {
            set(&mut doc, pointer, *value, name)?;
        }
    }
    let label: Vec<String> = point.iter().map(|(n, v)| format!("{n}={v}")).collect();
    parse_config_value(doc).map_err(|e| CliError::Usage(format!("grid point {}: {e}", label.join(", "))))
}

const REPORT_COLUMNS: [&str; 21] = [
    "mode",
    "feasible",
    "achievable_rate",
    "required_rate",
    "error",
    "sent",
    "arrived",
    "reported",
    "sifted",
    "qber",
    "key_rate",
    "reported_rate",
    "double_click_rate",
    "eve_leak_fraction",
    "gap_parity_p_value",
    "rate_z_score",
    "outcome_uniformity_p_value",
    "all_monitors_pass",
    "covert_thinning_prob",
    "plan_peak_power",
    "plan_wavelength",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn report_fields(cfg: &SessionConfig, outcome: &Result<SessionReport, String>) -> Vec<String> {
    let f = covert_feasibility(cfg);
    let mut row = vec![
        cfg.mode.name().to_string(),
        match (&f, outcome) {
            (Some(f), _) => f.is_feasible().to_string(),
            (None, r) => r.is_ok().to_string(),
        },
        opt(f.map(|f| f.achievable)),
        opt(f.map(|f| f.required)),
    ];
    match outcome {
        Err(e) => {
            row.push(e.clone());
            row.resize(REPORT_COLUMNS.len(), String::new());
        }
        Ok(r) => {
            let d = &r.detectability;
            row.extend([
                String::new(),
                r.sent.to_string(),
                r.arrived.to_string(),
                r.reported.to_string(),
                r.sifted.to_string(),
                opt(r.qber),
                r.key_rate.to_string(),
                r.reported_rate.to_string(),
                r.double_click_rate.to_string(),
                r.eve_leak_fraction.to_string(),
                opt(d.gap_parity_p_value),
                opt(d.rate_z_score),
                opt(d.outcome_uniformity_p_value),
                d.all_pass().to_string(),
                opt(r.covert_thinning_prob),
                opt(r.blinding_plan.map(|p| p.peak_power)),
                opt(r.blinding_plan.map(|p| p.wavelength)),
            ]);
        }
    }
    row
}

/// Runs the sweep and returns the CSV text.
pub fn sweep_csv(base: &SessionConfig, grid: &Grid, seeds: u64, master: u64) -> Result<String, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let points = grid_points(grid);
    let configs = points
        .iter()
        .map(|p| apply_point(base, p))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|p| (0..seeds).map(move |s| (p, s)))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(p, s)| {
            let mut cfg = configs[p].clone();
            cfg.seed = derive_session_seed(master, s);
            let outcome = run_session(&cfg).map(|(_, r)| r).map_err(|e| {
                if e.is_infeasible() {
                    e.to_string()
                } else {
                    format!("session failed: {e}")
                }
            });
            let mut row = vec![p.to_string(), s.to_string(), cfg.seed.to_string()];
            row.extend(points[p].iter().map(|(_, v)| v.to_string()));
            row.extend(report_fields(&cfg, &outcome));
            row.push(TOOL_VERSION.to_string());
            row.push(cfg.config_hash());
            row
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = vec!["point", "session", "seed"];
    header.extend(grid.keys().map(String::as_str));
    header.extend(REPORT_COLUMNS);
    header.extend(["tool_version", "config_sha256"]);
    w.write_record(&header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    Ok(String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8"))
}

pub fn sweep(config: &Path, grid: &Path, seeds: u64, seed: Option<u64>, out: &Path) -> Result<String, CliError> {
    let base = load_config(config)?;
    let grid = parse_grid(&read_file(grid)?)?;
    let master = seed.unwrap_or(base.seed);
    let csv = sweep_csv(&base, &grid, seeds, master)?;
    write_file(out, csv.as_bytes())?;
    let points = grid.values().map(Vec::len).product::<usize>();
    Ok(format!(
        "{points} points x {seeds} sessions (master seed {master}); wrote {}",
        out.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddiqkd_core::config::Mode;
    use ddiqkd_core::parse_config;

    #[test]
    fn points_follow_sorted_keys_last_fastest() {
        let grid = parse_grid(r#"{"transmittance": [0.1, 0.2], "eta_expected": [0.3, 0.4, 0.5]}"#).unwrap();
        let points = grid_points(&grid);
        assert_eq!(points.len(), 6);
        let flat: Vec<(f64, f64)> = points.iter().map(|p| (p[0].1, p[1].1)).collect();
        assert_eq!(
            flat,
            [(0.3, 0.1), (0.3, 0.2), (0.4, 0.1), (0.4, 0.2), (0.5, 0.1), (0.5, 0.2)]
        );
        assert_eq!(points[0][0].0, "eta_expected");
    }

    #[test]
    fn parameters_reach_their_fields() {
        let base = parse_config(
            r#"{"mode": {"type": "covert_attack", "eta_true": 0.9, "trojan": {"readout_success_prob": 1.0}}}"#,
        )
        .unwrap();
        let point: Vec<(String, f64)> = [
            ("transmittance", 0.3),
            ("efficiency", 0.4),
            ("dark_count_prob", 0.001),
            ("eta_true", 0.7),
            ("readout_success_prob", 0.5),
            ("eta_expected", 0.1),
        ]
        .iter()
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
        let c = apply_point(&base, &point).unwrap();
        assert_eq!(c.channel.transmittance, 0.3);
        assert_eq!(c.eta_expected, 0.1);
        assert!(c
            .detectors
            .iter()
            .all(|d| d.efficiency_at(1550.0) == 0.4 && d.dark_count_prob == 0.001));
        match c.mode {
            Mode::CovertAttack(p) => {
                assert_eq!(p.eta_true, 0.7);
                assert_eq!(p.trojan.readout_success_prob, 0.5);
            }
            other => panic!("{other:?}"),
        }
        assert!(apply_point(&parse_config("{}").unwrap(), &[("pulse_power".into(), 2.0)]).is_err());
    }

    #[test]
    fn infeasible_points_become_rows() {
        let base = parse_config(
            r#"{"n_slots": 500, "channel": {"transmittance": 0.1}, "mode": {"type": "covert_attack", "eta_true": 0.9}}"#,
        )
        .unwrap();
        let grid = parse_grid(r#"{"eta_expected": [0.2, 0.6]}"#).unwrap();
        let csv = sweep_csv(&base, &grid, 2, 7).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].contains(",true,") && lines[3].contains(",false,"));
        assert!(lines[3].contains("infeasible covert attack"));
        // sessions share seeds across points
        let seed = |l: &str| l.split(',').nth(2).unwrap().to_string();
        assert_eq!(seed(lines[1]), seed(lines[3]));
        assert_ne!(seed(lines[1]), seed(lines[2]));
        assert!(sweep_csv(&base, &grid, 0, 7).is_err());
    }
}
