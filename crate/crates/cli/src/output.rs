//! Deterministic CSV and JSON emission.
//!
//! Floats are written with Rust's shortest round-trip formatting: the same
//! bits always produce the same text, the decimal separator is '.', and a
//! reader recovers the exact value. The first CSV column carries the schema
//! version on every row.

use anyhow::{Context, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::experiment::{ExperimentOutput, Row};

pub const RUN_SCHEMA: &str = "run-v1";
pub const SWEEP_SCHEMA: &str = "sweep-v1";
pub const SUMMARY_SCHEMA: &str = "summary-v1";

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn push_row_fields(line: &mut String, row: &Row) {
    let q = row.q_omega.map(fmt).unwrap_or_default();
    write!(
        line,
        "{},{},{},{},{},{},{},{},{}",
        fmt(row.t),
        fmt(row.g),
        fmt(row.boson_number),
        fmt(row.purity),
        fmt(row.s_mag),
        fmt(row.theta),
        q,
        fmt(row.i_bound),
        fmt(row.i_bound_approx),
    )
    .expect("string write");
}

pub fn run_csv(output: &ExperimentOutput) -> String {
    let mut text =
        String::from("schema,t,g,N,purity,s_mag,theta,Q_omega,I_bound,I_bound_approx\n");
    for row in &output.rows {
        let mut line = format!("{RUN_SCHEMA},");
        push_row_fields(&mut line, row);
        text.push_str(&line);
        text.push('\n');
    }
    text
}

/// One sweep point expands to one line per emitted row; a failed point
/// yields a single line with empty metrics and the error in `status`.
pub struct SweepRecord {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub outcome: std::result::Result<ExperimentOutput, String>,
}

pub fn sweep_csv(axes: &[String], records: &[SweepRecord]) -> String {
    let mut text = String::from("schema,index");
    for axis in axes {
        write!(text, ",{axis}").expect("string write");
    }
    text.push_str(",t,g,N,purity,s_mag,theta,Q_omega,I_bound,I_bound_approx,alpha,alpha_residual,alpha_bound,status\n");

    for record in records {
        let mut prefix = format!("{SWEEP_SCHEMA},{}", record.index);
        for (_, value) in &record.values {
            write!(prefix, ",{}", fmt(*value)).expect("string write");
        }
        match &record.outcome {
            Ok(output) => {
                let alpha = output.report.alpha();
                let alpha_txt = alpha.map(|a| fmt(a.alpha)).unwrap_or_default();
                let resid_txt = alpha.map(|a| fmt(a.residual)).unwrap_or_default();
                let bound_txt = output
                    .alpha_bound
                    .as_ref()
                    .map(|a| fmt(a.alpha))
                    .unwrap_or_default();
                for row in &output.rows {
                    let mut line = prefix.clone();
                    line.push(',');
                    push_row_fields(&mut line, row);
                    writeln!(line, ",{alpha_txt},{resid_txt},{bound_txt},ok")
                        .expect("string write");
                    text.push_str(&line);
                }
            }
            Err(message) => {
                let mut line = prefix.clone();
                // Nine empty metric columns plus three empty fit columns.
                line.push_str(&",".repeat(12));
                writeln!(line, ",error: {}", message.replace([',', '\n'], ";"))
                    .expect("string write");
                text.push_str(&line);
            }
        }
    }
    text
}

#[derive(Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub residual: f64,
    pub window: [u32; 2],
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub schema: &'static str,
    pub config: &'a ExperimentConfig,
    pub phase_matched: bool,
    pub phase_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_bound: Option<AlphaSummary>,
    pub boson_number_final: f64,
    pub q_omega_final: f64,
    pub rows: usize,
    pub runtime_seconds: f64,
}

pub fn summary_json(
    config: &ExperimentConfig,
    output: &ExperimentOutput,
    runtime_seconds: f64,
) -> String {
    let to_alpha = |fit: &critcycle::metrology::AlphaFit| AlphaSummary {
        alpha: fit.alpha,
        residual: fit.residual,
        window: [fit.window.0, fit.window.1],
    };
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        config,
        phase_matched: output.phase_match.matched,
        phase_distance: output.phase_match.distance,
        alpha: output.report.alpha().map(to_alpha),
        alpha_bound: output.alpha_bound.as_ref().map(to_alpha),
        boson_number_final: output.rows.last().map(|r| r.boson_number).unwrap_or(0.0),
        q_omega_final: *output.report.q_omega().last().unwrap_or(&0.0),
        rows: output.rows.len(),
        runtime_seconds,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
