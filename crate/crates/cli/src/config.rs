//! Experiment configuration: a flat TOML file plus command-line overrides set
//! with `--set key=value`, parsed strictly (unknown keys are errors) and
//! range-checked before any computation starts.

use anyhow::{anyhow, bail, Context, Result};
use critcycle::metrology::CouplingConvention;
use critcycle::protocol::{ProtocolSchedule, RampShape};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Everything is expressed through the dimensionless groups of the problem
/// (w tau and 2 tau kappa); omega only sets the units and defaults to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub omega: f64,
    /// Dimensionless half-cycle duration w tau.
    pub tau_omega: f64,
    pub g_tau: f64,
    pub cycles: u32,
    /// Dimensionless dissipation 2 tau kappa.
    pub kappa_2tau: f64,
    /// Environment occupation.
    pub n_th: f64,
    /// Initial thermal occupation of the mode.
    pub n_beta: f64,
    /// Relative half-width of the frequency derivative step.
    pub eps_rel: f64,
    /// Integration steps per half-cycle; 0 picks the converged default.
    pub step_divisor: u32,
    /// "fixed-physical" (g rescales with 1/sqrt(w)) or "fixed-rescaled".
    pub coupling: String,
    /// Inclusive cycle window for the exponent fit.
    pub fit_window: [u32; 2],
    /// Reserved; every computation is deterministic in v1.
    pub seed: u64,
    pub out_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: String,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values2: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            tau_omega: 8.0,
            g_tau: 1.0,
            cycles: 10,
            kappa_2tau: 0.0,
            n_th: 0.0,
            n_beta: 0.0,
            eps_rel: 1e-8,
            step_divisor: 0,
            coupling: "fixed-physical".into(),
            fit_window: [5, 10],
            seed: 0,
            out_dir: ".".into(),
            sweep: None,
        }
    }
}

pub const SWEEP_AXES: &[&str] = &["tau_omega", "g_tau", "kappa_2tau", "n_th", "n_beta"];

impl ExperimentConfig {
    /// Load from an optional TOML file, apply `--set key=value` overrides
    /// (overrides win), then parse strictly and range-check.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for entry in overrides {
            apply_override(&mut table, entry)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| anyhow!("invalid config: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            bail!("omega = {} must be positive", self.omega);
        }
        if !(self.tau_omega > 0.0 && self.tau_omega <= 100.0) {
            bail!("tau_omega = {} outside (0, 100]", self.tau_omega);
        }
        if !(0.0..=1.0).contains(&self.g_tau) {
            bail!("g_tau = {} outside [0, 1]", self.g_tau);
        }
        if !(1..=64).contains(&self.cycles) {
            bail!("cycles = {} outside [1, 64]", self.cycles);
        }
        if !(0.0..=10.0).contains(&self.kappa_2tau) {
            bail!("kappa_2tau = {} outside [0, 10]", self.kappa_2tau);
        }
        if !(self.n_th.is_finite() && self.n_th >= 0.0) {
            bail!("n_th = {} must be >= 0", self.n_th);
        }
        if !(self.n_beta.is_finite() && self.n_beta >= 0.0) {
            bail!("n_beta = {} must be >= 0", self.n_beta);
        }
        if !(self.eps_rel > 0.0 && self.eps_rel < 1e-2) {
            bail!("eps_rel = {} outside (0, 1e-2)", self.eps_rel);
        }
        if self.step_divisor != 0 && self.step_divisor < 1000 {
            bail!("step_divisor = {} must be 0 (auto) or >= 1000", self.step_divisor);
        }
        if self.fit_window[0] < 1 || self.fit_window[1] < self.fit_window[0] + 1 {
            bail!("fit_window = {:?} needs 1 <= lo < hi", self.fit_window);
        }
        self.coupling_convention()?;
        if let Some(sweep) = &self.sweep {
            Self::validate_axis(&sweep.axis, &sweep.values)?;
            match (&sweep.axis2, &sweep.values2) {
                (None, None) => {}
                (Some(axis2), Some(values2)) => {
                    if *axis2 == sweep.axis {
                        bail!("sweep axes must differ");
                    }
                    Self::validate_axis(axis2, values2)?;
                }
                _ => bail!("sweep.axis2 and sweep.values2 must be given together"),
            }
            // Every grid point must itself be a valid configuration.
            for point in self.clone().sweep_points()? {
                point.config.validate_point()?;
            }
        }
        Ok(())
    }

    fn validate_axis(axis: &str, values: &[f64]) -> Result<()> {
        if !SWEEP_AXES.contains(&axis) {
            bail!("unknown sweep axis {axis:?}; supported: {SWEEP_AXES:?}");
        }
        if values.is_empty() {
            bail!("sweep over {axis} has no values");
        }
        Ok(())
    }

    /// Range checks without recursing into the sweep table.
    fn validate_point(&self) -> Result<()> {
        let mut flat = self.clone();
        flat.sweep = None;
        flat.validate()
    }

    pub fn coupling_convention(&self) -> Result<CouplingConvention> {
        match self.coupling.as_str() {
            "fixed-physical" => Ok(CouplingConvention::FixedPhysical),
            "fixed-rescaled" => Ok(CouplingConvention::FixedRescaled),
            other => bail!("coupling = {other:?}; use \"fixed-physical\" or \"fixed-rescaled\""),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau_omega / self.omega
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_2tau / (2.0 * self.tau())
    }

    pub fn schedule(&self) -> Result<ProtocolSchedule> {
        ProtocolSchedule::new(self.tau(), self.g_tau, self.cycles, RampShape::Linear)
            .map_err(|e| anyhow!(e))
    }

    pub fn max_step(&self) -> f64 {
        if self.step_divisor == 0 {
            critcycle::propagator::default_step(self.tau(), self.omega)
        } else {
            self.tau() / self.step_divisor as f64
        }
    }

    /// Copy with one named parameter replaced.
    pub fn with_axis_value(&self, axis: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        out.sweep = None;
        match axis {
            "tau_omega" => out.tau_omega = value,
            "g_tau" => out.g_tau = value,
            "kappa_2tau" => out.kappa_2tau = value,
            "n_th" => out.n_th = value,
            "n_beta" => out.n_beta = value,
            other => bail!("unknown sweep axis {other:?}"),
        }
        Ok(out)
    }

    /// Expand the sweep grid in deterministic order (axis2 fastest).
    pub fn sweep_points(self) -> Result<Vec<SweepPoint>> {
        let Some(sweep) = self.sweep.clone() else {
            bail!("config has no [sweep] table");
        };
        let mut points = Vec::new();
        let secondary: Vec<Option<(String, f64)>> = match (&sweep.axis2, &sweep.values2) {
            (Some(axis2), Some(values2)) => {
                values2.iter().map(|&v| Some((axis2.clone(), v))).collect()
            }
            _ => vec![None],
        };
        let mut index = 0;
        for &v1 in &sweep.values {
            for second in &secondary {
                let mut config = self.with_axis_value(&sweep.axis, v1)?;
                let mut values = vec![(sweep.axis.clone(), v1)];
                if let Some((axis2, v2)) = second {
                    config = config.with_axis_value(axis2, *v2)?;
                    values.push((axis2.clone(), *v2));
                }
                points.push(SweepPoint { index, values, config });
                index += 1;
            }
        }
        Ok(points)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// One grid point of a sweep: its flat configuration plus the axis values
/// that produced it.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub config: ExperimentConfig,
}

/// Apply one `key=value` override; dotted keys address nested tables.
fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got {entry:?}"))?;
    let value: toml::Value = match format!("x = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").unwrap(),
        // Unquoted strings (e.g. --set coupling=fixed-physical).
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut node = table;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("config key {part} is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
