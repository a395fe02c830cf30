//! Run configuration: TOML sections, preset expansion and `key=value` overrides.
//!
//! ```toml
//! preset = "sbm1"          # optional; expands first
//! variant = "ohmic"        # for presets with several parameter sets; "all" runs each
//!
//! [model]
//! delta = 1.0
//! xi = 0.0
//! phi = 0.0                # single preparation angle (RWA runs)
//! delta_phi = -0.0278      # quadrature rotation of SBM sweeps
//!
//! [bath]
//! lambda2 = 0.025
//! s = 1.0
//! omega_c = 4.0
//! beta = "inf"             # or a positive number
//!
//! [grid]
//! t_max = 6000.0
//! dt = 0.0125              # integration step
//! sample_dt = 2.5          # spacing of the written samples
//! phi_count = 64           # angles on [0, 2π)
//!
//! [run]
//! solver = "rk4"
//! ```
//!
//! Explicit keys override the preset; command-line overrides are applied last.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use sbmap_core::bath::{BathSpec, Beta};
use sbmap_core::rwa::RwaModel;
use sbmap_core::sbm::SbmModel;

use crate::presets::{self, Preset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown preset {0:?}; known presets: {1}")]
    UnknownPreset(String, String),
    #[error("preset {preset:?} has variants {variants}; choose one with `variant`")]
    AmbiguousPreset { preset: String, variants: String },
    #[error("override {0:?} is not of the form section.key=value")]
    Override(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbmSolver {
    Rk4,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwaSolver {
    Volterra,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub delta_phi: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            delta: 1.0,
            xi: 0.0,
            phi: 0.0,
            delta_phi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub lambda2: f64,
    pub s: f64,
    pub omega_c: f64,
    #[serde(default = "zero_temperature")]
    pub beta: Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub dt: f64,
    /// Defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default = "default_phi_count")]
    pub phi_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Subcommand used when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    /// Output directory used when `--out` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default = "default_sbm_solver")]
    pub solver: SbmSolver,
    #[serde(default = "default_rwa_solver")]
    pub rwa_solver: RwaSolver,
    /// Start of the early `t_P` window; defaults to `3/ω_c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp_start: Option<f64>,
    #[serde(default = "default_slope_window")]
    pub slope_window: f64,
    /// δφ is extracted at `t_ref_factor · t_P`.
    #[serde(default = "default_t_ref_factor")]
    pub t_ref_factor: f64,
    /// Basins are classified at `basin_factor · t_P`.
    #[serde(default = "default_basin_factor")]
    pub basin_factor: f64,
    /// Probe times for `cumulant-check`.
    #[serde(default = "default_probe_times")]
    pub probe_times: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            subcommand: None,
            out: None,
            solver: default_sbm_solver(),
            rwa_solver: default_rwa_solver(),
            tp_start: None,
            slope_window: default_slope_window(),
            t_ref_factor: default_t_ref_factor(),
            basin_factor: default_basin_factor(),
            probe_times: default_probe_times(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn zero_temperature() -> Beta {
    Beta::Infinite
}
fn default_phi_count() -> usize {
    64
}
fn default_sbm_solver() -> SbmSolver {
    SbmSolver::Rk4
}
fn default_rwa_solver() -> RwaSolver {
    RwaSolver::Volterra
}
fn default_slope_window() -> f64 {
    25.0
}
fn default_t_ref_factor() -> f64 {
    5.0
}
fn default_basin_factor() -> f64 {
    3.0
}
fn default_probe_times() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    pub bath: BathSection,
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn bath_spec(&self) -> BathSpec {
        BathSpec {
            lambda2: self.bath.lambda2,
            s: self.bath.s,
            omega_c: self.bath.omega_c,
            beta: self.bath.beta,
        }
    }

    pub fn sbm_model(&self) -> SbmModel {
        SbmModel {
            delta: self.model.delta,
            xi: self.model.xi,
            bath: self.bath_spec(),
        }
    }

    pub fn rwa_model(&self) -> RwaModel {
        RwaModel {
            delta: self.model.delta,
            bath: self.bath_spec(),
        }
    }

    pub fn sample_dt(&self) -> f64 {
        self.grid.sample_dt.unwrap_or(self.grid.dt)
    }

    pub fn tp_start(&self) -> f64 {
        self.run.tp_start.unwrap_or(3.0 / self.bath.omega_c)
    }

    /// `φ_j = 2πj/phi_count`.
    pub fn phis(&self) -> Vec<f64> {
        let n = self.grid.phi_count;
        (0..n).map(|j| TAU * j as f64 / n as f64).collect()
    }

    /// Label used for per-variant output directories.
    pub fn label(&self) -> String {
        match (&self.preset, &self.variant) {
            (Some(p), Some(v)) => format!("{p}-{v}"),
            (Some(p), None) => p.clone(),
            (None, Some(v)) => v.clone(),
            (None, None) => "run".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("model.delta", self.model.delta)?;
        for (field, v) in [("model.xi", self.model.xi), ("model.phi", self.model.phi), ("model.delta_phi", self.model.delta_phi)] {
            if !v.is_finite() {
                return Err(invalid(field, format!("must be finite, got {v}")));
            }
        }
        positive("bath.lambda2", self.bath.lambda2)?;
        positive("bath.s", self.bath.s)?;
        positive("bath.omega_c", self.bath.omega_c)?;
        positive("grid.dt", self.grid.dt)?;
        positive("grid.t_max", self.grid.t_max)?;
        if self.grid.t_max <= self.grid.dt {
            return Err(invalid("grid.t_max", format!("must exceed grid.dt = {}", self.grid.dt)));
        }
        if let Some(h) = self.grid.sample_dt {
            positive("grid.sample_dt", h)?;
            if h < self.grid.dt {
                return Err(invalid("grid.sample_dt", format!("must be at least grid.dt = {}", self.grid.dt)));
            }
        }
        if self.grid.phi_count < 2 {
            return Err(invalid("grid.phi_count", "must be at least 2"));
        }
        if let Some(t) = self.run.tp_start {
            positive("run.tp_start", t)?;
        }
        positive("run.slope_window", self.run.slope_window)?;
        positive("run.t_ref_factor", self.run.t_ref_factor)?;
        positive("run.basin_factor", self.run.basin_factor)?;
        for &t in &self.run.probe_times {
            positive("run.probe_times", t)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Location-aware message from a TOML error.
fn describe(e: &toml::de::Error, text: &str) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

/// Recursively overlays `top` on `base`.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `section.key=value`; the value is read as a TOML literal, falling
/// back to a plain string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.into()),
    };
    let mut node = table;
    for key in &keys[..keys.len() - 1] {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(invalid(path.trim(), "is not a section")),
        };
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Expands `text` (plus an optional preset named on the command line) into
/// one validated configuration per preset variant, then applies `overrides`.
pub fn expand(text: &str, preset: Option<&str>, overrides: &[String]) -> Result<Vec<RunConfig>, ConfigError> {
    let user: Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(describe(&e, text)))?;
    let name = match (preset, user.get("preset")) {
        (Some(p), _) => Some(p.to_string()),
        (None, Some(Value::String(p))) => Some(p.clone()),
        (None, Some(_)) => return Err(invalid("preset", "must be a string")),
        (None, None) => None,
    };
    let wanted = match user.get("variant") {
        Some(Value::String(v)) => Some(v.clone()),
        Some(_) => return Err(invalid("variant", "must be a string")),
        None => None,
    };
    let bases: Vec<(Option<String>, Table)> = match &name {
        None => vec![(None, Table::new())],
        Some(n) => {
            let p = presets::find(n).ok_or_else(|| ConfigError::UnknownPreset(n.clone(), presets::names().join(", ")))?;
            variant_tables(p, wanted.as_deref())?
        }
    };
    let mut out = Vec::with_capacity(bases.len());
    for (label, mut table) in bases {
        merge(&mut table, user.clone());
        if let Some(n) = &name {
            table.insert("preset".into(), Value::String(n.clone()));
        }
        if let Some(l) = label {
            table.insert("variant".into(), Value::String(l));
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        cfg.validate()?;
        out.push(cfg);
    }
    Ok(out)
}

fn variant_tables(p: &Preset, wanted: Option<&str>) -> Result<Vec<(Option<String>, Table)>, ConfigError> {
    let chosen: Vec<_> = match wanted.or(p.default) {
        Some("all") => p.variants.iter().collect(),
        Some(w) => {
            let v = p.variants.iter().find(|v| v.label == w).ok_or_else(|| {
                invalid(
                    "variant",
                    format!("preset {:?} has no variant {w:?} (known: {})", p.name, p.variant_labels()),
                )
            })?;
            vec![v]
        }
        None => p.variants.iter().collect(),
    };
    Ok(chosen
        .into_iter()
        .map(|v| {
            let cfg = v.config(p.name);
            (Some(v.label.to_string()), Table::try_from(&cfg).expect("preset serializes"))
        })
        .collect())
}

/// Parses a single configuration; presets with several variants must name one.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut all = expand(text, None, &[])?;
    if all.len() != 1 {
        let preset = all[0].preset.clone().unwrap_or_default();
        let variants = all.iter().filter_map(|c| c.variant.clone()).collect::<Vec<_>>().join(", ");
        return Err(ConfigError::AmbiguousPreset { preset, variants });
    }
    Ok(all.remove(0))
}
