//! Run configuration: a TOML document with the sections `model`, `grid`,
//! `time`, `bbm` and `verify`. Every key is optional.

use std::fmt;

use frontlab::bbm::BoundaryRule;
use frontlab::{ModelConfig, ModelKind, ThetaBoundary};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending key, empty for syntax errors.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.into() }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub bbm: BbmSection,
    pub verify: VerifySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(rename = "A")]
    pub window: f64,
    pub alpha: f64,
    pub theta_boundary: ThetaBoundary,
    pub growth_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            kind: m.kind,
            window: m.window,
            alpha: m.alpha,
            theta_boundary: m.theta_boundary,
            growth_rate: m.growth_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub theta_max: f64,
    pub nx: usize,
    pub ntheta: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { x_min: -20.0, x_max: 400.0, theta_max: 60.0, nx: 841, ntheta: 237 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub safety: f64,
    /// Forces the step instead of the stability bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Times of the field dumps; empty means `t_final` only.
    pub snapshots: Vec<f64>,
    /// Spacing of the front series.
    pub front_every: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_final: 50.0, safety: 0.5, dt: None, snapshots: Vec::new(), front_every: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbmSection {
    pub t: f64,
    pub dt: f64,
    pub boundary: BoundaryRule,
    pub theta0: f64,
    pub x0: f64,
    pub replicates: usize,
    pub particle_cap: usize,
    /// Clock rate of the good events; enables path storage and the `Z` column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_a: Option<f64>,
    /// Speed coefficient for the good events and the theory constants
    /// (defaults to the critical value).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl Default for BbmSection {
    fn default() -> Self {
        BbmSection {
            t: 3.0,
            dt: 1e-2,
            boundary: BoundaryRule::Dirichlet0,
            theta0: 1.0,
            x0: 0.0,
            replicates: 200,
            particle_cap: frontlab::bbm::DEFAULT_PARTICLE_CAP,
            event_a: None,
            gamma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Horizon of the duality checks.
    pub t: f64,
    /// Replicates per duality probe batch.
    pub replicates: usize,
    pub z_threshold: f64,
    pub mc_dt: f64,
    pub level_fraction: f64,
    pub fit_window: [f64; 2],
    /// Single paths for the integrated-variance check.
    pub paths: usize,
    /// Trees for the many-to-one / many-to-two / martingale checks.
    pub trees: usize,
    /// Trees for the clock-band exponent.
    pub clock_band_trees: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            t: 1.0,
            replicates: 10_000,
            z_threshold: 3.0,
            mc_dt: 1e-3,
            level_fraction: 0.5,
            fit_window: [20.0, 50.0],
            paths: 100_000,
            trees: 2000,
            clock_band_trees: 10_000,
        }
    }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(err(path, format!("must be > 0, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(err(path, format!("must be finite, got {v}")))
    }
}

impl Config {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model.kind,
            window: self.model.window,
            alpha: self.model.alpha,
            theta_boundary: self.model.theta_boundary,
            growth_rate: self.model.growth_rate,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if m.kind == ModelKind::NonLocalWindow {
            positive("model.A", m.window)?;
            finite("model.A", m.window)?;
        } else if !(m.window > 0.0) {
            return Err(err("model.A", format!("must be > 0, got {}", m.window)));
        }
        positive("model.alpha", m.alpha)?;
        finite("model.alpha", m.alpha)?;
        finite("model.growth_rate", m.growth_rate)?;

        let g = &self.grid;
        finite("grid.x_min", g.x_min)?;
        finite("grid.x_max", g.x_max)?;
        finite("grid.theta_max", g.theta_max)?;
        if g.x_max <= g.x_min {
            return Err(err("grid.x_max", format!("must exceed grid.x_min = {}", g.x_min)));
        }
        if g.theta_max <= 1.0 {
            return Err(err("grid.theta_max", format!("must exceed 1, got {}", g.theta_max)));
        }
        if g.nx < 2 {
            return Err(err("grid.nx", "must be >= 2"));
        }
        if g.ntheta < 2 {
            return Err(err("grid.ntheta", "must be >= 2"));
        }

        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(err("time.t_final", format!("must be finite and >= 0, got {}", t.t_final)));
        }
        if !(t.safety > 0.0 && t.safety <= 1.0) {
            return Err(err("time.safety", format!("must lie in (0, 1], got {}", t.safety)));
        }
        if let Some(dt) = t.dt {
            positive("time.dt", dt)?;
        }
        if t.snapshots.iter().any(|&s| !(0.0..=t.t_final).contains(&s)) {
            return Err(err("time.snapshots", "every snapshot must lie in [0, t_final]"));
        }
        if t.snapshots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("time.snapshots", "must be strictly increasing"));
        }
        positive("time.front_every", t.front_every)?;

        let b = &self.bbm;
        if !(b.t >= 0.0 && b.t.is_finite()) {
            return Err(err("bbm.t", format!("must be finite and >= 0, got {}", b.t)));
        }
        positive("bbm.dt", b.dt)?;
        if b.dt >= frontlab::bbm::MAX_DT {
            return Err(err("bbm.dt", format!("must be < {}, got {}", frontlab::bbm::MAX_DT, b.dt)));
        }
        finite("bbm.theta0", b.theta0)?;
        finite("bbm.x0", b.x0)?;
        match b.boundary {
            BoundaryRule::Dirichlet0 if b.theta0 <= 0.0 => {
                return Err(err("bbm.theta0", "must be > 0 under dirichlet0"))
            }
            BoundaryRule::PhysicalNeumann1 if b.theta0 < 1.0 => {
                return Err(err("bbm.theta0", "must be >= 1 under physical-neumann1"))
            }
            _ => {}
        }
        if b.replicates == 0 {
            return Err(err("bbm.replicates", "must be >= 1"));
        }
        if b.particle_cap == 0 {
            return Err(err("bbm.particle_cap", "must be >= 1"));
        }
        if let Some(a) = b.event_a {
            positive("bbm.event_a", a)?;
            if !(b.t > 0.0) {
                return Err(err("bbm.t", "good events need a positive horizon"));
            }
        }
        if let Some(gm) = b.gamma {
            positive("bbm.gamma", gm)?;
        }

        let v = &self.verify;
        if !(v.t >= 0.0 && v.t <= 3.0) {
            return Err(err("verify.t", format!("must lie in [0, 3], got {}", v.t)));
        }
        if v.replicates == 0 {
            return Err(err("verify.replicates", "must be >= 1"));
        }
        positive("verify.z_threshold", v.z_threshold)?;
        positive("verify.mc_dt", v.mc_dt)?;
        if v.mc_dt >= frontlab::bbm::MAX_DT {
            return Err(err("verify.mc_dt", format!("must be < {}", frontlab::bbm::MAX_DT)));
        }
        if !(v.level_fraction > 0.0 && v.level_fraction < 1.0) {
            return Err(err("verify.level_fraction", format!("must lie in (0, 1), got {}", v.level_fraction)));
        }
        if !(v.fit_window[0] > 0.0 && v.fit_window[0] < v.fit_window[1]) {
            return Err(err("verify.fit_window", "needs 0 < start < end"));
        }
        for (path, n) in
            [("verify.paths", v.paths), ("verify.trees", v.trees), ("verify.clock_band_trees", v.clock_band_trees)]
        {
            if n < 2 {
                return Err(err(path, "must be >= 2"));
            }
        }
        Ok(())
    }

    /// Canonical TOML text; parsing it gives back an equal configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }
}

/// Applies `key=value` overrides, where `key` is a dotted path and `value`
/// a TOML value (bare words are taken as strings).
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| err("", format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err(key, "malformed override key"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| err(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses and validates a configuration, applying overrides first.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| err("", format!("invalid TOML: {}", e.message())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: Config = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError { path: if path == "." { String::new() } else { path }, message: inner.message().to_string() }
    })?;
    config.validate()?;
    Ok(config)
}
