//! Configuration resolution: built-in defaults, then the JSON config file
//! (or a previous run's manifest), then command-line flags. Every numeric
//! field is validated before any computation starts, and the fully
//! resolved configuration is echoed into the run manifest so any run can
//! be reproduced from its output directory alone.

use ehrenfest_core::experiments::{GeometryParams, InitialCondition, RunConfig};
use ehrenfest_core::ParticleState;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at {}: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        reason: reason.into(),
    }
}

/// A `lo:hi:step` range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Range {
    pub fn parse(s: &str, field: &str) -> Result<Self, ConfigError> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(err(field, format!("expected LO:HI:STEP, got {s:?}")));
        }
        let mut vals = [0.0; 3];
        for (v, p) in vals.iter_mut().zip(&parts) {
            *v = p
                .parse()
                .map_err(|_| err(field, format!("{p:?} is not a number")))?;
        }
        Ok(Range {
            lo: vals[0],
            hi: vals[1],
            step: vals[2],
        })
    }

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(err(&format!("{field}.step"), "must be strictly positive"));
        }
        if self.hi < self.lo {
            return Err(err(field, "hi must be at least lo"));
        }
        Ok(())
    }
}

/// Fully resolved run settings; serialized verbatim into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolved {
    pub geometry: GeometryParams,
    pub eps: f64,
    pub n_collisions: u64,
    pub seed: u64,
    pub tail_size: usize,
    /// Explicit initial phase point, when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ic: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sx_range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// True when the tail length was set by the user rather than the
    /// default; only explicit values are validated against n_collisions.
    #[serde(skip)]
    pub tail_explicit: bool,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            geometry: GeometryParams::standard(),
            eps: 0.374,
            n_collisions: 100_000,
            seed: 1,
            tail_size: 1000,
            ic: None,
            eps_range: None,
            sx_range: None,
            family: None,
            center: None,
            magnitudes: None,
            cap: None,
            threads: None,
            tail_explicit: false,
        }
    }
}

/// Partial configuration as it appears in a JSON file. Every field is
/// optional; flags override file values.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub geometry: Option<PartialGeometry>,
    pub eps: Option<f64>,
    pub n_collisions: Option<u64>,
    pub seed: Option<u64>,
    pub tail_size: Option<usize>,
    pub ic: Option<[f64; 3]>,
    pub eps_range: Option<Range>,
    pub sx_range: Option<Range>,
    pub family: Option<String>,
    pub center: Option<[f64; 3]>,
    pub magnitudes: Option<Vec<f64>>,
    pub cap: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct PartialGeometry {
    #[serde(rename = "L")]
    pub hex_side: Option<f64>,
    pub s_x: Option<f64>,
    pub s_y: Option<f64>,
}

/// A config file is either a bare configuration object or a manifest from
/// a previous run (recognized by its `config` key).
#[derive(Deserialize)]
struct ManifestEnvelope {
    config: FileConfig,
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
    if let Ok(m) = serde_json::from_str::<ManifestEnvelope>(&text) {
        return Ok(m.config);
    }
    serde_json::from_str(&text).map_err(|e| err("config", format!("invalid JSON: {e}")))
}

impl Resolved {
    /// Layer a file configuration over the defaults.
    pub fn apply_file(&mut self, f: &FileConfig) {
        if let Some(g) = &f.geometry {
            if let Some(v) = g.hex_side {
                self.geometry.hex_side = v;
            }
            if let Some(v) = g.s_x {
                self.geometry.s_x = v;
            }
            if let Some(v) = g.s_y {
                self.geometry.s_y = v;
            }
        }
        if let Some(v) = f.eps {
            self.eps = v;
        }
        if let Some(v) = f.n_collisions {
            self.n_collisions = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = f.tail_size {
            self.tail_size = v;
            self.tail_explicit = true;
        }
        if f.ic.is_some() {
            self.ic = f.ic;
        }
        if f.eps_range.is_some() {
            self.eps_range = f.eps_range;
        }
        if f.sx_range.is_some() {
            self.sx_range = f.sx_range;
        }
        if f.family.is_some() {
            self.family = f.family.clone();
        }
        if f.center.is_some() {
            self.center = f.center;
        }
        if f.magnitudes.is_some() {
            self.magnitudes = f.magnitudes.clone();
        }
        if f.cap.is_some() {
            self.cap = f.cap;
        }
        if f.threads.is_some() {
            self.threads = f.threads;
        }
    }

    /// Validate every numeric field against the module preconditions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.geometry.hex_side.is_finite() || self.geometry.hex_side <= 0.0 {
            return Err(err("geometry.L", "must be strictly positive"));
        }
        if !self.geometry.s_x.is_finite() || self.geometry.s_x <= 0.0 {
            return Err(err("geometry.s_x", "must be strictly positive"));
        }
        if !self.geometry.s_y.is_finite() || self.geometry.s_y <= 0.0 {
            return Err(err("geometry.s_y", "must be strictly positive"));
        }
        self.geometry
            .build()
            .map_err(|e| err("geometry", e.to_string()))?;
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(err("eps", "must be finite and non-negative"));
        }
        if self.n_collisions == 0 {
            return Err(err("n_collisions", "must be at least 1"));
        }
        if self.tail_size == 0 {
            return Err(err("tail_size", "must be at least 1"));
        }
        if self.tail_explicit && self.tail_size as u64 > self.n_collisions {
            return Err(err("tail_size", "cannot exceed n_collisions"));
        }
        if let Some(r) = &self.eps_range {
            r.validate("eps_range")?;
            if r.lo < 0.0 {
                return Err(err("eps_range.lo", "field must be non-negative"));
            }
        }
        if let Some(r) = &self.sx_range {
            r.validate("sx_range")?;
        }
        if let Some(ms) = &self.magnitudes {
            if ms.iter().any(|m| !m.is_finite() || *m < 0.0) {
                return Err(err("magnitudes", "must be finite and non-negative"));
            }
        }
        if let Some(c) = self.cap {
            if c == 0 {
                return Err(err("cap", "must be at least 1"));
            }
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(err("threads", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Trajectory-run view of the configuration. The default tail length
    /// shrinks to fit short runs.
    pub fn run_config(&self) -> RunConfig {
        let tail = if self.tail_explicit {
            self.tail_size
        } else {
            self.tail_size.min(self.n_collisions as usize)
        };
        RunConfig {
            geometry: self.geometry,
            eps: self.eps,
            n_collisions: self.n_collisions,
            seed: self.seed,
            ic: match self.ic {
                Some([x, y, theta]) => InitialCondition::Explicit(ParticleState::new(x, y, theta)),
                None => InitialCondition::Random,
            },
            tail_size: tail,
        }
    }
}

/// Parse a comma-separated float triple, e.g. an initial phase point.
pub fn parse_triple(s: &str, field: &str) -> Result<[f64; 3], ConfigError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(err(field, format!("expected X,Y,THETA, got {s:?}")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .trim()
            .parse()
            .map_err(|_| err(field, format!("{p:?} is not a number")))?;
    }
    Ok(out)
}

/// Parse a comma-separated float list.
pub fn parse_list(s: &str, field: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| err(field, format!("{p:?} is not a number")))
        })
        .collect()
}

/// Parse a collision count that may use scientific notation (`1e6`).
pub fn parse_count(s: &str, field: &str) -> Result<u64, ConfigError> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = s
        .parse()
        .map_err(|_| err(field, format!("{s:?} is not a number")))?;
    if !f.is_finite() || !(1.0..=1e15).contains(&f) || f.fract() != 0.0 {
        return Err(err(field, format!("{s:?} is not a whole positive count")));
    }
    Ok(f as u64)
}
