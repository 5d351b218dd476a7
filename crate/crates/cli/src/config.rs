//! Experiment configuration: a versioned JSON document plus command-line
//! overrides, validated in full before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smallcap::decoupling::QuadraturePolicy;
use smallcap::incidence::Placement;
use smallcap::{AlphaVector, CapKind, Family, Scale};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Caps,
    Synth,
    Norm,
    Decouple,
    Multilinear,
    Packets,
    Incidence,
    Regress,
    AuditExponents,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Caps => "caps",
            Kind::Synth => "synth",
            Kind::Norm => "norm",
            Kind::Decouple => "decouple",
            Kind::Multilinear => "multilinear",
            Kind::Packets => "packets",
            Kind::Incidence => "incidence",
            Kind::Regress => "regress",
            Kind::AuditExponents => "audit-exponents",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureModeConfig {
    #[default]
    LatticeExact,
    Uniform,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default)]
    pub mode: QuadratureModeConfig,
    #[serde(default = "default_oversampling")]
    pub oversampling: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_oversampling() -> f64 {
    4.0
}

fn default_samples() -> usize {
    1 << 16
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { mode: QuadratureModeConfig::LatticeExact, oversampling: 4.0, samples: default_samples() }
    }
}

impl QuadratureConfig {
    pub fn policy(&self, seed: u64) -> QuadraturePolicy {
        match self.mode {
            QuadratureModeConfig::LatticeExact => QuadraturePolicy::LatticeExact,
            QuadratureModeConfig::Uniform => QuadraturePolicy::UniformBox { oversampling: self.oversampling },
            QuadratureModeConfig::MonteCarlo => QuadraturePolicy::MonteCarloBox { samples: self.samples, seed },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyConfig {
    Constant,
    Random,
}

impl From<FamilyConfig> for Family {
    fn from(f: FamilyConfig) -> Self {
        match f {
            FamilyConfig::Constant => Family::Constant,
            FamilyConfig::Random => Family::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapKindConfig {
    Small,
    Canonical,
}

impl From<CapKindConfig> for CapKind {
    fn from(k: CapKindConfig) -> Self {
        match k {
            CapKindConfig::Small => CapKind::Small,
            CapKindConfig::Canonical => CapKind::Canonical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PlacementConfig {
    Uniform,
    Clustered,
    Bush {
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Brush,
}

impl PlacementConfig {
    pub fn placement(&self, n: usize) -> Placement {
        match self {
            PlacementConfig::Uniform => Placement::Uniform,
            PlacementConfig::Clustered => Placement::Clustered,
            PlacementConfig::Bush { center } => Placement::Bush(center.clone().unwrap_or_else(|| vec![0.0; n])),
            PlacementConfig::Brush => Placement::Brush,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidenceConfig {
    #[serde(default = "one")]
    pub thetas_frac: f64,
    #[serde(default = "one_usize")]
    pub tubes_per_theta: usize,
    #[serde(default = "default_placement")]
    pub placement: PlacementConfig,
    #[serde(default = "default_enlargement")]
    pub enlargement: f64,
    /// Also run the high-low audits (field, split, level sets).
    #[serde(default = "yes")]
    pub highlow: bool,
    /// Write each family as JSON next to the CSV.
    #[serde(default)]
    pub emit_families: bool,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_placement() -> PlacementConfig {
    PlacementConfig::Uniform
}

fn default_enlargement() -> f64 {
    smallcap::incidence::CUBE_ENLARGEMENT
}

impl Default for IncidenceConfig {
    fn default() -> Self {
        Self {
            thetas_frac: 1.0,
            tubes_per_theta: 1,
            placement: PlacementConfig::Uniform,
            enlargement: default_enlargement(),
            highlow: true,
            emit_families: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketsConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    /// Write each decomposition's tubes as JSON.
    #[serde(default)]
    pub emit_tubes: bool,
}

fn default_points() -> usize {
    200
}

impl Default for PacketsConfig {
    fn default() -> Self {
        Self { points: default_points(), emit_tubes: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultilinearConfig {
    /// Required wedge of unit normals, one from each signal.
    #[serde(default = "default_a_min")]
    pub a_min: f64,
}

fn default_a_min() -> f64 {
    0.05
}

impl Default for MultilinearConfig {
    fn default() -> Self {
        Self { a_min: default_a_min() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressConfig {
    pub csv: PathBuf,
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub kind: Kind,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, rename = "R")]
    pub scales: Vec<u64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub cap_kind: Option<CapKindConfig>,
    #[serde(default)]
    pub per_cap: Option<usize>,
    #[serde(default)]
    pub packets: Option<PacketsConfig>,
    #[serde(default)]
    pub incidence: Option<IncidenceConfig>,
    #[serde(default)]
    pub multilinear: Option<MultilinearConfig>,
    #[serde(default)]
    pub regress: Option<RegressConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Command-line replacements for config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scales: Option<Vec<u64>>,
    pub p: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

/// Finds the 1-based line of the first occurrence of `"key"`.
fn line_of(source: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    source.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

pub struct Loaded {
    pub config: ExperimentConfig,
    pub path: Option<PathBuf>,
    source: String,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_source(source, Some(path.to_path_buf()))
    }

    pub fn from_source(source: String, path: Option<PathBuf>) -> Result<Self, CliError> {
        let label = path.as_ref().map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
        let config: ExperimentConfig = serde_json::from_str(&source).map_err(|e| CliError::Config {
            path: label,
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        Ok(Self { config, path, source })
    }

    pub fn from_config(config: ExperimentConfig) -> Self {
        let source = serde_json::to_string_pretty(&config).expect("config serializes");
        Self { config, path: None, source }
    }

    fn error(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.as_ref().map_or_else(|| "<config>".to_string(), |p| p.display().to_string()),
            line: line_of(&self.source, key),
            message: message.into(),
        }
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.scales {
            self.config.scales = v;
        }
        if let Some(v) = o.p {
            self.config.p = v;
        }
        if let Some(v) = o.seeds {
            self.config.seeds = v;
        }
        if let Some(v) = o.out {
            self.config.out = Some(v);
        }
    }

    /// Checks every parameter against the preconditions of the operations
    /// the experiment will call.
    pub fn validate(&self) -> Result<Validated, CliError> {
        let c = &self.config;
        if c.schema != SCHEMA_VERSION {
            return Err(self.error("schema", format!("unsupported schema {} (expected {SCHEMA_VERSION})", c.schema)));
        }
        if c.kind == Kind::Regress {
            let r = c.regress.clone().ok_or_else(|| self.error("kind", "regress needs a \"regress\" section"))?;
            return Ok(Validated { alpha: None, scales: Vec::new(), regress: Some(r) });
        }
        let alpha = match (&c.alpha, c.n) {
            (Some(a), n) => {
                let v = AlphaVector::new(a.clone()).map_err(|e| self.error("alpha", e.to_string()))?;
                if let Some(n) = n {
                    if n != v.dimension() {
                        return Err(self.error("n", format!("n = {n} but alpha has {} entries", a.len())));
                    }
                }
                Some(v)
            }
            (None, Some(n)) if c.kind == Kind::AuditExponents || c.kind == Kind::Packets => {
                Some(AlphaVector::canonical(n).map_err(|e| self.error("n", e.to_string()))?)
            }
            (None, _) => return Err(self.error("kind", "alpha is required")),
        };
        let mut scales = Vec::with_capacity(c.scales.len());
        for &r in &c.scales {
            scales.push(Scale::new(r).map_err(|e| self.error("R", e.to_string()))?);
        }
        if scales.is_empty() {
            return Err(self.error("R", "at least one scale R is required"));
        }
        if c.seeds.is_empty() {
            return Err(self.error("seeds", "at least one seed is required"));
        }
        let needs_p = matches!(c.kind, Kind::Norm | Kind::Decouple | Kind::Multilinear);
        if needs_p && c.p.is_empty() {
            return Err(self.error("p", "at least one exponent p is required"));
        }
        if let Some(bad) = c.p.iter().find(|&&p| !(p.is_finite() && p >= 1.0)) {
            return Err(self.error("p", format!("p = {bad} must be finite and at least 1")));
        }
        let needs_family = matches!(c.kind, Kind::Synth | Kind::Norm | Kind::Decouple | Kind::Packets);
        if needs_family && c.family.is_none() {
            return Err(self.error("kind", "family is required"));
        }
        let q = &c.quadrature;
        if !(q.oversampling.is_finite() && q.oversampling >= 2.0) {
            return Err(self.error("oversampling", format!("oversampling {} below 2", q.oversampling)));
        }
        if q.mode == QuadratureModeConfig::MonteCarlo && q.samples == 0 {
            return Err(self.error("samples", "monte-carlo needs samples"));
        }
        if c.per_cap == Some(0) {
            return Err(self.error("per_cap", "per_cap must be positive"));
        }
        if let Some(inc) = &c.incidence {
            if !(inc.thetas_frac > 0.0 && inc.thetas_frac <= 1.0) {
                return Err(self.error("thetas_frac", "thetas_frac must lie in (0, 1]"));
            }
            if inc.tubes_per_theta == 0 {
                return Err(self.error("tubes_per_theta", "tubes_per_theta must be positive"));
            }
            if !(inc.enlargement >= 1.0) {
                return Err(self.error("enlargement", "enlargement must be at least 1"));
            }
        }
        if let Some(pk) = &c.packets {
            if pk.points == 0 {
                return Err(self.error("points", "points must be positive"));
            }
        }
        if c.kind == Kind::Packets {
            for s in &scales {
                if !smallcap::caps::cells_per_unit(*s, 0.5).1 {
                    return Err(self.error("R", format!("packets need R^(1/2) integral, got R = {}", s.value())));
                }
            }
        }
        if c.kind == Kind::Multilinear {
            let n = alpha.as_ref().map_or(0, AlphaVector::dimension);
            if n > 3 {
                return Err(self.error("alpha", "multilinear experiments support n <= 3"));
            }
        }
        Ok(Validated { alpha, scales, regress: None })
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Typed parameters after validation.
#[derive(Debug, Clone)]
pub struct Validated {
    pub alpha: Option<AlphaVector>,
    pub scales: Vec<Scale>,
    pub regress: Option<RegressConfig>,
}
