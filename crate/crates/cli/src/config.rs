//! Scenario configuration (TOML).
//!
//! Input paths are resolved relative to the directory of the config file
//! and must exist at load time. The output directory is resolved against
//! the working directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use edgeshare_core::calibration::ANCHOR_SIZES_KB;
use edgeshare_core::{
    CalibrationMode, ConstraintBounds, CostWeights, DeviceConstants, PatientAddress, PsoConfig, Role, Scheme,
};
use serde::Deserialize;
use thiserror::Error;

/// Built-in scenario used when no `--config` is given.
pub const DEFAULT_SCENARIO: &str = include_str!("../data/default_scenario.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {origin}: {msg}")]
    Parse { origin: String, msg: String },
    #[error("{field}: path {path} does not exist")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub offload: OffloadConfig,
    #[serde(default)]
    pub sharing: SharingConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffloadConfig {
    /// Measured curve anchors; the bundled set when absent.
    pub anchors: Option<PathBuf>,
    pub calibration: CalibrationMode,
    pub device: DeviceConstants,
    /// File sizes of the scheme comparison grid.
    pub sizes_kb: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Task set handed to the optimizer.
    pub tasks_kb: Vec<f64>,
    /// Offload target for the task set. `local` keeps every task local.
    pub scheme: Scheme,
    pub weights: CostWeights,
    /// Latency and memory budgets; the all-local totals when absent.
    pub bounds: Option<ConstraintBounds>,
    /// Swarm parameters. The seed is always the scenario seed.
    pub pso: PsoConfig,
}

impl Default for OffloadConfig {
    fn default() -> Self {
        Self {
            anchors: None,
            calibration: CalibrationMode::default(),
            device: DeviceConstants::default(),
            sizes_kb: ANCHOR_SIZES_KB.to_vec(),
            schemes: Scheme::ALL.to_vec(),
            tasks_kb: ANCHOR_SIZES_KB.to_vec(),
            scheme: Scheme::Edge,
            weights: CostWeights::default(),
            bounds: None,
            pso: PsoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharingConfig {
    pub gas_schedule: Option<PathBuf>,
    pub latency_table: Option<PathBuf>,
    /// Sealing authorities, in round-robin order.
    pub sealers: Vec<String>,
    pub storage_nodes: usize,
    /// Concurrent-user counts for the retrieval latency table.
    pub latency_users: Vec<u32>,
    pub users: Vec<UserConfig>,
    pub records: Vec<RecordConfig>,
    pub requests: Vec<RequestConfig>,
    /// Users removed after the request round.
    pub delete_users: Vec<String>,
}

impl Default for SharingConfig {
    fn default() -> Self {
        Self {
            gas_schedule: None,
            latency_table: None,
            sealers: vec!["sealer-1".into(), "sealer-2".into(), "sealer-3".into()],
            storage_nodes: edgeshare_core::storage::DEFAULT_NODE_COUNT,
            latency_users: vec![2, 4, 6, 8, 10, 12],
            users: Vec::new(),
            records: Vec::new(),
            requests: Vec::new(),
            delete_users: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub name: String,
    pub role: Role,
    /// `false` models an outsider holding a key the admin never added.
    #[serde(default = "yes")]
    pub registered: bool,
    #[serde(default)]
    pub patients: Vec<PatientAddress>,
    #[serde(default)]
    pub devices: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordConfig {
    pub address: PatientAddress,
    pub severity_score: f64,
    pub data: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestConfig {
    pub requester: String,
    pub address: PatientAddress,
    pub device_id: String,
}

impl ScenarioConfig {
    pub fn builtin() -> Result<Self, ConfigError> {
        Self::parse(DEFAULT_SCENARIO, "<builtin>", None)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), Some(&base))
    }

    /// Parses and validates. Relative input paths are joined onto `base`.
    pub fn parse(text: &str, origin: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_owned(), msg: e.to_string() })?;
        let resolve = |p: &mut Option<PathBuf>, field: &'static str| -> Result<(), ConfigError> {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    if let Some(b) = base {
                        *path = b.join(&*path);
                    }
                }
                if !path.exists() {
                    return Err(ConfigError::MissingPath { field, path: path.clone() });
                }
            }
            Ok(())
        };
        resolve(&mut cfg.offload.anchors, "offload.anchors")?;
        resolve(&mut cfg.sharing.gas_schedule, "sharing.gas_schedule")?;
        resolve(&mut cfg.sharing.latency_table, "sharing.latency_table")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let o = &self.offload;
        for (name, sizes) in [("offload.sizes_kb", &o.sizes_kb), ("offload.tasks_kb", &o.tasks_kb)] {
            if sizes.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if let Some(s) = sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                return bad(format!("{name}: size {s} is not positive"));
            }
        }
        if o.schemes.is_empty() {
            return bad("offload.schemes is empty".into());
        }
        o.weights.validate().map_err(|e| ConfigError::Invalid(format!("offload.weights: {e}")))?;
        if let Some(b) = &o.bounds {
            b.validate().map_err(|e| ConfigError::Invalid(format!("offload.bounds: {e}")))?;
        }
        o.pso.validate().map_err(|e| ConfigError::Invalid(format!("offload.pso: {e}")))?;

        let s = &self.sharing;
        if s.sealers.is_empty() {
            return bad("sharing.sealers is empty".into());
        }
        if s.storage_nodes == 0 {
            return bad("sharing.storage_nodes must be positive".into());
        }
        if s.latency_users.contains(&0) {
            return bad("sharing.latency_users must be at least 1".into());
        }
        let mut names = BTreeSet::new();
        for u in &s.users {
            if u.name.trim().is_empty() {
                return bad("sharing.users: empty name".into());
            }
            if !names.insert(u.name.as_str()) {
                return bad(format!("sharing.users: duplicate name `{}`", u.name));
            }
        }
        for r in &s.requests {
            if !names.contains(r.requester.as_str()) {
                return bad(format!("sharing.requests: unknown requester `{}`", r.requester));
            }
            if r.device_id.is_empty() {
                return bad("sharing.requests: device_id is required".into());
            }
        }
        for d in &s.delete_users {
            if !s.users.iter().any(|u| &u.name == d && u.registered) {
                return bad(format!("sharing.delete_users: `{d}` is not a registered user"));
            }
        }
        if let Some(r) = s.records.iter().find(|r| !r.severity_score.is_finite()) {
            return bad(format!("sharing.records: severity for {} is not finite", r.address));
        }
        Ok(())
    }
}
