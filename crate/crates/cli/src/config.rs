//! Run configuration: an optional TOML file overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use duet_core::interaction_mesh::MeshConfig;
use duet_core::retarget::SolverConfig;
use duet_core::rewards::RewardConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Channel and controller settings of the `sync` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSettings {
    pub gain: f64,
    /// Drift of agent 0; agent 1 gets the negation.
    pub drift: f64,
    pub delay_lo_ms: f64,
    pub delay_hi_ms: f64,
    pub drop_probability: f64,
    pub duration: f64,
    pub symmetric: bool,
    pub seed: u64,
}

impl Default for SyncSettings {
    fn default() -> Self {
        Self {
            gain: duet_core::phase_sync::DEFAULT_GAIN,
            drift: 1e-3,
            delay_lo_ms: 20.0,
            delay_hi_ms: 60.0,
            drop_probability: 0.0,
            duration: 60.0,
            symmetric: true,
            seed: duet_core::phase_sync::DEFAULT_SEED,
        }
    }
}

/// How BVH joints become keypoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvhSettings {
    pub unit_scale: f64,
    /// `"y"` or `"z"`.
    pub up_axis: String,
    /// `[keypoint, joint]` pairs; a joint ending in `/End` selects its end site.
    pub map: Vec<(String, String)>,
}

impl Default for BvhSettings {
    fn default() -> Self {
        Self {
            unit_scale: 1.0,
            up_axis: "z".into(),
            map: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Robot spec JSON for agent 0 (and agent 1 unless `robot_b` is set).
    pub robot: Option<PathBuf>,
    pub robot_b: Option<PathBuf>,
    pub solver: SolverConfig,
    pub mesh: MeshConfig,
    pub rewards: RewardConfig,
    pub sync: SyncSettings,
    pub bvh: BvhSettings,
    /// File this config was read from.
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

impl FileConfig {
    /// Parse a config file; relative robot paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::config(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.robot, &mut cfg.robot_b].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
