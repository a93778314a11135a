//! Loading inputs and writing outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use duet_core::fixtures;
use duet_core::motion_io::{extract_keypoints, parse_bvh, DualMotionClip, ExtractOptions, KeypointMap, UpAxis};
use duet_core::robot_model::{RobotModel, RobotSpec};

use crate::config::{BvhSettings, FileConfig};
use crate::error::CliError;

/// Where a two-person clip comes from.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum ClipSource {
    Fixture(String),
    KeypointFile(PathBuf),
    Bvh([PathBuf; 2]),
}

impl ClipSource {
    /// A bundled fixture name, or a path to a keypoint text file.
    pub fn parse(arg: &str) -> Self {
        if fixtures::CLIP_NAMES.contains(&arg) {
            Self::Fixture(arg.to_string())
        } else {
            Self::KeypointFile(PathBuf::from(arg))
        }
    }

    /// Short name used for per-clip output directories.
    pub fn label(&self) -> String {
        let stem = |p: &Path| p.file_stem().map_or("clip".into(), |s| s.to_string_lossy().into_owned());
        match self {
            Self::Fixture(n) => n.clone(),
            Self::KeypointFile(p) => stem(p),
            Self::Bvh([a, _]) => stem(a),
        }
    }

    pub fn load(&self, bvh: &BvhSettings) -> Result<DualMotionClip, CliError> {
        match self {
            Self::Fixture(name) => fixtures::clip_by_name(name)
                .ok_or_else(|| CliError::Usage(format!("unknown fixture `{name}`"))),
            Self::KeypointFile(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
                DualMotionClip::from_keypoint_text(&text).map_err(|e| CliError::config(path, e))
            }
            Self::Bvh(paths) => load_bvh_pair(paths, bvh),
        }
    }
}

fn load_bvh_pair(paths: &[PathBuf; 2], settings: &BvhSettings) -> Result<DualMotionClip, CliError> {
    let up_axis = match settings.up_axis.to_ascii_lowercase().as_str() {
        "y" => UpAxis::Y,
        "z" => UpAxis::Z,
        other => return Err(CliError::Config(format!("bvh.up_axis must be \"y\" or \"z\", got `{other}`"))),
    };
    let options = ExtractOptions {
        unit_scale: settings.unit_scale,
        up_axis,
    };
    let mut agents = Vec::new();
    let mut dt = 0.0;
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        let motion = parse_bvh(&text).map_err(|e| CliError::config(path, e))?;
        let map = if settings.map.is_empty() {
            let names: Vec<&str> = motion.skeleton.joints.iter().map(|j| j.name.as_str()).collect();
            KeypointMap::identity(&names)
        } else {
            KeypointMap {
                entries: settings.map.clone(),
            }
        };
        dt = motion.frame_dt;
        agents.push((map.names(), extract_keypoints(&motion, &map, options).map_err(|e| CliError::config(path, e))?));
    }
    let (names_b, b) = agents.pop().expect("two agents");
    let (names, a) = agents.pop().expect("two agents");
    if names != names_b {
        return Err(CliError::Config("the two BVH files map to different keypoints".into()));
    }
    DualMotionClip::from_agents(dt, names, a, b).map_err(|e| CliError::Config(e.to_string()))
}

/// Robot models for both agents; the bundled G1-like robot by default.
pub fn load_robots(cfg: &FileConfig) -> Result<[RobotModel; 2], CliError> {
    let load = |path: Option<&PathBuf>| -> Result<RobotModel, CliError> {
        let spec = match path {
            Some(p) => RobotSpec::load(p).map_err(|e| CliError::Config(e.to_string()))?,
            None => fixtures::g1_like_spec(),
        };
        RobotModel::new(spec).map_err(|e| CliError::Config(e.to_string()))
    };
    let a = load(cfg.robot.as_ref())?;
    let b = load(cfg.robot_b.as_ref().or(cfg.robot.as_ref()))?;
    Ok([a, b])
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map_or("out".into(), |n| n.to_string_lossy().into_owned());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
