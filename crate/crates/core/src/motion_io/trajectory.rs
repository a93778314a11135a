//! JSON trajectory files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retarget::RobotTrajectory;
use crate::robot_model::RobotConfiguration;

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error("trajectory has no frames")]
    Empty,
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed trajectory: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("frame {0}: invalid configuration")]
    BadFrame(usize),
}

#[derive(Serialize, Deserialize)]
struct AgentRecord {
    root_position: [f64; 3],
    /// `[w, x, y, z]`
    root_orientation: [f64; 4],
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    agents: Vec<AgentRecord>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    schema_version: u32,
    robot_models: [String; 2],
    frame_dt: f64,
    solver_config_hash: String,
    frames: Vec<FrameRecord>,
}

fn record(c: &RobotConfiguration) -> AgentRecord {
    let q = c.root_orientation.quaternion();
    AgentRecord {
        root_position: [c.root_position.x, c.root_position.y, c.root_position.z],
        root_orientation: [q.w, q.i, q.j, q.k],
        q: c.q.iter().copied().collect(),
    }
}

fn config(r: &AgentRecord) -> Option<RobotConfiguration> {
    let [w, x, y, z] = r.root_orientation;
    let quat = Quaternion::new(w, x, y, z);
    if !(quat.norm() > 0.5) {
        return None;
    }
    // Keep already-unit quaternions bit-exact so files round trip.
    let rotation = if (quat.norm() - 1.0).abs() < 1e-12 {
        UnitQuaternion::new_unchecked(quat)
    } else {
        UnitQuaternion::from_quaternion(quat)
    };
    let c = RobotConfiguration::new(
        Vector3::from(r.root_position),
        rotation,
        DVector::from_vec(r.q.clone()),
    );
    c.is_finite().then_some(c)
}

pub fn trajectory_to_json(traj: &RobotTrajectory) -> Result<String, TrajectoryIoError> {
    if traj.frames.is_empty() {
        return Err(TrajectoryIoError::Empty);
    }
    let file = TrajectoryFile {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        robot_models: traj.robot_models.clone(),
        frame_dt: traj.frame_dt,
        solver_config_hash: traj.solver_config_hash.clone(),
        frames: traj
            .frames
            .iter()
            .map(|f| FrameRecord {
                agents: f.iter().map(record).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

/// Parse a trajectory file. Diagnostics and priors live in separate files
/// and come back empty.
pub fn trajectory_from_json(text: &str) -> Result<RobotTrajectory, TrajectoryIoError> {
    let file: TrajectoryFile = serde_json::from_str(text)?;
    if file.schema_version != TRAJECTORY_SCHEMA_VERSION {
        return Err(TrajectoryIoError::Schema(file.schema_version));
    }
    if file.frames.is_empty() {
        return Err(TrajectoryIoError::Empty);
    }
    let mut frames = Vec::with_capacity(file.frames.len());
    for (t, f) in file.frames.iter().enumerate() {
        let [a, b] = f.agents.as_slice() else {
            return Err(TrajectoryIoError::BadFrame(t));
        };
        match (config(a), config(b)) {
            (Some(a), Some(b)) => frames.push([a, b]),
            _ => return Err(TrajectoryIoError::BadFrame(t)),
        }
    }
    Ok(RobotTrajectory {
        robot_models: file.robot_models,
        frame_dt: file.frame_dt,
        solver_config_hash: file.solver_config_hash,
        frames,
        diagnostics: Vec::new(),
        priors: Default::default(),
    })
}

/// Write a trajectory file, returning the number of bytes written.
pub fn write_trajectory(traj: &RobotTrajectory, path: &Path) -> Result<usize, TrajectoryIoError> {
    let text = trajectory_to_json(traj)?;
    fs::write(path, &text).map_err(|source| TrajectoryIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.len())
}

pub fn read_trajectory(path: &Path) -> Result<RobotTrajectory, TrajectoryIoError> {
    let text = fs::read_to_string(path).map_err(|source| TrajectoryIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    trajectory_from_json(&text)
}
