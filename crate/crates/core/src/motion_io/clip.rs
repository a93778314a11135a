//! Two-agent keypoint clips, the plain keypoint text format, and keypoint
//! extraction from parsed BVH motion.

use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use super::bvh::BvhMotion;

#[derive(Debug, Error, PartialEq)]
pub enum ClipError {
    #[error("unknown joint `{0}` in keypoint map")]
    UnknownJoint(String),
    #[error("joint `{0}` has no end site")]
    NoEndSite(String),
    #[error("frame dt must be positive")]
    BadFrameDt,
    #[error("agents have different frame counts ({0} vs {1})")]
    FrameCountMismatch(usize, usize),
    #[error("frame {frame}, agent {agent}: expected {expected} keypoints, got {got}")]
    KeypointCount {
        frame: usize,
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame {frame}, agent {agent}: non-finite coordinate")]
    NonFinite { frame: usize, agent: usize },
    #[error("unknown keypoint `{0}`")]
    UnknownKeypoint(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct KeypointFormatError {
    pub line: usize,
    pub message: String,
}

/// Raw global keypoints of two agents over time (meters, z up).
#[derive(Clone, Debug, PartialEq)]
pub struct DualMotionClip {
    pub frame_dt: f64,
    pub names: Vec<String>,
    /// `frames[t][agent][keypoint]`
    pub frames: Vec<[Vec<Vector3<f64>>; 2]>,
}

impl DualMotionClip {
    pub fn new(
        frame_dt: f64,
        names: Vec<String>,
        frames: Vec<[Vec<Vector3<f64>>; 2]>,
    ) -> Result<Self, ClipError> {
        let clip = Self {
            frame_dt,
            names,
            frames,
        };
        clip.validate()?;
        Ok(clip)
    }

    /// Join two single-agent keypoint tracks that share a name list.
    pub fn from_agents(
        frame_dt: f64,
        names: Vec<String>,
        first: Vec<Vec<Vector3<f64>>>,
        second: Vec<Vec<Vector3<f64>>>,
    ) -> Result<Self, ClipError> {
        if first.len() != second.len() {
            return Err(ClipError::FrameCountMismatch(first.len(), second.len()));
        }
        let frames = first.into_iter().zip(second).map(|(a, b)| [a, b]).collect();
        Self::new(frame_dt, names, frames)
    }

    pub fn validate(&self) -> Result<(), ClipError> {
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err(ClipError::BadFrameDt);
        }
        let k = self.names.len();
        for (t, frame) in self.frames.iter().enumerate() {
            for (agent, pts) in frame.iter().enumerate() {
                if pts.len() != k {
                    return Err(ClipError::KeypointCount {
                        frame: t,
                        agent,
                        expected: k,
                        got: pts.len(),
                    });
                }
                if pts.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
                    return Err(ClipError::NonFinite { frame: t, agent });
                }
            }
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn keypoint_index(&self, name: &str) -> Result<usize, ClipError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ClipError::UnknownKeypoint(name.to_string()))
    }

    /// Serialize in the plain keypoint text format.
    pub fn to_keypoint_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# duet keypoints v1: one frame per line, agent 1 then agent 2, K x (x y z) each\n");
        let _ = writeln!(s, "agents 2");
        let _ = writeln!(s, "keypoints {}", self.names.len());
        let _ = writeln!(s, "frame_dt {}", self.frame_dt);
        let _ = writeln!(s, "names {}", self.names.join(" "));
        for frame in &self.frames {
            let mut first = true;
            for agent in frame {
                for p in agent {
                    for v in p.iter() {
                        if !first {
                            s.push(' ');
                        }
                        first = false;
                        let _ = write!(s, "{v}");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parse the plain keypoint text format.
    ///
    /// ```text
    /// # comment
    /// agents 2
    /// keypoints K
    /// frame_dt 0.0333
    /// names n1 n2 ... nK
    /// x y z x y z ...        (2*K*3 values per frame line)
    /// ```
    pub fn from_keypoint_text(text: &str) -> Result<Self, KeypointFormatError> {
        let err = |line: usize, message: String| KeypointFormatError { line, message };
        let mut agents = None;
        let mut k = None;
        let mut dt = None;
        let mut names: Option<Vec<String>> = None;
        let mut frames = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let mut words = l.split_whitespace();
            let head = words.next().unwrap_or_default();
            match head {
                "agents" | "keypoints" | "frame_dt" if !frames.is_empty() => {
                    return Err(err(line, format!("header field `{head}` after frame data")));
                }
                "agents" => {
                    let v: usize = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| err(line, "invalid agent count".into()))?;
                    if v != 2 {
                        return Err(err(line, format!("expected 2 agents, got {v}")));
                    }
                    agents = Some(v);
                }
                "keypoints" => {
                    k = Some(
                        words
                            .next()
                            .and_then(|w| w.parse::<usize>().ok())
                            .ok_or_else(|| err(line, "invalid keypoint count".into()))?,
                    );
                }
                "frame_dt" => {
                    let v: f64 = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| err(line, "invalid frame_dt".into()))?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(err(line, "frame_dt must be positive".into()));
                    }
                    dt = Some(v);
                }
                "names" => {
                    names = Some(words.map(str::to_string).collect());
                }
                _ => {
                    let (Some(_), Some(kk), Some(_), Some(n)) = (agents, k, dt, names.as_ref()) else {
                        return Err(err(line, "frame data before complete header".into()));
                    };
                    if n.len() != kk {
                        return Err(err(
                            line,
                            format!("names lists {} keypoints, header says {kk}", n.len()),
                        ));
                    }
                    let values = l
                        .split_whitespace()
                        .map(|w| {
                            let v: f64 = w
                                .parse()
                                .map_err(|_| err(line, format!("invalid number `{w}`")))?;
                            if v.is_finite() {
                                Ok(v)
                            } else {
                                Err(err(line, "non-finite coordinate".into()))
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    if values.len() != 2 * kk * 3 {
                        return Err(err(
                            line,
                            format!("expected {} values, got {}", 2 * kk * 3, values.len()),
                        ));
                    }
                    let pts: Vec<Vector3<f64>> = values
                        .chunks_exact(3)
                        .map(|c| Vector3::new(c[0], c[1], c[2]))
                        .collect();
                    let (a, b) = pts.split_at(kk);
                    frames.push([a.to_vec(), b.to_vec()]);
                }
            }
        }
        let (Some(_), Some(_), Some(dt), Some(names)) = (agents, k, dt, names) else {
            return Err(err(last_line.max(1), "incomplete header".into()));
        };
        Self::new(dt, names, frames).map_err(|e| err(last_line, e.to_string()))
    }
}

/// Which skeleton joint (or end site) produces each keypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointMap {
    /// `(keypoint name, joint reference)`; a reference ending in `/End`
    /// selects that joint's end site.
    pub entries: Vec<(String, String)>,
}

impl KeypointMap {
    /// Keypoints named after the joints themselves.
    pub fn identity<S: AsRef<str>>(joints: &[S]) -> Self {
        Self {
            entries: joints
                .iter()
                .map(|j| (j.as_ref().to_string(), j.as_ref().to_string()))
                .collect(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.0.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpAxis {
    Y,
    #[default]
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Multiplier converting file units to meters (0.01 for centimeters).
    pub unit_scale: f64,
    pub up_axis: UpAxis,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            unit_scale: 1.0,
            up_axis: UpAxis::Z,
        }
    }
}

/// World keypoints of one agent for every frame, via skeleton FK.
pub fn extract_keypoints(
    motion: &BvhMotion,
    map: &KeypointMap,
    options: ExtractOptions,
) -> Result<Vec<Vec<Vector3<f64>>>, ClipError> {
    let skel = &motion.skeleton;
    let mut targets = Vec::with_capacity(map.entries.len());
    for (_, joint_ref) in &map.entries {
        let (name, end) = match joint_ref.strip_suffix("/End") {
            Some(n) => (n, true),
            None => (joint_ref.as_str(), false),
        };
        let idx = skel
            .joint_index(name)
            .ok_or_else(|| ClipError::UnknownJoint(name.to_string()))?;
        let local = if end {
            skel.joints[idx]
                .end_site
                .ok_or_else(|| ClipError::NoEndSite(name.to_string()))?
        } else {
            Vector3::zeros()
        };
        targets.push((idx, local));
    }
    Ok(motion
        .frames
        .iter()
        .map(|values| {
            let poses = skel.forward_kinematics(values);
            targets
                .iter()
                .map(|(idx, local)| {
                    let p = poses[*idx].transform_point(&(*local).into()).coords * options.unit_scale;
                    match options.up_axis {
                        UpAxis::Z => p,
                        UpAxis::Y => Vector3::new(p.x, -p.z, p.y),
                    }
                })
                .collect()
        })
        .collect())
}
