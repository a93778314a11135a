//! Dual reference manifolds: per-actor scaling for self-motion terms and a
//! single shared scaling for inter-agent geometry.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clip::DualMotionClip;

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("estimated source height for agent {agent} is not positive ({height})")]
    NonPositiveHeight { agent: usize, height: f64 },
    #[error("robot height must be positive, got {0}")]
    BadRobotHeight(f64),
    #[error("clip has no frames")]
    EmptyClip,
    #[error("height estimator needs keypoint `{0}`")]
    MissingKeypoint(String),
}

/// How the raw source height `h_raw` of each actor is measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeightEstimator {
    /// Head keypoint height above the lowest foot keypoint, averaged over
    /// the first `frames` frames.
    HeadToFoot {
        head: String,
        feet: Vec<String>,
        frames: usize,
    },
    /// Vertical extent of all keypoints, averaged over the first `frames` frames.
    VerticalExtent { frames: usize },
    /// Known heights, one per agent.
    Fixed { heights: [f64; 2] },
}

impl Default for HeightEstimator {
    fn default() -> Self {
        Self::HeadToFoot {
            head: "head".into(),
            feet: vec!["left_foot".into(), "right_foot".into()],
            frames: 10,
        }
    }
}

impl HeightEstimator {
    /// Height of each agent (or of a single keypoint set when used on a robot).
    pub fn estimate(&self, clip: &DualMotionClip) -> Result<[f64; 2], ManifoldError> {
        if clip.frames.is_empty() {
            return Err(ManifoldError::EmptyClip);
        }
        let mut out = [0.0; 2];
        for (agent, h) in out.iter_mut().enumerate() {
            let frames: Vec<&[Vector3<f64>]> =
                clip.frames.iter().map(|f| f[agent].as_slice()).collect();
            *h = self.estimate_frames(&clip.names, &frames)?;
        }
        Ok(out)
    }

    /// Height of one agent from its keypoint frames.
    pub fn estimate_frames(
        &self,
        names: &[String],
        frames: &[&[Vector3<f64>]],
    ) -> Result<f64, ManifoldError> {
        let index = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| ManifoldError::MissingKeypoint(n.to_string()))
        };
        let mean = |n: usize, f: &dyn Fn(&[Vector3<f64>]) -> f64| {
            let n = n.clamp(1, frames.len().max(1));
            frames.iter().take(n).map(|p| f(p)).sum::<f64>() / n as f64
        };
        match self {
            Self::HeadToFoot { head, feet, frames: n } => {
                let h = index(head)?;
                let fs = feet.iter().map(|f| index(f)).collect::<Result<Vec<_>, _>>()?;
                Ok(mean(*n, &|p| {
                    let low = fs.iter().map(|&i| p[i].z).fold(f64::INFINITY, f64::min);
                    p[h].z - low
                }))
            }
            Self::VerticalExtent { frames: n } => Ok(mean(*n, &|p| {
                let hi = p.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max);
                let lo = p.iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
                if p.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            })),
            Self::Fixed { heights } => Ok(heights[0]),
        }
    }
}

/// Individual-manifold and unified-manifold references for both agents.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePair {
    pub frame_dt: f64,
    pub names: Vec<String>,
    /// `p_ind[t][agent][keypoint]`, each agent scaled by its own factor.
    pub p_ind: Vec<[Vec<Vector3<f64>>; 2]>,
    /// `p_uni[t][agent][keypoint]`, both agents scaled by `s_unified`.
    pub p_uni: Vec<[Vec<Vector3<f64>>; 2]>,
    pub s_individual: [f64; 2],
    pub s_unified: f64,
    pub h_robot: f64,
    pub h_raw: [f64; 2],
}

impl ReferencePair {
    pub fn num_frames(&self) -> usize {
        self.p_ind.len()
    }
}

pub fn build_manifolds(
    clip: &DualMotionClip,
    h_robot: f64,
    estimator: &HeightEstimator,
) -> Result<ReferencePair, ManifoldError> {
    if !(h_robot > 0.0 && h_robot.is_finite()) {
        return Err(ManifoldError::BadRobotHeight(h_robot));
    }
    let h_raw = match estimator {
        HeightEstimator::Fixed { heights } => *heights,
        e => e.estimate(clip)?,
    };
    for (agent, &h) in h_raw.iter().enumerate() {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ManifoldError::NonPositiveHeight { agent, height: h });
        }
    }
    let s = [h_robot / h_raw[0], h_robot / h_raw[1]];
    let s_uni = 0.5 * (s[0] + s[1]);
    let p_ind = clip
        .frames
        .iter()
        .map(|f| [scaled(&f[0], s[0]), scaled(&f[1], s[1])])
        .collect();
    let p_uni = clip
        .frames
        .iter()
        .map(|f| [scaled(&f[0], s_uni), scaled(&f[1], s_uni)])
        .collect();
    Ok(ReferencePair {
        frame_dt: clip.frame_dt,
        names: clip.names.clone(),
        p_ind,
        p_uni,
        s_individual: s,
        s_unified: s_uni,
        h_robot,
        h_raw,
    })
}

fn scaled(points: &[Vector3<f64>], s: f64) -> Vec<Vector3<f64>> {
    points.iter().map(|p| p * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn clip(a: Vec<Vector3<f64>>, b: Vec<Vector3<f64>>) -> DualMotionClip {
        let names = (0..a.len()).map(|i| format!("k{i}")).collect();
        DualMotionClip::new(0.1, names, vec![[a, b]]).unwrap()
    }

    #[test]
    fn scale_factors_from_heights() {
        let c = clip(vec![Vector3::new(0.0, 0.0, 1.0)], vec![Vector3::new(1.0, 0.0, 1.0)]);
        let est = HeightEstimator::Fixed { heights: [1.75, 1.80] };
        let r = build_manifolds(&c, 1.3, &est).unwrap();
        assert_relative_eq!(r.s_individual[0], 0.742857142857, epsilon = 1e-9);
        assert_relative_eq!(r.s_individual[1], 0.722222222222, epsilon = 1e-9);
        assert_relative_eq!(r.s_unified, 0.732539682540, epsilon = 1e-9);
    }

    #[test]
    fn identical_actors_share_manifolds() {
        let c = clip(vec![Vector3::new(0.3, 0.1, 1.0)], vec![Vector3::new(1.0, 0.0, 1.2)]);
        let r = build_manifolds(&c, 1.3, &HeightEstimator::Fixed { heights: [1.7, 1.7] }).unwrap();
        assert_eq!(r.p_ind, r.p_uni);
    }

    #[test]
    fn unified_relative_distance_scales() {
        let c = clip(vec![Vector3::zeros()], vec![Vector3::new(1.0, 0.0, 0.0)]);
        let r = build_manifolds(&c, 1.5, &HeightEstimator::Fixed { heights: [2.0, 2.0] }).unwrap();
        assert_relative_eq!((r.p_uni[0][1][0] - r.p_uni[0][0][0]).norm(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn head_to_foot_default_and_errors() {
        let names: Vec<String> = ["head", "left_foot", "right_foot"].iter().map(|s| s.to_string()).collect();
        let a = vec![Vector3::new(0.0, 0.0, 1.7), Vector3::new(0.0, 0.1, 0.05), Vector3::new(0.0, -0.1, 0.0)];
        let b = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 0.1, 0.05), Vector3::new(0.0, -0.1, 0.0)];
        let c = DualMotionClip::new(0.1, names, vec![[a, b]]).unwrap();
        let h = HeightEstimator::default().estimate(&c).unwrap();
        assert_relative_eq!(h[0], 1.7);
        assert_eq!(
            build_manifolds(&c, 1.3, &HeightEstimator::default()).unwrap_err(),
            ManifoldError::NonPositiveHeight { agent: 1, height: 0.0 }
        );
    }
}
