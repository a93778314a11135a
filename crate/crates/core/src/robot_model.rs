//! Configurable revolute kinematic tree with capsule collision geometry.
//!
//! A robot is described by a [`RobotSpec`] (plain data, loaded from JSON) and
//! compiled into a [`RobotModel`] that resolves names to indices and provides
//! forward kinematics and analytic Jacobians. All Jacobians are expressed
//! against the tangent increment `[dp (3), dtheta (3), dq (n)]` where the root
//! position is updated additively and the root orientation by a left (world
//! frame) rotation `R <- exp(dtheta) R`. See [`RobotConfiguration::retract`].

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DVector, Isometry3, Matrix3xX, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, from_rpy, vec3};

#[derive(Debug, Error)]
pub enum RobotError {
    #[error("duplicate link name `{0}`")]
    DuplicateLink(String),
    #[error("joint `{joint}` references unknown link `{link}`")]
    UnknownJointLink { joint: String, link: String },
    #[error("link `{0}` is not reachable from the root or has several parents")]
    BadTree(String),
    #[error("joint `{0}` has lower limit >= upper limit")]
    InvalidLimits(String),
    #[error("joint `{0}` axis is not unit norm")]
    AxisNotUnit(String),
    #[error("capsule on link `{0}` has non-positive radius")]
    NonPositiveRadius(String),
    #[error("keypoint `{keypoint}` references unknown link `{link}`")]
    UnknownKeypointLink { keypoint: String, link: String },
    #[error("unknown keypoint `{0}`")]
    UnknownKeypoint(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("configuration has {got} joint values, robot has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("robot height must be positive")]
    BadHeight,
    #[error("failed to read robot spec {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse robot spec {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapsuleSpec {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    #[serde(default)]
    pub capsules: Vec<CapsuleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginSpec {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub origin: OriginSpec,
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointBinding {
    pub name: String,
    pub link: String,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalPose {
    pub root_position: [f64; 3],
    #[serde(default)]
    pub root_rpy: [f64; 3],
    /// Empty means all zeros (clamped into limits).
    #[serde(default)]
    pub q: Vec<f64>,
}

/// Serializable robot description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub name: String,
    /// Standing height in meters.
    pub height: f64,
    pub root_link: String,
    pub links: Vec<LinkSpec>,
    /// Joints in topological order: a joint's parent link is the root or the
    /// child of an earlier joint.
    pub joints: Vec<JointSpec>,
    pub keypoints: Vec<KeypointBinding>,
    /// Links whose orientation is tracked.
    #[serde(default)]
    pub key_links: Vec<String>,
    /// Keypoints subject to foot-contact constraints.
    #[serde(default)]
    pub foot_keypoints: Vec<String>,
    pub nominal: NominalPose,
}

impl RobotSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, RobotError> {
        let text = std::fs::read_to_string(path).map_err(|source| RobotError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| RobotError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("robot spec serializes")
    }
}

/// Capsule in its link frame.
#[derive(Clone, Debug)]
pub struct LocalCapsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: Option<usize>,
    pub capsules: Vec<LocalCapsule>,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub parent_link: usize,
    pub child_link: usize,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct Keypoint {
    pub name: String,
    pub link: usize,
    pub offset: Vector3<f64>,
}

/// Joint vector plus floating-base pose.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotConfiguration {
    pub root_position: Vector3<f64>,
    pub root_orientation: UnitQuaternion<f64>,
    pub q: DVector<f64>,
}

impl RobotConfiguration {
    pub fn new(
        root_position: Vector3<f64>,
        root_orientation: UnitQuaternion<f64>,
        q: DVector<f64>,
    ) -> Self {
        Self {
            root_position,
            root_orientation,
            q,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        6 + self.q.len()
    }

    /// Apply a tangent increment `[dp, dtheta, dq]`.
    pub fn retract(&self, delta: &[f64]) -> Self {
        debug_assert_eq!(delta.len(), self.tangent_dim());
        let dp = Vector3::new(delta[0], delta[1], delta[2]);
        let dw = Vector3::new(delta[3], delta[4], delta[5]);
        let mut q = self.q.clone();
        for (qi, d) in q.iter_mut().zip(&delta[6..]) {
            *qi += d;
        }
        Self {
            root_position: self.root_position + dp,
            root_orientation: geometry::exp(&dw) * self.root_orientation,
            q,
        }
    }

    /// Tangent difference `self - other` consistent with [`Self::retract`].
    pub fn difference(&self, other: &Self) -> DVector<f64> {
        let mut out = DVector::zeros(self.tangent_dim());
        let dp = self.root_position - other.root_position;
        let dw = geometry::log(&(self.root_orientation * other.root_orientation.inverse()));
        for k in 0..3 {
            out[k] = dp[k];
            out[3 + k] = dw[k];
        }
        for i in 0..self.q.len() {
            out[6 + i] = self.q[i] - other.q[i];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.root_position.iter().all(|v| v.is_finite())
            && self.root_orientation.coords.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
    }
}

/// Forward kinematics result for one configuration.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub link_poses: Vec<Isometry3<f64>>,
    pub joint_origins: Vec<Vector3<f64>>,
    pub joint_axes: Vec<Vector3<f64>>,
    pub root_position: Vector3<f64>,
}

impl Kinematics {
    pub fn link_position(&self, link: usize) -> Vector3<f64> {
        self.link_poses[link].translation.vector
    }

    pub fn link_rotation(&self, link: usize) -> UnitQuaternion<f64> {
        self.link_poses[link].rotation
    }

    pub fn transform_point(&self, link: usize, local: &Vector3<f64>) -> Vector3<f64> {
        self.link_poses[link].transform_point(&(*local).into()).coords
    }
}

/// Validated, index-resolved robot.
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub spec: RobotSpec,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub keypoints: Vec<Keypoint>,
    pub key_links: Vec<usize>,
    pub foot_keypoints: Vec<usize>,
    root: usize,
    /// Joint indices on the path root -> link, per link.
    chains: Vec<Vec<usize>>,
    link_index: HashMap<String, usize>,
    keypoint_index: HashMap<String, usize>,
}

impl RobotModel {
    pub fn new(spec: RobotSpec) -> Result<Self, RobotError> {
        if !(spec.height > 0.0 && spec.height.is_finite()) {
            return Err(RobotError::BadHeight);
        }
        let mut link_index = HashMap::new();
        let mut links = Vec::with_capacity(spec.links.len());
        for l in &spec.links {
            if link_index.insert(l.name.clone(), links.len()).is_some() {
                return Err(RobotError::DuplicateLink(l.name.clone()));
            }
            let mut capsules = Vec::new();
            for c in &l.capsules {
                if !(c.radius > 0.0) {
                    return Err(RobotError::NonPositiveRadius(l.name.clone()));
                }
                if !c.a.iter().chain(c.b.iter()).all(|v| v.is_finite()) {
                    return Err(RobotError::NonFinite(format!("capsule of `{}`", l.name)));
                }
                capsules.push(LocalCapsule {
                    a: vec3(c.a),
                    b: vec3(c.b),
                    radius: c.radius,
                });
            }
            links.push(Link {
                name: l.name.clone(),
                parent: None,
                joint: None,
                capsules,
            });
        }
        let root = *link_index
            .get(&spec.root_link)
            .ok_or_else(|| RobotError::UnknownLink(spec.root_link.clone()))?;

        let mut placed = vec![false; links.len()];
        placed[root] = true;
        let mut chains = vec![Vec::new(); links.len()];
        let mut joints = Vec::with_capacity(spec.joints.len());
        for (ji, j) in spec.joints.iter().enumerate() {
            let lookup = |name: &str| {
                link_index
                    .get(name)
                    .copied()
                    .ok_or_else(|| RobotError::UnknownJointLink {
                        joint: j.name.clone(),
                        link: name.to_string(),
                    })
            };
            let parent = lookup(&j.parent)?;
            let child = lookup(&j.child)?;
            if !placed[parent] || placed[child] {
                return Err(RobotError::BadTree(j.child.clone()));
            }
            if !(j.lower < j.upper) {
                return Err(RobotError::InvalidLimits(j.name.clone()));
            }
            let axis = vec3(j.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(RobotError::AxisNotUnit(j.name.clone()));
            }
            if !j.origin.xyz.iter().chain(j.origin.rpy.iter()).all(|v| v.is_finite()) {
                return Err(RobotError::NonFinite(format!("origin of `{}`", j.name)));
            }
            placed[child] = true;
            links[child].parent = Some(parent);
            links[child].joint = Some(ji);
            let mut chain = chains[parent].clone();
            chain.push(ji);
            chains[child] = chain;
            joints.push(Joint {
                name: j.name.clone(),
                parent_link: parent,
                child_link: child,
                origin: Isometry3::from_parts(
                    Translation3::from(vec3(j.origin.xyz)),
                    from_rpy(j.origin.rpy),
                ),
                axis: Unit::new_unchecked(axis),
                lower: j.lower,
                upper: j.upper,
            });
        }
        if let Some(i) = placed.iter().position(|p| !p) {
            return Err(RobotError::BadTree(links[i].name.clone()));
        }

        let mut keypoint_index = HashMap::new();
        let mut keypoints = Vec::new();
        for k in &spec.keypoints {
            let link = *link_index
                .get(&k.link)
                .ok_or_else(|| RobotError::UnknownKeypointLink {
                    keypoint: k.name.clone(),
                    link: k.link.clone(),
                })?;
            keypoint_index.insert(k.name.clone(), keypoints.len());
            keypoints.push(Keypoint {
                name: k.name.clone(),
                link,
                offset: vec3(k.offset),
            });
        }
        let key_links = spec
            .key_links
            .iter()
            .map(|n| {
                link_index
                    .get(n)
                    .copied()
                    .ok_or_else(|| RobotError::UnknownLink(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let foot_keypoints = spec
            .foot_keypoints
            .iter()
            .map(|n| {
                keypoint_index
                    .get(n)
                    .copied()
                    .ok_or_else(|| RobotError::UnknownKeypoint(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !spec.nominal.q.is_empty() && spec.nominal.q.len() != joints.len() {
            return Err(RobotError::DimensionMismatch {
                expected: joints.len(),
                got: spec.nominal.q.len(),
            });
        }

        Ok(Self {
            spec,
            links,
            joints,
            keypoints,
            key_links,
            foot_keypoints,
            root,
            chains,
            link_index,
            keypoint_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn tangent_dim(&self) -> usize {
        6 + self.joints.len()
    }

    pub fn height(&self) -> f64 {
        self.spec.height
    }

    pub fn root_link(&self) -> usize {
        self.root
    }

    pub fn link_id(&self, name: &str) -> Result<usize, RobotError> {
        self.link_index
            .get(name)
            .copied()
            .ok_or_else(|| RobotError::UnknownLink(name.to_string()))
    }

    pub fn keypoint_id(&self, name: &str) -> Result<usize, RobotError> {
        self.keypoint_index
            .get(name)
            .copied()
            .ok_or_else(|| RobotError::UnknownKeypoint(name.to_string()))
    }

    /// Joint indices between the root and `link`.
    pub fn chain(&self, link: usize) -> &[usize] {
        &self.chains[link]
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    /// Clamp joint values into their limits.
    pub fn clamp(&self, q: &mut DVector<f64>) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    /// Largest joint-limit violation (0 when inside).
    pub fn limit_violation(&self, q: &DVector<f64>) -> f64 {
        q.iter()
            .zip(&self.joints)
            .map(|(v, j)| (j.lower - v).max(v - j.upper).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn nominal_configuration(&self) -> RobotConfiguration {
        let mut q = if self.spec.nominal.q.is_empty() {
            DVector::zeros(self.dof())
        } else {
            DVector::from_vec(self.spec.nominal.q.clone())
        };
        self.clamp(&mut q);
        RobotConfiguration::new(
            vec3(self.spec.nominal.root_position),
            from_rpy(self.spec.nominal.root_rpy),
            q,
        )
    }

    pub fn forward_kinematics(
        &self,
        config: &RobotConfiguration,
    ) -> Result<Kinematics, RobotError> {
        if config.q.len() != self.dof() {
            return Err(RobotError::DimensionMismatch {
                expected: self.dof(),
                got: config.q.len(),
            });
        }
        let mut link_poses = vec![Isometry3::identity(); self.links.len()];
        link_poses[self.root] = Isometry3::from_parts(
            Translation3::from(config.root_position),
            config.root_orientation,
        );
        let mut joint_origins = Vec::with_capacity(self.dof());
        let mut joint_axes = Vec::with_capacity(self.dof());
        for (ji, j) in self.joints.iter().enumerate() {
            let frame = link_poses[j.parent_link] * j.origin;
            joint_origins.push(frame.translation.vector);
            joint_axes.push(frame.rotation * j.axis.into_inner());
            let motion = UnitQuaternion::from_axis_angle(&j.axis, config.q[ji]);
            link_poses[j.child_link] = frame * motion;
        }
        Ok(Kinematics {
            link_poses,
            joint_origins,
            joint_axes,
            root_position: config.root_position,
        })
    }

    pub fn keypoint_position(&self, kin: &Kinematics, keypoint: usize) -> Vector3<f64> {
        let k = &self.keypoints[keypoint];
        kin.transform_point(k.link, &k.offset)
    }

    pub fn keypoint_positions(&self, kin: &Kinematics) -> Vec<Vector3<f64>> {
        (0..self.keypoints.len())
            .map(|k| self.keypoint_position(kin, k))
            .collect()
    }

    /// Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(
        &self,
        kin: &Kinematics,
        link: usize,
        point: &Vector3<f64>,
    ) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(self.tangent_dim());
        let rel = point - kin.root_position;
        for k in 0..3 {
            jac[(k, k)] = 1.0;
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            jac.set_column(3 + k, &e.cross(&rel));
        }
        for &ji in &self.chains[link] {
            let col = kin.joint_axes[ji].cross(&(point - kin.joint_origins[ji]));
            jac.set_column(6 + ji, &col);
        }
        jac
    }

    /// World angular-velocity Jacobian of `link`.
    pub fn angular_jacobian(&self, kin: &Kinematics, link: usize) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(self.tangent_dim());
        for k in 0..3 {
            jac[(k, 3 + k)] = 1.0;
        }
        for &ji in &self.chains[link] {
            jac.set_column(6 + ji, &kin.joint_axes[ji]);
        }
        jac
    }

    /// 3 x (6+n) position Jacobian of a bound keypoint.
    pub fn position_jacobian(
        &self,
        config: &RobotConfiguration,
        keypoint: &str,
    ) -> Result<Matrix3xX<f64>, RobotError> {
        let id = self.keypoint_id(keypoint)?;
        let kin = self.forward_kinematics(config)?;
        let k = &self.keypoints[id];
        Ok(self.point_jacobian(&kin, k.link, &self.keypoint_position(&kin, id)))
    }

    /// Orientation error `log(target^-1 * current)` of `link` and its Jacobian.
    pub fn orientation_error_jacobian(
        &self,
        kin: &Kinematics,
        link: usize,
        target: &UnitQuaternion<f64>,
    ) -> (Vector3<f64>, Matrix3xX<f64>) {
        let current = kin.link_rotation(link);
        let err = geometry::log(&(target.inverse() * current));
        let map = geometry::right_jacobian_inv(&err) * current.inverse().to_rotation_matrix().matrix();
        (err, map * self.angular_jacobian(kin, link))
    }

    /// World-frame capsules of every link: `(link, a, b, radius)`.
    pub fn world_capsules(&self, kin: &Kinematics) -> Vec<(usize, Vector3<f64>, Vector3<f64>, f64)> {
        let mut out = Vec::new();
        for (li, link) in self.links.iter().enumerate() {
            for c in &link.capsules {
                out.push((
                    li,
                    kin.transform_point(li, &c.a),
                    kin.transform_point(li, &c.b),
                    c.radius,
                ));
            }
        }
        out
    }

    /// Pairs of links that are close in the tree (parent/child or siblings
    /// and grandparents); excluded from self-collision checks.
    pub fn tree_distance_at_most(&self, a: usize, b: usize, max: usize) -> bool {
        let path = |mut l: usize| {
            let mut p = vec![l];
            while let Some(parent) = self.links[l].parent {
                p.push(parent);
                l = parent;
            }
            p
        };
        let pa = path(a);
        let pb = path(b);
        for (da, la) in pa.iter().enumerate() {
            if let Some(db) = pb.iter().position(|lb| lb == la) {
                return da + db <= max;
            }
        }
        false
    }
}
