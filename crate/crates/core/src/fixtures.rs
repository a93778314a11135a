//! Bundled sample data: a G1-like 29-DoF humanoid and two scripted
//! two-person interaction clips (handshake and hug).
//!
//! The source actors are the robot skeleton uniformly scaled to human
//! heights and driven through joint keyframes, so their keypoints carry the
//! same names as the robot keypoints.

use std::f64::consts::PI;

use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::Rng;

use crate::motion_io::DualMotionClip;
use crate::robot_model::{
    CapsuleSpec, JointSpec, KeypointBinding, LinkSpec, NominalPose, OriginSpec, RobotConfiguration, RobotModel,
    RobotSpec,
};

pub const G1_LIKE_HEIGHT: f64 = 1.3;
pub const FIXTURE_FRAME_DT: f64 = 1.0 / 30.0;

fn link(name: &str, capsules: &[([f64; 3], [f64; 3], f64)]) -> LinkSpec {
    LinkSpec {
        name: name.into(),
        capsules: capsules
            .iter()
            .map(|&(a, b, radius)| CapsuleSpec { a, b, radius })
            .collect(),
    }
}

fn joint(name: &str, parent: &str, child: &str, xyz: [f64; 3], axis: [f64; 3], lower: f64, upper: f64) -> JointSpec {
    JointSpec {
        name: name.into(),
        parent: parent.into(),
        child: child.into(),
        origin: OriginSpec { xyz, rpy: [0.0; 3] },
        axis,
        lower,
        upper,
    }
}

fn keypoint(name: &str, link: &str, offset: [f64; 3]) -> KeypointBinding {
    KeypointBinding {
        name: name.into(),
        link: link.into(),
        offset,
    }
}

const X: [f64; 3] = [1.0, 0.0, 0.0];
const Y: [f64; 3] = [0.0, 1.0, 0.0];
const Z: [f64; 3] = [0.0, 0.0, 1.0];
const NEG_Y: [f64; 3] = [0.0, -1.0, 0.0];

/// A 1.3 m, 29-DoF humanoid with G1-like proportions and joint ranges.
pub fn g1_like_spec() -> RobotSpec {
    let mut links = vec![
        link("pelvis", &[([0.0, -0.09, -0.02], [0.0, 0.09, -0.02], 0.08)]),
        link("waist_yaw_link", &[]),
        link("waist_roll_link", &[]),
        link(
            "torso_link",
            &[([0.0, 0.0, 0.03], [0.0, 0.0, 0.28], 0.11), ([0.0, 0.0, 0.44], [0.0, 0.0, 0.44], 0.09)],
        ),
    ];
    let mut joints = vec![
        joint("waist_yaw_joint", "pelvis", "waist_yaw_link", [0.0, 0.0, 0.05], Z, -2.618, 2.618),
        joint("waist_roll_joint", "waist_yaw_link", "waist_roll_link", [0.0; 3], X, -0.52, 0.52),
        joint("waist_pitch_joint", "waist_roll_link", "torso_link", [0.0; 3], Y, -0.52, 0.52),
    ];
    let mut keypoints = vec![
        keypoint("pelvis", "pelvis", [0.0; 3]),
        keypoint("torso", "torso_link", [0.0, 0.0, 0.20]),
        keypoint("head", "torso_link", [0.0, 0.0, 0.55]),
    ];
    for (side, sign) in [("left", 1.0), ("right", -1.0)] {
        let l = |n: &str| format!("{side}_{n}");
        // Arm.
        links.push(link(&l("shoulder_pitch_link"), &[]));
        links.push(link(&l("shoulder_roll_link"), &[]));
        links.push(link(&l("shoulder_yaw_link"), &[([0.0, 0.0, -0.03], [0.0, 0.0, -0.19], 0.045)]));
        links.push(link(&l("elbow_link"), &[([0.0, 0.0, -0.02], [0.0, 0.0, -0.09], 0.04)]));
        links.push(link(&l("wrist_roll_link"), &[]));
        links.push(link(&l("wrist_pitch_link"), &[]));
        links.push(link(&l("wrist_yaw_link"), &[([0.0, 0.0, -0.02], [0.0, 0.0, -0.12], 0.035)]));
        let (roll_lo, roll_hi) = if sign > 0.0 { (-1.5882, 2.2515) } else { (-2.2515, 1.5882) };
        joints.push(joint(&l("shoulder_pitch_joint"), "torso_link", &l("shoulder_pitch_link"), [0.0, 0.16 * sign, 0.30], Y, -3.0892, 2.6704));
        joints.push(joint(&l("shoulder_roll_joint"), &l("shoulder_pitch_link"), &l("shoulder_roll_link"), [0.0; 3], X, roll_lo, roll_hi));
        joints.push(joint(&l("shoulder_yaw_joint"), &l("shoulder_roll_link"), &l("shoulder_yaw_link"), [0.0; 3], Z, -2.618, 2.618));
        joints.push(joint(&l("elbow_joint"), &l("shoulder_yaw_link"), &l("elbow_link"), [0.0, 0.0, -0.22], NEG_Y, -1.0472, 2.0944));
        joints.push(joint(&l("wrist_roll_joint"), &l("elbow_link"), &l("wrist_roll_link"), [0.0, 0.0, -0.10], Z, -1.9722, 1.9722));
        joints.push(joint(&l("wrist_pitch_joint"), &l("wrist_roll_link"), &l("wrist_pitch_link"), [0.0; 3], Y, -1.6144, 1.6144));
        joints.push(joint(&l("wrist_yaw_joint"), &l("wrist_pitch_link"), &l("wrist_yaw_link"), [0.0; 3], X, -1.6144, 1.6144));
        keypoints.push(keypoint(&l("shoulder"), &l("shoulder_pitch_link"), [0.0; 3]));
        keypoints.push(keypoint(&l("elbow"), &l("elbow_link"), [0.0; 3]));
        keypoints.push(keypoint(&l("hand"), &l("wrist_yaw_link"), [0.0, 0.0, -0.08]));
        // Leg.
        links.push(link(&l("hip_pitch_link"), &[]));
        links.push(link(&l("hip_roll_link"), &[]));
        links.push(link(&l("hip_yaw_link"), &[([0.0, 0.0, -0.04], [0.0, 0.0, -0.26], 0.06)]));
        links.push(link(&l("knee_link"), &[([0.0, 0.0, -0.04], [0.0, 0.0, -0.26], 0.05)]));
        links.push(link(&l("ankle_pitch_link"), &[]));
        links.push(link(&l("ankle_roll_link"), &[([-0.05, 0.0, -0.01], [0.12, 0.0, -0.01], 0.03)]));
        let (hroll_lo, hroll_hi) = if sign > 0.0 { (-0.5236, 2.9671) } else { (-2.9671, 0.5236) };
        joints.push(joint(&l("hip_pitch_joint"), "pelvis", &l("hip_pitch_link"), [0.0, 0.09 * sign, -0.06], Y, -2.5307, 2.8798));
        joints.push(joint(&l("hip_roll_joint"), &l("hip_pitch_link"), &l("hip_roll_link"), [0.0; 3], X, hroll_lo, hroll_hi));
        joints.push(joint(&l("hip_yaw_joint"), &l("hip_roll_link"), &l("hip_yaw_link"), [0.0; 3], Z, -2.7576, 2.7576));
        joints.push(joint(&l("knee_joint"), &l("hip_yaw_link"), &l("knee_link"), [0.0, 0.0, -0.30], Y, -0.087267, 2.8798));
        joints.push(joint(&l("ankle_pitch_joint"), &l("knee_link"), &l("ankle_pitch_link"), [0.0, 0.0, -0.30], Y, -0.87267, 0.5236));
        joints.push(joint(&l("ankle_roll_joint"), &l("ankle_pitch_link"), &l("ankle_roll_link"), [0.0; 3], X, -0.2618, 0.2618));
        keypoints.push(keypoint(&l("hip"), &l("hip_pitch_link"), [0.0; 3]));
        keypoints.push(keypoint(&l("knee"), &l("knee_link"), [0.0; 3]));
        keypoints.push(keypoint(&l("foot"), &l("ankle_roll_link"), [0.03, 0.0, -0.04]));
    }
    let mut spec = RobotSpec {
        name: "g1_like_29dof".into(),
        height: G1_LIKE_HEIGHT,
        root_link: "pelvis".into(),
        links,
        joints,
        keypoints,
        key_links: vec![
            "pelvis".into(),
            "torso_link".into(),
            "left_wrist_yaw_link".into(),
            "right_wrist_yaw_link".into(),
            "left_ankle_roll_link".into(),
            "right_ankle_roll_link".into(),
        ],
        foot_keypoints: vec!["left_foot".into(), "right_foot".into()],
        nominal: NominalPose {
            root_position: [0.0, 0.0, 0.70],
            root_rpy: [0.0; 3],
            q: Vec::new(),
        },
    };
    let mut q = vec![0.0; spec.joints.len()];
    for (name, v) in [
        ("left_shoulder_roll_joint", 0.15),
        ("right_shoulder_roll_joint", -0.15),
        ("left_elbow_joint", 0.3),
        ("right_elbow_joint", 0.3),
    ] {
        let i = spec.joints.iter().position(|j| j.name == name).expect("fixture joint");
        q[i] = v;
    }
    spec.nominal.q = q;
    spec
}

pub fn g1_like_model() -> RobotModel {
    RobotModel::new(g1_like_spec()).expect("bundled spec is valid")
}

/// The robot skeleton uniformly scaled to a human of the given height.
pub fn human_spec(height: f64) -> RobotSpec {
    let k = height / G1_LIKE_HEIGHT;
    let s3 = |v: [f64; 3]| [v[0] * k, v[1] * k, v[2] * k];
    let mut spec = g1_like_spec();
    spec.name = format!("human_{:.0}cm", height * 100.0);
    spec.height = height;
    for l in &mut spec.links {
        for c in &mut l.capsules {
            c.a = s3(c.a);
            c.b = s3(c.b);
            c.radius *= k;
        }
    }
    for j in &mut spec.joints {
        j.origin.xyz = s3(j.origin.xyz);
        // Humans move more freely than the robot.
        j.lower = -PI;
        j.upper = PI;
    }
    for kp in &mut spec.keypoints {
        kp.offset = s3(kp.offset);
    }
    spec.nominal.root_position = s3(spec.nominal.root_position);
    spec
}

/// One keyframe of a scripted actor.
#[derive(Clone, Debug)]
struct Key {
    frame: f64,
    x: f64,
    y: f64,
    yaw: f64,
    joints: Vec<(&'static str, f64)>,
}

struct Actor {
    model: RobotModel,
    keys: Vec<Key>,
    /// Additive joint offsets as a function of the frame index.
    wobble: Box<dyn Fn(f64) -> Vec<(&'static str, f64)>>,
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn joint_vector(model: &RobotModel, joints: &[(&str, f64)]) -> DVector<f64> {
    let mut q = model.nominal_configuration().q;
    for (name, v) in joints {
        let i = model
            .joints
            .iter()
            .position(|j| j.name == *name)
            .unwrap_or_else(|| panic!("unknown fixture joint {name}"));
        q[i] = *v;
    }
    q
}

fn configuration(model: &RobotModel, x: f64, y: f64, yaw: f64, q: DVector<f64>) -> RobotConfiguration {
    let z = model.spec.nominal.root_position[2];
    RobotConfiguration::new(
        Vector3::new(x, y, z),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        q,
    )
}

impl Actor {
    fn pose(&self, t: f64) -> RobotConfiguration {
        let keys = &self.keys;
        let (a, b, s) = match keys.iter().position(|k| k.frame > t) {
            None => (keys.len() - 1, keys.len() - 1, 0.0),
            Some(0) => (0, 0, 0.0),
            Some(i) => {
                let (ka, kb) = (&keys[i - 1], &keys[i]);
                (i - 1, i, smoothstep((t - ka.frame) / (kb.frame - ka.frame)))
            }
        };
        let (ka, kb) = (&keys[a], &keys[b]);
        let qa = joint_vector(&self.model, &ka.joints);
        let qb = joint_vector(&self.model, &kb.joints);
        let mut q = &qa + (&qb - &qa) * s;
        for (name, v) in (self.wobble)(t) {
            let i = self.model.joints.iter().position(|j| j.name == name).expect("fixture joint");
            q[i] += v;
        }
        configuration(
            &self.model,
            ka.x + (kb.x - ka.x) * s,
            ka.y + (kb.y - ka.y) * s,
            ka.yaw + (kb.yaw - ka.yaw) * s,
            q,
        )
    }

    fn keypoints(&self, t: f64) -> Vec<Vector3<f64>> {
        let kin = self
            .model
            .forward_kinematics(&self.pose(t))
            .expect("fixture configuration matches model");
        self.model.keypoint_positions(&kin)
    }
}

fn keypoint_at(model: &RobotModel, config: &RobotConfiguration, name: &str) -> Vector3<f64> {
    let kin = model.forward_kinematics(config).expect("fixture configuration");
    model.keypoint_position(&kin, model.keypoint_id(name).expect("fixture keypoint"))
}

fn render(actors: [Actor; 2], frames: usize) -> DualMotionClip {
    let names = actors[0].model.keypoints.iter().map(|k| k.name.clone()).collect();
    let a: Vec<_> = (0..frames).map(|t| actors[0].keypoints(t as f64)).collect();
    let b: Vec<_> = (0..frames).map(|t| actors[1].keypoints(t as f64)).collect();
    DualMotionClip::from_agents(FIXTURE_FRAME_DT, names, a, b).expect("fixture clip is valid")
}

const TALL: f64 = 1.80;
const SHORT: f64 = 1.60;

/// Two actors (1.80 m and 1.60 m) walk up to each other, shake right hands
/// with the hands 5 cm apart, let go and step back. 240 frames at 30 fps.
pub fn handshake_clip() -> DualMotionClip {
    let ma = RobotModel::new(human_spec(TALL)).expect("human spec");
    let mb = RobotModel::new(human_spec(SHORT)).expect("human spec");
    let shake_a: Vec<(&str, f64)> = vec![
        ("right_shoulder_pitch_joint", -0.75),
        ("right_shoulder_roll_joint", 0.05),
        ("right_elbow_joint", 0.75),
    ];
    let hand_a = keypoint_at(&ma, &configuration(&ma, 0.0, 0.0, 0.0, joint_vector(&ma, &shake_a)), "right_hand");
    // Raise B's arm until both hands are level.
    let b_pose = |pitch: f64| -> Vec<(&'static str, f64)> {
        vec![
            ("right_shoulder_pitch_joint", pitch),
            ("right_shoulder_roll_joint", -0.05),
            ("right_elbow_joint", 0.75),
        ]
    };
    let hand_b_at = |pitch: f64| keypoint_at(&mb, &configuration(&mb, 0.0, 0.0, PI, joint_vector(&mb, &b_pose(pitch))), "right_hand");
    let (mut lo, mut hi) = (-1.6, -0.3);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hand_b_at(mid).z < hand_a.z {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let pitch_b = 0.5 * (lo + hi);
    let shake_b = b_pose(pitch_b);
    let hand_b = hand_b_at(pitch_b);
    let gap = 0.05;
    let xa = -0.5 * gap - hand_a.x;
    let xb = 0.5 * gap - hand_b.x;
    let yb = hand_a.y - hand_b.y;

    let rest: Vec<(&str, f64)> = Vec::new();
    let key = |frame: f64, x: f64, y: f64, yaw: f64, joints: &Vec<(&'static str, f64)>| Key {
        frame,
        x,
        y,
        yaw,
        joints: joints.clone(),
    };
    let actor_a = Actor {
        model: ma,
        keys: vec![
            key(0.0, -1.0, 0.0, 0.0, &rest),
            key(60.0, xa - 0.1, 0.0, 0.0, &rest),
            key(100.0, xa, 0.0, 0.0, &shake_a),
            key(180.0, xa, 0.0, 0.0, &shake_a),
            key(210.0, xa - 0.05, 0.0, 0.0, &rest),
            key(239.0, -0.9, 0.0, 0.0, &rest),
        ],
        wobble: Box::new(shake_wobble),
    };
    let actor_b = Actor {
        model: mb,
        keys: vec![
            key(0.0, 1.0, yb, PI, &rest),
            key(60.0, xb + 0.1, yb, PI, &rest),
            key(100.0, xb, yb, PI, &shake_b),
            key(180.0, xb, yb, PI, &shake_b),
            key(210.0, xb + 0.05, yb, PI, &rest),
            key(239.0, 0.9, yb, PI, &rest),
        ],
        wobble: Box::new(shake_wobble),
    };
    render([actor_a, actor_b], 240)
}

/// Pumping motion of the right forearm while the hands are joined.
fn shake_wobble(t: f64) -> Vec<(&'static str, f64)> {
    if !(110.0..170.0).contains(&t) {
        return Vec::new();
    }
    let env = ((t - 110.0) / 60.0 * PI).sin();
    vec![("right_elbow_joint", 0.12 * env * (2.0 * PI * (t - 110.0) / 15.0).sin())]
}

/// Two actors (1.80 m and 1.60 m) walk together and embrace, the taller
/// one's arms over the shorter one's shoulders, then separate. 260 frames at
/// 30 fps.
pub fn hug_clip() -> DualMotionClip {
    let ma = RobotModel::new(human_spec(TALL)).expect("human spec");
    let mb = RobotModel::new(human_spec(SHORT)).expect("human spec");
    let hug_a: Vec<(&str, f64)> = vec![
        ("left_shoulder_pitch_joint", -1.35),
        ("right_shoulder_pitch_joint", -1.35),
        ("left_shoulder_roll_joint", 0.35),
        ("right_shoulder_roll_joint", -0.35),
        ("left_shoulder_yaw_joint", -0.6),
        ("right_shoulder_yaw_joint", 0.6),
        ("left_elbow_joint", 1.3),
        ("right_elbow_joint", 1.3),
    ];
    let hug_b: Vec<(&str, f64)> = vec![
        ("left_shoulder_pitch_joint", -0.7),
        ("right_shoulder_pitch_joint", -0.7),
        ("left_shoulder_roll_joint", 0.45),
        ("right_shoulder_roll_joint", -0.45),
        ("left_shoulder_yaw_joint", -0.5),
        ("right_shoulder_yaw_joint", 0.5),
        ("left_elbow_joint", 1.4),
        ("right_elbow_joint", 1.4),
    ];
    let torso_a = keypoint_at(&ma, &configuration(&ma, 0.0, 0.0, 0.0, joint_vector(&ma, &hug_a)), "torso");
    let torso_b = keypoint_at(&mb, &configuration(&mb, 0.0, 0.0, PI, joint_vector(&mb, &hug_b)), "torso");
    let gap = 0.22;
    let xa = -0.5 * gap - torso_a.x;
    let xb = 0.5 * gap - torso_b.x;
    let rest: Vec<(&str, f64)> = Vec::new();
    let key = |frame: f64, x: f64, yaw: f64, joints: &Vec<(&'static str, f64)>| Key {
        frame,
        x,
        y: 0.0,
        yaw,
        joints: joints.clone(),
    };
    let actor_a = Actor {
        model: ma,
        keys: vec![
            key(0.0, -1.1, 0.0, &rest),
            key(80.0, xa - 0.12, 0.0, &rest),
            key(130.0, xa, 0.0, &hug_a),
            key(200.0, xa, 0.0, &hug_a),
            key(230.0, xa - 0.1, 0.0, &rest),
            key(259.0, -1.0, 0.0, &rest),
        ],
        wobble: Box::new(|t| sway(t, 1.0)),
    };
    let actor_b = Actor {
        model: mb,
        keys: vec![
            key(0.0, 1.1, PI, &rest),
            key(80.0, xb + 0.12, PI, &rest),
            key(130.0, xb, PI, &hug_b),
            key(200.0, xb, PI, &hug_b),
            key(230.0, xb + 0.1, PI, &rest),
            key(259.0, 1.0, PI, &rest),
        ],
        wobble: Box::new(|t| sway(t, -1.0)),
    };
    render([actor_a, actor_b], 260)
}

/// Side-to-side rocking of the embrace.
fn sway(t: f64, sign: f64) -> Vec<(&'static str, f64)> {
    if !(135.0..195.0).contains(&t) {
        return Vec::new();
    }
    let env = ((t - 135.0) / 60.0 * PI).sin();
    vec![("waist_roll_joint", sign * 0.08 * env * (2.0 * PI * (t - 135.0) / 30.0).sin())]
}

/// Named bundled clips.
pub fn clip_by_name(name: &str) -> Option<DualMotionClip> {
    match name {
        "handshake" => Some(handshake_clip()),
        "hug" => Some(hug_clip()),
        _ => None,
    }
}

pub const CLIP_NAMES: [&str; 2] = ["handshake", "hug"];

fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n: f64 = v.norm();
        if n > 0.2 && n <= 1.0 {
            return [v.x / n, v.y / n, v.z / n];
        }
    }
}

fn random_offset(rng: &mut impl Rng, scale: f64) -> [f64; 3] {
    [
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    ]
}

/// Random serial chain for verification: `joints` revolute joints with
/// arbitrary axes, one capsule and one keypoint (`k0`, `k1`, ...) per link,
/// and every other link tracked for orientation.
pub fn random_chain_spec(rng: &mut impl Rng, joints: usize) -> RobotSpec {
    let mut links = vec![link("base", &[([0.0, 0.0, -0.1], [0.0, 0.0, 0.1], 0.05)])];
    let mut joint_specs = Vec::new();
    let mut keypoints = vec![keypoint("k0", "base", random_offset(rng, 0.1))];
    for j in 1..=joints {
        let name = format!("l{j}");
        let parent = if j == 1 { "base".to_string() } else { format!("l{}", j - 1) };
        joint_specs.push(JointSpec {
            name: format!("j{j}"),
            parent,
            child: name.clone(),
            origin: OriginSpec {
                xyz: random_offset(rng, 0.25),
                rpy: random_offset(rng, 0.5),
            },
            axis: random_unit(rng),
            lower: -2.0,
            upper: 2.0,
        });
        links.push(link(&name, &[([0.0; 3], random_offset(rng, 0.2), 0.04)]));
        keypoints.push(keypoint(&format!("k{j}"), &name, random_offset(rng, 0.15)));
    }
    let key_links = links.iter().skip(1).step_by(2).map(|l| l.name.clone()).collect();
    RobotSpec {
        name: format!("chain_{joints}"),
        height: 1.0,
        root_link: "base".into(),
        links,
        joints: joint_specs,
        keypoints,
        key_links,
        foot_keypoints: Vec::new(),
        nominal: NominalPose {
            root_position: [0.0, 0.0, 0.5],
            root_rpy: [0.0; 3],
            q: Vec::new(),
        },
    }
}

/// Random configuration with joints inside 80% of their range.
pub fn random_configuration(model: &RobotModel, rng: &mut impl Rng) -> RobotConfiguration {
    let q = DVector::from_fn(model.dof(), |j, _| {
        let (lo, hi) = (model.joints[j].lower, model.joints[j].upper);
        let mid = 0.5 * (lo + hi);
        mid + 0.8 * (rng.gen_range(lo..hi) - mid)
    });
    RobotConfiguration::new(
        Vector3::from(random_offset(rng, 1.0)),
        UnitQuaternion::from_scaled_axis(Vector3::from(random_offset(rng, 1.5))),
        q,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn g1_like_has_29_dof_and_stands_on_the_ground() {
        let m = g1_like_model();
        assert_eq!(m.dof(), 29);
        let kin = m.forward_kinematics(&m.nominal_configuration()).unwrap();
        let head = m.keypoint_position(&kin, m.keypoint_id("head").unwrap());
        let foot = m.keypoint_position(&kin, m.keypoint_id("left_foot").unwrap());
        assert_relative_eq!(head.z, 1.3, epsilon = 1e-12);
        assert_relative_eq!(foot.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = g1_like_spec();
        assert_eq!(RobotSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn handshake_hands_meet() {
        let clip = handshake_clip();
        assert_eq!(clip.num_frames(), 240);
        let h = clip.keypoint_index("right_hand").unwrap();
        let f = &clip.frames[140];
        let d = (f[0][h] - f[1][h]).norm();
        assert!(d < 0.08, "hands {d} apart");
        let start = &clip.frames[0];
        assert!((start[0][h] - start[1][h]).norm() > 1.0);
    }

    #[test]
    fn hug_torsos_close() {
        let clip = hug_clip();
        assert_eq!(clip.num_frames(), 260);
        let k = clip.keypoint_index("torso").unwrap();
        let d = clip.frames[160][0][k] - clip.frames[160][1][k];
        let horizontal = d.x.hypot(d.y);
        assert!((horizontal - 0.22).abs() < 0.02, "torsos {horizontal} apart");
    }
}
