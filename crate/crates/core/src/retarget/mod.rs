//! Frame-by-frame coupled SQP retargeting of two source actors onto two robots.

pub mod problem;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::collision::{self, CollisionRowOptions};
use crate::geometry::frame_from_axes;
use crate::interaction_mesh::{self, GraphPriors, MeshConfig, MeshError, SelfGraph};
use crate::motion_io::{build_manifolds, DualMotionClip, HeightEstimator, ManifoldError, ReferencePair};
use crate::qp::{solve_qp, QpError, QpOptions, QpProblem, QpStatus};
use crate::robot_model::{RobotConfiguration, RobotError, RobotModel};

pub use problem::{retract_pair, FrameProblem, FrameTargets, Linearization, ObjectiveWeights};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("robot {agent} has no keypoint `{name}` required by the mesh")]
    MissingRobotKeypoint { agent: usize, name: String },
    #[error("reference has no keypoint `{0}`")]
    MissingReferenceKeypoint(String),
    #[error("clip has no frames")]
    EmptyClip,
    #[error("frame {frame}: {source}")]
    Qp { frame: usize, source: QpError },
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// Body frame of a key link, built from source keypoints: z along
/// `primary.0 -> primary.1`, y along `secondary.0 -> secondary.1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationFrame {
    pub link: String,
    pub primary: (String, String),
    pub secondary: (String, String),
}

fn frame_def(link: &str, primary: (&str, &str), secondary: (&str, &str)) -> OrientationFrame {
    OrientationFrame {
        link: link.into(),
        primary: (primary.0.into(), primary.1.into()),
        secondary: (secondary.0.into(), secondary.1.into()),
    }
}

fn default_orientation_frames() -> Vec<OrientationFrame> {
    let shoulders = ("right_shoulder", "left_shoulder");
    let hips = ("right_hip", "left_hip");
    vec![
        frame_def("pelvis", ("pelvis", "torso"), hips),
        frame_def("torso_link", ("torso", "head"), shoulders),
        frame_def("left_wrist_yaw_link", ("left_elbow", "left_hand"), shoulders),
        frame_def("right_wrist_yaw_link", ("right_elbow", "right_hand"), shoulders),
        frame_def("left_ankle_roll_link", ("left_knee", "left_foot"), hips),
        frame_def("right_ankle_roll_link", ("right_knee", "right_foot"), hips),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub w_self: f64,
    pub w_inter: f64,
    pub w_reg: f64,
    pub lambda_rot: f64,
    /// Per-component step bound (rad or m) of every SQP iteration.
    pub trust_region: f64,
    /// Also rescale each step so its Euclidean norm is within `trust_region`.
    pub l2_trust_region: bool,
    /// Clearance required by the linearized collision rows (m).
    pub eps_safe: f64,
    /// Allowed motion of a contacting foot per frame (m).
    pub eps_stick: f64,
    pub sqp_iters_per_frame: usize,
    /// Iterations used to settle the first frame from the nominal pose.
    pub initial_iters: usize,
    /// Stop iterating once the step infinity norm drops below this.
    pub step_tolerance: f64,
    pub qp_tolerance: f64,
    pub qp_max_iterations: usize,
    /// Collision rows are emitted for pairs closer than this (m).
    pub activation_margin: f64,
    pub collision: bool,
    pub self_collision: bool,
    pub foot_contact_height: f64,
    pub foot_contact_speed: f64,
    /// Robot height; measured on the robot's nominal pose with
    /// `height_estimator` when absent.
    pub h_robot: Option<f64>,
    pub height_estimator: HeightEstimator,
    pub orientation_frames: Vec<OrientationFrame>,
    /// Frames whose two axes are closer to parallel than this sine are skipped.
    pub min_frame_sin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            w_self: 2.0,
            w_inter: 10.0,
            w_reg: 0.1,
            lambda_rot: 0.1,
            trust_region: 0.05,
            l2_trust_region: false,
            eps_safe: 0.005,
            eps_stick: 0.005,
            sqp_iters_per_frame: 3,
            initial_iters: 50,
            step_tolerance: 1e-5,
            qp_tolerance: 1e-9,
            qp_max_iterations: 10_000,
            activation_margin: 0.10,
            collision: true,
            self_collision: false,
            foot_contact_height: 0.02,
            foot_contact_speed: 0.2,
            h_robot: None,
            height_estimator: HeightEstimator::default(),
            orientation_frames: default_orientation_frames(),
            min_frame_sin: 0.2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        let weights = [self.w_self, self.w_inter, self.w_reg, self.lambda_rot];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and non-negative");
        }
        if !(self.trust_region > 0.0 && self.trust_region.is_finite()) {
            return bad("trust_region must be positive");
        }
        if self.sqp_iters_per_frame == 0 {
            return bad("sqp_iters_per_frame must be at least 1");
        }
        let nonneg = [
            self.eps_safe,
            self.eps_stick,
            self.step_tolerance,
            self.qp_tolerance,
            self.activation_margin,
            self.foot_contact_height,
            self.foot_contact_speed,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("tolerances and margins must be finite and non-negative");
        }
        if let Some(h) = self.h_robot {
            if !(h > 0.0 && h.is_finite()) {
                return bad("h_robot must be positive");
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            w_self: self.w_self,
            w_inter: self.w_inter,
            w_reg: self.w_reg,
            lambda_rot: self.lambda_rot,
        }
    }
}

/// Per-frame solve record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    /// Objective after the last accepted iterate.
    pub objective: f64,
    /// Objective at the start and after each accepted SQP iteration.
    pub objective_trace: Vec<f64>,
    /// Infinity norm of each accepted step.
    pub step_norms: Vec<f64>,
    pub sqp_iterations: usize,
    pub qp_iterations: usize,
    pub max_constraint_violation: f64,
    pub penetration_depth: f64,
    pub min_inter_distance: f64,
    pub active_collision_rows: usize,
    pub foot_rows: usize,
    /// `eps_safe` was relaxed to 0 after an infeasible subproblem.
    pub relaxed: bool,
    /// No feasible subproblem; the frame keeps the previous iterate.
    pub failed: bool,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotTrajectory {
    pub robot_models: [String; 2],
    pub frame_dt: f64,
    pub solver_config_hash: String,
    pub frames: Vec<[RobotConfiguration; 2]>,
    pub diagnostics: Vec<FrameDiagnostics>,
    pub priors: GraphPriors,
}

impl RobotTrajectory {
    pub fn failed_frames(&self) -> Vec<usize> {
        self.diagnostics.iter().filter(|d| d.failed).map(|d| d.frame).collect()
    }
}

/// Robot height from the nominal pose, measured like the source heights.
pub fn nominal_robot_height(model: &RobotModel, estimator: &HeightEstimator) -> Result<f64, SolverError> {
    let kin = model.forward_kinematics(&model.nominal_configuration())?;
    let pts = model.keypoint_positions(&kin);
    let names: Vec<String> = model.keypoints.iter().map(|k| k.name.clone()).collect();
    let h = match estimator {
        HeightEstimator::Fixed { .. } => model.height(),
        e => e.estimate_frames(&names, &[pts.as_slice()])?,
    };
    Ok(h)
}

/// Source-foot contact flags `[agent][frame][foot]`, aligned with each
/// model's `foot_keypoints`.
pub fn detect_foot_contacts(
    reference: &ReferencePair,
    models: [&RobotModel; 2],
    height: f64,
    speed: f64,
) -> Result<[Vec<Vec<bool>>; 2], SolverError> {
    let mut out: [Vec<Vec<bool>>; 2] = [Vec::new(), Vec::new()];
    let t_count = reference.num_frames();
    for agent in 0..2 {
        let idx = models[agent]
            .foot_keypoints
            .iter()
            .map(|&k| {
                let name = &models[agent].keypoints[k].name;
                reference
                    .names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| SolverError::MissingReferenceKeypoint(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for t in 0..t_count {
            let (a, b) = if t == 0 { (0, 1.min(t_count - 1)) } else { (t - 1, t) };
            out[agent].push(
                idx.iter()
                    .map(|&k| {
                        let p = reference.p_ind[t][agent][k];
                        let v = if a == b {
                            0.0
                        } else {
                            (reference.p_ind[b][agent][k] - reference.p_ind[a][agent][k]).norm() / reference.frame_dt
                        };
                        p.z < height && v < speed
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

struct OrientationTerm {
    link: usize,
    keypoints: [usize; 4],
    /// `F_nominal^-1 * R_link_nominal`
    offset: UnitQuaternion<f64>,
}

fn orientation_terms(
    model: &RobotModel,
    names: &[String],
    config: &SolverConfig,
) -> Result<Vec<OrientationTerm>, SolverError> {
    let kin = model.forward_kinematics(&model.nominal_configuration())?;
    let mut terms = Vec::new();
    for &link in &model.key_links {
        let lname = &model.links[link].name;
        let Some(def) = config.orientation_frames.iter().find(|f| &f.link == lname) else {
            continue;
        };
        let ids = [&def.primary.0, &def.primary.1, &def.secondary.0, &def.secondary.1];
        let mut src = [0; 4];
        let mut robot = [Vector3::zeros(); 4];
        for (k, name) in ids.iter().enumerate() {
            src[k] = names
                .iter()
                .position(|n| n == *name)
                .ok_or_else(|| SolverError::MissingReferenceKeypoint((*name).clone()))?;
            let rk = model.keypoint_id(name).map_err(|_| SolverError::MissingRobotKeypoint {
                agent: 0,
                name: (*name).clone(),
            })?;
            robot[k] = model.keypoint_position(&kin, rk);
        }
        let Some(f_nom) = frame_from_axes(&(robot[1] - robot[0]), &(robot[3] - robot[2]), config.min_frame_sin) else {
            continue;
        };
        terms.push(OrientationTerm {
            link,
            keypoints: src,
            offset: f_nom.inverse() * kin.link_rotation(link),
        });
    }
    Ok(terms)
}

fn orientation_targets(
    terms: &[OrientationTerm],
    points: &[Vector3<f64>],
    min_sin: f64,
) -> Vec<(usize, UnitQuaternion<f64>)> {
    terms
        .iter()
        .filter_map(|t| {
            let [a, b, c, d] = t.keypoints;
            frame_from_axes(&(points[b] - points[a]), &(points[d] - points[c]), min_sin)
                .map(|f| (t.link, f * t.offset))
        })
        .collect()
}

/// Clip-wide data shared by every frame solve.
struct Setup<'a> {
    models: [&'a RobotModel; 2],
    reference: &'a ReferencePair,
    mesh: &'a MeshConfig,
    config: &'a SolverConfig,
    graph: SelfGraph,
    ref_vertices: Vec<usize>,
    robot_vertices: [Vec<usize>; 2],
    orientation: [Vec<OrientationTerm>; 2],
    contacts: [Vec<Vec<bool>>; 2],
}

impl<'a> Setup<'a> {
    fn new(
        reference: &'a ReferencePair,
        models: [&'a RobotModel; 2],
        mesh: &'a MeshConfig,
        config: &'a SolverConfig,
    ) -> Result<Self, SolverError> {
        let graph = SelfGraph::new(mesh)?;
        let ref_vertices = interaction_mesh::vertex_keypoints(mesh, &reference.names)?;
        let mut robot_vertices = [Vec::new(), Vec::new()];
        for agent in 0..2 {
            for v in &mesh.vertices {
                let id = models[agent].keypoint_id(v).map_err(|_| SolverError::MissingRobotKeypoint {
                    agent,
                    name: v.clone(),
                })?;
                robot_vertices[agent].push(id);
            }
        }
        let orientation = [
            orientation_terms(models[0], &reference.names, config)?,
            orientation_terms(models[1], &reference.names, config)?,
        ];
        let contacts = detect_foot_contacts(reference, models, config.foot_contact_height, config.foot_contact_speed)?;
        Ok(Self {
            models,
            reference,
            mesh,
            config,
            graph,
            ref_vertices,
            robot_vertices,
            orientation,
            contacts,
        })
    }

    fn targets(&self, t: usize, prev: [RobotConfiguration; 2]) -> Result<FrameTargets, SolverError> {
        let mut laplacian = [Vec::new(), Vec::new()];
        let mut orientation = [Vec::new(), Vec::new()];
        for agent in 0..2 {
            let pts = &self.reference.p_ind[t][agent];
            let verts: Vec<Vector3<f64>> = self.ref_vertices.iter().map(|&k| pts[k]).collect();
            laplacian[agent] = (0..self.graph.len())
                .map(|v| self.graph.laplacian(&verts, v).ok())
                .collect();
            orientation[agent] = orientation_targets(&self.orientation[agent], pts, self.config.min_frame_sin);
        }
        let inter = interaction_mesh::active_inter_edges(&self.reference.p_uni[t], &self.ref_vertices, self.mesh)?;
        Ok(FrameTargets {
            laplacian,
            orientation,
            inter,
            prev,
        })
    }

    fn problem(&self, targets: FrameTargets) -> FrameProblem<'_> {
        FrameProblem {
            models: self.models,
            graph: &self.graph,
            vertex_keypoints: [&self.robot_vertices[0], &self.robot_vertices[1]],
            targets,
            weights: self.config.weights(),
        }
    }

    /// First-frame starting point: nominal posture placed at the unified
    /// pelvis position and facing the source pelvis heading.
    fn initial_configuration(&self) -> Result<[RobotConfiguration; 2], SolverError> {
        let mut out = [self.models[0].nominal_configuration(), self.models[1].nominal_configuration()];
        for agent in 0..2 {
            let model = self.models[agent];
            let root = model.root_link();
            let pelvis_ref = self.reference.names.iter().position(|n| n == "pelvis");
            let pelvis_robot = model.keypoint_id("pelvis").ok();
            let kin = model.forward_kinematics(&out[agent])?;
            if let (Some(pr), Some(rk)) = (pelvis_ref, pelvis_robot) {
                let target = self.reference.p_uni[0][agent][pr];
                let current = model.keypoint_position(&kin, rk);
                let shift = Vector3::new(target.x - current.x, target.y - current.y, 0.0);
                out[agent].root_position += shift;
            }
            let targets = orientation_targets(&self.orientation[agent], &self.reference.p_ind[0][agent], self.config.min_frame_sin);
            if let Some((_, q)) = targets.iter().find(|(l, _)| *l == root) {
                // Keep the nominal tilt, take the heading.
                let fwd = q * Vector3::x();
                let yaw = fwd.y.atan2(fwd.x);
                let nominal_fwd = out[agent].root_orientation * Vector3::x();
                let nominal_yaw = nominal_fwd.y.atan2(nominal_fwd.x);
                let turn = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw - nominal_yaw);
                let pivot = out[agent].root_position;
                out[agent].root_orientation = turn * out[agent].root_orientation;
                out[agent].root_position = pivot;
            }
        }
        Ok(out)
    }

    fn foot_positions(&self, agent: usize, c: &RobotConfiguration) -> Result<Vec<Vector3<f64>>, SolverError> {
        let model = self.models[agent];
        let kin = model.forward_kinematics(c)?;
        Ok(model.foot_keypoints.iter().map(|&k| model.keypoint_position(&kin, k)).collect())
    }
}

/// Linear rows `a . delta >= lower` of one SQP iteration.
struct Rows {
    a: Vec<DVector<f64>>,
    lower: Vec<f64>,
    collision: usize,
    foot: usize,
}

/// Foot anchors `[agent] -> Vec<(foot keypoint, anchor position)>`.
type Anchors = [Vec<(usize, Vector3<f64>)>; 2];

fn constraint_rows(
    setup: &Setup<'_>,
    x: &[RobotConfiguration; 2],
    anchors: &Anchors,
    eps_safe: f64,
) -> Result<Rows, SolverError> {
    let models = setup.models;
    let cfg = setup.config;
    let kins = [models[0].forward_kinematics(&x[0])?, models[1].forward_kinematics(&x[1])?];
    let mut rows = Rows {
        a: Vec::new(),
        lower: Vec::new(),
        collision: 0,
        foot: 0,
    };
    let opts = CollisionRowOptions {
        activation_margin: cfg.activation_margin,
        eps_safe,
        inter_robot: cfg.collision,
        self_collision: cfg.self_collision,
        ..CollisionRowOptions::default()
    };
    if cfg.collision || cfg.self_collision {
        for r in collision::collision_rows(models, [&kins[0], &kins[1]], &opts) {
            rows.a.push(r.row);
            rows.lower.push(r.lower);
            rows.collision += 1;
        }
    }
    let offsets = [0, models[0].tangent_dim()];
    let dim = offsets[1] + models[1].tangent_dim();
    for agent in 0..2 {
        let model = models[agent];
        for &(k, anchor) in &anchors[agent] {
            let p = model.keypoint_position(&kins[agent], k);
            let jac = model.point_jacobian(&kins[agent], model.keypoints[k].link, &p);
            let off = p - anchor;
            for c in 0..3 {
                // Keep the new offset within [-eps, eps], widened to contain
                // the current offset so a zero step stays feasible.
                let lo = (-cfg.eps_stick).min(off[c]) - off[c];
                let hi = cfg.eps_stick.max(off[c]) - off[c];
                let mut row = DVector::zeros(dim);
                for j in 0..jac.ncols() {
                    row[offsets[agent] + j] = jac[(c, j)];
                }
                rows.a.push(row.clone());
                rows.lower.push(lo);
                rows.a.push(-row);
                rows.lower.push(-hi);
                rows.foot += 2;
            }
        }
    }
    Ok(rows)
}

/// Per-component step box: trust region intersected with joint limits.
fn step_box(models: [&RobotModel; 2], x: &[RobotConfiguration; 2], delta: f64) -> (DVector<f64>, DVector<f64>) {
    let n = models[0].tangent_dim() + models[1].tangent_dim();
    let mut lo = DVector::from_element(n, -delta);
    let mut hi = DVector::from_element(n, delta);
    let mut off = 0;
    for agent in 0..2 {
        let m = models[agent];
        for (j, joint) in m.joints.iter().enumerate() {
            let q = x[agent].q[j];
            lo[off + 6 + j] = lo[off + 6 + j].max(joint.lower - q).min(0.0);
            hi[off + 6 + j] = hi[off + 6 + j].min(joint.upper - q).max(0.0);
        }
        off += m.tangent_dim();
    }
    (lo, hi)
}

fn clamp_pair(models: [&RobotModel; 2], x: &mut [RobotConfiguration; 2]) {
    for agent in 0..2 {
        models[agent].clamp(&mut x[agent].q);
    }
}

fn safety_distance(setup: &Setup<'_>, x: &[RobotConfiguration; 2]) -> Result<f64, SolverError> {
    let caps = collision::configuration_capsules(setup.models, x)?;
    Ok(collision::min_inter_distance([&caps[0], &caps[1]]))
}

struct FrameOutcome {
    x: [RobotConfiguration; 2],
    diag: FrameDiagnostics,
}

fn solve_frame(
    setup: &Setup<'_>,
    frame: usize,
    start: [RobotConfiguration; 2],
    prev: [RobotConfiguration; 2],
    anchors: &Anchors,
    iterations: usize,
) -> Result<FrameOutcome, SolverError> {
    let cfg = setup.config;
    let models = setup.models;
    let problem = setup.problem(setup.targets(frame, prev)?);
    let mut x = start;
    clamp_pair(models, &mut x);
    let mut value = problem.objective(&x)?;
    let mut diag = FrameDiagnostics {
        frame,
        objective_trace: vec![value],
        ..FrameDiagnostics::default()
    };
    let check_safety = cfg.collision;
    let mut dist = if check_safety { safety_distance(setup, &x)? } else { f64::INFINITY };
    let qp_opts = QpOptions {
        feasibility_tol: cfg.qp_tolerance,
        max_iterations: cfg.qp_max_iterations,
    };

    for _ in 0..iterations {
        let lin = problem.linearize(&x)?;
        let mut h = lin.hessian();
        let g = lin.gradient();
        let n = g.len();
        // Tiny ridge keeps the subproblem strictly convex when w_reg is 0.
        for i in 0..n {
            h[(i, i)] += 1e-10;
        }
        let (box_lo, box_hi) = step_box(models, &x, cfg.trust_region);
        let mut solution = None;
        for eps in [cfg.eps_safe, 0.0] {
            let rows = constraint_rows(setup, &x, anchors, eps)?;
            let mut a = DMatrix::zeros(rows.a.len(), n);
            for (i, r) in rows.a.iter().enumerate() {
                a.set_row(i, &r.transpose());
            }
            let qp = QpProblem {
                h: h.clone(),
                g: g.clone(),
                a,
                lower: DVector::from_vec(rows.lower.clone()),
                box_lower: box_lo.clone(),
                box_upper: box_hi.clone(),
            };
            let sol = solve_qp(&qp, &qp_opts).map_err(|source| SolverError::Qp { frame, source })?;
            diag.qp_iterations += sol.iterations;
            diag.active_collision_rows = rows.collision;
            diag.foot_rows = rows.foot;
            if sol.status == QpStatus::Optimal {
                solution = Some(sol);
                break;
            }
            if eps == 0.0 || cfg.eps_safe == 0.0 {
                break;
            }
            diag.relaxed = true;
        }
        let Some(sol) = solution else {
            diag.failed = true;
            diag.message = Some(format!("frame {frame}: QP subproblem infeasible; keeping previous iterate"));
            break;
        };
        let mut step = sol.x.clone();
        for i in 0..n {
            step[i] = step[i].clamp(box_lo[i], box_hi[i]);
        }
        if cfg.l2_trust_region {
            let norm = step.norm();
            if norm > cfg.trust_region {
                step *= cfg.trust_region / norm;
            }
        }
        // Backtrack until the objective does not increase and the robots
        // stay separated (or at least separate further).
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..11 {
            let trial_step = &step * alpha;
            let mut cand = retract_pair(&x, models, trial_step.as_slice());
            clamp_pair(models, &mut cand);
            let v = problem.objective(&cand)?;
            let d = if check_safety { safety_distance(setup, &cand)? } else { f64::INFINITY };
            let safe = !check_safety || d >= 0.0 || d >= dist;
            if v <= value && safe {
                accepted = Some((cand, v, d, trial_step.amax()));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, v, d, step_inf)) = accepted else {
            break;
        };
        x = cand;
        value = v;
        dist = d;
        diag.sqp_iterations += 1;
        diag.objective_trace.push(v);
        diag.step_norms.push(step_inf);
        if step_inf < cfg.step_tolerance {
            break;
        }
    }
    diag.objective = value;
    let caps = collision::configuration_capsules(models, &x)?;
    diag.min_inter_distance = collision::min_inter_distance([&caps[0], &caps[1]]);
    diag.penetration_depth = collision::penetration_depth([&caps[0], &caps[1]]);
    let mut violation = models[0].limit_violation(&x[0].q).max(models[1].limit_violation(&x[1].q));
    if cfg.collision {
        violation = violation.max(diag.penetration_depth);
    }
    for agent in 0..2 {
        if anchors[agent].is_empty() {
            continue;
        }
        let kin = models[agent].forward_kinematics(&x[agent])?;
        for &(k, anchor) in &anchors[agent] {
            let off = (models[agent].keypoint_position(&kin, k) - anchor).amax();
            violation = violation.max(off - cfg.eps_stick);
        }
    }
    diag.max_constraint_violation = violation.max(0.0);
    Ok(FrameOutcome { x, diag })
}

/// Retarget a reference pair onto two robots.
pub fn retarget_reference(
    reference: &ReferencePair,
    models: [&RobotModel; 2],
    mesh: &MeshConfig,
    config: &SolverConfig,
) -> Result<RobotTrajectory, SolverError> {
    config.validate()?;
    if reference.num_frames() == 0 {
        return Err(SolverError::EmptyClip);
    }
    let setup = Setup::new(reference, models, mesh, config)?;
    let mut frames: Vec<[RobotConfiguration; 2]> = Vec::with_capacity(reference.num_frames());
    let mut diagnostics = Vec::with_capacity(reference.num_frames());
    let init = setup.initial_configuration()?;
    let first = solve_frame(&setup, 0, init.clone(), init, &[Vec::new(), Vec::new()], config.initial_iters.max(1))?;
    frames.push(first.x);
    diagnostics.push(first.diag);
    for t in 1..reference.num_frames() {
        let prev = frames[t - 1].clone();
        let mut anchors: Anchors = [Vec::new(), Vec::new()];
        for agent in 0..2 {
            let feet = setup.foot_positions(agent, &prev[agent])?;
            for (f, &k) in models[agent].foot_keypoints.iter().enumerate() {
                if setup.contacts[agent][t][f] {
                    anchors[agent].push((k, feet[f]));
                }
            }
        }
        let out = solve_frame(&setup, t, prev.clone(), prev, &anchors, config.sqp_iters_per_frame)?;
        frames.push(out.x);
        diagnostics.push(out.diag);
    }
    let priors = interaction_mesh::extract_priors(reference, mesh, Some((models, &frames)))?;
    Ok(RobotTrajectory {
        robot_models: [models[0].name().to_string(), models[1].name().to_string()],
        frame_dt: reference.frame_dt,
        solver_config_hash: config.hash(),
        frames,
        diagnostics,
        priors,
    })
}

/// Build the reference manifolds from `clip` and retarget them.
pub fn retarget_clip(
    clip: &DualMotionClip,
    models: [&RobotModel; 2],
    mesh: &MeshConfig,
    config: &SolverConfig,
) -> Result<(ReferencePair, RobotTrajectory), SolverError> {
    config.validate()?;
    if clip.frames.is_empty() {
        return Err(SolverError::EmptyClip);
    }
    let h_robot = match config.h_robot {
        Some(h) => h,
        None => nominal_robot_height(models[0], &config.height_estimator)?,
    };
    let reference = build_manifolds(clip, h_robot, &config.height_estimator)?;
    let traj = retarget_reference(&reference, models, mesh, config)?;
    Ok((reference, traj))
}

/// Everything needed to evaluate the objective and constraints of one frame,
/// exposed for verification.
pub struct FrameInspector<'a> {
    setup: Setup<'a>,
}

impl<'a> FrameInspector<'a> {
    pub fn new(
        reference: &'a ReferencePair,
        models: [&'a RobotModel; 2],
        mesh: &'a MeshConfig,
        config: &'a SolverConfig,
    ) -> Result<Self, SolverError> {
        Ok(Self {
            setup: Setup::new(reference, models, mesh, config)?,
        })
    }

    pub fn problem(&self, frame: usize, prev: [RobotConfiguration; 2]) -> Result<FrameProblem<'_>, SolverError> {
        Ok(self.setup.problem(self.setup.targets(frame, prev)?))
    }

    /// Constraint rows as `(A, lower)` with `A delta >= lower`, plus the step box.
    pub fn constraints(
        &self,
        x: &[RobotConfiguration; 2],
        anchors: &[Vec<(usize, Vector3<f64>)>; 2],
        eps_safe: f64,
    ) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>), SolverError> {
        let rows = constraint_rows(&self.setup, x, anchors, eps_safe)?;
        let n = self.setup.models[0].tangent_dim() + self.setup.models[1].tangent_dim();
        let mut a = DMatrix::zeros(rows.a.len(), n);
        for (i, r) in rows.a.iter().enumerate() {
            a.set_row(i, &r.transpose());
        }
        let (lo, hi) = step_box(self.setup.models, x, self.setup.config.trust_region);
        Ok((a, DVector::from_vec(rows.lower), lo, hi))
    }

    pub fn foot_contacts(&self) -> &[Vec<Vec<bool>>; 2] {
        &self.setup.contacts
    }

    pub fn initial_configuration(&self) -> Result<[RobotConfiguration; 2], SolverError> {
        self.setup.initial_configuration()
    }
}
