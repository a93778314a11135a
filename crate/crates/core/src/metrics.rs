//! Evaluation metrics for retargeted trajectories and policy rollouts.
//!
//! The low-level functions take plain per-frame data so they can be checked
//! against direct counting. [`evaluate_trajectory`] wires them to robot
//! models, using the same capsule penetration routine as the solver.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision;
use crate::interaction_mesh::{GraphPriors, InterEdge};
use crate::robot_model::{RobotConfiguration, RobotError, RobotModel};

/// Depth beyond which a frame counts as penetrating (m).
pub const PENETRATION_TOLERANCE: f64 = 1e-6;
pub const TAU_STRICT: f64 = 0.2;
pub const TAU_LOOSE: f64 = 0.4;
/// Per-step policy IEE below which a step counts as an interaction success (%).
pub const ISR_THRESHOLD: f64 = 10.0;
/// Fraction of required contacts that must be recalled in a step.
pub const CSR_RECALL: f64 = 0.8;
/// Per-step policy IEE a rollout must stay under throughout (%).
pub const DSR_THRESHOLD: f64 = 20.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Misaligned { what: &'static str, got: usize, expected: usize },
    #[error("invalid metric parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("vertex {0} is not a keypoint of the robot")]
    MissingVertex(String),
    #[error(transparent)]
    Robot(#[from] RobotError),
}

/// Simulated and reference relative vectors of the edges active in one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeFrame {
    pub sim: Vec<Vector3<f64>>,
    pub reference: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl EdgeFrame {
    fn check(&self) -> Result<(), MetricsError> {
        for (what, got) in [("sim edges", self.sim.len()), ("edge weights", self.weights.len())] {
            if got != self.reference.len() {
                return Err(MetricsError::Misaligned {
                    what,
                    got,
                    expected: self.reference.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenetrationMetrics {
    /// Percent of frames with any penetration.
    pub ipr: f64,
    /// Maximum depth in centimeters.
    pub mpd: f64,
}

/// IPR and MPD from per-frame depths in meters.
pub fn penetration_metrics(depths: &[f64]) -> PenetrationMetrics {
    if depths.is_empty() {
        return PenetrationMetrics { ipr: 0.0, mpd: 0.0 };
    }
    let hits = depths.iter().filter(|d| **d > PENETRATION_TOLERANCE).count();
    let max = depths.iter().fold(0.0f64, |m, d| m.max(*d));
    PenetrationMetrics {
        ipr: 100.0 * hits as f64 / depths.len() as f64,
        mpd: if max > PENETRATION_TOLERANCE { 100.0 * max } else { 0.0 },
    }
}

/// Per-frame inter-robot penetration depth (m).
pub fn trajectory_penetration(
    models: [&RobotModel; 2],
    frames: &[[RobotConfiguration; 2]],
) -> Result<Vec<f64>, MetricsError> {
    frames
        .iter()
        .map(|c| collision::configuration_penetration(models, c).map_err(MetricsError::from))
        .collect()
}

/// A mean over frames plus its per-frame trace (`None` where a frame has no edges).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeErrorMetric {
    pub value: f64,
    /// True when no frame had any edge and `value` is a placeholder 0.
    pub empty: bool,
    pub trace: Vec<Option<f64>>,
}

fn average(trace: Vec<Option<f64>>) -> EdgeErrorMetric {
    let present: Vec<f64> = trace.iter().flatten().copied().collect();
    let empty = present.is_empty();
    let value = if empty { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    EdgeErrorMetric { value, empty, trace }
}

/// Retargeting-form IEE: per frame the mean `||e_sim - e_ref|| / h_robot`
/// in percent, averaged over frames that have edges.
pub fn iee_retarget(frames: &[EdgeFrame], h_robot: f64) -> Result<EdgeErrorMetric, MetricsError> {
    if !(h_robot > 0.0 && h_robot.is_finite()) {
        return Err(MetricsError::InvalidParameter("robot height must be positive"));
    }
    let mut trace = Vec::with_capacity(frames.len());
    for f in frames {
        f.check()?;
        if f.reference.is_empty() {
            trace.push(None);
            continue;
        }
        let sum: f64 = f.sim.iter().zip(&f.reference).map(|(s, r)| (s - r).norm()).sum();
        trace.push(Some(100.0 * sum / (f.reference.len() as f64 * h_robot)));
    }
    Ok(average(trace))
}

/// Policy-form IEE of one frame: distance-weighted relative error in percent.
pub fn iee_policy_frame(f: &EdgeFrame) -> Result<Option<f64>, MetricsError> {
    f.check()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((s, r), w) in f.sim.iter().zip(&f.reference).zip(&f.weights) {
        num += w * (s - r).norm();
        den += w * r.norm();
    }
    Ok((den > 0.0).then(|| 100.0 * num / den))
}

pub fn iee_policy(frames: &[EdgeFrame]) -> Result<EdgeErrorMetric, MetricsError> {
    let trace = frames.iter().map(iee_policy_frame).collect::<Result<Vec<_>, _>>()?;
    Ok(average(trace))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactF1 {
    pub tau: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Edge-contact F1: an edge is in contact when its length is below `tau`.
///
/// With no contacts on either side the prediction is perfect and F1 is 1.
pub fn contact_f1(frames: &[EdgeFrame], tau: f64) -> Result<ContactF1, MetricsError> {
    if !(tau > 0.0) {
        return Err(MetricsError::InvalidParameter("tau must be positive"));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for f in frames {
        f.check()?;
        for (s, r) in f.sim.iter().zip(&f.reference) {
            match (s.norm() < tau, r.norm() < tau) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let precision = ratio(tp, fp);
    let recall = ratio(tp, fn_);
    let f1 = if tp + fp + fn_ == 0 {
        1.0
    } else if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ContactF1 {
        tau,
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        precision,
        recall,
        f1,
    })
}

/// One step of a rollout: edge vectors plus the simulated distance of every
/// contact the reference requires at that step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutStep {
    pub edges: EdgeFrame,
    pub required_contact_distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub isr: f64,
    pub csr: f64,
    pub cer: f64,
    pub dsr: f64,
}

/// Success and error rates pooled over all steps of all rollouts.
///
/// Steps without edges (ISR) or without required contacts (CSR) are left out
/// of the respective denominator; a rate with an empty denominator is 100%.
pub fn policy_metrics(rollouts: &[Vec<RolloutStep>], eps_contact: f64) -> Result<PolicyMetrics, MetricsError> {
    if !(eps_contact >= 0.0) {
        return Err(MetricsError::InvalidParameter("contact distance must be non-negative"));
    }
    let (mut isr_hit, mut isr_n) = (0usize, 0usize);
    let (mut csr_hit, mut csr_n) = (0usize, 0usize);
    let (mut missing, mut required) = (0usize, 0usize);
    let mut dsr_hit = 0usize;
    for rollout in rollouts {
        let mut within = true;
        for step in rollout {
            if let Some(e) = iee_policy_frame(&step.edges)? {
                isr_n += 1;
                if e < ISR_THRESHOLD {
                    isr_hit += 1;
                }
                if e >= DSR_THRESHOLD {
                    within = false;
                }
            }
            let n = step.required_contact_distances.len();
            if n > 0 {
                let made = step.required_contact_distances.iter().filter(|d| **d <= eps_contact).count();
                csr_n += 1;
                if made as f64 > CSR_RECALL * n as f64 {
                    csr_hit += 1;
                }
                required += n;
                missing += n - made;
            }
        }
        if within {
            dsr_hit += 1;
        }
    }
    let pct = |hit: usize, n: usize| if n == 0 { 100.0 } else { 100.0 * hit as f64 / n as f64 };
    Ok(PolicyMetrics {
        isr: pct(isr_hit, isr_n),
        csr: pct(csr_hit, csr_n),
        cer: if required == 0 { 0.0 } else { missing as f64 / required as f64 },
        dsr: pct(dsr_hit, rollouts.len()),
    })
}

/// Robot keypoint id of every interaction-graph vertex.
pub fn robot_vertex_ids(model: &RobotModel, vertex_names: &[String]) -> Result<Vec<usize>, MetricsError> {
    vertex_names
        .iter()
        .map(|n| model.keypoint_id(n).map_err(|_| MetricsError::MissingVertex(n.clone())))
        .collect()
}

/// Robot edge vectors for the reference edges of every frame.
pub fn edge_frames(
    models: [&RobotModel; 2],
    frames: &[[RobotConfiguration; 2]],
    priors: &GraphPriors,
) -> Result<Vec<EdgeFrame>, MetricsError> {
    if priors.interaction_frames.len() != frames.len() {
        return Err(MetricsError::Misaligned {
            what: "interaction graph frames",
            got: priors.interaction_frames.len(),
            expected: frames.len(),
        });
    }
    let ids = [
        robot_vertex_ids(models[0], &priors.vertex_names)?,
        robot_vertex_ids(models[1], &priors.vertex_names)?,
    ];
    frames
        .iter()
        .zip(&priors.interaction_frames)
        .map(|(configs, edges)| {
            let mut points: [Vec<Vector3<f64>>; 2] = [Vec::new(), Vec::new()];
            for a in 0..2 {
                let kin = models[a].forward_kinematics(&configs[a])?;
                points[a] = ids[a].iter().map(|&k| models[a].keypoint_position(&kin, k)).collect();
            }
            Ok(edges_of(&points, edges))
        })
        .collect()
}

fn edges_of(points: &[Vec<Vector3<f64>>; 2], edges: &[InterEdge]) -> EdgeFrame {
    EdgeFrame {
        sim: edges.iter().map(|e| points[0][e.i] - points[1][e.j]).collect(),
        reference: edges.iter().map(InterEdge::reference_vector).collect(),
        weights: edges.iter().map(|e| e.weight).collect(),
    }
}

/// Rollout steps of `frames` against the contact graph of `priors`.
pub fn rollout_steps(
    models: [&RobotModel; 2],
    frames: &[[RobotConfiguration; 2]],
    priors: &GraphPriors,
) -> Result<Vec<RolloutStep>, MetricsError> {
    if priors.contact_frames.len() != frames.len() {
        return Err(MetricsError::Misaligned {
            what: "contact graph frames",
            got: priors.contact_frames.len(),
            expected: frames.len(),
        });
    }
    let edges = edge_frames(models, frames, priors)?;
    frames
        .iter()
        .zip(&priors.contact_frames)
        .zip(edges)
        .map(|((configs, contacts), edges)| {
            let required: Vec<_> = contacts.iter().filter(|c| c.contact).collect();
            let mut distances = Vec::with_capacity(required.len());
            if !required.is_empty() {
                let pairs = collision::link_pair_distances(models, configs)?;
                for c in required {
                    let la = models[0].link_id(&c.link_a)?;
                    let lb = models[1].link_id(&c.link_b)?;
                    let d = pairs
                        .iter()
                        .find(|p| p.0 == la && p.1 == lb)
                        .map_or(f64::INFINITY, |p| p.2);
                    distances.push(d);
                }
            }
            Ok(RolloutStep {
                edges,
                required_contact_distances: distances,
            })
        })
        .collect()
}

/// Every metric for one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub ipr: f64,
    pub mpd: f64,
    pub iee: f64,
    pub iee_policy: f64,
    pub iee_empty: bool,
    pub f1_strict: ContactF1,
    pub f1_loose: ContactF1,
    pub policy: Option<PolicyMetrics>,
    pub penetration_trace: Vec<f64>,
    pub iee_trace: Vec<Option<f64>>,
    pub iee_policy_trace: Vec<Option<f64>>,
}

/// Metrics of a trajectory against its reference interaction graph, and
/// policy metrics of any `rollouts` against the trajectory's contact graph.
pub fn evaluate_trajectory(
    models: [&RobotModel; 2],
    frames: &[[RobotConfiguration; 2]],
    priors: &GraphPriors,
    h_robot: f64,
    rollouts: &[Vec<[RobotConfiguration; 2]>],
    eps_contact: f64,
) -> Result<MetricsReport, MetricsError> {
    let depths = trajectory_penetration(models, frames)?;
    let pen = penetration_metrics(&depths);
    let edges = edge_frames(models, frames, priors)?;
    let iee = iee_retarget(&edges, h_robot)?;
    let iee_p = iee_policy(&edges)?;
    let policy = if rollouts.is_empty() {
        None
    } else {
        let steps = rollouts
            .iter()
            .map(|r| rollout_steps(models, r, priors))
            .collect::<Result<Vec<_>, _>>()?;
        Some(policy_metrics(&steps, eps_contact)?)
    };
    Ok(MetricsReport {
        frames: frames.len(),
        ipr: pen.ipr,
        mpd: pen.mpd,
        iee: iee.value,
        iee_policy: iee_p.value,
        iee_empty: iee.empty,
        f1_strict: contact_f1(&edges, TAU_STRICT)?,
        f1_loose: contact_f1(&edges, TAU_LOOSE)?,
        policy,
        penetration_trace: depths,
        iee_trace: iee.trace,
        iee_policy_trace: iee_p.trace,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned human-readable summary.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("frames", self.frames.to_string()),
            ("IPR (%)", format!("{:.3}", self.ipr)),
            ("MPD (cm)", format!("{:.3}", self.mpd)),
            ("IEE (%)", format!("{:.3}", self.iee)),
            ("IEE policy (%)", format!("{:.3}", self.iee_policy)),
            ("F1 strict", format!("{:.4}", self.f1_strict.f1)),
            ("F1 loose", format!("{:.4}", self.f1_loose.f1)),
        ];
        if let Some(p) = &self.policy {
            rows.push(("ISR (%)", format!("{:.3}", p.isr)));
            rows.push(("CSR (%)", format!("{:.3}", p.csr)));
            rows.push(("CER", format!("{:.4}", p.cer)));
            rows.push(("DSR (%)", format!("{:.3}", p.dsr)));
        }
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<16}{v:>12}");
        }
        out
    }

    /// Whitespace-delimited per-frame traces; missing values print as `nan`.
    pub fn traces_text(&self) -> String {
        let mut out = String::from("# frame penetration_m iee_pct iee_policy_pct\n");
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.9}"));
        for (t, d) in self.penetration_trace.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t} {d:.9} {} {}",
                opt(self.iee_trace.get(t).copied().flatten()),
                opt(self.iee_policy_trace.get(t).copied().flatten())
            );
        }
        out
    }
}
