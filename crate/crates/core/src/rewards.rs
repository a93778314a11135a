//! Interaction-aware reward terms as pure functions of simulated and
//! reference samples.

use nalgebra::{DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    InvalidConfig(&'static str),
    #[error("negative or non-finite contact force {0}")]
    BadForce(f64),
    #[error("sample lists are misaligned: {0}")]
    Misaligned(&'static str),
    #[error("contact sample has no nodes")]
    NoNodes,
    #[error("link index {0} out of range")]
    MissingLink(usize),
}

/// Weight of every reward term. Penalty weights carry their sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub interact_edge: f64,
    pub contact: f64,
    pub upper_pos: f64,
    pub upper_ori: f64,
    pub upper_lin_vel: f64,
    pub upper_ang_vel: f64,
    pub lower_pos: f64,
    pub lower_ori: f64,
    pub lower_lin_vel: f64,
    pub lower_ang_vel: f64,
    pub anchor_pos: f64,
    pub anchor_ori: f64,
    pub action_rate: f64,
    pub feet_slip: f64,
    pub joint_limit: f64,
    /// Applied to `||tau||^2`; negative so the term penalizes torque.
    pub torque: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            interact_edge: 1.5,
            contact: 1.0,
            upper_pos: 1.0,
            upper_ori: 1.0,
            upper_lin_vel: 1.0,
            upper_ang_vel: 1.0,
            lower_pos: 0.5,
            lower_ori: 0.5,
            lower_lin_vel: 0.5,
            lower_ang_vel: 0.5,
            anchor_pos: 0.3,
            anchor_ori: 0.5,
            action_rate: -0.3,
            feet_slip: -0.5,
            joint_limit: -10.0,
            torque: -1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub sigma_inter: f64,
    pub sigma_c: f64,
    pub beta: f64,
    /// Newtons.
    pub f_min: f64,
    pub f_max: f64,
    pub sigma_pos: f64,
    pub sigma_ori: f64,
    pub sigma_vel: f64,
    pub sigma_ang: f64,
    pub sigma_root: f64,
    pub sigma_root_ori: f64,
    /// Link indices of the upper and lower body in tracking samples.
    pub upper_links: Vec<usize>,
    pub lower_links: Vec<usize>,
    pub weights: RewardWeights,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            sigma_inter: 0.04,
            sigma_c: 1.0,
            beta: 0.5,
            f_min: 5.0,
            f_max: 200.0,
            sigma_pos: 0.3,
            sigma_ori: 0.4,
            sigma_vel: 1.0,
            sigma_ang: 3.14,
            sigma_root: 0.3,
            sigma_root_ori: 0.4,
            upper_links: Vec::new(),
            lower_links: Vec::new(),
            weights: RewardWeights::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let sigmas = [
            self.sigma_inter,
            self.sigma_c,
            self.sigma_pos,
            self.sigma_ori,
            self.sigma_vel,
            self.sigma_ang,
            self.sigma_root,
            self.sigma_root_ori,
        ];
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(RewardError::InvalidConfig("sigmas must be positive"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(RewardError::InvalidConfig("beta must lie in [0, 1]"));
        }
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(RewardError::InvalidConfig("need 0 < f_min < f_max"));
        }
        Ok(())
    }
}

/// Simulated and reference interaction state of one step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionSample {
    pub d_sim: Vec<Vector3<f64>>,
    pub d_ref: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    /// Simulated contact flag per contact node.
    pub contact_sim: Vec<bool>,
    /// Contact force per node (N).
    pub forces: Vec<f64>,
    /// Reference-active flag per node.
    pub active: Vec<bool>,
}

/// `exp(-(1/sigma_inter) sum w ||d_sim - d_ref||^2)`; 1 with no edges.
pub fn r_inter(sample: &InteractionSample, config: &RewardConfig) -> Result<f64, RewardError> {
    if sample.d_sim.len() != sample.d_ref.len() || sample.d_sim.len() != sample.weights.len() {
        return Err(RewardError::Misaligned("edge lists"));
    }
    let e: f64 = sample
        .d_sim
        .iter()
        .zip(&sample.d_ref)
        .zip(&sample.weights)
        .map(|((s, r), w)| w * (s - r).norm_squared())
        .sum();
    Ok((-e / config.sigma_inter).exp())
}

/// Piecewise force penalty: zero inside `[f_min, f_max]`.
pub fn force_regularization(f: f64, config: &RewardConfig) -> Result<f64, RewardError> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(RewardError::BadForce(f));
    }
    Ok(if f < config.f_min {
        1.0 - f / config.f_min
    } else if f > config.f_max {
        (f - config.f_max) / config.f_max
    } else {
        0.0
    })
}

/// Active and inactive contact energies `(E_act, E_inact)`.
pub fn contact_errors(sample: &InteractionSample, config: &RewardConfig) -> Result<(f64, f64), RewardError> {
    let n = sample.active.len();
    if sample.contact_sim.len() != n || sample.forces.len() != n {
        return Err(RewardError::Misaligned("contact node lists"));
    }
    let mut e_act = 0.0;
    let mut e_inact = 0.0;
    for k in 0..n {
        let c = if sample.contact_sim[k] { 1.0 } else { 0.0 };
        if sample.active[k] {
            e_act += config.beta * (c - 1.0f64).abs()
                + (1.0 - config.beta) * force_regularization(sample.forces[k], config)?;
        } else {
            e_inact += c;
        }
    }
    Ok((e_act, e_inact))
}

/// `lambda_act exp(-E_act/sigma_c^2) + lambda_inact exp(-E_inact/sigma_c^2)`.
pub fn r_contact(sample: &InteractionSample, config: &RewardConfig) -> Result<f64, RewardError> {
    let n = sample.active.len();
    if n == 0 {
        return Ok(1.0);
    }
    let (e_act, e_inact) = contact_errors(sample, config)?;
    let lambda_act = sample.active.iter().filter(|a| **a).count() as f64 / n as f64;
    let lambda_inact = 1.0 - lambda_act;
    let s2 = config.sigma_c * config.sigma_c;
    Ok(lambda_act * (-e_act / s2).exp() + lambda_inact * (-e_inact / s2).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl LinkState {
    pub fn at_rest(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FootState {
    pub contact: bool,
    pub velocity: Vector3<f64>,
}

/// Simulated robot state of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingState {
    pub links: Vec<LinkState>,
    pub root: LinkState,
    pub action: DVector<f64>,
    pub prev_action: DVector<f64>,
    pub feet: Vec<FootState>,
    pub q: DVector<f64>,
    pub q_lower: DVector<f64>,
    pub q_upper: DVector<f64>,
    pub torque: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingReference {
    pub links: Vec<LinkState>,
    pub root: LinkState,
}

/// Value of each tracking term (before weighting) and the weighted total.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingRewards {
    pub terms: Vec<(String, f64, f64)>,
    pub total: f64,
}

impl TrackingRewards {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.0 == name).map(|t| t.1)
    }
}

fn mean_kernel(
    set: &[usize],
    state: &TrackingState,
    reference: &TrackingReference,
    sigma: f64,
    err: impl Fn(&LinkState, &LinkState) -> f64,
) -> Result<f64, RewardError> {
    if set.is_empty() {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for &k in set {
        let (s, r) = match (state.links.get(k), reference.links.get(k)) {
            (Some(s), Some(r)) => (s, r),
            _ => return Err(RewardError::MissingLink(k)),
        };
        sum += err(s, r);
    }
    Ok((-(sum / set.len() as f64) / (sigma * sigma)).exp())
}

fn ori_err(s: &LinkState, r: &LinkState) -> f64 {
    geometry::log(&(s.orientation.inverse() * r.orientation)).norm_squared()
}

pub fn tracking_rewards(
    state: &TrackingState,
    reference: &TrackingReference,
    config: &RewardConfig,
) -> Result<TrackingRewards, RewardError> {
    if state.action.len() != state.prev_action.len() {
        return Err(RewardError::Misaligned("actions"));
    }
    if state.q.len() != state.q_lower.len() || state.q.len() != state.q_upper.len() {
        return Err(RewardError::Misaligned("joint limits"));
    }
    let w = &config.weights;
    let pos = |s: &LinkState, r: &LinkState| (s.position - r.position).norm_squared();
    let vel = |s: &LinkState, r: &LinkState| (s.linear_velocity - r.linear_velocity).norm_squared();
    let ang = |s: &LinkState, r: &LinkState| (s.angular_velocity - r.angular_velocity).norm_squared();
    let up = &config.upper_links;
    let lo = &config.lower_links;
    let mut terms = vec![
        ("upper_pos".to_string(), mean_kernel(up, state, reference, config.sigma_pos, pos)?, w.upper_pos),
        ("upper_ori".to_string(), mean_kernel(up, state, reference, config.sigma_ori, ori_err)?, w.upper_ori),
        ("upper_lin_vel".to_string(), mean_kernel(up, state, reference, config.sigma_vel, vel)?, w.upper_lin_vel),
        ("upper_ang_vel".to_string(), mean_kernel(up, state, reference, config.sigma_ang, ang)?, w.upper_ang_vel),
        ("lower_pos".to_string(), mean_kernel(lo, state, reference, config.sigma_pos, pos)?, w.lower_pos),
        ("lower_ori".to_string(), mean_kernel(lo, state, reference, config.sigma_ori, ori_err)?, w.lower_ori),
        ("lower_lin_vel".to_string(), mean_kernel(lo, state, reference, config.sigma_vel, vel)?, w.lower_lin_vel),
        ("lower_ang_vel".to_string(), mean_kernel(lo, state, reference, config.sigma_ang, ang)?, w.lower_ang_vel),
    ];
    let s2 = |s: f64| s * s;
    terms.push((
        "anchor_pos".into(),
        (-pos(&state.root, &reference.root) / s2(config.sigma_root)).exp(),
        w.anchor_pos,
    ));
    terms.push((
        "anchor_ori".into(),
        (-ori_err(&state.root, &reference.root) / s2(config.sigma_root_ori)).exp(),
        w.anchor_ori,
    ));
    terms.push((
        "action_rate".into(),
        (&state.action - &state.prev_action).norm_squared(),
        w.action_rate,
    ));
    let slip: f64 = state
        .feet
        .iter()
        .filter(|f| f.contact)
        .map(|f| f.velocity.x * f.velocity.x + f.velocity.y * f.velocity.y)
        .sum();
    terms.push(("feet_slip".into(), slip, w.feet_slip));
    let limit: f64 = (0..state.q.len())
        .map(|j| (state.q[j] - state.q_upper[j]).max(0.0) + (state.q_lower[j] - state.q[j]).max(0.0))
        .sum();
    terms.push(("joint_limit".into(), limit, w.joint_limit));
    terms.push(("torque".into(), state.torque.norm_squared(), w.torque));
    let total = terms.iter().map(|(_, v, w)| v * w).sum();
    Ok(TrackingRewards { terms, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn force_regularization_piecewise() {
        let c = cfg();
        assert_eq!(force_regularization(0.0, &c).unwrap(), 1.0);
        assert_eq!(force_regularization(c.f_min, &c).unwrap(), 0.0);
        assert_eq!(force_regularization(100.0, &c).unwrap(), 0.0);
        assert_eq!(force_regularization(c.f_max, &c).unwrap(), 0.0);
        assert_eq!(force_regularization(2.0 * c.f_max, &c).unwrap(), 1.0);
        assert_eq!(force_regularization(-1.0, &c), Err(RewardError::BadForce(-1.0)));
    }

    #[test]
    fn r_inter_examples() {
        let c = cfg();
        let exact = InteractionSample {
            d_sim: vec![Vector3::new(0.1, 0.2, 0.3)],
            d_ref: vec![Vector3::new(0.1, 0.2, 0.3)],
            weights: vec![1.0],
            ..Default::default()
        };
        assert_eq!(r_inter(&exact, &c).unwrap(), 1.0);
        let off = InteractionSample {
            d_sim: vec![Vector3::new(0.2, 0.0, 0.0)],
            d_ref: vec![Vector3::zeros()],
            weights: vec![1.0],
            ..Default::default()
        };
        assert_relative_eq!(r_inter(&off, &c).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(r_inter(&InteractionSample::default(), &c).unwrap(), 1.0);
    }

    #[test]
    fn r_contact_examples() {
        let c = cfg();
        let perfect = InteractionSample {
            contact_sim: vec![true, false],
            forces: vec![50.0, 0.0],
            active: vec![true, false],
            ..Default::default()
        };
        assert_eq!(r_contact(&perfect, &c).unwrap(), 1.0);
        let ghost = InteractionSample {
            contact_sim: vec![true],
            forces: vec![0.0],
            active: vec![false],
            ..Default::default()
        };
        assert_relative_eq!(r_contact(&ghost, &c).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    }

    fn rest_state(n_links: usize) -> (TrackingState, TrackingReference) {
        let link = LinkState::at_rest(Vector3::new(0.1, 0.2, 0.9), UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3));
        let state = TrackingState {
            links: vec![link.clone(); n_links],
            root: link.clone(),
            action: DVector::zeros(3),
            prev_action: DVector::zeros(3),
            feet: vec![FootState {
                contact: true,
                velocity: Vector3::zeros(),
            }],
            q: DVector::zeros(3),
            q_lower: DVector::from_element(3, -1.0),
            q_upper: DVector::from_element(3, 1.0),
            torque: DVector::zeros(3),
        };
        let reference = TrackingReference {
            links: vec![link.clone(); n_links],
            root: link,
        };
        (state, reference)
    }

    #[test]
    fn matching_state_scores_every_kernel_one() {
        let mut c = cfg();
        c.upper_links = vec![0, 1];
        c.lower_links = vec![2];
        let (s, r) = rest_state(3);
        let t = tracking_rewards(&s, &r, &c).unwrap();
        for name in ["upper_pos", "upper_ori", "lower_ang_vel", "anchor_pos", "anchor_ori"] {
            assert_eq!(t.term(name), Some(1.0));
        }
        for name in ["action_rate", "feet_slip", "joint_limit", "torque"] {
            assert_eq!(t.term(name), Some(0.0));
        }
    }

    #[test]
    fn joint_limit_penalty() {
        let c = cfg();
        let (mut s, r) = rest_state(1);
        s.q[1] = 1.1;
        let t = tracking_rewards(&s, &r, &c).unwrap();
        let v = t.term("joint_limit").unwrap();
        assert_relative_eq!(v * c.weights.joint_limit, -1.0, epsilon = 1e-12);
    }
}
