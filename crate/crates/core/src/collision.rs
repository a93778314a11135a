//! Capsule signed distances and linearized non-penetration rows.
//!
//! Every penetration check in the crate (solver line search, diagnostics and
//! metrics) goes through [`inter_robot_distances`].

use nalgebra::{DVector, Vector3};

use crate::robot_model::{Kinematics, RobotConfiguration, RobotError, RobotModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, radius: f64) -> Self {
        Self { a, b, radius }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapsuleDistance {
    /// Axis distance minus both radii; negative means penetration.
    pub signed_distance: f64,
    /// Closest points on the two axes.
    pub axis_a: Vector3<f64>,
    pub axis_b: Vector3<f64>,
    /// Closest points on the two surfaces.
    pub witness_a: Vector3<f64>,
    pub witness_b: Vector3<f64>,
    /// Unit normal pointing from `b` toward `a`.
    pub normal: Vector3<f64>,
}

/// Closest points between segments `p1 q1` and `p2 q2`.
pub fn segment_closest_points(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    const EPS: f64 = 1e-15;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return (*p1, *p2);
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let candidate = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let p = v.cross(&candidate);
    if p.norm() < 1e-12 {
        Vector3::z()
    } else {
        p.normalize()
    }
}

pub fn capsule_distance(a: &Capsule, b: &Capsule) -> CapsuleDistance {
    let (pa, pb) = segment_closest_points(&a.a, &a.b, &b.a, &b.b);
    let diff = pa - pb;
    let dist = diff.norm();
    let normal = if dist > 1e-12 {
        diff / dist
    } else {
        // Intersecting axes: any direction orthogonal to both is a valid
        // separating direction for the first-order model.
        let da = a.b - a.a;
        let db = b.b - b.a;
        let c = da.cross(&db);
        if c.norm() > 1e-12 {
            c.normalize()
        } else if da.norm() > 1e-12 {
            any_perpendicular(&da)
        } else if db.norm() > 1e-12 {
            any_perpendicular(&db)
        } else {
            Vector3::z()
        }
    };
    CapsuleDistance {
        signed_distance: dist - (a.radius + b.radius),
        axis_a: pa,
        axis_b: pb,
        witness_a: pa - normal * a.radius,
        witness_b: pb + normal * b.radius,
        normal,
    }
}

/// A capsule of one robot in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldCapsule {
    pub link: usize,
    pub capsule: Capsule,
}

pub fn world_capsules(model: &RobotModel, kin: &Kinematics) -> Vec<WorldCapsule> {
    model
        .world_capsules(kin)
        .into_iter()
        .map(|(link, a, b, r)| WorldCapsule {
            link,
            capsule: Capsule::new(a, b, r),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDistance {
    pub link_a: usize,
    pub link_b: usize,
    pub distance: CapsuleDistance,
}

/// Distances of every capsule pair across the two robots.
pub fn inter_robot_distances(capsules: [&[WorldCapsule]; 2]) -> Vec<PairDistance> {
    let mut out = Vec::with_capacity(capsules[0].len() * capsules[1].len());
    for ca in capsules[0] {
        for cb in capsules[1] {
            out.push(PairDistance {
                link_a: ca.link,
                link_b: cb.link,
                distance: capsule_distance(&ca.capsule, &cb.capsule),
            });
        }
    }
    out
}

/// Smallest signed distance between the two robots (infinite when either
/// has no geometry).
pub fn min_inter_distance(capsules: [&[WorldCapsule]; 2]) -> f64 {
    inter_robot_distances(capsules)
        .iter()
        .map(|p| p.distance.signed_distance)
        .fold(f64::INFINITY, f64::min)
}

/// Deepest inter-robot penetration in meters (0 when separated).
pub fn penetration_depth(capsules: [&[WorldCapsule]; 2]) -> f64 {
    (-min_inter_distance(capsules)).max(0.0)
}

pub fn configuration_capsules(
    models: [&RobotModel; 2],
    configs: &[RobotConfiguration; 2],
) -> Result<[Vec<WorldCapsule>; 2], RobotError> {
    let k0 = models[0].forward_kinematics(&configs[0])?;
    let k1 = models[1].forward_kinematics(&configs[1])?;
    Ok([world_capsules(models[0], &k0), world_capsules(models[1], &k1)])
}

/// Penetration depth of a pair of configurations.
pub fn configuration_penetration(
    models: [&RobotModel; 2],
    configs: &[RobotConfiguration; 2],
) -> Result<f64, RobotError> {
    let caps = configuration_capsules(models, configs)?;
    Ok(penetration_depth([&caps[0], &caps[1]]))
}

/// Minimum signed distance per link pair across the robots, as
/// `(link of robot 0, link of robot 1, distance)` in deterministic order.
pub fn link_pair_distances(
    models: [&RobotModel; 2],
    configs: &[RobotConfiguration; 2],
) -> Result<Vec<(usize, usize, f64)>, RobotError> {
    let caps = configuration_capsules(models, configs)?;
    let nb = models[1].links.len();
    let mut best = vec![f64::INFINITY; models[0].links.len() * nb];
    for p in inter_robot_distances([&caps[0], &caps[1]]) {
        let slot = &mut best[p.link_a * nb + p.link_b];
        *slot = slot.min(p.distance.signed_distance);
    }
    Ok(best
        .into_iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(k, d)| (k / nb, k % nb, d))
        .collect())
}

/// One linearized non-penetration constraint `row . delta >= lower` over
/// the stacked tangent of both robots.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionRow {
    pub agents: (usize, usize),
    pub links: (usize, usize),
    pub phi: f64,
    pub row: DVector<f64>,
    pub lower: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionRowOptions {
    /// Rows are emitted only for pairs closer than this.
    pub activation_margin: f64,
    /// Required clearance after the step.
    pub eps_safe: f64,
    pub inter_robot: bool,
    pub self_collision: bool,
    /// Self pairs this close in the kinematic tree are skipped.
    pub self_min_tree_distance: usize,
}

impl Default for CollisionRowOptions {
    fn default() -> Self {
        Self {
            activation_margin: 0.10,
            eps_safe: 0.005,
            inter_robot: true,
            self_collision: false,
            self_min_tree_distance: 2,
        }
    }
}

fn pair_row(
    models: [&RobotModel; 2],
    kins: [&Kinematics; 2],
    offsets: [usize; 2],
    dim: usize,
    agents: (usize, usize),
    links: (usize, usize),
    d: &CapsuleDistance,
    eps_safe: f64,
) -> CollisionRow {
    let mut row = DVector::zeros(dim);
    let ja = models[agents.0].point_jacobian(kins[agents.0], links.0, &d.axis_a);
    let jb = models[agents.1].point_jacobian(kins[agents.1], links.1, &d.axis_b);
    let na = ja.transpose() * d.normal;
    let nb = jb.transpose() * d.normal;
    for (k, v) in na.iter().enumerate() {
        row[offsets[agents.0] + k] += v;
    }
    for (k, v) in nb.iter().enumerate() {
        row[offsets[agents.1] + k] -= v;
    }
    CollisionRow {
        agents,
        links,
        phi: d.signed_distance,
        row,
        lower: -d.signed_distance + eps_safe,
    }
}

/// Linearized rows `n^T (J_a - J_b) delta >= -phi + eps_safe` for every
/// capsule pair with `phi` below the activation margin.
pub fn collision_rows(
    models: [&RobotModel; 2],
    kins: [&Kinematics; 2],
    options: &CollisionRowOptions,
) -> Vec<CollisionRow> {
    let offsets = [0, models[0].tangent_dim()];
    let dim = offsets[1] + models[1].tangent_dim();
    let caps = [world_capsules(models[0], kins[0]), world_capsules(models[1], kins[1])];
    let mut rows = Vec::new();
    if options.inter_robot {
        for p in inter_robot_distances([&caps[0], &caps[1]]) {
            if p.distance.signed_distance < options.activation_margin {
                rows.push(pair_row(
                    models,
                    kins,
                    offsets,
                    dim,
                    (0, 1),
                    (p.link_a, p.link_b),
                    &p.distance,
                    options.eps_safe,
                ));
            }
        }
    }
    if options.self_collision {
        for agent in 0..2 {
            let c = &caps[agent];
            for x in 0..c.len() {
                for y in x + 1..c.len() {
                    let (la, lb) = (c[x].link, c[y].link);
                    if models[agent].tree_distance_at_most(la, lb, options.self_min_tree_distance) {
                        continue;
                    }
                    let d = capsule_distance(&c[x].capsule, &c[y].capsule);
                    if d.signed_distance < options.activation_margin {
                        rows.push(pair_row(
                            models,
                            kins,
                            offsets,
                            dim,
                            (agent, agent),
                            (la, lb),
                            &d,
                            options.eps_safe,
                        ));
                    }
                }
            }
        }
    }
    rows
}
