//! Per-frame nonlinear least-squares objective and its Gauss-Newton model.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};

use crate::geometry;
use crate::interaction_mesh::{InterEdge, SelfGraph};
use crate::robot_model::{Kinematics, RobotConfiguration, RobotError, RobotModel};

/// Objective weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    pub w_self: f64,
    pub w_inter: f64,
    pub w_reg: f64,
    pub lambda_rot: f64,
}

/// Reference quantities of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTargets {
    /// Target Laplacian coordinate per vertex and agent (`None` for isolated vertices).
    pub laplacian: [Vec<Option<Vector3<f64>>>; 2],
    /// `(link, target world orientation)` per agent.
    pub orientation: [Vec<(usize, UnitQuaternion<f64>)>; 2],
    pub inter: Vec<InterEdge>,
    /// Previous solution, the anchor of the velocity term.
    pub prev: [RobotConfiguration; 2],
}

/// The objective `J(x)` of one frame over both robots.
#[derive(Clone, Debug)]
pub struct FrameProblem<'a> {
    pub models: [&'a RobotModel; 2],
    pub graph: &'a SelfGraph,
    /// Robot keypoint id of each graph vertex, per agent.
    pub vertex_keypoints: [&'a [usize]; 2],
    pub targets: FrameTargets,
    pub weights: ObjectiveWeights,
}

/// Weighted residual vector `sqrt(w) r` and its Jacobian over the stacked tangent.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub value: f64,
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl Linearization {
    /// Gauss-Newton Hessian `2 J^T J` of the objective.
    pub fn hessian(&self) -> DMatrix<f64> {
        let mut h = self.jacobian.tr_mul(&self.jacobian) * 2.0;
        // Symmetrize away round-off.
        let ht = h.transpose();
        h += ht;
        h * 0.5
    }

    /// Exact gradient `2 J^T r` of the objective.
    pub fn gradient(&self) -> DVector<f64> {
        self.jacobian.tr_mul(&self.residual) * 2.0
    }
}

struct AgentState {
    kin: Kinematics,
    points: Vec<Vector3<f64>>,
}

impl<'a> FrameProblem<'a> {
    pub fn dim(&self) -> usize {
        self.models[0].tangent_dim() + self.models[1].tangent_dim()
    }

    pub fn offsets(&self) -> [usize; 2] {
        [0, self.models[0].tangent_dim()]
    }

    fn state(&self, agent: usize, c: &RobotConfiguration) -> Result<AgentState, RobotError> {
        let model = self.models[agent];
        let kin = model.forward_kinematics(c)?;
        let points = self.vertex_keypoints[agent]
            .iter()
            .map(|&k| model.keypoint_position(&kin, k))
            .collect();
        Ok(AgentState { kin, points })
    }

    fn vertex_jacobian(&self, agent: usize, st: &AgentState, v: usize) -> nalgebra::Matrix3xX<f64> {
        let model = self.models[agent];
        let k = self.vertex_keypoints[agent][v];
        model.point_jacobian(&st.kin, model.keypoints[k].link, &st.points[v])
    }

    fn evaluate(&self, x: &[RobotConfiguration; 2], with_jacobian: bool) -> Result<Linearization, RobotError> {
        let states = [self.state(0, &x[0])?, self.state(1, &x[1])?];
        let offsets = self.offsets();
        let dim = self.dim();
        let w = &self.weights;
        let mut res: Vec<f64> = Vec::new();
        let mut jac_rows: Vec<DVector<f64>> = Vec::new();

        let mut push_block = |r: Vector3<f64>, j: Option<DMatrix<f64>>, weight: f64| {
            let s = weight.max(0.0).sqrt();
            for k in 0..3 {
                res.push(s * r[k]);
                if let Some(j) = &j {
                    jac_rows.push(j.row(k).transpose() * s);
                }
            }
        };

        for agent in 0..2 {
            let st = &states[agent];
            let n_a = self.models[agent].tangent_dim();
            let place = |local: &nalgebra::Matrix3xX<f64>| {
                let mut m = DMatrix::zeros(3, dim);
                m.view_mut((0, offsets[agent]), (3, n_a)).copy_from(local);
                m
            };
            // Laplacian coordinates against the individual manifold.
            if w.w_self > 0.0 {
                for v in 0..self.graph.len() {
                    let Some(target) = self.targets.laplacian[agent][v] else {
                        continue;
                    };
                    let nb = &self.graph.neighbors[v];
                    let cw = &self.graph.weights[v];
                    let mut lap = st.points[v];
                    for (&j, &c) in nb.iter().zip(cw) {
                        lap -= c * st.points[j];
                    }
                    let jac = with_jacobian.then(|| {
                        let mut jl = self.vertex_jacobian(agent, st, v);
                        for (&j, &c) in nb.iter().zip(cw) {
                            jl -= c * self.vertex_jacobian(agent, st, j);
                        }
                        place(&jl)
                    });
                    push_block(lap - target, jac, w.w_self);
                }
                for (link, target) in &self.targets.orientation[agent] {
                    let (e, jo) = self.models[agent].orientation_error_jacobian(&st.kin, *link, target);
                    let jac = with_jacobian.then(|| place(&jo));
                    push_block(e, jac, w.w_self * w.lambda_rot);
                }
            }
        }

        // Relative vectors against the unified manifold.
        if w.w_inter > 0.0 {
            let n0 = self.models[0].tangent_dim();
            let n1 = self.models[1].tangent_dim();
            for e in &self.targets.inter {
                let r = (states[0].points[e.i] - states[1].points[e.j]) - e.reference_vector();
                let jac = with_jacobian.then(|| {
                    let mut m = DMatrix::zeros(3, dim);
                    m.view_mut((0, offsets[0]), (3, n0))
                        .copy_from(&self.vertex_jacobian(0, &states[0], e.i));
                    m.view_mut((0, offsets[1]), (3, n1))
                        .copy_from(&(-self.vertex_jacobian(1, &states[1], e.j)));
                    m
                });
                push_block(r, jac, w.w_inter * e.weight);
            }
        }

        // Velocity term: tangent difference to the previous solution.
        let mut reg_res = Vec::new();
        let mut reg_jac = Vec::new();
        if w.w_reg > 0.0 {
            let s = w.w_reg.sqrt();
            for agent in 0..2 {
                let diff = x[agent].difference(&self.targets.prev[agent]);
                let n_a = diff.len();
                let e_rot = Vector3::new(diff[3], diff[4], diff[5]);
                let jl = geometry::left_jacobian_inv(&e_rot);
                for k in 0..n_a {
                    reg_res.push(s * diff[k]);
                    if with_jacobian {
                        let mut row = DVector::zeros(dim);
                        if (3..6).contains(&k) {
                            for c in 0..3 {
                                row[offsets[agent] + 3 + c] = s * jl[(k - 3, c)];
                            }
                        } else {
                            row[offsets[agent] + k] = s;
                        }
                        reg_jac.push(row);
                    }
                }
            }
        }
        res.extend(reg_res);
        jac_rows.extend(reg_jac);

        let residual = DVector::from_vec(res);
        let jacobian = if with_jacobian {
            let mut m = DMatrix::zeros(jac_rows.len(), dim);
            for (i, r) in jac_rows.iter().enumerate() {
                m.set_row(i, &r.transpose());
            }
            m
        } else {
            DMatrix::zeros(0, dim)
        };
        Ok(Linearization {
            value: residual.norm_squared(),
            residual,
            jacobian,
        })
    }

    /// Nonlinear objective value.
    pub fn objective(&self, x: &[RobotConfiguration; 2]) -> Result<f64, RobotError> {
        Ok(self.evaluate(x, false)?.value)
    }

    /// Weighted residual vector `sqrt(w) r(x)`.
    pub fn residuals(&self, x: &[RobotConfiguration; 2]) -> Result<DVector<f64>, RobotError> {
        Ok(self.evaluate(x, false)?.residual)
    }

    pub fn linearize(&self, x: &[RobotConfiguration; 2]) -> Result<Linearization, RobotError> {
        self.evaluate(x, true)
    }
}

/// Apply a stacked tangent step to both robots.
pub fn retract_pair(
    x: &[RobotConfiguration; 2],
    models: [&RobotModel; 2],
    delta: &[f64],
) -> [RobotConfiguration; 2] {
    let n0 = models[0].tangent_dim();
    [x[0].retract(&delta[..n0]), x[1].retract(&delta[n0..])]
}
