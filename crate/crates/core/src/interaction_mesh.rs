//! Partitioned interaction graph over both agents' key joints: intra-agent
//! edges carry Laplacian coordinates, inter-agent edges carry
//! distance-weighted relative vectors.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision;
use crate::motion_io::ReferencePair;
use crate::robot_model::{RobotConfiguration, RobotError, RobotModel};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("vertex `{0}` is not a keypoint of the reference")]
    UnknownVertex(String),
    #[error("self edge `{0}`-`{1}` references a vertex outside the vertex set")]
    UnknownEdgeVertex(String, String),
    #[error("vertex {0} has no neighbors")]
    IsolatedVertex(usize),
    #[error("negative source distance {0}")]
    NegativeDistance(f64),
    #[error("frame {frame} out of range ({frames} frames)")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("mesh parameters must be positive and finite")]
    BadParameter,
    #[error(transparent)]
    Robot(#[from] RobotError),
}

/// Vertex set, intra-agent edges and stiffness parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshConfig {
    /// Keypoint names used as vertices; the same list for both agents.
    pub vertices: Vec<String>,
    pub self_edges: Vec<(String, String)>,
    pub omega_max: f64,
    /// Decay rate in 1/m.
    pub gamma: f64,
    /// Inter-agent edges are active when the unified distance is within this radius.
    pub r_inter: f64,
    /// Link pairs closer than this are flagged as in contact.
    pub contact_threshold: f64,
    /// Link pairs closer than this are listed in the contact graph.
    pub contact_report_distance: f64,
}

pub const DEFAULT_VERTICES: [&str; 15] = [
    "pelvis",
    "torso",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_hand",
    "right_hand",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_foot",
    "right_foot",
];

const DEFAULT_SELF_EDGES: [(&str, &str); 16] = [
    ("pelvis", "torso"),
    ("torso", "head"),
    ("torso", "left_shoulder"),
    ("torso", "right_shoulder"),
    ("left_shoulder", "left_elbow"),
    ("left_elbow", "left_hand"),
    ("right_shoulder", "right_elbow"),
    ("right_elbow", "right_hand"),
    ("pelvis", "left_hip"),
    ("pelvis", "right_hip"),
    ("left_hip", "left_knee"),
    ("left_knee", "left_foot"),
    ("right_hip", "right_knee"),
    ("right_knee", "right_foot"),
    ("left_shoulder", "right_shoulder"),
    ("left_hip", "right_hip"),
];

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            vertices: DEFAULT_VERTICES.iter().map(|s| s.to_string()).collect(),
            self_edges: DEFAULT_SELF_EDGES
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            omega_max: 1.0,
            gamma: 5.0,
            r_inter: 1.0,
            contact_threshold: 0.02,
            contact_report_distance: 0.10,
        }
    }
}

/// Spring stiffness `omega_max * exp(-gamma * d)`.
pub fn stiffness(d: f64, omega_max: f64, gamma: f64) -> Result<f64, MeshError> {
    if d < 0.0 || d.is_nan() {
        return Err(MeshError::NegativeDistance(d));
    }
    Ok(omega_max * (-gamma * d).exp())
}

/// `p_i - sum_j c_ij p_j`.
pub fn laplacian_coordinate(
    positions: &[Vector3<f64>],
    vertex: usize,
    neighbors: &[usize],
    weights: &[f64],
) -> Vector3<f64> {
    let mut out = positions[vertex];
    for (&j, &c) in neighbors.iter().zip(weights) {
        out -= c * positions[j];
    }
    out
}

/// An active inter-agent edge between vertex `i` of agent 0 and vertex `j`
/// of agent 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    /// `p_uni[agent 0][i] - p_uni[agent 1][j]`
    pub reference: [f64; 3],
}

impl InterEdge {
    pub fn reference_vector(&self) -> Vector3<f64> {
        Vector3::from(self.reference)
    }
}

/// Intra-agent structure shared by every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfGraph {
    pub vertex_names: Vec<String>,
    /// Undirected edges as local vertex pairs; identical for both agents.
    pub edges: Vec<(usize, usize)>,
    pub neighbors: Vec<Vec<usize>>,
    /// Uniform weights `1/|N(i)|`, aligned with `neighbors`.
    pub weights: Vec<Vec<f64>>,
}

impl SelfGraph {
    pub fn new(config: &MeshConfig) -> Result<Self, MeshError> {
        let index = |n: &str| config.vertices.iter().position(|v| v == n);
        let mut edges = Vec::new();
        let mut neighbors = vec![Vec::new(); config.vertices.len()];
        for (a, b) in &config.self_edges {
            let (Some(i), Some(j)) = (index(a), index(b)) else {
                return Err(MeshError::UnknownEdgeVertex(a.clone(), b.clone()));
            };
            if i == j || neighbors[i].contains(&j) {
                continue;
            }
            edges.push((i.min(j), i.max(j)));
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        let weights = neighbors
            .iter()
            .map(|n| vec![1.0 / n.len().max(1) as f64; n.len()])
            .collect();
        Ok(Self {
            vertex_names: config.vertices.clone(),
            edges,
            neighbors,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_names.is_empty()
    }

    pub fn laplacian(&self, positions: &[Vector3<f64>], vertex: usize) -> Result<Vector3<f64>, MeshError> {
        if self.neighbors[vertex].is_empty() {
            return Err(MeshError::IsolatedVertex(vertex));
        }
        Ok(laplacian_coordinate(
            positions,
            vertex,
            &self.neighbors[vertex],
            &self.weights[vertex],
        ))
    }
}

/// Full graph for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshTopology {
    pub graph: SelfGraph,
    /// Reference keypoint index of each vertex.
    pub keypoint_index: Vec<usize>,
    pub e_inter: Vec<InterEdge>,
    pub omega_max: f64,
    pub gamma: f64,
}

impl MeshTopology {
    /// Vertices as `(agent, name)` in global order: agent 0 then agent 1.
    pub fn vertices(&self) -> Vec<(usize, String)> {
        (0..2)
            .flat_map(|a| self.graph.vertex_names.iter().map(move |n| (a, n.clone())))
            .collect()
    }

    /// Intra-agent edges in global vertex numbering.
    pub fn e_self(&self) -> Vec<(usize, usize)> {
        let n = self.graph.len();
        (0..2)
            .flat_map(|a| self.graph.edges.iter().map(move |&(i, j)| (a * n + i, a * n + j)))
            .collect()
    }

    /// Inter-agent edges in global vertex numbering.
    pub fn e_inter_global(&self) -> Vec<(usize, usize)> {
        let n = self.graph.len();
        self.e_inter.iter().map(|e| (e.i, n + e.j)).collect()
    }

    /// Vertex positions of one agent picked out of a full keypoint list.
    pub fn gather(&self, keypoints: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.keypoint_index.iter().map(|&k| keypoints[k]).collect()
    }
}

fn check_config(config: &MeshConfig) -> Result<(), MeshError> {
    let ok = |v: f64| v.is_finite() && v >= 0.0;
    if !(config.omega_max > 0.0 && ok(config.omega_max) && ok(config.gamma) && ok(config.r_inter) && ok(config.contact_threshold)) {
        return Err(MeshError::BadParameter);
    }
    Ok(())
}

/// Vertex-to-keypoint lookup against a keypoint name list.
pub fn vertex_keypoints(config: &MeshConfig, names: &[String]) -> Result<Vec<usize>, MeshError> {
    config
        .vertices
        .iter()
        .map(|v| {
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| MeshError::UnknownVertex(v.clone()))
        })
        .collect()
}

/// Inter-agent edges whose unified-manifold length is within `r_inter`.
pub fn active_inter_edges(
    uni: &[Vec<Vector3<f64>>; 2],
    keypoint_index: &[usize],
    config: &MeshConfig,
) -> Result<Vec<InterEdge>, MeshError> {
    let mut out = Vec::new();
    for (i, &ki) in keypoint_index.iter().enumerate() {
        for (j, &kj) in keypoint_index.iter().enumerate() {
            let rel = uni[0][ki] - uni[1][kj];
            let d = rel.norm();
            if d <= config.r_inter {
                out.push(InterEdge {
                    i,
                    j,
                    weight: stiffness(d, config.omega_max, config.gamma)?,
                    reference: [rel.x, rel.y, rel.z],
                });
            }
        }
    }
    Ok(out)
}

pub fn build_topology(
    reference: &ReferencePair,
    frame: usize,
    config: &MeshConfig,
) -> Result<MeshTopology, MeshError> {
    check_config(config)?;
    if frame >= reference.num_frames() {
        return Err(MeshError::FrameOutOfRange {
            frame,
            frames: reference.num_frames(),
        });
    }
    let graph = SelfGraph::new(config)?;
    let keypoint_index = vertex_keypoints(config, &reference.names)?;
    let e_inter = active_inter_edges(&reference.p_uni[frame], &keypoint_index, config)?;
    Ok(MeshTopology {
        graph,
        keypoint_index,
        e_inter,
        omega_max: config.omega_max,
        gamma: config.gamma,
    })
}

/// A link pair across the two robots listed in the contact graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub link_a: String,
    pub link_b: String,
    pub distance: f64,
    pub contact: bool,
}

/// Interaction and contact graphs for every frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphPriors {
    pub vertex_names: Vec<String>,
    pub interaction_frames: Vec<Vec<InterEdge>>,
    /// Link pairs within the report distance; unlisted pairs are not in contact.
    pub contact_frames: Vec<Vec<ContactPair>>,
}

impl GraphPriors {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("priors serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Link-pair contact states between the two robots in one frame.
pub fn contact_pairs(
    models: [&RobotModel; 2],
    configs: &[RobotConfiguration; 2],
    config: &MeshConfig,
) -> Result<Vec<ContactPair>, MeshError> {
    let report = config.contact_report_distance.max(config.contact_threshold);
    let link_dists = collision::link_pair_distances(models, configs)?;
    Ok(link_dists
        .into_iter()
        .filter(|&(_, _, d)| d <= report)
        .map(|(la, lb, d)| ContactPair {
            link_a: models[0].links[la].name.clone(),
            link_b: models[1].links[lb].name.clone(),
            distance: d,
            contact: d <= config.contact_threshold,
        })
        .collect())
}

/// Interaction graph from the unified manifold for every frame, and the
/// contact graph from robot frames when supplied (empty otherwise).
pub fn extract_priors(
    reference: &ReferencePair,
    config: &MeshConfig,
    robots: Option<([&RobotModel; 2], &[[RobotConfiguration; 2]])>,
) -> Result<GraphPriors, MeshError> {
    check_config(config)?;
    let keypoint_index = vertex_keypoints(config, &reference.names)?;
    let interaction_frames = reference
        .p_uni
        .iter()
        .map(|f| active_inter_edges(f, &keypoint_index, config))
        .collect::<Result<Vec<_>, _>>()?;
    let contact_frames = match robots {
        Some((models, frames)) => frames
            .iter()
            .map(|c| contact_pairs(models, c, config))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![Vec::new(); reference.num_frames()],
    };
    Ok(GraphPriors {
        vertex_names: config.vertices.clone(),
        interaction_frames,
        contact_frames,
    })
}
