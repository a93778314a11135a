//! Source motion input, reference manifolds and trajectory output.

pub mod bvh;
pub mod clip;
pub mod manifold;
pub mod trajectory;

pub use bvh::{parse_bvh, BvhError, BvhErrorKind, BvhMotion, Channel, SourceJoint, SourceSkeleton};
pub use clip::{extract_keypoints, ClipError, DualMotionClip, ExtractOptions, KeypointFormatError, KeypointMap, UpAxis};
pub use manifold::{build_manifolds, HeightEstimator, ManifoldError, ReferencePair};
pub use trajectory::{
    read_trajectory, trajectory_from_json, trajectory_to_json, write_trajectory, TrajectoryIoError,
    TRAJECTORY_SCHEMA_VERSION,
};
