//! Prediction-guided next-best-view planning.
//!
//! The crate simulates an active reconstruction loop: a shape predictor
//! proposes a full point set from the views gathered so far, visibility of
//! that prediction is computed with hidden point removal, the prediction is
//! voxelized, and the next camera pose is chosen greedily to cover the most
//! not-yet-seen voxels. Two baselines (visibility maximization on the true
//! points, and log-odds information maximization) and the experiment harness
//! that compares them live alongside.

pub mod baselines;
pub mod bridge;
pub mod experiments;
pub mod geometry;
pub mod hull;
pub mod planner;
pub mod pointio;
pub mod predictor;
pub mod rng;
pub mod scenes;
pub mod shapes;
pub mod uncertainty;
pub mod visibility;
pub mod voxels;

pub use geometry::{epsilon_net_size, Point3, PointSet, Vec3, Viewpoint, ViewingSpace};
pub use shapes::{generate_shape, Pose, ShapeFamily, ShapeSpec};
pub use visibility::{hpr_visible, raycast_visible, visible_set, HprParams, RaycastOracle, VisibilityMask};
pub use voxels::{coverage_fraction, iou, voxelize, CoverageState, GridGeometry, GridSetting, VoxelGrid};
pub use predictor::{
    DegradationProfile, DegradedPredictor, OraclePredictor, Predictor, PredictorRequest, Scene, SceneBook, ViewRecord,
};
pub use planner::{run_active_hof, Mode, PlanTrace, PlannerConfig, StopMetric, Termination};
pub use baselines::{run_info_max, run_vis_max_gt, InfoMaxParams, OccupancyBelief, SensorModel};
