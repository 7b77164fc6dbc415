//! UAV trajectory planning: link-activity bookkeeping, the waypoint
//! objective and its multi-start solver, the baseline placements and the
//! per-round motion controller.

mod activity;
mod baselines;
mod kmeans;
mod objective;
mod policy;
mod solver;

pub use activity::ActivityRateMatrix;
pub use baselines::{barycenter, cluster_midpoints, max_connectivity_placement};
pub use kmeans::{kmeans, KMeansFit, KMEANS_RESTARTS};
pub use objective::{sigmoid_cdf, WaypointObjective, SIGMOID_SCALE};
pub use policy::{advance_uav, PlanningContext, TrajectoryPolicy, UavController, WaypointEvent};
pub use solver::{maximize, AscentRun, ConvexHull, Solution, SolverConfig};
