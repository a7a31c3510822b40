//! Road reference lines and the Frenet frame attached to them.

mod frenet;
mod obb;
mod path;
mod spline;

pub use frenet::{
    cartesian_to_frenet, cartesian_to_frenet_near, frenet_to_cartesian, lane_center_offset,
    normalize_angle, CartesianState, FrenetProjection, FrenetState,
};
pub use obb::OrientedBox;
pub use path::{PathDefinition, PathPoint, ReferencePath, PATH_SCHEMA_VERSION, PROJECTION_MARGIN};

/// Build a reference path from control points (free-function form of
/// [`ReferencePath::new`]).
pub fn build_reference_path(
    control_points: &[[f64; 2]],
    lane_count: usize,
    lane_width: f64,
) -> crate::error::Result<ReferencePath> {
    ReferencePath::new(control_points, lane_count, lane_width)
}
