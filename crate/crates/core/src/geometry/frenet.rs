//! Frenet <-> Cartesian state conversion along a [`ReferencePath`].
//!
//! `d` is positive to the left of the reference line. Time derivatives of
//! `d` are converted to arc-length derivatives (`d' = ḋ/ṡ`) internally, so the
//! full second-order state survives a round trip.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::path::{ReferencePath, PROJECTION_MARGIN};
use crate::error::{Error, Result};

/// Kinematic state in road coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

impl FrenetState {
    pub fn new(s: f64, s_dot: f64, d: f64) -> Self {
        Self {
            s,
            s_dot,
            d,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.s, self.s_dot, self.s_ddot, self.d, self.d_dot, self.d_ddot]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub x: f64,
    pub y: f64,
    /// Heading in (-π, π].
    pub yaw: f64,
    pub speed: f64,
    /// Tangential acceleration dv/dt.
    pub accel: f64,
    pub curvature: f64,
}

/// Result of projecting a Cartesian state onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetProjection {
    pub state: FrenetState,
    /// The foot point fell beyond one of the path ends and was clamped.
    pub clamped: bool,
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Below this longitudinal speed `d'` is undefined; heading follows the road.
const MIN_S_DOT: f64 = 1e-6;

pub fn frenet_to_cartesian(path: &ReferencePath, f: &FrenetState) -> Result<CartesianState> {
    let r = path.point_at(f.s)?;
    let one_minus_kd = 1.0 - r.kappa * f.d;
    if (f.d * r.kappa).abs() >= 1.0 || one_minus_kd <= 0.0 {
        return Err(Error::FrenetSingularity((f.d * r.kappa).abs()));
    }
    let (sin_t, cos_t) = r.theta.sin_cos();
    let x = r.x - sin_t * f.d;
    let y = r.y + cos_t * f.d;

    if f.s_dot.abs() < MIN_S_DOT {
        return Ok(CartesianState {
            x,
            y,
            yaw: normalize_angle(r.theta),
            speed: (one_minus_kd * f.s_dot).hypot(f.d_dot),
            accel: f.s_ddot * one_minus_kd,
            curvature: r.kappa / one_minus_kd,
        });
    }

    let dp = f.d_dot / f.s_dot;
    let dpp = (f.d_ddot - dp * f.s_ddot) / (f.s_dot * f.s_dot);
    let delta = dp.atan2(one_minus_kd);
    let (sin_dt, cos_dt) = delta.sin_cos();
    let tan_dt = sin_dt / cos_dt;
    let kappa_rd_prime = r.dkappa * f.d + r.kappa * dp;
    let curvature = ((dpp + kappa_rd_prime * tan_dt) * cos_dt * cos_dt / one_minus_kd + r.kappa)
        * cos_dt
        / one_minus_kd;
    let speed = (one_minus_kd * f.s_dot).hypot(f.s_dot * dp);
    let delta_prime = one_minus_kd / cos_dt * curvature - r.kappa;
    let accel = f.s_ddot * one_minus_kd / cos_dt
        + f.s_dot * f.s_dot / cos_dt * (dp * delta_prime - kappa_rd_prime);

    Ok(CartesianState {
        x,
        y,
        yaw: normalize_angle(delta + r.theta),
        speed: if f.s_dot < 0.0 { -speed } else { speed },
        accel,
        curvature,
    })
}

/// Projects `c` onto the path and converts its kinematics to Frenet form.
pub fn cartesian_to_frenet(path: &ReferencePath, c: &CartesianState) -> Result<FrenetProjection> {
    cartesian_to_frenet_near(path, c, None)
}

/// As [`cartesian_to_frenet`], restricting the nearest-point search to the
/// neighborhood of a previous arc length `hint`.
pub fn cartesian_to_frenet_near(
    path: &ReferencePath,
    c: &CartesianState,
    hint: Option<f64>,
) -> Result<FrenetProjection> {
    let (r, clamped) = path.project(c.x, c.y, hint);
    let (sin_t, cos_t) = r.theta.sin_cos();
    let dx = c.x - r.x;
    let dy = c.y - r.y;
    let d = cos_t * dy - sin_t * dx;
    if d < -PROJECTION_MARGIN || d > path.road_width() + PROJECTION_MARGIN {
        return Err(Error::TooFarFromPath(if d < 0.0 { -d } else { d - path.road_width() }));
    }
    let one_minus_kd = 1.0 - r.kappa * d;
    if (d * r.kappa).abs() >= 1.0 || one_minus_kd <= 0.0 {
        return Err(Error::FrenetSingularity((d * r.kappa).abs()));
    }
    let delta = normalize_angle(c.yaw - r.theta);
    let (sin_dt, cos_dt) = delta.sin_cos();
    let tan_dt = sin_dt / cos_dt;
    let dp = one_minus_kd * tan_dt;
    let kappa_rd_prime = r.dkappa * d + r.kappa * dp;
    let dpp = -kappa_rd_prime * tan_dt
        + one_minus_kd / (cos_dt * cos_dt) * (c.curvature * one_minus_kd / cos_dt - r.kappa);
    let s_dot = c.speed * cos_dt / one_minus_kd;
    let delta_prime = one_minus_kd / cos_dt * c.curvature - r.kappa;
    let s_ddot =
        (c.accel * cos_dt - s_dot * s_dot * (dp * delta_prime - kappa_rd_prime)) / one_minus_kd;

    Ok(FrenetProjection {
        state: FrenetState {
            s: r.s,
            s_dot,
            s_ddot,
            d,
            d_dot: dp * s_dot,
            d_ddot: dpp * s_dot * s_dot + dp * s_ddot,
        },
        clamped,
    })
}

/// `d` of a lane center. Free-function form of
/// [`ReferencePath::lane_center_offset`].
pub fn lane_center_offset(lane_index: usize, path: &ReferencePath) -> Result<f64> {
    path.lane_center_offset(lane_index)
}
