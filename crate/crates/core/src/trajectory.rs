//! Time-polynomial trajectories in the Frenet frame and lattice generation.
//!
//! Lateral motion is a quintic `d(t)` pinned at both ends (terminal `ḋ = d̈ =
//! 0`); longitudinal motion is a quartic `s(t)` that reaches the terminal
//! speed with zero acceleration and leaves the terminal position free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{frenet_to_cartesian, CartesianState, FrenetState, ReferencePath};

/// Horizons shorter than this make the boundary system numerically useless.
pub const MIN_HORIZON: f64 = 1e-3;

/// Trajectory endpoint: terminal speed, lateral offset and arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalManifold {
    pub v_f: f64,
    pub d_f: f64,
    pub t_f: f64,
}

/// Value and first three derivatives of a polynomial at `t`.
fn poly_derivs(c: &[f64], t: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in (k..c.len()).rev() {
            let falling: f64 = (0..k).map(|j| (i - j) as f64).product();
            acc = acc * t + falling * c[i];
        }
        *slot = acc;
    }
    out
}

pub fn quintic_lateral(d0: f64, d0_dot: f64, d0_ddot: f64, d_f: f64, t_f: f64) -> Result<[f64; 6]> {
    if !(t_f > 0.0) {
        return Err(Error::InvalidBoundary(format!("t_f must be positive, got {t_f}")));
    }
    if t_f < MIN_HORIZON {
        return Err(Error::InvalidBoundary(format!("t_f = {t_f} s is ill-conditioned")));
    }
    let (a0, a1, a2) = (d0, d0_dot, 0.5 * d0_ddot);
    let t = t_f;
    let dp = d_f - (a0 + a1 * t + a2 * t * t);
    let dv = -(a1 + 2.0 * a2 * t);
    let da = -2.0 * a2;
    let t2 = t * t;
    let t3 = t2 * t;
    Ok([
        a0,
        a1,
        a2,
        (10.0 * dp - 4.0 * dv * t + 0.5 * da * t2) / t3,
        (-15.0 * dp + 7.0 * dv * t - da * t2) / (t3 * t),
        (6.0 * dp - 3.0 * dv * t + 0.5 * da * t2) / (t3 * t2),
    ])
}

pub fn quartic_longitudinal(
    s0: f64,
    s0_dot: f64,
    s0_ddot: f64,
    v_f: f64,
    t_f: f64,
) -> Result<[f64; 5]> {
    if !(t_f > 0.0) {
        return Err(Error::InvalidBoundary(format!("t_f must be positive, got {t_f}")));
    }
    if !(v_f >= 0.0) {
        return Err(Error::InvalidBoundary(format!("v_f must be non-negative, got {v_f}")));
    }
    let (a0, a1, a2) = (s0, s0_dot, 0.5 * s0_ddot);
    let t = t_f;
    let dv = v_f - a1 - 2.0 * a2 * t;
    let da = -2.0 * a2;
    Ok([
        a0,
        a1,
        a2,
        (3.0 * dv - t * da) / (3.0 * t * t),
        (t * da - 2.0 * dv) / (4.0 * t * t * t),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub frenet: FrenetState,
    pub cartesian: CartesianState,
    /// Magnitude of the Frenet acceleration vector (s̈, d̈).
    pub accel: f64,
    /// Magnitude of the Frenet jerk vector.
    pub jerk: f64,
    pub yaw_rate: f64,
}

/// A Frenet trajectory `[s(t), d(t)]` together with its sampled profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTrajectory {
    pub lat_coeffs: [f64; 6],
    pub lon_coeffs: [f64; 5],
    pub duration: f64,
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

/// Kinematic state plus jerk along a trajectory at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub frenet: FrenetState,
    pub s_jerk: f64,
    pub d_jerk: f64,
}

impl PolyTrajectory {
    /// Evaluates the polynomials at local time `t`. Past `duration` the motion
    /// continues at the terminal speed and offset.
    pub fn point_at(&self, t: f64) -> TrajectoryPoint {
        let t = t.max(0.0);
        let tc = t.min(self.duration);
        let lon = poly_derivs(&self.lon_coeffs, tc);
        let lat = poly_derivs(&self.lat_coeffs, tc);
        let extra = t - tc;
        if extra > 0.0 {
            TrajectoryPoint {
                frenet: FrenetState {
                    s: lon[0] + lon[1] * extra,
                    s_dot: lon[1],
                    s_ddot: 0.0,
                    d: lat[0],
                    d_dot: 0.0,
                    d_ddot: 0.0,
                },
                s_jerk: 0.0,
                d_jerk: 0.0,
            }
        } else {
            TrajectoryPoint {
                frenet: FrenetState {
                    s: lon[0],
                    s_dot: lon[1],
                    s_ddot: lon[2],
                    d: lat[0],
                    d_dot: lat[1],
                    d_ddot: lat[2],
                },
                s_jerk: lon[3],
                d_jerk: lat[3],
            }
        }
    }

    pub fn manifold(&self) -> TerminalManifold {
        let end = self.point_at(self.duration).frenet;
        TerminalManifold {
            v_f: end.s_dot,
            d_f: end.d,
            t_f: self.duration,
        }
    }
}

/// Sample time stamps `0, dt, ..., t_f` with `t_f` always included.
pub fn sample_times(t_f: f64, dt: f64) -> Vec<f64> {
    let n = (t_f / dt + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    if t_f - n as f64 * dt > 1e-9 {
        times.push(t_f);
    }
    times
}

pub(crate) fn make_sample(
    path: &ReferencePath,
    t: f64,
    p: &TrajectoryPoint,
) -> Result<TrajectorySample> {
    let cartesian = frenet_to_cartesian(path, &p.frenet)?;
    Ok(TrajectorySample {
        t,
        frenet: p.frenet,
        cartesian,
        accel: p.frenet.s_ddot.hypot(p.frenet.d_ddot),
        jerk: p.s_jerk.hypot(p.d_jerk),
        yaw_rate: cartesian.curvature * cartesian.speed,
    })
}

pub fn sample_trajectory(
    lat_coeffs: [f64; 6],
    lon_coeffs: [f64; 5],
    t_f: f64,
    dt: f64,
    path: &ReferencePath,
) -> Result<PolyTrajectory> {
    if !(dt > 0.0) || !(dt <= t_f + 1e-12) {
        return Err(Error::InvalidBoundary(format!(
            "sampling needs 0 < dt <= t_f (dt = {dt}, t_f = {t_f})"
        )));
    }
    let mut traj = PolyTrajectory {
        lat_coeffs,
        lon_coeffs,
        duration: t_f,
        dt,
        samples: Vec::new(),
    };
    traj.samples = sample_times(t_f, dt)
        .into_iter()
        .map(|t| make_sample(path, t, &traj.point_at(t)))
        .collect::<Result<_>>()?;
    Ok(traj)
}

/// Builds and samples the trajectory from `current` to `manifold`.
pub fn trajectory_to(
    current: &FrenetState,
    manifold: &TerminalManifold,
    path: &ReferencePath,
    dt: f64,
) -> Result<PolyTrajectory> {
    let lat = quintic_lateral(current.d, current.d_dot, current.d_ddot, manifold.d_f, manifold.t_f)?;
    let lon = quartic_longitudinal(
        current.s,
        current.s_dot,
        current.s_ddot,
        manifold.v_f,
        manifold.t_f,
    )?;
    sample_trajectory(lat, lon, manifold.t_f, dt.min(manifold.t_f), path)
}

/// Explicit terminal-manifold grid; iteration order is speeds, then
/// offsets, then times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldGrid {
    pub speeds: Vec<f64>,
    pub offsets: Vec<f64>,
    pub times: Vec<f64>,
}

impl ManifoldGrid {
    pub fn len(&self) -> usize {
        self.speeds.len() * self.offsets.len() * self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn manifolds(&self) -> impl Iterator<Item = TerminalManifold> + '_ {
        self.speeds.iter().flat_map(move |&v_f| {
            self.offsets.iter().flat_map(move |&d_f| {
                self.times.iter().map(move |&t_f| TerminalManifold { v_f, d_f, t_f })
            })
        })
    }
}

/// How the behavior layer's (target lane, target speed) becomes a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeSpec {
    /// Terminal speeds relative to the commanded target speed.
    pub speed_offsets: Vec<f64>,
    /// Lanes relative to the ego lane that receive a lane-center endpoint.
    pub lane_span: usize,
    pub times: Vec<f64>,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            speed_offsets: vec![-5.0, -2.5, 0.0],
            lane_span: 1,
            times: vec![2.0, 3.0, 4.0],
        }
    }
}

impl LatticeSpec {
    /// Grid around `ego_lane` for a commanded `target_speed`; speeds are
    /// clipped to `[v_min, v_max]` and deduplicated.
    pub fn grid(
        &self,
        path: &ReferencePath,
        ego_lane: usize,
        target_speed: f64,
        v_min: f64,
        v_max: f64,
    ) -> ManifoldGrid {
        let mut speeds: Vec<f64> = Vec::new();
        for off in &self.speed_offsets {
            let v = (target_speed + off).clamp(v_min, v_max);
            if !speeds.iter().any(|&x| (x - v).abs() < 1e-9) {
                speeds.push(v);
            }
        }
        let lo = ego_lane.saturating_sub(self.lane_span);
        let hi = (ego_lane + self.lane_span).min(path.lane_count() - 1);
        let offsets = (lo..=hi)
            .map(|lane| (lane as f64 + 0.5) * path.lane_width())
            .collect();
        ManifoldGrid {
            speeds,
            offsets,
            times: self.times.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<PolyTrajectory>,
    pub source_manifolds: Vec<TerminalManifold>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// One trajectory per grid point, each starting exactly at `current`.
pub fn generate_lattice(
    current: &FrenetState,
    grid: &ManifoldGrid,
    path: &ReferencePath,
    dt: f64,
) -> Result<CandidateSet> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let source_manifolds: Vec<TerminalManifold> = grid.manifolds().collect();
    let candidates = source_manifolds
        .iter()
        .map(|m| trajectory_to(current, m, path, dt))
        .collect::<Result<_>>()?;
    Ok(CandidateSet {
        candidates,
        source_manifolds,
    })
}
