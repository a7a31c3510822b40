//! Feasibility filtering, the weighted trajectory cost, and linear-search
//! selection of the optimal lattice candidate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FrenetState, OrientedBox, ReferencePath};
use crate::sim::{Vehicle, World};
use crate::trajectory::{trajectory_to, CandidateSet, PolyTrajectory, TerminalManifold};

pub const VEHICLE_LENGTH: f64 = 4.8;
pub const VEHICLE_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardConstraints {
    pub v_min: f64,
    pub v_max: f64,
    /// Bound on |s̈| and on lateral (centripetal) acceleration.
    pub a_max: f64,
    /// Clearance kept around predicted obstacle footprints.
    pub safety_radius: f64,
    /// Allowed range of the ego reference point's `d`.
    pub road_bounds: [f64; 2],
    pub ego_length: f64,
    pub ego_width: f64,
}

impl Default for HardConstraints {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 30.0,
            a_max: 6.0,
            safety_radius: 1.0,
            road_bounds: [1.0, 13.0],
            ego_length: VEHICLE_LENGTH,
            ego_width: VEHICLE_WIDTH,
        }
    }
}

impl HardConstraints {
    /// Defaults with road bounds keeping the ego body on `path`.
    pub fn for_road(path: &ReferencePath) -> Self {
        let half = 0.5 * VEHICLE_WIDTH;
        Self {
            road_bounds: [half, path.road_width() - half],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < self.v_max) || !(self.a_max > 0.0) || !(self.safety_radius >= 0.0) {
            return Err(Error::Config(format!("inconsistent hard constraints: {self:?}")));
        }
        if !(self.road_bounds[0] < self.road_bounds[1]) {
            return Err(Error::Config("road_bounds must be increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub w_o: f64,
    pub w_v: f64,
    pub w_a: f64,
    pub w_j: f64,
    pub w_yaw: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_o: 1.0,
            w_v: 1.0,
            w_a: 0.1,
            w_j: 0.1,
            w_yaw: 0.1,
        }
    }
}

impl CostWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.w_o, self.w_v, self.w_a, self.w_j, self.w_yaw]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w_o: self.w_o * k,
            w_v: self.w_v * k,
            w_a: self.w_a * k,
            w_j: self.w_j * k,
            w_yaw: self.w_yaw * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|&x| !(x >= 0.0)) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config(format!("cost weights must be >= 0 with one > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Constant-velocity, constant-lane forecast of one actor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedActor {
    pub id: u32,
    pub s0: f64,
    pub d: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    /// Inflated footprint at each time index `k * dt`.
    pub footprints: Vec<OrientedBox>,
    inflation: f64,
}

impl PredictedActor {
    pub fn s_at(&self, t: f64) -> f64 {
        self.s0 + self.speed * t
    }

    /// Inflated footprint at any time `t`.
    pub fn footprint_at(&self, t: f64) -> OrientedBox {
        OrientedBox::new([self.s_at(t), self.d], 0.0, self.length, self.width).inflated(self.inflation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePrediction {
    pub dt: f64,
    pub horizon: f64,
    pub actors: Vec<PredictedActor>,
}

pub fn predict_vehicles<'a>(
    vehicles: impl IntoIterator<Item = &'a Vehicle>,
    horizon: f64,
    dt: f64,
    safety_radius: f64,
) -> ObstaclePrediction {
    let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
    let actors = vehicles
        .into_iter()
        .map(|v| {
            let mut p = PredictedActor {
                id: v.id,
                s0: v.frenet.s,
                d: v.frenet.d,
                speed: v.frenet.s_dot,
                length: v.length,
                width: v.width,
                footprints: Vec::with_capacity(steps + 1),
                inflation: safety_radius,
            };
            p.footprints = (0..=steps).map(|k| p.footprint_at(k as f64 * dt)).collect();
            p
        })
        .collect();
    ObstaclePrediction { dt, horizon, actors }
}

/// Forecasts every actor in `world` along its lane at its current speed.
pub fn predict_obstacles(world: &World, horizon: f64, dt: f64, safety_radius: f64) -> ObstaclePrediction {
    predict_vehicles(world.actors.iter(), horizon, dt, safety_radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    MinSpeed { t: f64, s_dot: f64 },
    MaxSpeed { t: f64, s_dot: f64 },
    Acceleration { t: f64, accel: f64 },
    RoadBounds { t: f64, d: f64 },
    Collision { t: f64, actor: u32 },
}

impl Violation {
    pub fn label(&self) -> &'static str {
        match self {
            Violation::MinSpeed { .. } => "min_speed",
            Violation::MaxSpeed { .. } => "max_speed",
            Violation::Acceleration { .. } => "acceleration",
            Violation::RoadBounds { .. } => "road_bounds",
            Violation::Collision { .. } => "collision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Feasibility {
    Feasible,
    Violated(Violation),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Ego footprint in the (s, d) plane for a Frenet state.
pub fn ego_footprint(f: &FrenetState, length: f64, width: f64) -> OrientedBox {
    let heading = if f.s_dot.abs() < 1e-9 && f.d_dot.abs() < 1e-9 {
        0.0
    } else {
        f.d_dot.atan2(f.s_dot)
    };
    OrientedBox::new([f.s, f.d], heading, length, width)
}

/// Checks speed, acceleration, road and collision constraints sample by
/// sample and reports the first violation in time.
///
/// Obstacle footprints are already inflated by the safety radius. When the
/// relative motion over half a sample period exceeds that radius, the ego box
/// is grown by the excess so that overlaps between samples cannot slip
/// through the time grid.
pub fn check_feasibility(
    traj: &PolyTrajectory,
    hc: &HardConstraints,
    pred: &ObstaclePrediction,
) -> Result<Feasibility> {
    if (traj.dt - pred.dt).abs() > 1e-9 {
        return Err(Error::TimeGridMismatch {
            traj: traj.dt,
            pred: pred.dt,
        });
    }
    for (k, sample) in traj.samples.iter().enumerate() {
        let f = &sample.frenet;
        let t = sample.t;
        if f.s_dot < hc.v_min {
            return Ok(Feasibility::Violated(Violation::MinSpeed { t, s_dot: f.s_dot }));
        }
        if f.s_dot > hc.v_max {
            return Ok(Feasibility::Violated(Violation::MaxSpeed { t, s_dot: f.s_dot }));
        }
        let lateral = sample.cartesian.curvature * sample.cartesian.speed * sample.cartesian.speed;
        let accel = f.s_ddot.abs().max(lateral.abs());
        if accel > hc.a_max {
            return Ok(Feasibility::Violated(Violation::Acceleration { t, accel }));
        }
        if f.d < hc.road_bounds[0] || f.d > hc.road_bounds[1] {
            return Ok(Feasibility::Violated(Violation::RoadBounds { t, d: f.d }));
        }
        let on_grid = (t - k as f64 * pred.dt).abs() < 1e-9;
        let ego = ego_footprint(f, hc.ego_length, hc.ego_width);
        for actor in &pred.actors {
            let rel_s = f.s_dot - actor.speed;
            let sweep = 0.5 * pred.dt * rel_s.hypot(f.d_dot) + 0.05;
            let extra = (sweep - hc.safety_radius).max(0.0);
            let reach = 0.5 * (hc.ego_length + actor.length) + hc.safety_radius + extra + 1.0;
            if (f.s - actor.s_at(t)).abs() > reach {
                continue;
            }
            let obstacle = match actor.footprints.get(k) {
                Some(fp) if on_grid => *fp,
                _ => actor.footprint_at(t),
            };
            if ego.inflated(extra).overlaps(&obstacle) {
                return Ok(Feasibility::Violated(Violation::Collision { t, actor: actor.id }));
            }
        }
    }
    Ok(Feasibility::Feasible)
}

/// The five mean-squared cost terms `[J_o, J_v, J_a, J_j, J_yaw]`.
pub fn cost_terms(traj: &PolyTrajectory, target_d: f64, target_speed: f64) -> [f64; 5] {
    let n = traj.samples.len().max(1) as f64;
    let mut j = [0.0; 5];
    for s in &traj.samples {
        j[0] += (s.frenet.d - target_d).powi(2);
        j[1] += (s.frenet.s_dot - target_speed).powi(2);
        j[2] += s.accel * s.accel;
        j[3] += s.jerk * s.jerk;
        j[4] += s.yaw_rate * s.yaw_rate;
    }
    j.map(|x| x / n)
}

pub fn trajectory_cost(traj: &PolyTrajectory, w: &CostWeights, target_d: f64, target_speed: f64) -> f64 {
    cost_terms(traj, target_d, target_speed)
        .iter()
        .zip(w.as_array())
        .map(|(j, w)| w * j)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub feasibility: Feasibility,
    pub cost: f64,
}

/// Feasibility verdict and cost of every candidate, in candidate order.
pub fn evaluate_candidates(
    cands: &CandidateSet,
    hc: &HardConstraints,
    pred: &ObstaclePrediction,
    w: &CostWeights,
    target_d: f64,
    target_speed: f64,
) -> Result<Vec<Evaluation>> {
    cands
        .candidates
        .iter()
        .map(|c| {
            Ok(Evaluation {
                feasibility: check_feasibility(c, hc, pred)?,
                cost: trajectory_cost(c, w, target_d, target_speed),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub cost: f64,
}

/// Linear search for the cheapest feasible candidate; ties go to the lower
/// index.
pub fn select_optimal(
    cands: &CandidateSet,
    hc: &HardConstraints,
    pred: &ObstaclePrediction,
    w: &CostWeights,
    target_d: f64,
    target_speed: f64,
) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for (index, c) in cands.candidates.iter().enumerate() {
        let cost = trajectory_cost(c, w, target_d, target_speed);
        if best.is_some_and(|b| cost >= b.cost) {
            continue;
        }
        if check_feasibility(c, hc, pred)?.is_feasible() {
            best = Some(Selection { index, cost });
        }
    }
    best.ok_or(Error::NoFeasibleTrajectory(cands.len()))
}

/// Brake-in-lane trajectory at comfortable deceleration `decel`, used when
/// every candidate is infeasible.
pub fn braking_fallback(
    current: &FrenetState,
    lane_center: f64,
    decel: f64,
    path: &ReferencePath,
    dt: f64,
) -> Result<PolyTrajectory> {
    let v = current.s_dot.max(0.0);
    let t_f = (v / decel).clamp(1.0, 3.0);
    let manifold = TerminalManifold {
        v_f: (v - decel * t_f).max(0.0),
        d_f: lane_center,
        t_f,
    };
    let start = FrenetState {
        s_dot: v,
        ..*current
    };
    trajectory_to(&start, &manifold, path, dt)
}
