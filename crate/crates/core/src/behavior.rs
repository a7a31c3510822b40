//! IDM cruise control, MOBIL lane selection and the rule-based baseline
//! behavior planner built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::CostWeights;
use crate::sim::{Vehicle, World};

/// Deceleration applied when the gap to the leader has closed completely.
pub const EMERGENCY_DECEL: f64 = 8.0;

/// A lane is reached when the ego is this close to its center.
pub const LANE_SETTLE_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub a: f64,
    pub b: f64,
    pub v0: f64,
    #[serde(rename = "T")]
    pub t_headway: f64,
    pub s0: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            a: 1.5,
            b: 2.0,
            v0: 30.0,
            t_headway: 1.5,
            s0: 2.0,
            delta: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.b > 0.0
            && self.v0 > 0.0
            && self.t_headway > 0.0
            && self.s0 > 0.0
            && self.delta >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid IDM parameters: {self:?}")))
        }
    }

    /// Desired dynamic gap s*.
    pub fn desired_gap(&self, v: f64, lead_v: f64) -> f64 {
        self.s0 + (v * self.t_headway + v * (v - lead_v) / (2.0 * (self.a * self.b).sqrt())).max(0.0)
    }
}

/// IDM acceleration. Use `f64::INFINITY` as `gap` when there is no leader.
pub fn idm_acceleration(v: f64, gap: f64, lead_v: f64, p: &IdmParams) -> f64 {
    if gap <= 0.0 {
        return -EMERGENCY_DECEL;
    }
    let free = 1.0 - (v.max(0.0) / p.v0).powf(p.delta);
    let interaction = if gap.is_finite() {
        (p.desired_gap(v, lead_v) / gap).powi(2)
    } else {
        0.0
    };
    p.a * (free - interaction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilParams {
    pub politeness: f64,
    pub accel_threshold: f64,
    pub b_safe: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.3,
            accel_threshold: 0.1,
            b_safe: 4.0,
        }
    }
}

impl MobilParams {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.politeness) && self.accel_threshold >= 0.0 && self.b_safe > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid MOBIL parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneDecision {
    KeepLane,
    ChangeLeft,
    ChangeRight,
}

impl LaneDecision {
    pub fn mirrored(self) -> Self {
        match self {
            LaneDecision::KeepLane => LaneDecision::KeepLane,
            LaneDecision::ChangeLeft => LaneDecision::ChangeRight,
            LaneDecision::ChangeRight => LaneDecision::ChangeLeft,
        }
    }
}

/// Bumper-to-bumper distance from `rear` to `front`.
pub fn bumper_gap(rear: &Vehicle, front: &Vehicle) -> f64 {
    front.frenet.s - rear.frenet.s - 0.5 * (front.length + rear.length)
}

fn accel_behind(follower: &Vehicle, leader: Option<&Vehicle>, p: &IdmParams) -> f64 {
    match leader {
        Some(l) => idm_acceleration(follower.frenet.s_dot, bumper_gap(follower, l), l.frenet.s_dot, p),
        None => idm_acceleration(follower.frenet.s_dot, f64::INFINITY, 0.0, p),
    }
}

/// MOBIL incentive for moving the ego into `lane`, or `None` when the change
/// is unsafe.
fn lane_change_incentive(world: &World, lane: usize, mp: &MobilParams, idm: &IdmParams) -> Option<f64> {
    let ego = &world.ego;
    let s = ego.frenet.s;
    let here = world.ego_lane();
    let half = 0.5 * ego.length;
    // Anyone alongside the ego in the target lane blocks the change.
    if world
        .actors
        .iter()
        .any(|a| a.lane == lane && (a.frenet.s - s).abs() < half + 0.5 * a.length)
    {
        return None;
    }
    let new_leader = world.leader_in_lane(lane, s);
    let new_follower = world.follower_in_lane(lane, s);
    let old_leader = world.leader_in_lane(here, s);
    let old_follower = world.follower_in_lane(here, s);

    let a_c = accel_behind(ego, old_leader, idm);
    let a_c_new = accel_behind(ego, new_leader, idm);

    let (mut d_n, mut d_o) = (0.0, 0.0);
    if let Some(n) = new_follower {
        let before = accel_behind(n, new_leader, &n.idm);
        let after = accel_behind(n, Some(ego), &n.idm);
        if after < -mp.b_safe {
            return None;
        }
        d_n = after - before;
    }
    if let Some(o) = old_follower {
        let before = accel_behind(o, Some(ego), &o.idm);
        let after = accel_behind(o, old_leader, &o.idm);
        d_o = after - before;
    }
    Some(a_c_new - a_c + mp.politeness * (d_n + d_o))
}

/// MOBIL decision for the ego vehicle of `world`; ties between the two
/// directions go left.
pub fn mobil_decision(world: &World, mp: &MobilParams, idm: &IdmParams) -> LaneDecision {
    let here = world.ego_lane();
    let lanes = world.path.lane_count();
    let left = (here + 1 < lanes)
        .then(|| lane_change_incentive(world, here + 1, mp, idm))
        .flatten();
    let right = (here > 0)
        .then(|| lane_change_incentive(world, here - 1, mp, idm))
        .flatten();
    let pick = |x: Option<f64>| x.filter(|&g| g > mp.accel_threshold);
    match (pick(left), pick(right)) {
        (Some(l), Some(r)) if r > l => LaneDecision::ChangeRight,
        (Some(_), _) => LaneDecision::ChangeLeft,
        (None, Some(_)) => LaneDecision::ChangeRight,
        (None, None) => LaneDecision::KeepLane,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Safe,
    Agile,
}

impl std::str::FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "safe" => Ok(ProfileName::Safe),
            "agile" => Ok(ProfileName::Agile),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected safe|agile)"))),
        }
    }
}

impl std::fmt::Display for ProfileName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProfileName::Safe => "safe",
            ProfileName::Agile => "agile",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingProfile {
    pub name: ProfileName,
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub cost_weights: CostWeights,
    /// Horizon over which the IDM acceleration is turned into a speed command.
    pub speed_command_horizon: f64,
}

impl DrivingProfile {
    pub fn safe() -> Self {
        Self {
            name: ProfileName::Safe,
            idm: IdmParams {
                a: 0.8,
                b: 1.2,
                v0: 25.0,
                t_headway: 2.2,
                s0: 4.0,
                delta: 4.0,
            },
            mobil: MobilParams {
                politeness: 1.0,
                accel_threshold: 0.3,
                b_safe: 2.0,
            },
            cost_weights: CostWeights {
                w_a: 2.0,
                w_j: 2.0,
                w_yaw: 2.0,
                ..CostWeights::default()
            },
            speed_command_horizon: 2.0,
        }
    }

    pub fn agile() -> Self {
        Self {
            name: ProfileName::Agile,
            idm: IdmParams {
                a: 3.0,
                b: 4.0,
                v0: 25.0,
                t_headway: 0.7,
                s0: 1.5,
                delta: 4.0,
            },
            mobil: MobilParams {
                politeness: 0.0,
                accel_threshold: 0.0,
                b_safe: 6.0,
            },
            cost_weights: CostWeights {
                w_v: 5.0,
                w_a: 0.01,
                w_j: 0.01,
                w_yaw: 0.01,
                ..CostWeights::default()
            },
            speed_command_horizon: 1.0,
        }
    }

    pub fn named(name: ProfileName) -> Self {
        match name {
            ProfileName::Safe => Self::safe(),
            ProfileName::Agile => Self::agile(),
        }
    }

    pub fn with_desired_speed(mut self, v0: f64) -> Self {
        self.idm.v0 = v0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.idm.validate()?;
        self.mobil.validate()?;
        self.cost_weights.validate()?;
        if !(self.speed_command_horizon > 0.0) {
            return Err(Error::Config("speed_command_horizon must be > 0".into()));
        }
        Ok(())
    }
}

/// IDM speed command for the ego: the more cautious of the accelerations
/// behind the leaders in its current and target lanes, integrated over the
/// profile's command horizon.
pub fn idm_speed_command(world: &World, target_lane: usize, profile: &DrivingProfile, v_min: f64, v_max: f64) -> f64 {
    let ego = &world.ego;
    let s = ego.frenet.s;
    let here = world.ego_lane();
    let mut acc = accel_behind(ego, world.leader_in_lane(here, s), &profile.idm);
    if target_lane != here {
        acc = acc.min(accel_behind(ego, world.leader_in_lane(target_lane, s), &profile.idm));
    }
    let acc = acc.max(-EMERGENCY_DECEL);
    (ego.frenet.s_dot + acc * profile.speed_command_horizon).clamp(v_min, v_max)
}

/// Rule-based behavior planner: MOBIL picks the lane, IDM the speed. A lane
/// change stays latched until the ego settles in the new lane.
#[derive(Debug, Clone)]
pub struct BaselineAgent {
    pub profile: DrivingProfile,
    latched: Option<usize>,
}

impl BaselineAgent {
    pub fn new(profile: DrivingProfile) -> Self {
        Self {
            profile,
            latched: None,
        }
    }

    pub fn reset(&mut self) {
        self.latched = None;
    }

    pub fn latched_lane(&self) -> Option<usize> {
        self.latched
    }

    /// Returns `(target_d, target_speed)`.
    pub fn step(&mut self, world: &World, v_min: f64, v_max: f64) -> (f64, f64) {
        let lw = world.path.lane_width();
        let center = |lane: usize| (lane as f64 + 0.5) * lw;
        if let Some(lane) = self.latched {
            if (world.ego.frenet.d - center(lane)).abs() < LANE_SETTLE_TOLERANCE {
                self.latched = None;
            }
        }
        let lane = match self.latched {
            Some(lane) => lane,
            None => {
                let here = world.ego_lane();
                let lane = match mobil_decision(world, &self.profile.mobil, &self.profile.idm) {
                    LaneDecision::KeepLane => here,
                    LaneDecision::ChangeLeft => here + 1,
                    LaneDecision::ChangeRight => here - 1,
                };
                if lane != here {
                    self.latched = Some(lane);
                }
                lane
            }
        };
        (center(lane), idm_speed_command(world, lane, &self.profile, v_min, v_max))
    }
}
