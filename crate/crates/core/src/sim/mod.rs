//! Seeded highway world: random or scripted traffic, IDM actors that never
//! change lane, ideal trajectory tracking for the ego, and event detection.

mod log;

pub use log::{ActorRecord, EpisodeLog, EpisodeSummary, LaneChangeEvent, LogLine, StepRecord};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{bumper_gap, idm_acceleration, IdmParams, EMERGENCY_DECEL};
use crate::error::{Error, Result};
use crate::geometry::{FrenetState, ReferencePath};
use crate::planner::{ego_footprint, VEHICLE_LENGTH, VEHICLE_WIDTH};
use crate::trajectory::{make_sample, PolyTrajectory, TrajectorySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Collision,
    OffRoad,
    Finished,
    /// The episode hit its wall-clock limit before any other event.
    TimeLimit,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }

    /// Collision and leaving the road end an episode in failure.
    pub fn is_failure(self) -> bool {
        matches!(self, Status::Collision | Status::OffRoad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub frenet: FrenetState,
    pub lane: usize,
    pub length: f64,
    pub width: f64,
    pub idm: IdmParams,
    pub target_speed: f64,
}

impl Vehicle {
    /// Lane-keeping actor whose IDM desired speed is `target_speed`.
    pub fn actor(id: u32, frenet: FrenetState, lane: usize, target_speed: f64) -> Self {
        Self {
            id,
            frenet,
            lane,
            length: VEHICLE_LENGTH,
            width: VEHICLE_WIDTH,
            idm: IdmParams {
                v0: target_speed.max(0.1),
                ..IdmParams::default()
            },
            target_speed,
        }
    }
}

/// Hand-placed traffic used by the case studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedScene {
    pub ego_s: f64,
    pub ego_d: f64,
    pub ego_speed: f64,
    pub actors: Vec<ScriptedActor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedActor {
    pub s: f64,
    pub d: f64,
    pub speed: f64,
    /// Desired speed; defaults to the initial speed.
    #[serde(default)]
    pub target_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_actors: usize,
    /// Actor spawn window relative to the ego's arc length.
    pub spawn_s_range: [f64; 2],
    pub actor_speed_range: [f64; 2],
    pub ego_speed_range: [f64; 2],
    pub episode_length: f64,
    pub ego_target_speed: f64,
    pub obs_noise_sigma: f64,
    /// Episode time limit in seconds.
    pub max_time: f64,
    /// When present, replaces random spawning.
    pub scene: Option<ScriptedScene>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_actors: 12,
            spawn_s_range: [-120.0, 120.0],
            actor_speed_range: [8.0, 25.0],
            ego_speed_range: [15.0, 25.0],
            episode_length: 500.0,
            ego_target_speed: 25.0,
            obs_noise_sigma: 0.05,
            max_time: 100.0,
            scene: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r.iter().all(|x| x.is_finite());
        if !(self.episode_length > 0.0) || !(self.max_time > 0.0) {
            return Err(Error::Config("episode_length and max_time must be > 0".into()));
        }
        if !ordered(self.spawn_s_range) || !ordered(self.actor_speed_range) || !ordered(self.ego_speed_range) {
            return Err(Error::Config("ranges must be finite and ordered".into()));
        }
        if self.actor_speed_range[0] < 0.0 || self.ego_speed_range[0] < 0.0 {
            return Err(Error::Config("speeds must be >= 0".into()));
        }
        if !(self.ego_target_speed > 0.0) || !(self.obs_noise_sigma >= 0.0) {
            return Err(Error::Config("ego_target_speed must be > 0 and obs_noise_sigma >= 0".into()));
        }
        Ok(())
    }
}

/// Per-index seed for batch runs (splitmix64 of the pair).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What happened during one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub collision: Option<u32>,
    pub off_road: bool,
    pub finished: bool,
    pub time_limit: bool,
}

#[derive(Debug, Clone)]
pub struct World {
    pub path: Arc<ReferencePath>,
    pub ego: Vehicle,
    pub actors: Vec<Vehicle>,
    pub sim_time: f64,
    pub steps: u64,
    pub status: Status,
    pub start_s: f64,
    pub episode_length: f64,
    pub max_time: f64,
    pub rng: ChaCha8Rng,
    /// Kinematics of the ego's last tracked trajectory sample.
    pub ego_sample: Option<TrajectorySample>,
}

/// Average braking that resolves any closing pair at spawn.
const SPAWN_BRAKE: f64 = 3.0;
const EGO_SPAWN_BRAKE: f64 = 2.0;
const EGO_SPAWN_HEADWAY: f64 = 1.0;

/// Room kept between the end of an episode and the end of the path.
const END_MARGIN: f64 = 150.0;

impl World {
    pub fn new(
        path: Arc<ReferencePath>,
        ego: Vehicle,
        actors: Vec<Vehicle>,
        episode_length: f64,
        max_time: f64,
        seed: u64,
    ) -> Result<Self> {
        let start_s = ego.frenet.s;
        if start_s < 0.0 || start_s + episode_length + 20.0 > path.total_length() {
            return Err(Error::Scenario(format!(
                "ego at s = {start_s:.1} cannot drive {episode_length} m on a {:.1} m path",
                path.total_length()
            )));
        }
        Ok(Self {
            path,
            ego,
            actors,
            sim_time: 0.0,
            steps: 0,
            status: Status::Running,
            start_s,
            episode_length,
            max_time,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ego_sample: None,
        })
    }

    pub fn ego_lane(&self) -> usize {
        self.path.nearest_lane(self.ego.frenet.d)
    }

    pub fn distance_travelled(&self) -> f64 {
        self.ego.frenet.s - self.start_s
    }

    /// Nearest actor in `lane` strictly ahead of arc length `s`.
    pub fn leader_in_lane(&self, lane: usize, s: f64) -> Option<&Vehicle> {
        self.actors
            .iter()
            .filter(|a| a.lane == lane && a.frenet.s > s)
            .min_by(|a, b| a.frenet.s.total_cmp(&b.frenet.s))
    }

    /// Nearest actor in `lane` at or behind arc length `s`.
    pub fn follower_in_lane(&self, lane: usize, s: f64) -> Option<&Vehicle> {
        self.actors
            .iter()
            .filter(|a| a.lane == lane && a.frenet.s <= s)
            .max_by(|a, b| a.frenet.s.total_cmp(&b.frenet.s))
    }

    /// Ego moves to `traj(elapsed + dt)`; actors follow IDM in their lanes.
    pub fn step(&mut self, traj: &PolyTrajectory, elapsed: f64, dt: f64) -> Result<StepEvents> {
        if self.status.is_terminal() {
            return Err(Error::TerminalWorld(self.status));
        }
        let accels: Vec<f64> = self.actors.iter().map(|a| self.actor_accel(a)).collect();
        for (a, acc) in self.actors.iter_mut().zip(accels) {
            let v = a.frenet.s_dot;
            let v_new = v + acc * dt;
            if v_new < 0.0 {
                a.frenet.s += if acc < 0.0 { -0.5 * v * v / acc } else { 0.0 };
                a.frenet.s_dot = 0.0;
            } else {
                a.frenet.s += v * dt + 0.5 * acc * dt * dt;
                a.frenet.s_dot = v_new;
            }
            a.frenet.s_ddot = acc;
        }
        let limit = self.path.total_length() - 10.0;
        self.actors.retain(|a| a.frenet.s < limit);

        let t = elapsed + dt;
        let p = traj.point_at(t);
        self.ego.frenet = p.frenet;
        self.ego.lane = self.path.nearest_lane(p.frenet.d);
        self.ego_sample = make_sample(&self.path, t, &p).ok();
        self.sim_time += dt;
        self.steps += 1;

        let events = self.detect_events();
        self.status = if events.collision.is_some() {
            Status::Collision
        } else if events.off_road {
            Status::OffRoad
        } else if events.finished {
            Status::Finished
        } else if events.time_limit {
            Status::TimeLimit
        } else {
            Status::Running
        };
        Ok(events)
    }

    fn actor_accel(&self, a: &Vehicle) -> f64 {
        let s = a.frenet.s;
        let mut leader = self.leader_in_lane(a.lane, s).map(|l| (bumper_gap(a, l), l.frenet.s_dot));
        let ego = &self.ego;
        let lateral_overlap = (ego.frenet.d - a.frenet.d).abs() < 0.5 * (ego.width + a.width);
        if lateral_overlap && ego.frenet.s > s {
            let gap = bumper_gap(a, ego);
            if leader.is_none_or(|(g, _)| gap < g) {
                leader = Some((gap, ego.frenet.s_dot));
            }
        }
        let acc = match leader {
            Some((gap, v)) => idm_acceleration(a.frenet.s_dot, gap, v, &a.idm),
            None => idm_acceleration(a.frenet.s_dot, f64::INFINITY, 0.0, &a.idm),
        };
        acc.max(-EMERGENCY_DECEL)
    }

    /// Events on the current state, evaluated on uninflated footprints.
    pub fn detect_events(&self) -> StepEvents {
        let ego_box = ego_footprint(&self.ego.frenet, self.ego.length, self.ego.width);
        let collision = self
            .actors
            .iter()
            .filter(|a| (a.frenet.s - self.ego.frenet.s).abs() < 0.5 * (a.length + self.ego.length) + 1.0)
            .find(|a| {
                let b = crate::geometry::OrientedBox::new([a.frenet.s, a.frenet.d], 0.0, a.length, a.width);
                ego_box.overlaps(&b)
            })
            .map(|a| a.id);
        let d = self.ego.frenet.d;
        StepEvents {
            collision,
            off_road: d < 0.0 || d > self.path.road_width(),
            finished: self.distance_travelled() >= self.episode_length,
            time_limit: self.sim_time >= self.max_time - 1e-9,
        }
    }

    /// Frontal time-to-collision to the nearest leader in the ego lane, when
    /// closing in on it.
    pub fn frontal_ttc(&self) -> Option<f64> {
        let leader = self.leader_in_lane(self.ego_lane(), self.ego.frenet.s)?;
        time_to_collision(bumper_gap(&self.ego, leader), self.ego.frenet.s_dot, leader.frenet.s_dot)
    }
}

pub fn time_to_collision(gap: f64, v_ego: f64, v_lead: f64) -> Option<f64> {
    (v_ego > v_lead).then(|| gap.max(0.0) / (v_ego - v_lead))
}

fn sample_range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Builds the initial world for `cfg`; random traffic is placed so that
/// same-lane vehicles keep at least `s0 + length` plus the braking distance
/// needed to match speeds.
pub fn spawn_scenario(cfg: &ScenarioConfig, path: Arc<ReferencePath>) -> Result<World> {
    cfg.validate()?;
    if let Some(scene) = &cfg.scene {
        return spawn_scripted(cfg, scene, path);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lanes = path.lane_count();
    let lw = path.lane_width();
    let lo = (-cfg.spawn_s_range[0]).max(0.0) + 30.0;
    let hi = path.total_length() - cfg.episode_length - END_MARGIN;
    if hi <= lo {
        return Err(Error::Scenario("path too short for the episode length".into()));
    }
    let ego_s = rng.random_range(lo..hi);
    let ego_lane = rng.random_range(0..lanes);
    let ego_speed = sample_range(&mut rng, cfg.ego_speed_range);
    let ego = Vehicle {
        id: 0,
        frenet: FrenetState::new(ego_s, ego_speed, (ego_lane as f64 + 0.5) * lw),
        lane: ego_lane,
        length: VEHICLE_LENGTH,
        width: VEHICLE_WIDTH,
        idm: IdmParams {
            v0: cfg.ego_target_speed,
            ..IdmParams::default()
        },
        target_speed: cfg.ego_target_speed,
    };

    let mut actors: Vec<Vehicle> = Vec::with_capacity(cfg.n_actors);
    for i in 0..cfg.n_actors {
        let mut placed = false;
        for _ in 0..200 {
            let lane = rng.random_range(0..lanes);
            let s = ego_s + sample_range(&mut rng, cfg.spawn_s_range);
            let v = sample_range(&mut rng, cfg.actor_speed_range);
            let mut actor = Vehicle::actor(i as u32 + 1, FrenetState::new(s, v, (lane as f64 + 0.5) * lw), lane, v);
            actor.idm.a = rng.random_range(1.0..2.0);
            actor.idm.t_headway = rng.random_range(1.0..2.0);
            if s < 0.0 || s > path.total_length() - 20.0 {
                continue;
            }
            let clear = std::iter::once(&ego)
                .chain(actors.iter())
                .filter(|o| o.lane == lane)
                .all(|o| spawn_clearance(&actor, o));
            if clear {
                actors.push(actor);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Scenario(format!(
                "could not place actor {} of {} without overlap",
                i + 1,
                cfg.n_actors
            )));
        }
    }
    World::new(path, ego, actors, cfg.episode_length, cfg.max_time, rng.random())
}

fn spawn_clearance(a: &Vehicle, b: &Vehicle) -> bool {
    let (rear, front) = if a.frenet.s <= b.frenet.s { (a, b) } else { (b, a) };
    let closing = (rear.frenet.s_dot - front.frenet.s_dot).max(0.0);
    let mut needed = rear.idm.s0.max(front.idm.s0) + closing * closing / (2.0 * SPAWN_BRAKE);
    if a.id == 0 || b.id == 0 {
        // The planner needs a moment to react to traffic placed around the ego.
        needed = needed.max(
            rear.idm.s0 + rear.frenet.s_dot * EGO_SPAWN_HEADWAY + closing * closing / (2.0 * EGO_SPAWN_BRAKE),
        );
    }
    bumper_gap(rear, front) >= needed
}

fn spawn_scripted(cfg: &ScenarioConfig, scene: &ScriptedScene, path: Arc<ReferencePath>) -> Result<World> {
    let ego = Vehicle {
        id: 0,
        frenet: FrenetState::new(scene.ego_s, scene.ego_speed, scene.ego_d),
        lane: path.nearest_lane(scene.ego_d),
        length: VEHICLE_LENGTH,
        width: VEHICLE_WIDTH,
        idm: IdmParams {
            v0: cfg.ego_target_speed,
            ..IdmParams::default()
        },
        target_speed: cfg.ego_target_speed,
    };
    let actors = scene
        .actors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let target = a.target_speed.unwrap_or(a.speed);
            let lane = path.nearest_lane(a.d);
            Vehicle::actor(i as u32 + 1, FrenetState::new(a.s, a.speed, a.d), lane, target)
        })
        .collect();
    World::new(path, ego, actors, cfg.episode_length, cfg.max_time, cfg.seed)
}
