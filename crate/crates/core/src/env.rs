//! Decision-layer environment: egocentric observation tensors, action
//! decoding for the discrete and continuous agents, shaped reward, and the
//! reset/step loop that plans, tracks and logs each decision period.

use std::collections::VecDeque;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::behavior::{idm_speed_command, BaselineAgent, DrivingProfile, LANE_SETTLE_TOLERANCE};
use crate::error::{Error, Result};
use crate::geometry::{CartesianState, PathDefinition, ReferencePath};
use crate::planner::{
    braking_fallback, check_feasibility, predict_obstacles, select_optimal, CostWeights, HardConstraints,
};
use crate::sim::{
    spawn_scenario, ActorRecord, EpisodeLog, EpisodeSummary, LaneChangeEvent, ScenarioConfig, Status, StepRecord,
    World,
};
use crate::trajectory::{generate_lattice, trajectory_to, LatticeSpec, PolyTrajectory, TerminalManifold};

pub const HISTORY_LEN: usize = 30;
pub const REGION_COUNT: usize = 14;
pub const CHANNELS: usize = 2 + 2 * REGION_COUNT;
pub const OBS_LEN: usize = CHANNELS * HISTORY_LEN;

/// The 14 neighborhood cells around the ego. "Up" and "down" are ahead of
/// and behind the ego by more than half a vehicle length; "immediate" is
/// alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Front,
    Back,
    Left1,
    Left1Up,
    Left1Down,
    Right1,
    Right1Up,
    Right1Down,
    Left2,
    Left2Up,
    Left2Down,
    Right2,
    Right2Up,
    Right2Down,
}

impl Region {
    pub const ALL: [Region; REGION_COUNT] = [
        Region::Front,
        Region::Back,
        Region::Left1,
        Region::Left1Up,
        Region::Left1Down,
        Region::Right1,
        Region::Right1Up,
        Region::Right1Down,
        Region::Left2,
        Region::Left2Up,
        Region::Left2Down,
        Region::Right2,
        Region::Right2Up,
        Region::Right2Down,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Region of an actor `lane_offset` lanes to the left of the ego and `ds`
/// metres ahead of it, or `None` outside the perception range or beyond two
/// adjacent lanes.
pub fn region_of(lane_offset: i64, ds: f64, half_length: f64, range: f64) -> Option<Region> {
    if ds.abs() > range {
        return None;
    }
    use Region::*;
    let band = |imm, up, down| {
        if ds > half_length {
            up
        } else if ds < -half_length {
            down
        } else {
            imm
        }
    };
    Some(match lane_offset {
        0 if ds >= 0.0 => Front,
        0 => Back,
        1 => band(Left1, Left1Up, Left1Down),
        -1 => band(Right1, Right1Up, Right1Down),
        2 => band(Left2, Left2Up, Left2Down),
        -2 => band(Right2, Right2Up, Right2Down),
        _ => return None,
    })
}

/// Index into `world.actors` of the nearest occupant of each region, using
/// the given ego and actor positions.
pub fn assign_regions(
    world: &World,
    ego_pos: [f64; 2],
    actor_pos: &[[f64; 2]],
    range: f64,
) -> [Option<usize>; REGION_COUNT] {
    let ego_lane = world.ego_lane() as i64;
    let half = 0.5 * world.ego.length;
    let mut best: [Option<(f64, usize)>; REGION_COUNT] = [None; REGION_COUNT];
    for (i, (a, p)) in world.actors.iter().zip(actor_pos).enumerate() {
        let ds = p[0] - ego_pos[0];
        if let Some(r) = region_of(a.lane as i64 - ego_lane, ds, half, range) {
            let slot = &mut best[r.index()];
            if slot.is_none_or(|(d, _)| ds.abs() < d) {
                *slot = Some((ds.abs(), i));
            }
        }
    }
    best.map(|b| b.map(|(_, i)| i))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Snapshot {
    values: [f64; CHANNELS],
}

/// A `CHANNELS x HISTORY_LEN` tensor stored channel-major; time index 0 is
/// the oldest snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTensor {
    pub values: Vec<f64>,
}

impl ObservationTensor {
    pub fn shape(&self) -> (usize, usize) {
        (CHANNELS, HISTORY_LEN)
    }

    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.values[channel * HISTORY_LEN + t]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.values[channel * HISTORY_LEN..(channel + 1) * HISTORY_LEN]
    }
}

/// Rolling observation history for one episode.
#[derive(Debug, Clone)]
pub struct ObservationHistory {
    snapshots: VecDeque<Snapshot>,
    pub noise_sigma: f64,
    pub perception_range: f64,
}

impl ObservationHistory {
    pub fn new(noise_sigma: f64, perception_range: f64) -> Self {
        Self {
            snapshots: VecDeque::with_capacity(HISTORY_LEN),
            noise_sigma,
            perception_range,
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn clear(&mut self) {
        self.snapshots.clear();
    }

    /// Appends a noisy snapshot of `world` and returns the current tensor.
    pub fn observe(&mut self, world: &World, rng: &mut ChaCha8Rng) -> ObservationTensor {
        let snap = self.snapshot(world, rng);
        if self.snapshots.len() == HISTORY_LEN {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(snap);
        self.tensor()
    }

    fn snapshot(&self, world: &World, rng: &mut ChaCha8Rng) -> Snapshot {
        let normal = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("sigma is finite");
        let mut noisy = |x: f64| {
            if self.noise_sigma > 0.0 {
                x + normal.sample(rng)
            } else {
                x
            }
        };
        let ego = [noisy(world.ego.frenet.s), noisy(world.ego.frenet.d)];
        let actors: Vec<[f64; 2]> = world
            .actors
            .iter()
            .map(|a| [noisy(a.frenet.s), noisy(a.frenet.d)])
            .collect();

        let mut values = [-1.0; CHANNELS];
        values[0] = ((ego[0] - world.start_s) / world.episode_length).clamp(-1.0, 1.0);
        values[1] = (ego[1] / (2.0 * world.path.lane_width())).clamp(-1.0, 1.0);
        let width = world.path.road_width();
        for (r, occupant) in assign_regions(world, ego, &actors, self.perception_range)
            .iter()
            .enumerate()
        {
            if let Some(i) = occupant {
                let p = actors[*i];
                values[2 + 2 * r] = ((p[0] - ego[0]) / self.perception_range).clamp(-1.0, 1.0);
                values[3 + 2 * r] = ((p[1] - ego[1]) / width).clamp(-1.0, 1.0);
            }
        }
        Snapshot { values }
    }

    pub fn tensor(&self) -> ObservationTensor {
        let mut values = vec![-1.0; OBS_LEN];
        let n = self.snapshots.len();
        if n == 0 {
            return ObservationTensor { values };
        }
        let pad = HISTORY_LEN - n;
        for t in 0..HISTORY_LEN {
            let snap = &self.snapshots[t.saturating_sub(pad)];
            for c in 0..CHANNELS {
                values[c * HISTORY_LEN + t] = snap.values[c];
            }
        }
        ObservationTensor { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub collision_penalty: f64,
    pub offroad_penalty: f64,
    pub w_v_plus: f64,
    pub w_v: f64,
    pub w_lc_plus: f64,
    pub w_lc_minus: f64,
    pub speed_gain_threshold: f64,
    pub v_max: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            collision_penalty: -10.0,
            offroad_penalty: -10.0,
            w_v_plus: 10.0,
            w_v: 5.0,
            w_lc_plus: 0.07,
            w_lc_minus: 0.2,
            speed_gain_threshold: 0.08,
            v_max: 30.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.collision_penalty < 0.0
            && self.offroad_penalty < 0.0
            && [self.w_v_plus, self.w_v, self.w_lc_plus, self.w_lc_minus, self.v_max]
                .iter()
                .all(|&w| w > 0.0)
            && self.speed_gain_threshold > 0.0
            && self.speed_gain_threshold < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reward configuration: {self:?}")))
        }
    }

    pub fn speed_reward(&self, err_v: f64) -> f64 {
        self.w_v_plus * (-(err_v * err_v) / (self.w_v * self.v_max)).exp()
    }
}

/// Reward for a decision period ending in `status`. `lane_change_gain` is the
/// speed-gain fraction of a lane change completed during the period.
pub fn compute_reward(
    status: Status,
    ego_speed: f64,
    target_speed: f64,
    lane_change_gain: Option<f64>,
    cfg: &RewardConfig,
) -> f64 {
    match status {
        Status::Collision => return cfg.collision_penalty,
        Status::OffRoad => return cfg.offroad_penalty,
        _ => {}
    }
    let r_v = cfg.speed_reward((ego_speed - target_speed).abs());
    let r_lc = match lane_change_gain {
        Some(g) if g > cfg.speed_gain_threshold => r_v * cfg.w_lc_plus,
        Some(_) => -r_v * cfg.w_lc_minus,
        None => 0.0,
    };
    r_v + r_lc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscreteAction {
    LeftLaneChange = 0,
    RightLaneChange = 1,
    StayOnTheLane = 2,
}

impl DiscreteAction {
    pub const ALL: [DiscreteAction; 3] = [
        DiscreteAction::LeftLaneChange,
        DiscreteAction::RightLaneChange,
        DiscreteAction::StayOnTheLane,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidAction(format!("discrete action index {i} not in 0..3")))
    }
}

/// Ranges of the continuous terminal-manifold action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub v_range: [f64; 2],
    pub d_range: [f64; 2],
    pub t_range: [f64; 2],
}

impl ActionSpec {
    pub fn for_road(path: &ReferencePath, v_max: f64, margin: f64, t_range: [f64; 2]) -> Self {
        Self {
            v_range: [0.0, v_max],
            d_range: [margin, path.road_width() - margin],
            t_range,
        }
    }
}

/// Maps `a` in `[-1, 1]^3` affinely onto the action ranges. Components
/// outside the box are clamped and reported.
pub fn decode_action_continuous(a: [f64; 3], spec: &ActionSpec) -> (TerminalManifold, bool) {
    let clamped = a.iter().any(|x| !(-1.0..=1.0).contains(x));
    let map = |x: f64, r: [f64; 2]| {
        let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        r[0] + 0.5 * (x + 1.0) * (r[1] - r[0])
    };
    (
        TerminalManifold {
            v_f: map(a[0], spec.v_range),
            d_f: map(a[1], spec.d_range),
            t_f: map(a[2], spec.t_range),
        },
        clamped,
    )
}

/// New target lane and `(target_d, target_speed)` for a discrete action
/// relative to the current target lane. Changes past the road edge keep the
/// lane.
pub fn decode_action_discrete(
    action: DiscreteAction,
    target_lane: usize,
    world: &World,
    profile: &DrivingProfile,
    v_min: f64,
    v_max: f64,
) -> (usize, f64, f64) {
    let lanes = world.path.lane_count();
    let lane = match action {
        DiscreteAction::LeftLaneChange => (target_lane + 1).min(lanes - 1),
        DiscreteAction::RightLaneChange => target_lane.saturating_sub(1),
        DiscreteAction::StayOnTheLane => target_lane,
    };
    let target_d = (lane as f64 + 0.5) * world.path.lane_width();
    (lane, target_d, idm_speed_command(world, lane, profile, v_min, v_max))
}

/// Lane and speed targets for the lattice planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorCommand {
    pub target_d: f64,
    pub target_speed: f64,
    pub weights: CostWeights,
    /// Deceleration of the brake-in-lane fallback.
    pub fallback_decel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous([f64; 3]),
    Targets(BehaviorCommand),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub safety_radius: f64,
    /// Distance kept between the ego reference point and each road edge.
    pub road_margin: f64,
    pub plan_dt: f64,
    pub lattice: LatticeSpec,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let hc = HardConstraints::default();
        Self {
            v_min: hc.v_min,
            v_max: hc.v_max,
            a_max: hc.a_max,
            safety_radius: hc.safety_radius,
            road_margin: 1.0,
            plan_dt: 0.1,
            lattice: LatticeSpec::default(),
        }
    }
}

impl PlannerConfig {
    pub fn constraints(&self, path: &ReferencePath) -> Result<HardConstraints> {
        let hc = HardConstraints {
            v_min: self.v_min,
            v_max: self.v_max,
            a_max: self.a_max,
            safety_radius: self.safety_radius,
            road_bounds: [self.road_margin, path.road_width() - self.road_margin],
            ..HardConstraints::default()
        };
        hc.validate()?;
        if !(self.plan_dt > 0.0) || self.lattice.times.is_empty() || self.lattice.speed_offsets.is_empty() {
            return Err(Error::Config("plan_dt must be > 0 and the lattice non-empty".into()));
        }
        Ok(hc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub road: PathDefinition,
    pub scenario: ScenarioConfig,
    pub planner: PlannerConfig,
    pub reward: RewardConfig,
    pub sim_dt: f64,
    pub replan_period: f64,
    pub perception_range: f64,
    /// IDM speed law and cost weights used by the learning agents.
    pub rl_profile: DrivingProfile,
    pub t_f_range: [f64; 2],
    /// Keep per-step records for the episode log.
    pub record_log: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            road: PathDefinition::default_highway(),
            scenario: ScenarioConfig::default(),
            planner: PlannerConfig::default(),
            reward: RewardConfig::default(),
            sim_dt: 0.05,
            replan_period: 0.2,
            perception_range: 100.0,
            rl_profile: DrivingProfile::safe(),
            t_f_range: [1.0, 5.0],
            record_log: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.reward.validate()?;
        self.rl_profile.validate()?;
        let ratio = self.replan_period / self.sim_dt;
        if !(self.sim_dt > 0.0) || !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config("replan_period must be a positive multiple of sim_dt".into()));
        }
        if !(self.perception_range > 0.0) || !(self.t_f_range[0] > 0.0 && self.t_f_range[0] <= self.t_f_range[1]) {
            return Err(Error::Config("invalid perception range or t_f range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub status: Status,
    /// Every candidate was infeasible and the ego braked in lane.
    pub fallback: bool,
    pub clamped_action: bool,
    pub lane_change: Option<LaneChangeEvent>,
    pub target_d: f64,
    pub target_speed: f64,
    /// Ended by the time limit rather than a driving event.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: ObservationTensor,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy)]
struct LaneTracker {
    settled: usize,
    departure_speed: f64,
}

impl LaneTracker {
    fn update(&mut self, world: &World, v_max: f64) -> Option<LaneChangeEvent> {
        let d = world.ego.frenet.d;
        let lane = world.path.nearest_lane(d);
        let center = (lane as f64 + 0.5) * world.path.lane_width();
        if (d - center).abs() >= LANE_SETTLE_TOLERANCE {
            return None;
        }
        let v = world.ego.frenet.s_dot;
        let event = (lane != self.settled).then(|| LaneChangeEvent {
            from: self.settled,
            to: lane,
            gain: (v - self.departure_speed) / v_max,
        });
        self.settled = lane;
        self.departure_speed = v;
        event
    }
}

pub struct HighwayEnv {
    cfg: EnvConfig,
    path: Arc<ReferencePath>,
    hc: HardConstraints,
    action_spec: ActionSpec,
    world: Option<World>,
    history: ObservationHistory,
    target_lane: usize,
    tracker: LaneTracker,
    records: Vec<StepRecord>,
    total_reward: f64,
    lane_changes: usize,
    seed: u64,
    done: bool,
}

impl HighwayEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let path = Arc::new(cfg.road.build()?);
        Self::with_path(cfg, path)
    }

    /// Reuses an already built reference path.
    pub fn with_path(cfg: EnvConfig, path: Arc<ReferencePath>) -> Result<Self> {
        cfg.validate()?;
        let hc = cfg.planner.constraints(&path)?;
        let action_spec = ActionSpec::for_road(&path, cfg.planner.v_max, cfg.planner.road_margin, cfg.t_f_range);
        let history = ObservationHistory::new(cfg.scenario.obs_noise_sigma, cfg.perception_range);
        Ok(Self {
            cfg,
            path,
            hc,
            action_spec,
            world: None,
            history,
            target_lane: 0,
            tracker: LaneTracker {
                settled: 0,
                departure_speed: 0.0,
            },
            records: Vec::new(),
            total_reward: 0.0,
            lane_changes: 0,
            seed: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn path(&self) -> &Arc<ReferencePath> {
        &self.path
    }

    pub fn constraints(&self) -> &HardConstraints {
        &self.hc
    }

    pub fn action_spec(&self) -> &ActionSpec {
        &self.action_spec
    }

    /// The current world; panics before the first reset.
    pub fn world(&self) -> &World {
        self.world.as_ref().expect("reset the environment before use")
    }

    pub fn target_lane(&self) -> usize {
        self.target_lane
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self, seed: u64) -> Result<ObservationTensor> {
        let scenario = ScenarioConfig {
            seed,
            ..self.cfg.scenario.clone()
        };
        let mut world = spawn_scenario(&scenario, self.path.clone())?;
        self.seed = seed;
        self.target_lane = world.ego_lane();
        self.tracker = LaneTracker {
            settled: world.ego_lane(),
            departure_speed: world.ego.frenet.s_dot,
        };
        self.records.clear();
        self.total_reward = 0.0;
        self.lane_changes = 0;
        self.done = false;
        self.history.clear();
        let mut rng = world.rng.clone();
        let obs = self.history.observe(&world, &mut rng);
        world.rng = rng;
        self.world = Some(world);
        Ok(obs)
    }

    /// Chooses the trajectory executed over the next decision period.
    fn plan(&mut self, action: &Action) -> Result<(PolyTrajectory, StepInfo)> {
        let world = self.world.as_ref().expect("reset before step");
        let cur = world.ego.frenet;
        let dt = self.cfg.planner.plan_dt;
        let mut info = StepInfo {
            status: Status::Running,
            fallback: false,
            clamped_action: false,
            lane_change: None,
            target_d: cur.d,
            target_speed: cur.s_dot,
            truncated: false,
        };
        let fallback = |info: &mut StepInfo, decel: f64| {
            info.fallback = true;
            let center = (world.ego_lane() as f64 + 0.5) * self.path.lane_width();
            braking_fallback(&cur, center, decel, &self.path, dt)
        };
        match *action {
            Action::Continuous(a) => {
                let (m, clamped) = decode_action_continuous(a, &self.action_spec);
                info.clamped_action = clamped;
                info.target_d = m.d_f;
                info.target_speed = m.v_f;
                let traj = trajectory_to(&cur, &m, &self.path, dt)?;
                let pred = predict_obstacles(world, m.t_f, dt, self.hc.safety_radius);
                if check_feasibility(&traj, &self.hc, &pred)?.is_feasible() {
                    Ok((traj, info))
                } else {
                    let decel = self.cfg.rl_profile.idm.b;
                    Ok((fallback(&mut info, decel)?, info))
                }
            }
            Action::Discrete(i) => {
                let a = DiscreteAction::from_index(i)?;
                let (lane, target_d, target_speed) = decode_action_discrete(
                    a,
                    self.target_lane,
                    world,
                    &self.cfg.rl_profile,
                    self.hc.v_min,
                    self.hc.v_max,
                );
                self.target_lane = lane;
                let cmd = BehaviorCommand {
                    target_d,
                    target_speed,
                    weights: self.cfg.rl_profile.cost_weights,
                    fallback_decel: self.cfg.rl_profile.idm.b,
                };
                self.plan_lattice(&cmd, info)
            }
            Action::Targets(cmd) => self.plan_lattice(&cmd, info),
        }
    }

    fn plan_lattice(&self, cmd: &BehaviorCommand, mut info: StepInfo) -> Result<(PolyTrajectory, StepInfo)> {
        let world = self.world.as_ref().expect("reset before step");
        let cur = world.ego.frenet;
        let dt = self.cfg.planner.plan_dt;
        info.target_d = cmd.target_d;
        info.target_speed = cmd.target_speed;
        let lattice = &self.cfg.planner.lattice;
        let grid = lattice.grid(&self.path, world.ego_lane(), cmd.target_speed, self.hc.v_min, self.hc.v_max);
        let cands = generate_lattice(&cur, &grid, &self.path, dt)?;
        let horizon = lattice.times.iter().cloned().fold(0.0, f64::max);
        let pred = predict_obstacles(world, horizon, dt, self.hc.safety_radius);
        match select_optimal(&cands, &self.hc, &pred, &cmd.weights, cmd.target_d, cmd.target_speed) {
            Ok(sel) => Ok((cands.candidates[sel.index].clone(), info)),
            Err(Error::NoFeasibleTrajectory(_)) => {
                info.fallback = true;
                let center = (world.ego_lane() as f64 + 0.5) * self.path.lane_width();
                Ok((braking_fallback(&cur, center, cmd.fallback_decel, &self.path, dt)?, info))
            }
            Err(e) => Err(e),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done || self.world.is_none() {
            return Err(Error::TerminalWorld(
                self.world.as_ref().map_or(Status::Finished, |w| w.status),
            ));
        }
        let (traj, mut info) = self.plan(&action)?;
        let n = (self.cfg.replan_period / self.cfg.sim_dt).round() as usize;
        let dt = self.cfg.sim_dt;
        let v_max = self.cfg.reward.v_max;
        let mut world = self.world.take().expect("checked above");
        let mut lane_change = None;
        for k in 0..n {
            let stepped = world.step(&traj, k as f64 * dt, dt);
            if let Err(e) = stepped {
                self.world = Some(world);
                return Err(e);
            }
            if let Some(ev) = self.tracker.update(&world, v_max) {
                lane_change = Some(ev);
                self.lane_changes += 1;
            }
            if self.cfg.record_log {
                self.records.push(record(&world));
            }
            if world.status.is_terminal() {
                break;
            }
        }
        let reward = compute_reward(
            world.status,
            world.ego.frenet.s_dot,
            self.cfg.scenario.ego_target_speed,
            lane_change.map(|e| e.gain),
            &self.cfg.reward,
        );
        if let Some(last) = self.records.last_mut().filter(|_| self.cfg.record_log) {
            last.reward = Some(reward);
            last.lane_change = lane_change;
        }
        self.total_reward += reward;
        self.done = world.status.is_terminal();
        info.status = world.status;
        info.lane_change = lane_change;
        info.truncated = world.status == Status::TimeLimit;
        let mut rng = world.rng.clone();
        let obs = self.history.observe(&world, &mut rng);
        world.rng = rng;
        self.world = Some(world);
        Ok(StepResult {
            obs,
            reward,
            done: self.done,
            info,
        })
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// Log of the episode so far.
    pub fn episode_log(&self, agent: &str) -> EpisodeLog {
        let world = self.world();
        EpisodeLog {
            records: self.records.clone(),
            summary: EpisodeSummary {
                seed: self.seed,
                agent: agent.to_string(),
                status: world.status,
                steps: world.steps,
                sim_time: world.sim_time,
                distance: world.distance_travelled(),
                total_reward: self.total_reward,
                lane_changes: self.lane_changes,
            },
        }
    }
}

fn record(world: &World) -> StepRecord {
    let (cart, accel, jerk, yaw_rate) = match &world.ego_sample {
        Some(s) => (s.cartesian, s.accel, s.jerk, s.yaw_rate),
        None => (CartesianState::default(), 0.0, 0.0, 0.0),
    };
    StepRecord {
        step: world.steps,
        time: world.sim_time,
        ego: world.ego.frenet,
        ego_cartesian: cart,
        accel,
        jerk,
        yaw_rate,
        actors: world
            .actors
            .iter()
            .map(|a| ActorRecord {
                id: a.id,
                s: a.frenet.s,
                d: a.frenet.d,
                s_dot: a.frenet.s_dot,
            })
            .collect(),
        ttc: world.frontal_ttc(),
        lane_change: None,
        reward: None,
        status: world.status,
    }
}

/// Anything that picks an action from the environment state.
pub trait Policy {
    fn name(&self) -> String;

    fn reset(&mut self) {}

    fn act(&mut self, env: &HighwayEnv, obs: &ObservationTensor) -> Result<Action>;
}

impl Policy for BaselineAgent {
    fn name(&self) -> String {
        format!("{}-baseline", self.profile.name)
    }

    fn reset(&mut self) {
        BaselineAgent::reset(self);
    }

    fn act(&mut self, env: &HighwayEnv, _obs: &ObservationTensor) -> Result<Action> {
        let hc = env.constraints();
        let (target_d, target_speed) = self.step(env.world(), hc.v_min, hc.v_max);
        Ok(Action::Targets(BehaviorCommand {
            target_d,
            target_speed,
            weights: self.profile.cost_weights,
            fallback_decel: self.profile.idm.b,
        }))
    }
}

/// Runs one episode of `policy` in `env` from `seed` and returns its log.
pub fn run_episode_in(env: &mut HighwayEnv, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeLog> {
    policy.reset();
    let mut obs = env.reset(seed)?;
    while !env.is_done() {
        let action = policy.act(env, &obs)?;
        obs = env.step(action)?.obs;
    }
    Ok(env.episode_log(&policy.name()))
}

pub fn run_episode(policy: &mut dyn Policy, cfg: &EnvConfig, seed: u64) -> Result<EpisodeLog> {
    let mut env = HighwayEnv::new(cfg.clone())?;
    run_episode_in(&mut env, policy, seed)
}
