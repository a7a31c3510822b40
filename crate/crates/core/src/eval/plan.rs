use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::csv_string;
use super::svg::RoadCanvas;
use crate::behavior::{idm_speed_command, BaselineAgent, ProfileName};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::planner::{evaluate_candidates, select_optimal, Feasibility, ObstaclePrediction, Violation};
use crate::sim::{spawn_scenario, ScenarioConfig, ScriptedScene, World};
use crate::trajectory::{generate_lattice, CandidateSet};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// The scene behind the maneuverability case study, frozen at its first
/// decision.
pub const CASE2_SNAPSHOT: &str = include_str!("../../data/case2_snapshot.toml");

/// A frozen scene for a single planner call. Without an explicit target the
/// profile's baseline behavior picks one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSnapshot {
    pub schema_version: u32,
    pub profile: ProfileName,
    #[serde(default)]
    pub target_lane: Option<usize>,
    #[serde(default)]
    pub target_speed: Option<f64>,
    pub scene: ScriptedScene,
}

impl PlanSnapshot {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: PlanSnapshot = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if s.schema_version != PLAN_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported snapshot schema version {}", s.schema_version)));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub index: usize,
    pub v_f: f64,
    pub d_f: f64,
    pub t_f: f64,
    pub feasible: bool,
    pub violation: Option<Violation>,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct PlanReport {
    pub target_d: f64,
    pub target_speed: f64,
    pub rows: Vec<CandidateRow>,
    /// `None` when every candidate is infeasible.
    pub chosen: Option<usize>,
    pub candidates: CandidateSet,
    pub prediction: ObstaclePrediction,
    pub world: World,
}

pub fn plan_snapshot(snap: &PlanSnapshot, cfg: &Config) -> Result<PlanReport> {
    let path = Arc::new(cfg.env.road.build()?);
    let scenario = ScenarioConfig {
        scene: Some(snap.scene.clone()),
        ..cfg.env.scenario.clone()
    };
    let world = spawn_scenario(&scenario, path.clone())?;
    let hc = cfg.env.planner.constraints(&path)?;
    let profile = cfg.profiles.get(snap.profile);
    let (target_d, target_speed) = match snap.target_lane {
        Some(lane) => {
            let d = path.lane_center_offset(lane)?;
            let v = snap
                .target_speed
                .unwrap_or_else(|| idm_speed_command(&world, lane, &profile, hc.v_min, hc.v_max));
            (d, v)
        }
        None => {
            let (d, v) = BaselineAgent::new(profile).step(&world, hc.v_min, hc.v_max);
            (d, snap.target_speed.unwrap_or(v))
        }
    };
    let dt = cfg.env.planner.plan_dt;
    let lattice = &cfg.env.planner.lattice;
    let grid = lattice.grid(&path, world.ego_lane(), target_speed, hc.v_min, hc.v_max);
    let candidates = generate_lattice(&world.ego.frenet, &grid, &path, dt)?;
    let horizon = lattice.times.iter().cloned().fold(0.0, f64::max);
    let prediction = crate::planner::predict_obstacles(&world, horizon, dt, hc.safety_radius);
    let evals = evaluate_candidates(&candidates, &hc, &prediction, &profile.cost_weights, target_d, target_speed)?;
    let chosen = match select_optimal(&candidates, &hc, &prediction, &profile.cost_weights, target_d, target_speed) {
        Ok(sel) => Some(sel.index),
        Err(Error::NoFeasibleTrajectory(_)) => None,
        Err(e) => return Err(e),
    };
    let rows = candidates
        .source_manifolds
        .iter()
        .zip(&evals)
        .enumerate()
        .map(|(index, (m, e))| CandidateRow {
            index,
            v_f: m.v_f,
            d_f: m.d_f,
            t_f: m.t_f,
            feasible: e.feasibility.is_feasible(),
            violation: match e.feasibility {
                Feasibility::Feasible => None,
                Feasibility::Violated(v) => Some(v),
            },
            cost: e.cost,
        })
        .collect();
    Ok(PlanReport {
        target_d,
        target_speed,
        rows,
        chosen,
        candidates,
        prediction,
        world,
    })
}

impl PlanReport {
    pub fn csv(&self) -> String {
        let header = [
            "index", "v_f", "d_f", "t_f", "feasible", "violation", "violation_time", "cost", "chosen",
        ];
        csv_string(
            &header,
            self.rows.iter().map(|r| {
                let (label, t) = match r.violation {
                    None => (String::new(), String::new()),
                    Some(v) => {
                        let t = match v {
                            Violation::MinSpeed { t, .. }
                            | Violation::MaxSpeed { t, .. }
                            | Violation::Acceleration { t, .. }
                            | Violation::RoadBounds { t, .. }
                            | Violation::Collision { t, .. } => t,
                        };
                        (v.label().to_string(), t.to_string())
                    }
                };
                vec![
                    r.index.to_string(),
                    r.v_f.to_string(),
                    r.d_f.to_string(),
                    r.t_f.to_string(),
                    r.feasible.to_string(),
                    label,
                    t,
                    r.cost.to_string(),
                    (self.chosen == Some(r.index)).to_string(),
                ]
            }),
        )
    }

    /// Candidates in the road plane: feasible ones solid, infeasible dashed
    /// red, the chosen one thick. Actors are drawn now and at the horizon.
    pub fn svg(&self) -> String {
        let path = &self.world.path;
        let ego = &self.world.ego;
        let mut s0 = ego.frenet.s;
        let mut s1 = ego.frenet.s;
        for c in &self.candidates.candidates {
            for smp in &c.samples {
                s1 = s1.max(smp.frenet.s);
            }
        }
        let h = self.prediction.horizon;
        for a in &self.prediction.actors {
            s0 = s0.min(a.s0);
            s1 = s1.max(a.s_at(h));
        }
        let mut c = RoadCanvas::new(s0 - 10.0, s1 + 10.0, path.road_width(), path.lane_count(), 1000.0);
        for a in &self.prediction.actors {
            c.vehicle(a.s_at(h), a.d, a.length, a.width, "#aaaaaa", 0.35, None);
            c.vehicle(a.s0, a.d, a.length, a.width, "#aaaaaa", 1.0, Some(&format!("{:.0}", a.speed)));
        }
        c.vehicle(ego.frenet.s, ego.frenet.d, ego.length, ego.width, "#444444", 1.0, Some(&format!("{:.0}", ego.frenet.s_dot)));
        for (i, cand) in self.candidates.candidates.iter().enumerate() {
            if self.chosen == Some(i) {
                continue;
            }
            let pts: Vec<(f64, f64)> = cand.samples.iter().map(|p| (p.frenet.s, p.frenet.d)).collect();
            if self.rows[i].feasible {
                c.polyline(&pts, "#2ca02c", 0.8, false);
            } else {
                c.polyline(&pts, "#d62728", 0.8, true);
            }
        }
        if let Some(i) = self.chosen {
            let pts: Vec<(f64, f64)> = self.candidates.candidates[i].samples.iter().map(|p| (p.frenet.s, p.frenet.d)).collect();
            c.polyline(&pts, "#1f77b4", 2.5, false);
        }
        let feasible = self.rows.iter().filter(|r| r.feasible).count();
        c.caption(
            0,
            &format!(
                "{} candidates, {feasible} feasible; target d {:.2} m, speed {:.1} m/s",
                self.rows.len(),
                self.target_d,
                self.target_speed
            ),
            "black",
        );
        let chosen = match self.chosen {
            Some(i) => {
                let r = &self.rows[i];
                format!("chosen #{i}: v_f {:.1}, d_f {:.2}, t_f {:.1}, cost {:.3}", r.v_f, r.d_f, r.t_f, r.cost)
            }
            None => "no feasible candidate; braking fallback".to_string(),
        };
        c.caption(1, &chosen, "#1f77b4");
        c.finish(2)
    }
}
