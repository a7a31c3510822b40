use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::svg::{RoadCanvas, PALETTE};
use super::{compute_metrics, csv_string, metric_fields, AgentInstance, AgentSpec, Metrics};
use crate::config::Config;
use crate::env::{run_episode_in, HighwayEnv};
use crate::error::{Error, Result};
use crate::geometry::ReferencePath;
use crate::planner::{VEHICLE_LENGTH, VEHICLE_WIDTH};
use crate::sim::{EpisodeLog, ScenarioConfig};

pub const CASE_SCHEMA_VERSION: u32 = 1;
pub const CASE_IDS: [u8; 3] = [1, 2, 3];

const CASE_FILES: [&str; 3] = [
    include_str!("../../data/case1.toml"),
    include_str!("../../data/case2.toml"),
    include_str!("../../data/case3.toml"),
];

/// A scripted scene plus the episode settings it runs under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub schema_version: u32,
    pub id: u8,
    pub title: String,
    pub description: String,
    pub scenario: ScenarioConfig,
}

impl CaseStudy {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: CaseStudy = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.schema_version != CASE_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported case schema version {}", c.schema_version)));
        }
        if c.scenario.scene.is_none() {
            return Err(Error::Config(format!("case {} has no scripted scene", c.id)));
        }
        c.scenario.validate()?;
        Ok(c)
    }
}

/// One of the shipped case studies.
pub fn case_study(id: u8) -> Result<CaseStudy> {
    let text = CASE_IDS
        .iter()
        .position(|&c| c == id)
        .map(|i| CASE_FILES[i])
        .ok_or(Error::UnknownCase(id))?;
    CaseStudy::from_toml(text)
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub agent: String,
    pub log: EpisodeLog,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone)]
pub struct CaseStudyReport {
    pub case: CaseStudy,
    pub results: Vec<CaseResult>,
    pub svg: String,
}

impl CaseStudyReport {
    pub fn result(&self, agent: &str) -> Option<&CaseResult> {
        self.results.iter().find(|r| r.agent == agent)
    }

    pub fn metrics_csv(&self) -> String {
        let header = [
            "case", "agent", "status", "sim_time", "distance", "lane_changes", "speed", "safety", "comfort", "average",
        ];
        csv_string(
            &header,
            self.results.iter().map(|r| {
                let s = &r.log.summary;
                let mut rec = vec![
                    self.case.id.to_string(),
                    r.agent.clone(),
                    format!("{:?}", s.status),
                    s.sim_time.to_string(),
                    s.distance.to_string(),
                    s.lane_changes.to_string(),
                ];
                rec.extend(metric_fields(r.metrics));
                rec
            }),
        )
    }
}

/// Runs each named agent on the case scene.
pub fn run_case_with(case: &CaseStudy, agents: Vec<(String, AgentInstance)>, cfg: &Config) -> Result<CaseStudyReport> {
    let mut env_cfg = cfg.env.clone();
    env_cfg.scenario = case.scenario.clone();
    env_cfg.record_log = true;
    let path = Arc::new(env_cfg.road.build()?);
    let mut env = HighwayEnv::with_path(env_cfg, path.clone())?;
    let mut results = Vec::new();
    for (agent, mut policy) in agents {
        let log = run_episode_in(&mut env, &mut policy, case.scenario.seed)?;
        let metrics = compute_metrics(&log, &cfg.metrics).ok();
        results.push(CaseResult { agent, log, metrics });
    }
    let svg = render_case(case, &results, &path);
    Ok(CaseStudyReport {
        case: case.clone(),
        results,
        svg,
    })
}

pub fn run_case_study(id: u8, agents: &[AgentSpec], cfg: &Config) -> Result<CaseStudyReport> {
    let case = case_study(id)?;
    let instances = agents
        .iter()
        .map(|a| Ok((a.label().to_string(), a.instantiate(cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    run_case_with(&case, instances, cfg)
}

fn render_case(case: &CaseStudy, results: &[CaseResult], path: &ReferencePath) -> String {
    let scene = case.scenario.scene.as_ref().expect("validated case has a scene");
    let mut s0 = scene.ego_s;
    let mut s1 = scene.ego_s;
    for r in results {
        for rec in &r.log.records {
            s0 = s0.min(rec.ego.s);
            s1 = s1.max(rec.ego.s);
        }
    }
    for a in &scene.actors {
        s0 = s0.min(a.s);
        s1 = s1.max(a.s);
    }
    let mut c = RoadCanvas::new(s0 - 10.0, s1 + 10.0, path.road_width(), path.lane_count(), 1200.0);
    for a in &scene.actors {
        c.vehicle(a.s, a.d, VEHICLE_LENGTH, VEHICLE_WIDTH, "#aaaaaa", 1.0, Some(&format!("{:.0}", a.speed)));
    }
    c.vehicle(scene.ego_s, scene.ego_d, VEHICLE_LENGTH, VEHICLE_WIDTH, "#444444", 1.0, Some(&format!("{:.0}", scene.ego_speed)));
    c.caption(0, &format!("case {}: {}", case.id, case.title), "black");
    for (k, r) in results.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = r.log.records.iter().map(|rec| (rec.ego.s, rec.ego.d)).collect();
        c.polyline(&pts, color, 1.5, false);
        if let Some(last) = r.log.records.last() {
            c.vehicle(last.ego.s, last.ego.d, VEHICLE_LENGTH, VEHICLE_WIDTH, color, 0.4, None);
        }
        let m = r
            .metrics
            .map(|m| format!("speed {:.0}, safety {:.0}, comfort {:.0}", m.speed, m.safety, m.comfort))
            .unwrap_or_default();
        c.caption(
            k + 1,
            &format!("{}: {:?} after {:.1} s, {m}", r.agent, r.log.summary.status, r.log.summary.sim_time),
            color,
        );
    }
    c.finish(results.len() + 1)
}
