//! Speed/Safety/Comfort metrics, the shared-seed benchmark, scripted case
//! studies and one-shot planner dumps.

mod cases;
mod plan;
pub mod svg;

pub use cases::{case_study, run_case_study, run_case_with, CaseResult, CaseStudy, CaseStudyReport, CASE_IDS};
pub use plan::{plan_snapshot, CandidateRow, PlanReport, PlanSnapshot, CASE2_SNAPSHOT};

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{ActorPolicy, DdpgAgent, DqnAgent, GreedyQPolicy};
use crate::behavior::BaselineAgent;
use crate::config::Config;
use crate::env::{run_episode_in, Action, HighwayEnv, ObservationTensor, Policy};
use crate::error::{Error, Result};
use crate::sim::{derive_seed, EpisodeLog, Status};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Share of jerk (versus yaw rate) in the comfort score.
    pub w_c: f64,
    pub max_jerk: f64,
    pub max_yaw_rate: f64,
    pub min_ttc: f64,
    pub target_speed: f64,
    pub max_speed_error: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            w_c: 0.5,
            max_jerk: 10.0,
            max_yaw_rate: 0.5,
            min_ttc: 2.0,
            target_speed: 25.0,
            max_speed_error: 25.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.max_jerk, self.max_yaw_rate, self.min_ttc, self.target_speed, self.max_speed_error];
        if positive.iter().all(|&x| x > 0.0) && (0.0..=1.0).contains(&self.w_c) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid metrics configuration: {self:?}")))
        }
    }
}

/// Percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub speed: f64,
    pub safety: f64,
    pub comfort: f64,
}

impl Metrics {
    pub fn average(&self) -> f64 {
        (self.speed + self.safety + self.comfort) / 3.0
    }
}

fn pct(x: f64) -> f64 {
    (100.0 * x).clamp(0.0, 100.0)
}

pub fn compute_metrics(log: &EpisodeLog, mc: &MetricsConfig) -> Result<Metrics> {
    let recs = &log.records;
    if recs.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = recs.len() as f64;
    let avg_speed = recs.iter().map(|r| r.ego_cartesian.speed).sum::<f64>() / n;
    let avg_jerk = recs.iter().map(|r| r.jerk.abs()).sum::<f64>() / n;
    let avg_yaw = recs.iter().map(|r| r.yaw_rate.abs()).sum::<f64>() / n;
    let speed = pct(1.0 - (avg_speed - mc.target_speed).abs() / mc.max_speed_error);
    let comfort = pct(1.0 - mc.w_c * avg_jerk / mc.max_jerk - (1.0 - mc.w_c) * avg_yaw / mc.max_yaw_rate);
    let (mut sum, mut k) = (0.0, 0usize);
    for ttc in recs.iter().filter_map(|r| r.ttc) {
        sum += 1.0 - mc.min_ttc / ttc.max(mc.min_ttc);
        k += 1;
    }
    let safety = if k == 0 { 100.0 } else { pct(sum / k as f64) };
    Ok(Metrics { speed, safety, comfort })
}

/// Agent selector as written on the command line: `safe`, `agile`,
/// `dqn[=weights]`, `ddpg[=weights]`. Learning agents without weights use
/// their seeded initial networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Safe,
    Agile,
    Dqn(Option<PathBuf>),
    Ddpg(Option<PathBuf>),
}

impl AgentSpec {
    pub fn label(&self) -> &'static str {
        match self {
            AgentSpec::Safe => "safe",
            AgentSpec::Agile => "agile",
            AgentSpec::Dqn(_) => "dqn",
            AgentSpec::Ddpg(_) => "ddpg",
        }
    }

    pub fn instantiate(&self, cfg: &Config) -> Result<AgentInstance> {
        Ok(match self {
            AgentSpec::Safe => AgentInstance::Baseline(BaselineAgent::new(cfg.profiles.safe)),
            AgentSpec::Agile => AgentInstance::Baseline(BaselineAgent::new(cfg.profiles.agile)),
            AgentSpec::Dqn(Some(p)) => AgentInstance::Dqn(DqnAgent::load_policy(p, &cfg.dqn.net)?),
            AgentSpec::Dqn(None) => AgentInstance::Dqn(DqnAgent::new(&cfg.dqn)?.greedy_policy()),
            AgentSpec::Ddpg(Some(p)) => AgentInstance::Ddpg(DdpgAgent::load_policy(p, &cfg.ddpg.net)?),
            AgentSpec::Ddpg(None) => AgentInstance::Ddpg(DdpgAgent::new(&cfg.ddpg)?.greedy_policy()),
        })
    }

    /// Parses a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<AgentSpec>> {
        s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for AgentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, path) = match s.split_once('=') {
            Some((n, p)) => (n, Some(PathBuf::from(p))),
            None => (s, None),
        };
        match (name.to_ascii_lowercase().as_str(), path) {
            ("safe", None) => Ok(AgentSpec::Safe),
            ("agile", None) => Ok(AgentSpec::Agile),
            ("dqn", p) => Ok(AgentSpec::Dqn(p)),
            ("ddpg", p) => Ok(AgentSpec::Ddpg(p)),
            _ => Err(Error::Config(format!(
                "unknown agent `{s}` (expected safe, agile, dqn[=weights] or ddpg[=weights])"
            ))),
        }
    }
}

/// Replays one fixed continuous action every decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantAction {
    pub action: [f64; 3],
}

impl Policy for ConstantAction {
    fn name(&self) -> String {
        "constant".into()
    }

    fn act(&mut self, _env: &HighwayEnv, _obs: &ObservationTensor) -> Result<Action> {
        Ok(Action::Continuous(self.action))
    }
}

/// Any of the runnable agents, cloneable per episode.
#[derive(Debug, Clone)]
pub enum AgentInstance {
    Baseline(BaselineAgent),
    Dqn(GreedyQPolicy),
    Ddpg(ActorPolicy),
    Constant(ConstantAction),
}

impl AgentInstance {
    fn policy(&mut self) -> &mut dyn Policy {
        match self {
            AgentInstance::Baseline(p) => p,
            AgentInstance::Dqn(p) => p,
            AgentInstance::Ddpg(p) => p,
            AgentInstance::Constant(p) => p,
        }
    }
}

impl Policy for AgentInstance {
    fn name(&self) -> String {
        match self {
            AgentInstance::Baseline(p) => p.name(),
            AgentInstance::Dqn(p) => p.name(),
            AgentInstance::Ddpg(p) => p.name(),
            AgentInstance::Constant(p) => p.name(),
        }
    }

    fn reset(&mut self) {
        self.policy().reset();
    }

    fn act(&mut self, env: &HighwayEnv, obs: &ObservationTensor) -> Result<Action> {
        self.policy().act(env, obs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub agent: String,
    pub scenario: usize,
    pub seed: u64,
    pub status: Option<Status>,
    pub steps: u64,
    pub sim_time: f64,
    pub distance: f64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    /// Scenarios that produced metrics.
    pub scenarios: usize,
    pub errors: usize,
    pub speed: f64,
    pub safety: f64,
    pub comfort: f64,
    pub average: f64,
    pub collisions: usize,
    pub off_road: usize,
    pub finished: usize,
    pub time_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub agents: Vec<AgentSummary>,
    pub rows: Vec<ScenarioRow>,
    pub config: Config,
}

pub const ROWS_CSV_HEADER: [&str; 12] = [
    "agent", "scenario", "seed", "status", "steps", "sim_time", "distance", "speed", "safety", "comfort", "average", "error",
];

/// Renders a header and string records as CSV text.
pub(crate) fn csv_string<I>(header: &[&str], records: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for r in records {
        w.write_record(&r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV of UTF-8 fields")
}

pub(crate) fn metric_fields(m: Option<Metrics>) -> Vec<String> {
    match m {
        Some(m) => [m.speed, m.safety, m.comfort, m.average()].iter().map(f64::to_string).collect(),
        None => vec![String::new(); 4],
    }
}

impl BenchmarkReport {
    pub fn summary(&self, agent: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent == agent)
    }

    pub fn rows_csv(&self) -> String {
        csv_string(
            &ROWS_CSV_HEADER,
            self.rows.iter().map(|r| {
                let mut rec = vec![
                    r.agent.clone(),
                    r.scenario.to_string(),
                    r.seed.to_string(),
                    r.status.map(|s| format!("{s:?}")).unwrap_or_default(),
                    r.steps.to_string(),
                    r.sim_time.to_string(),
                    r.distance.to_string(),
                ];
                rec.extend(metric_fields(r.metrics));
                rec.push(r.error.clone().unwrap_or_default());
                rec
            }),
        )
    }

    /// Fixed-width table of the per-agent means.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} {:>7}  {:>5} {:>5} {:>5} {:>5} {:>5}",
            "agent", "speed", "safety", "comfort", "average", "runs", "coll", "off", "fin", "err"
        )
        .unwrap();
        for a in &self.agents {
            writeln!(
                out,
                "{:<8} {:>7.2} {:>7.2} {:>7.2} {:>7.2}  {:>5} {:>5} {:>5} {:>5} {:>5}",
                a.agent, a.speed, a.safety, a.comfort, a.average, a.scenarios, a.collisions, a.off_road, a.finished, a.errors
            )
            .unwrap();
        }
        out
    }

    /// Writes `rows.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv())?;
        let mut f = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn row_from_log(agent: &str, scenario: usize, seed: u64, log: &EpisodeLog, mc: &MetricsConfig) -> ScenarioRow {
    let metrics = compute_metrics(log, mc);
    ScenarioRow {
        agent: agent.to_string(),
        scenario,
        seed,
        status: Some(log.summary.status),
        steps: log.summary.steps,
        sim_time: log.summary.sim_time,
        distance: log.summary.distance,
        error: metrics.as_ref().err().map(|e| e.to_string()),
        metrics: metrics.ok(),
    }
}

fn error_row(agent: &str, scenario: usize, seed: u64, e: &Error) -> ScenarioRow {
    ScenarioRow {
        agent: agent.to_string(),
        scenario,
        seed,
        status: None,
        steps: 0,
        sim_time: 0.0,
        distance: 0.0,
        metrics: None,
        error: Some(e.to_string()),
    }
}

/// Per-agent means in first-appearance order; rows are kept in input order.
pub fn assemble_report(rows: Vec<ScenarioRow>, base_seed: u64, seeds: Vec<u64>, cfg: &Config) -> BenchmarkReport {
    let mut names: Vec<String> = Vec::new();
    for r in &rows {
        if !names.contains(&r.agent) {
            names.push(r.agent.clone());
        }
    }
    let agents = names
        .into_iter()
        .map(|agent| {
            let mine: Vec<&ScenarioRow> = rows.iter().filter(|r| r.agent == agent).collect();
            let ok: Vec<Metrics> = mine.iter().filter_map(|r| r.metrics).collect();
            let k = ok.len().max(1) as f64;
            let speed = ok.iter().map(|m| m.speed).sum::<f64>() / k;
            let safety = ok.iter().map(|m| m.safety).sum::<f64>() / k;
            let comfort = ok.iter().map(|m| m.comfort).sum::<f64>() / k;
            let count = |s: Status| mine.iter().filter(|r| r.status == Some(s)).count();
            AgentSummary {
                scenarios: ok.len(),
                errors: mine.iter().filter(|r| r.error.is_some()).count(),
                speed,
                safety,
                comfort,
                average: (speed + safety + comfort) / 3.0,
                collisions: count(Status::Collision),
                off_road: count(Status::OffRoad),
                finished: count(Status::Finished),
                time_limit: count(Status::TimeLimit),
                agent,
            }
        })
        .collect();
    BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        base_seed,
        seeds,
        agents,
        rows,
        config: cfg.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub n: usize,
    pub base_seed: u64,
    pub workers: usize,
    /// When set, every episode log is saved as `<agent>-<scenario>.jsonl`.
    pub log_dir: Option<PathBuf>,
}

impl BenchmarkOptions {
    pub fn new(n: usize, base_seed: u64) -> Self {
        Self {
            n,
            base_seed,
            workers: 1,
            log_dir: None,
        }
    }
}

pub fn scenario_seeds(base_seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(base_seed, i)).collect()
}

fn log_file_name(agent: &str, scenario: usize) -> String {
    format!("{agent}-{scenario:06}.jsonl")
}

/// Runs every agent on the same `n` seeded scenarios. Episodes run on a pool
/// of `workers` threads; failures become row-level errors.
pub fn run_benchmark(agents: &[AgentSpec], opts: &BenchmarkOptions, cfg: &Config) -> Result<BenchmarkReport> {
    if opts.n == 0 || agents.is_empty() {
        return Err(Error::Config("benchmark needs at least one agent and one scenario".into()));
    }
    cfg.validate()?;
    let prototypes = agents
        .iter()
        .map(|a| Ok((a.label(), a.instantiate(cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut env_cfg = cfg.env.clone();
    env_cfg.record_log = true;
    let path = std::sync::Arc::new(env_cfg.road.build()?);
    if let Some(dir) = &opts.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let seeds = scenario_seeds(opts.base_seed, opts.n);
    let jobs: Vec<(usize, usize)> = (0..prototypes.len())
        .flat_map(|a| (0..opts.n).map(move |i| (a, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let run_one = |&(a, i): &(usize, usize)| -> ScenarioRow {
        let (label, proto) = &prototypes[a];
        let seed = seeds[i];
        let result = HighwayEnv::with_path(env_cfg.clone(), path.clone()).and_then(|mut env| {
            let mut policy = proto.clone();
            run_episode_in(&mut env, &mut policy, seed)
        });
        let log = match result {
            Ok(log) => log,
            Err(e) => return error_row(label, i, seed, &e.in_episode(i)),
        };
        if let Some(dir) = &opts.log_dir {
            if let Err(e) = log.save(&dir.join(log_file_name(label, i))) {
                return error_row(label, i, seed, &e);
            }
        }
        row_from_log(label, i, seed, &log, &cfg.metrics)
    };
    let rows: Vec<ScenarioRow> = pool.install(|| jobs.par_iter().map(run_one).collect());
    for r in &rows {
        assert_eq!(r.seed, seeds[r.scenario], "scenario seeds must match across agents");
    }
    Ok(assemble_report(rows, opts.base_seed, seeds, cfg))
}

/// Rebuilds a report from logs saved by [`run_benchmark`].
pub fn report_from_logs(dir: &Path, agents: &[AgentSpec], opts: &BenchmarkOptions, cfg: &Config) -> Result<BenchmarkReport> {
    let seeds = scenario_seeds(opts.base_seed, opts.n);
    let mut rows = Vec::new();
    for a in agents {
        for (i, &seed) in seeds.iter().enumerate() {
            let log = EpisodeLog::load(&dir.join(log_file_name(a.label(), i)))?;
            if log.summary.seed != seed {
                return Err(Error::Config(format!(
                    "log for {} scenario {i} has seed {} but {seed} was expected",
                    a.label(),
                    log.summary.seed
                )));
            }
            rows.push(row_from_log(a.label(), i, seed, &log, &cfg.metrics));
        }
    }
    Ok(assemble_report(rows, opts.base_seed, seeds, cfg))
}
