use frenet_lab::config::Config;
use frenet_lab::eval::{
    compute_metrics, plan_snapshot, report_from_logs, run_benchmark, run_case_study, AgentSpec, BenchmarkOptions,
    MetricsConfig, PlanSnapshot, CASE2_SNAPSHOT, ROWS_CSV_HEADER,
};
use frenet_lab::geometry::{CartesianState, FrenetState};
use frenet_lab::sim::{EpisodeLog, EpisodeSummary, Status, StepRecord};
use proptest::prelude::*;

fn log_of(records: &[(f64, f64, f64, Option<f64>)]) -> EpisodeLog {
    let records = records
        .iter()
        .enumerate()
        .map(|(i, &(speed, jerk, yaw_rate, ttc))| StepRecord {
            step: i as u64,
            time: i as f64 * 0.05,
            ego: FrenetState::default(),
            ego_cartesian: CartesianState { speed, ..CartesianState::default() },
            accel: 0.0,
            jerk,
            yaw_rate,
            actors: Vec::new(),
            ttc,
            lane_change: None,
            reward: None,
            status: Status::Running,
        })
        .collect();
    EpisodeLog {
        records,
        summary: EpisodeSummary {
            seed: 0,
            agent: "oracle".into(),
            status: Status::Finished,
            steps: 0,
            sim_time: 0.0,
            distance: 0.0,
            total_reward: 0.0,
            lane_changes: 0,
        },
    }
}

fn clamp100(x: f64) -> f64 {
    (100.0 * x).clamp(0.0, 100.0)
}

/// Scores recomputed term by term from the raw records.
fn oracle_metrics(recs: &[(f64, f64, f64, Option<f64>)]) -> [f64; 3] {
    let n = recs.len() as f64;
    let mean = |f: &dyn Fn(&(f64, f64, f64, Option<f64>)) -> f64| recs.iter().map(f).sum::<f64>() / n;
    let v = mean(&|r| r.0);
    let jerk = mean(&|r| r.1.abs());
    let yaw = mean(&|r| r.2.abs());
    let ttcs: Vec<f64> = recs.iter().filter_map(|r| r.3).collect();
    let safety = if ttcs.is_empty() {
        100.0
    } else {
        clamp100(ttcs.iter().map(|&t| if t <= 2.0 { 0.0 } else { 1.0 - 2.0 / t }).sum::<f64>() / ttcs.len() as f64)
    };
    [
        clamp100(1.0 - (v - 25.0).abs() / 25.0),
        safety,
        clamp100(1.0 - 0.5 * jerk / 10.0 - 0.5 * yaw / 0.5),
    ]
}

fn record() -> impl Strategy<Value = (f64, f64, f64, Option<f64>)> {
    (0.0..60.0f64, -30.0..30.0f64, -2.0..2.0f64, prop::option::of(0.01..50.0f64))
}

proptest! {
    #[test]
    fn metrics_match_oracle(recs in prop::collection::vec(record(), 1..40)) {
        let m = compute_metrics(&log_of(&recs), &MetricsConfig::default()).unwrap();
        let o = oracle_metrics(&recs);
        for (got, want) in [m.speed, m.safety, m.comfort].into_iter().zip(o) {
            prop_assert!((0.0..=100.0).contains(&got));
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
    }
}

#[test]
fn benchmark_is_independent_of_worker_count() {
    let cfg = Config::default();
    let agents = [AgentSpec::Safe, AgentSpec::Agile];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let reports: Vec<_> = [1, 8]
        .iter()
        .zip(&dirs)
        .map(|(&workers, dir)| {
            let opts = BenchmarkOptions { workers, log_dir: Some(dir.path().to_path_buf()), ..BenchmarkOptions::new(6, 7) };
            run_benchmark(&agents, &opts, &cfg).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0].rows.len(), 12);
    assert!(reports[0].rows.iter().all(|r| r.error.is_none()));

    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 12);
    for name in &names {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name:?} differs between worker counts");
    }

    let rebuilt = report_from_logs(dirs[0].path(), &agents, &BenchmarkOptions::new(6, 7), &cfg).unwrap();
    assert_eq!(rebuilt, reports[0]);
    let wrong_seed = report_from_logs(dirs[0].path(), &agents, &BenchmarkOptions::new(6, 8), &cfg);
    assert!(wrong_seed.is_err());
}

#[test]
fn rows_csv_has_header_and_one_line_per_row() {
    let report = run_benchmark(&[AgentSpec::Safe], &BenchmarkOptions::new(2, 1), &Config::default()).unwrap();
    let csv = report.rows_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), ROWS_CSV_HEADER.join(","));
    assert_eq!(lines.count(), 2);
    let s = report.summary("safe").unwrap();
    assert_eq!(s.scenarios, 2);
    assert!((s.average - (s.speed + s.safety + s.comfort) / 3.0).abs() < 1e-12);
}

fn lane_of(d: f64) -> usize {
    (d / 3.5).floor() as usize
}

fn first_change(log: &EpisodeLog) -> Option<f64> {
    let start = lane_of(log.records[0].ego.d);
    log.records.iter().find(|r| lane_of(r.ego.d) != start).map(|r| r.time)
}

#[test]
fn baselines_take_the_faster_lane() {
    let report = run_case_study(1, &[AgentSpec::Safe, AgentSpec::Agile], &Config::default()).unwrap();
    for agent in ["safe", "agile"] {
        let log = &report.result(agent).unwrap().log;
        assert_eq!(log.summary.status, Status::Finished, "{agent}");
        let first_new_lane = log.records.iter().map(|r| lane_of(r.ego.d)).find(|&l| l != 1);
        assert_eq!(first_new_lane, Some(0), "{agent}");
    }
    assert!(report.svg.starts_with("<svg"));
}

#[test]
fn baselines_stay_behind_side_by_side_blockers() {
    let report = run_case_study(2, &[AgentSpec::Safe, AgentSpec::Agile], &Config::default()).unwrap();
    for agent in ["safe", "agile"] {
        let log = &report.result(agent).unwrap().log;
        for r in &log.records {
            let lead = r.actors.iter().map(|a| a.s).fold(f64::NEG_INFINITY, f64::max);
            assert!(r.ego.s < lead, "{agent} passed the blockers at t = {}", r.time);
        }
    }
}

#[test]
fn agile_merges_before_safe() {
    let report = run_case_study(3, &[AgentSpec::Safe, AgentSpec::Agile], &Config::default()).unwrap();
    let agile = first_change(&report.result("agile").unwrap().log).expect("agile changes lane");
    let safe = first_change(&report.result("safe").unwrap().log).unwrap_or(f64::INFINITY);
    assert!(agile < safe, "agile at {agile}, safe at {safe}");
}

#[test]
fn snapshot_lattice_shows_a_blocked_road() {
    let snap = PlanSnapshot::from_toml(CASE2_SNAPSHOT).unwrap();
    let report = plan_snapshot(&snap, &Config::default()).unwrap();
    assert_eq!(report.rows.len(), 27);
    assert!(report.rows.iter().any(|r| !r.feasible));
    assert_eq!(report.csv().lines().count(), 28);
}
