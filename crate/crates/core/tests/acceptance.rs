//! Full-scale acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when a criterion outside `KNOWN_RED` fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use common::{
    circle_path, dense_collision, gradient_check, lane_car, mobil_world, observation_mismatch, oracle_cost, poly3,
    random_scene, random_traffic, sinusoid_path, straight_path, straight_road,
};
use frenet_lab::agents::{train_dqn, RandomDiscretePolicy};
use frenet_lab::behavior::{bumper_gap, idm_acceleration, mobil_decision, DrivingProfile, IdmParams, LaneDecision, MobilParams};
use frenet_lab::config::Config;
use frenet_lab::env::{compute_reward, run_episode, Action, EnvConfig, HighwayEnv, RewardConfig};
use frenet_lab::eval::{
    case_study, plan_snapshot, run_benchmark, run_case_with, AgentInstance, AgentSpec, BenchmarkOptions, ConstantAction,
    PlanSnapshot, CASE2_SNAPSHOT,
};
use frenet_lab::geometry::{cartesian_to_frenet, frenet_to_cartesian, normalize_angle, FrenetState, ReferencePath};
use frenet_lab::planner::{
    check_feasibility, predict_vehicles, select_optimal, trajectory_cost, HardConstraints, ObstaclePrediction,
};
use frenet_lab::sim::{EpisodeLog, Status, Vehicle, World};
use frenet_lab::trajectory::{
    generate_lattice, quartic_longitudinal, quintic_lateral, trajectory_to, LatticeSpec, PolyTrajectory, TerminalManifold,
};
use frenet_lab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail; see the project notes for the analysis.
const KNOWN_RED: [u32; 1] = [10];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_round_trip() -> Outcome {
    let start = Instant::now();
    let (mut pos, mut yaw) = (0.0f64, 0.0f64);
    for (k, path) in [straight_path(), circle_path(), sinusoid_path()].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        for _ in 0..10_000 {
            let f = FrenetState {
                s: rng.random_range(20.0..path.total_length() - 20.0),
                s_dot: rng.random_range(1.0..30.0),
                s_ddot: rng.random_range(-3.0..3.0),
                d: rng.random_range(0.0..path.road_width()),
                d_dot: rng.random_range(-2.0..2.0),
                d_ddot: rng.random_range(-1.0..1.0),
            };
            let c = frenet_to_cartesian(path, &f).map_err(|e| e.to_string())?;
            let back = cartesian_to_frenet(path, &c).map_err(|e| e.to_string())?;
            let c2 = frenet_to_cartesian(path, &back.state).map_err(|e| e.to_string())?;
            pos = pos.max((c.x - c2.x).hypot(c.y - c2.y));
            yaw = yaw.max(normalize_angle(c.yaw - c2.yaw).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        pos <= 1e-6 && yaw <= 1e-6 && secs < 5.0,
        format!("position {pos:.1e} m, yaw {yaw:.1e} rad, {secs:.2} s"),
    )
}

fn c2_boundaries() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (d0, dv0, da0) = (rng.random_range(0.0..14.0), rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0));
        let (s0, v0, a0) = (rng.random_range(0.0..3000.0), rng.random_range(0.0..30.0), rng.random_range(-4.0..4.0));
        let (d_f, v_f, t_f) = (rng.random_range(0.0..14.0), rng.random_range(0.0..30.0), rng.random_range(0.5..8.0));
        let lat = quintic_lateral(d0, dv0, da0, d_f, t_f).map_err(|e| e.to_string())?;
        let lon = quartic_longitudinal(s0, v0, a0, v_f, t_f).map_err(|e| e.to_string())?;
        let (l0, l1) = (poly3(&lat, 0.0), poly3(&lat, t_f));
        let (g0, g1) = (poly3(&lon, 0.0), poly3(&lon, t_f));
        for r in [l0[0] - d0, l0[1] - dv0, l0[2] - da0, l1[0] - d_f, l1[1], l1[2], g0[0] - s0, g0[1] - v0, g0[2] - a0, g1[1] - v_f, g1[2]] {
            worst = worst.max(r.abs());
        }
    }
    let mut closed = 0.0f64;
    for _ in 0..10_000 {
        let d0 = rng.random_range(0.0..14.0);
        let delta = rng.random_range(-7.0..7.0);
        let t = rng.random_range(0.5..8.0);
        let c = quintic_lateral(d0, 0.0, 0.0, d0 + delta, t).map_err(|e| e.to_string())?;
        let expect = [d0, 0.0, 0.0, 10.0 * delta / t.powi(3), -15.0 * delta / t.powi(4), 6.0 * delta / t.powi(5)];
        for (a, b) in c.iter().zip(expect) {
            closed = closed.max((a - b).abs());
        }
    }
    check(
        worst <= 1e-9 && closed <= 1e-9,
        format!("boundary residual {worst:.1e}, closed form {closed:.1e}"),
    )
}

fn c3_planner() -> Outcome {
    let path = sinusoid_path();
    let hc = HardConstraints::for_road(&path);
    let spec = LatticeSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let (mut collisions, mut mismatches, mut selected, mut fallbacks) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let sc = random_scene(&path, &mut rng);
        let grid = spec.grid(&path, path.nearest_lane(sc.ego.d), sc.target_speed, hc.v_min, hc.v_max);
        let cands = generate_lattice(&sc.ego, &grid, &path, 0.1).map_err(|e| e.to_string())?;
        let pred = predict_vehicles(sc.actors.iter(), 4.0, 0.1, hc.safety_radius);
        let target_d = path.lane_center_offset(sc.target_lane).map_err(|e| e.to_string())?;
        let mut oracle: Option<(usize, f64)> = None;
        for (i, c) in cands.candidates.iter().enumerate() {
            let cost = oracle_cost(c, &sc.weights, target_d, sc.target_speed);
            if (cost - trajectory_cost(c, &sc.weights, target_d, sc.target_speed)).abs() > 1e-9 * cost.max(1.0) {
                mismatches += 1;
            }
            let feasible = check_feasibility(c, &hc, &pred).map_err(|e| e.to_string())?.is_feasible();
            if feasible && oracle.is_none_or(|(_, b)| cost < b) {
                oracle = Some((i, cost));
            }
        }
        match select_optimal(&cands, &hc, &pred, &sc.weights, target_d, sc.target_speed) {
            Ok(sel) => {
                selected += 1;
                match oracle {
                    Some((i, c)) if sel.index == i || (sel.cost - c).abs() <= 1e-9 * c.max(1.0) => {}
                    _ => mismatches += 1,
                }
                if dense_collision(&cands.candidates[sel.index], &pred).is_some() {
                    collisions += 1;
                }
            }
            Err(Error::NoFeasibleTrajectory(_)) => {
                fallbacks += 1;
                if oracle.is_some() {
                    mismatches += 1;
                }
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    check(
        collisions == 0 && mismatches == 0,
        format!("{selected} selections, {fallbacks} fallbacks, {collisions} collisions, {mismatches} argmin mismatches"),
    )
}

fn c4_idm_mobil() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst_v = 0.0f64;
    for p in [IdmParams::default(), DrivingProfile::safe().idm, DrivingProfile::agile().idm] {
        for _ in 0..20 {
            let mut v: f64 = rng.random_range(0.0..35.0);
            for _ in 0..1200 {
                v = (v + idm_acceleration(v, f64::INFINITY, 0.0, &p) * 0.05).max(0.0);
            }
            worst_v = worst_v.max((v - p.v0).abs());
        }
    }

    let path = straight_road(200, 4);
    let mut actors = Vec::new();
    for i in 0..10u32 {
        let mut a = lane_car(i + 1, 600.0 - 30.0 * i as f64, 0, 20.0);
        a.idm.v0 = 25.0;
        a.idm.a = rng.random_range(1.0..2.0);
        a.idm.t_headway = rng.random_range(1.0..2.0);
        actors.push(a);
    }
    let ego = lane_car(0, 100.0, 3, 25.0);
    let mut world = World::new(path.clone(), ego, actors, 199_000.0, 1e9, 0).map_err(|e| e.to_string())?;
    let traj = trajectory_to(&ego.frenet, &TerminalManifold { v_f: 25.0, d_f: ego.frenet.d, t_f: 1.0 }, &path, 0.05)
        .map_err(|e| e.to_string())?;
    let mut min_gap = f64::INFINITY;
    for k in 0..100_000u64 {
        if k % 1200 == 0 {
            world.actors[0].idm.v0 = if (k / 1200) % 2 == 0 { 30.0 } else { 3.0 };
        }
        world.step(&traj, k as f64 * 0.05, 0.05).map_err(|e| e.to_string())?;
        let mut order: Vec<&Vehicle> = world.actors.iter().collect();
        order.sort_by(|a, b| a.frenet.s.total_cmp(&b.frenet.s));
        for w in order.windows(2) {
            min_gap = min_gap.min(bumper_gap(w[0], w[1]));
        }
    }

    let (mut asym, mut unmirrored, mut mirrored_checked) = (0, 0, 0);
    for _ in 0..500 {
        let mut lane: Vec<(f64, f64)> = Vec::new();
        for _ in 0..rng.random_range(0..4) {
            let ds: f64 = rng.random_range(-80.0..80.0);
            if ds.abs() > 8.0 && lane.iter().all(|o| (o.0 - ds).abs() > 8.0) {
                lane.push((ds, rng.random_range(5.0..30.0)));
            }
        }
        let others: Vec<(f64, usize, f64)> = (0..3).flat_map(|l| lane.iter().map(move |&(ds, v)| (ds, l, v))).collect();
        let w = mobil_world(1, rng.random_range(5.0..30.0), &others);
        for mp in [MobilParams::default(), DrivingProfile::safe().mobil, DrivingProfile::agile().mobil] {
            let mp = MobilParams { accel_threshold: mp.accel_threshold.max(1e-6), ..mp };
            asym += (mobil_decision(&w, &mp, &IdmParams::default()) != LaneDecision::KeepLane) as usize;
        }
    }
    for _ in 0..2000 {
        // Exact left/right ties only arise with both adjacent lanes empty.
        let traffic = random_traffic(&mut rng);
        if traffic.iter().all(|t| t.1 == 1) {
            continue;
        }
        let v = rng.random_range(5.0..30.0);
        let mirrored: Vec<(f64, usize, f64)> = traffic.iter().map(|&(ds, l, s)| (ds, 2 - l, s)).collect();
        let (mp, idm) = (MobilParams::default(), IdmParams::default());
        let da = mobil_decision(&mobil_world(1, v, &traffic), &mp, &idm);
        let db = mobil_decision(&mobil_world(1, v, &mirrored), &mp, &idm);
        unmirrored += (db != da.mirrored()) as usize;
        mirrored_checked += 1;
    }
    check(
        worst_v < 0.1 && min_gap > 0.0 && asym == 0 && unmirrored == 0,
        format!(
            "free road |v - v0| {worst_v:.1e}, platoon min gap {min_gap:.2} m, {asym} symmetric changes, \
             {unmirrored}/{mirrored_checked} unmirrored"
        ),
    )
}

fn c5_reward() -> Outcome {
    let cfg = RewardConfig::default();
    let collision = compute_reward(Status::Collision, 25.0, 25.0, None, &cfg);
    let cruise = compute_reward(Status::Running, 25.0, 25.0, None, &cfg);
    let change = compute_reward(Status::Running, 25.0, 25.0, Some(0.1), &cfg);
    check(
        collision == -10.0 && cruise == 10.0 && (change - 10.7).abs() < 1e-12,
        format!("collision {collision}, cruise {cruise}, qualifying change {change}"),
    )
}

fn random_action(rng: &mut ChaCha8Rng) -> Action {
    if rng.random_bool(0.7) {
        Action::Continuous([0; 3].map(|_| rng.random_range(-1.2..1.2)))
    } else {
        Action::Discrete(rng.random_range(0..3))
    }
}

fn c6_observation() -> Outcome {
    let mut failures = Vec::new();
    let mut steps = 0;
    for sigma in [0.0, EnvConfig::default().scenario.obs_noise_sigma] {
        let mut cfg = EnvConfig::default();
        cfg.scenario.obs_noise_sigma = sigma;
        cfg.record_log = false;
        let range = cfg.perception_range;
        let mut env = HighwayEnv::new(cfg).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(600);
        let mut episode = 0;
        env.reset(episode).map_err(|e| e.to_string())?;
        let n = if sigma == 0.0 { 100_000 } else { 10_000 };
        for _ in 0..n {
            let obs = if env.is_done() {
                episode += 1;
                env.reset(episode).map_err(|e| e.to_string())?
            } else {
                env.step(random_action(&mut rng)).map_err(|e| e.to_string())?.obs
            };
            steps += 1;
            if obs.shape() != (30, 30) || obs.values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                failures.push(format!("episode {episode}: shape or range"));
            } else if sigma == 0.0 {
                if let Some(m) = observation_mismatch(env.world(), &obs, range) {
                    failures.push(format!("episode {episode}: {m}"));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{steps} steps, {} mismatches{}", failures.len(), failures.first().map(|f| format!(" ({f})")).unwrap_or_default()),
    )
}

fn c7_gradients() -> Outcome {
    let worst = (0..200).map(gradient_check).fold(0.0, f64::max);
    check(worst <= 1e-4, format!("200 random networks, worst relative error {worst:.1e}"))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn c8_dqn() -> Outcome {
    let start = Instant::now();
    let cfg = Config::toy_dqn();
    let mut env = HighwayEnv::new(cfg.env.clone()).map_err(|e| e.to_string())?;
    let out = train_dqn(&mut env, &cfg.dqn).map_err(|e| e.to_string())?;
    let n = out.curve.len();
    if n < 200 {
        return Err(format!("only {n} episodes"));
    }
    let first = mean(out.curve[..100].iter().map(|p| p.reward));
    let last = mean(out.curve[n - 100..].iter().map(|p| p.reward));
    let mut random = Vec::with_capacity(1000);
    for i in 0..1000u64 {
        let mut policy = RandomDiscretePolicy { rng: ChaCha8Rng::seed_from_u64(10_000 + i) };
        let log = run_episode(&mut policy, &cfg.env, 10_000 + i).map_err(|e| e.to_string())?;
        random.push(log.summary.total_reward);
    }
    let random = mean(random.into_iter());
    let secs = start.elapsed().as_secs_f64();
    check(
        n <= 5000 && last >= 1.5 * first && last > random && secs < 600.0,
        format!("{n} episodes, first-100 {first:.1}, last-100 {last:.1}, random {random:.1}, {secs:.0} s"),
    )
}

/// Whether the ego, after following `traj`, can hold `v_f` and `d_f` until it
/// is clear ahead of every blocker without touching their inflated boxes.
fn passes_after(traj: &PolyTrajectory, pred: &ObstaclePrediction, hc: &HardConstraints) -> bool {
    let end = traj.point_at(traj.duration).frenet;
    let fine = traj.dt / 10.0;
    for k in 0..=(30.0 / fine) as usize {
        let tau = k as f64 * fine;
        let t = traj.duration + tau;
        let s = end.s + end.s_dot * tau;
        let mut clear = true;
        for a in &pred.actors {
            let ds = s - a.s_at(t);
            let overlap_s = ds.abs() < 0.5 * (hc.ego_length + a.length) + hc.safety_radius;
            let overlap_d = (end.d - a.d).abs() < 0.5 * (hc.ego_width + a.width) + hc.safety_radius;
            if overlap_s && overlap_d {
                return false;
            }
            clear &= ds > 0.5 * (hc.ego_length + a.length);
        }
        if clear {
            return true;
        }
    }
    false
}

fn leads_blockers(log: &EpisodeLog) -> bool {
    log.records.iter().any(|r| r.actors.iter().all(|a| r.ego.s > a.s + 4.8))
}

fn c9_maneuverability() -> Outcome {
    let cfg = Config::default();
    let snap = PlanSnapshot::from_toml(CASE2_SNAPSHOT).map_err(|e| e.to_string())?;
    let report = plan_snapshot(&snap, &cfg).map_err(|e| e.to_string())?;
    let path: Arc<ReferencePath> = report.world.path.clone();
    let hc = cfg.env.planner.constraints(&path).map_err(|e| e.to_string())?;
    let dt = cfg.env.planner.plan_dt;
    let pred = predict_vehicles(report.world.actors.iter(), 6.0, dt, hc.safety_radius);
    let ego = report.world.ego.frenet;
    let centers: Vec<f64> = (0..path.lane_count()).map(|l| path.lane_center_offset(l).unwrap()).collect();
    let mut offsets: Vec<f64> = (0..=140).map(|i| i as f64 / 10.0).collect();
    offsets.extend(&centers);
    let (mut at_centers, mut between) = (0, Vec::new());
    for &d_f in &offsets {
        for v_f in (0..=30).step_by(2).map(f64::from) {
            for t_f in [1.0, 2.0, 3.0, 4.0, 5.0] {
                let traj = match trajectory_to(&ego, &TerminalManifold { v_f, d_f, t_f }, &path, dt) {
                    Ok(t) => t,
                    Err(_) => continue,
                };
                let ok = check_feasibility(&traj, &hc, &pred).map_err(|e| e.to_string())?.is_feasible()
                    && dense_collision(&traj, &pred).is_none()
                    && passes_after(&traj, &pred, &hc);
                if ok {
                    if centers.iter().any(|c| (c - d_f).abs() < 1e-9) {
                        at_centers += 1;
                    } else {
                        between.push(d_f);
                    }
                }
            }
        }
    }
    between.sort_by(f64::total_cmp);
    between.dedup();

    let case = case_study(2).map_err(|e| e.to_string())?;
    let agents = vec![
        ("continuous".to_string(), AgentInstance::Constant(ConstantAction { action: [0.4, 0.0, 0.0] })),
        ("safe".to_string(), AgentSpec::Safe.instantiate(&cfg).map_err(|e| e.to_string())?),
        ("agile".to_string(), AgentSpec::Agile.instantiate(&cfg).map_err(|e| e.to_string())?),
    ];
    let runs = run_case_with(&case, agents, &cfg).map_err(|e| e.to_string())?;
    let cont = &runs.result("continuous").ok_or("missing run")?.log;
    let cont_passes = leads_blockers(cont) && cont.summary.status == Status::Finished;
    let behind = ["safe", "agile"].iter().all(|a| {
        runs.result(a)
            .is_some_and(|r| r.log.records.iter().all(|rec| rec.actors.iter().any(|b| rec.ego.s < b.s)))
    });
    let span = match (between.first(), between.last()) {
        (Some(a), Some(b)) => format!("d_f in [{a:.1}, {b:.1}]"),
        _ => "none".into(),
    };
    check(
        at_centers == 0 && !between.is_empty() && cont_passes && behind,
        format!(
            "{at_centers} passing at lane centers, {} off-center ({span}); off-center agent passes: {cont_passes}, \
             lattice agents stay behind: {behind}",
            between.len()
        ),
    )
}

fn c10_ordering() -> Outcome {
    let start = Instant::now();
    let cfg = Config::default();
    let report = run_benchmark(&[AgentSpec::Safe, AgentSpec::Agile], &BenchmarkOptions::new(100, 7), &cfg)
        .map_err(|e| e.to_string())?;
    let safe = report.summary("safe").ok_or("missing safe")?;
    let agile = report.summary("agile").ok_or("missing agile")?;
    let gaps = [agile.speed - safe.speed, safe.safety - agile.safety, safe.comfort - agile.comfort];
    let secs = start.elapsed().as_secs_f64();
    check(
        gaps.iter().all(|&g| g >= 5.0) && secs < 600.0,
        format!(
            "speed {:.1}/{:.1}, safety {:.1}/{:.1}, comfort {:.1}/{:.1} (safe/agile); gaps {:.2}, {:.2}, {:.2}; {secs:.0} s",
            safe.speed, agile.speed, safe.safety, agile.safety, safe.comfort, agile.comfort, gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c11_determinism() -> Outcome {
    let cfg = Config::default();
    let agents = [AgentSpec::Safe, AgentSpec::Agile, AgentSpec::Dqn(None), AgentSpec::Ddpg(None)];
    let mut outputs = Vec::new();
    for workers in [1, 1, 8] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let logs = dir.path().join("logs");
        let opts = BenchmarkOptions { workers, log_dir: Some(logs.clone()), ..BenchmarkOptions::new(10, 11) };
        let report = run_benchmark(&agents, &opts, &cfg).map_err(|e| e.to_string())?;
        let out = dir.path().join("report");
        report.write(&out).map_err(|e| e.to_string())?;
        outputs.push((dir_bytes(&logs), dir_bytes(&out)));
    }
    let files = outputs[0].0.len() + outputs[0].1.len();
    check(
        outputs[0] == outputs[1] && outputs[0] == outputs[2],
        format!("{files} files compared across two runs and 1 vs 8 workers"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "frenet round trip", c1_round_trip),
        (2, "polynomial boundary conditions", c2_boundaries),
        (3, "planner safety and optimality", c3_planner),
        (4, "IDM/MOBIL sanity", c4_idm_mobil),
        (5, "reward spot values", c5_reward),
        (6, "observation contract", c6_observation),
        (7, "gradient check", c7_gradients),
        (8, "DQN learning", c8_dqn),
        (9, "off-center passage", c9_maneuverability),
        (10, "safe/agile ordering", c10_ordering),
        (11, "determinism", c11_determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_RED.contains(&id);
        match outcome {
            Ok(detail) => {
                println!("PASS {id:>2} {name}: {detail} [{secs:.1} s]");
                if known {
                    println!("     note: criterion {id} is listed as known red but passed");
                }
            }
            Err(detail) => {
                let tag = if known { " (known red)" } else { "" };
                println!("FAIL {id:>2} {name}{tag}: {detail} [{secs:.1} s]");
                if !known {
                    unexpected.push(id);
                }
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
