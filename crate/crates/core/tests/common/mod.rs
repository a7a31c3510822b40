//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use frenet_lab::geometry::{FrenetState, PathDefinition, ReferencePath};
use frenet_lab::planner::{CostWeights, ObstaclePrediction, VEHICLE_LENGTH, VEHICLE_WIDTH};
use std::sync::Arc;

use frenet_lab::sim::{Vehicle, World};
use frenet_lab::trajectory::PolyTrajectory;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn straight_path() -> ReferencePath {
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let pts: Vec<[f64; 2]> = (0..=12).map(|i| [i as f64 * 100.0 * c, i as f64 * 100.0 * s]).collect();
    ReferencePath::new(&pts, 4, 3.5).unwrap()
}

/// Counter-clockwise arc of radius 300 m, center on the road side.
pub fn circle_path() -> ReferencePath {
    let pts: Vec<[f64; 2]> = (0..=40)
        .map(|i| {
            let a = i as f64 * 0.08;
            [300.0 * a.sin(), 300.0 * (1.0 - a.cos())]
        })
        .collect();
    ReferencePath::new(&pts, 4, 3.5).unwrap()
}

pub fn sinusoid_path() -> ReferencePath {
    PathDefinition::default_highway().build().unwrap()
}

/// Value and first two derivatives of `sum c_i t^i`, term by term.
pub fn poly3(c: &[f64], t: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, &ci) in c.iter().enumerate() {
        let i = i as i32;
        out[0] += ci * t.powi(i);
        if i >= 1 {
            out[1] += i as f64 * ci * t.powi(i - 1);
        }
        if i >= 2 {
            out[2] += (i * (i - 1)) as f64 * ci * t.powi(i - 2);
        }
    }
    out
}

pub fn box_corners(center: [f64; 2], heading: f64, length: f64, width: f64) -> [[f64; 2]; 4] {
    let (s, c) = heading.sin_cos();
    let (hl, hw) = (0.5 * length, 0.5 * width);
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(a, b)| [center[0] + a * c - b * s, center[1] + a * s + b * c])
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> bool {
    r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn inside_convex(poly: &[[f64; 2]; 4], p: [f64; 2]) -> bool {
    let signs: Vec<f64> = (0..4).map(|i| cross(poly[i], poly[(i + 1) % 4], p)).collect();
    signs.iter().all(|&s| s >= 0.0) || signs.iter().all(|&s| s <= 0.0)
}

/// Convex quadrilateral intersection by edge crossings and containment.
pub fn quads_intersect(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> bool {
    for i in 0..4 {
        for j in 0..4 {
            if segments_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4]) {
                return true;
            }
        }
    }
    inside_convex(a, b[0]) || inside_convex(b, a[0])
}

pub fn ego_corners(f: &FrenetState, length: f64, width: f64) -> [[f64; 2]; 4] {
    let heading = if f.s_dot.abs() < 1e-9 && f.d_dot.abs() < 1e-9 {
        0.0
    } else {
        f.d_dot.atan2(f.s_dot)
    };
    box_corners([f.s, f.d], heading, length, width)
}

/// First time (step `dt / 10`) at which the ego body on `traj` overlaps any
/// uninflated, constant-velocity obstacle.
pub fn dense_collision(traj: &PolyTrajectory, pred: &ObstaclePrediction) -> Option<f64> {
    let fine = traj.dt / 10.0;
    let n = (traj.duration / fine).round() as usize;
    for k in 0..=n {
        let t = (k as f64 * fine).min(traj.duration);
        let f = traj.point_at(t).frenet;
        let ego = ego_corners(&f, VEHICLE_LENGTH, VEHICLE_WIDTH);
        for a in &pred.actors {
            let s = a.s0 + a.speed * t;
            if (s - f.s).abs() > 20.0 {
                continue;
            }
            if quads_intersect(&ego, &box_corners([s, a.d], 0.0, a.length, a.width)) {
                return Some(t);
            }
        }
    }
    None
}

/// Weighted mean-squared cost recomputed from the sampled profile.
pub fn oracle_cost(traj: &PolyTrajectory, w: &CostWeights, target_d: f64, target_speed: f64) -> f64 {
    let n = traj.samples.len() as f64;
    let mut total = 0.0;
    for s in &traj.samples {
        total += w.w_o * (s.frenet.d - target_d).powi(2)
            + w.w_v * (s.frenet.s_dot - target_speed).powi(2)
            + w.w_a * (s.frenet.s_ddot.powi(2) + s.frenet.d_ddot.powi(2))
            + w.w_j * s.jerk.powi(2)
            + w.w_yaw * s.yaw_rate.powi(2);
    }
    total / n
}

/// A randomized planning problem on the default highway.
pub struct Scene {
    pub ego: FrenetState,
    pub actors: Vec<Vehicle>,
    pub target_lane: usize,
    pub target_speed: f64,
    pub weights: CostWeights,
}

pub fn random_scene(path: &ReferencePath, rng: &mut ChaCha8Rng) -> Scene {
    let lw = path.lane_width();
    let lanes = path.lane_count();
    let lane = rng.random_range(0..lanes);
    let ego = FrenetState {
        s: rng.random_range(200.0..2500.0),
        s_dot: rng.random_range(5.0..28.0),
        s_ddot: rng.random_range(-1.0..1.0),
        d: (lane as f64 + 0.5) * lw + rng.random_range(-0.5..0.5),
        d_dot: rng.random_range(-0.5..0.5),
        d_ddot: 0.0,
    };
    let ego_box = ego_corners(&ego, VEHICLE_LENGTH, VEHICLE_WIDTH);
    let n = rng.random_range(0..10);
    let mut actors: Vec<Vehicle> = Vec::new();
    for id in 1..=n {
        let l = rng.random_range(0..lanes);
        let s = ego.s + rng.random_range(-60.0..60.0);
        let v = rng.random_range(5.0..28.0);
        let a = Vehicle::actor(id, FrenetState::new(s, v, (l as f64 + 0.5) * lw), l, v);
        let grown = box_corners([s, a.frenet.d], 0.0, a.length + 2.0, a.width + 1.0);
        let clear = !quads_intersect(&grown, &ego_box)
            && actors
                .iter()
                .filter(|o| o.lane == l)
                .all(|o| (o.frenet.s - s).abs() > o.length + 2.0);
        if clear {
            actors.push(a);
        }
    }
    let lo = lane.saturating_sub(1);
    let hi = (lane + 1).min(lanes - 1);
    let mut weights = CostWeights::default();
    for w in [&mut weights.w_o, &mut weights.w_v, &mut weights.w_a, &mut weights.w_j, &mut weights.w_yaw] {
        *w = 10f64.powf(rng.random_range(-2.0..1.0));
    }
    Scene {
        ego,
        actors,
        target_lane: rng.random_range(lo..=hi),
        target_speed: rng.random_range(5.0..30.0),
        weights,
    }
}

/// Compares the newest observation column with a from-scratch nearest
/// occupant search over the fourteen neighbor regions (noise-free worlds).
pub fn observation_mismatch(
    world: &frenet_lab::sim::World,
    obs: &frenet_lab::env::ObservationTensor,
    range: f64,
) -> Option<String> {
    use frenet_lab::env::{CHANNELS, HISTORY_LEN};
    if obs.shape() != (30, 30) || obs.values.len() != CHANNELS * HISTORY_LEN {
        return Some(format!("shape {:?}", obs.shape()));
    }
    if let Some(v) = obs.values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Some(format!("value {v} outside [-1, 1]"));
    }
    let now = HISTORY_LEN - 1;
    let lw = world.path.lane_width();
    let ego = world.ego.frenet;
    let ego_lane = (ego.d / lw).floor().clamp(0.0, (world.path.lane_count() - 1) as f64) as i64;
    let half = 0.5 * world.ego.length;
    let mut best: Vec<Option<(f64, usize)>> = vec![None; 14];
    for (i, a) in world.actors.iter().enumerate() {
        let ds = a.frenet.s - ego.s;
        if ds.abs() > range {
            continue;
        }
        let band = if ds > half {
            1
        } else if ds < -half {
            2
        } else {
            0
        };
        let region = match a.lane as i64 - ego_lane {
            0 => usize::from(ds < 0.0),
            1 => 2 + band,
            -1 => 5 + band,
            2 => 8 + band,
            -2 => 11 + band,
            _ => continue,
        };
        if best[region].is_none_or(|(d, _)| ds.abs() < d) {
            best[region] = Some((ds.abs(), i));
        }
    }
    let expect0 = ((ego.s - world.start_s) / world.episode_length).clamp(-1.0, 1.0);
    let expect1 = (ego.d / (2.0 * lw)).clamp(-1.0, 1.0);
    if (obs.get(0, now) - expect0).abs() > 1e-12 || (obs.get(1, now) - expect1).abs() > 1e-12 {
        return Some("ego channels".into());
    }
    for (r, b) in best.iter().enumerate() {
        let (es, ed) = match b {
            None => (-1.0, -1.0),
            Some((_, i)) => {
                let a = &world.actors[*i];
                (
                    ((a.frenet.s - ego.s) / range).clamp(-1.0, 1.0),
                    ((a.frenet.d - ego.d) / world.path.road_width()).clamp(-1.0, 1.0),
                )
            }
        };
        let (gs, gd) = (obs.get(2 + 2 * r, now), obs.get(3 + 2 * r, now));
        if (gs - es).abs() > 1e-12 || (gd - ed).abs() > 1e-12 {
            return Some(format!("region {r}: got ({gs}, {gd}), expected ({es}, {ed})"));
        }
    }
    None
}

/// Worst relative error between backprop and central differences over every
/// parameter and extra input of a random small network.
pub fn gradient_check(seed: u64) -> f64 {
    use frenet_lab::nn::{NetSpec, Network};
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let kernel = rng.random_range(1..=3);
    let layers = rng.random_range(0..=2);
    let spec = NetSpec {
        time_steps: rng.random_range(layers * (kernel - 1) + 1..=7),
        ego_channels: rng.random_range(1..=2),
        actor_channels: rng.random_range(1..=3),
        conv_filters: (0..layers).map(|_| rng.random_range(1..=3)).collect(),
        kernel,
        dense: (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=4)).collect(),
        extra_inputs: rng.random_range(0..=2),
        outputs: rng.random_range(1..=3),
        squash: rng.random_bool(0.5),
    };
    let mut net = Network::new(spec.clone(), &mut rng).unwrap();
    for p in net.params.iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let obs: Vec<f64> = (0..spec.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let extra: Vec<f64> = (0..spec.extra_inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..spec.outputs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &Network, extra: &[f64]| -> f64 {
        net.predict(&obs, extra).unwrap().iter().zip(&w).map(|(y, w)| y * w).sum()
    };
    let cache = net.forward(&obs, &extra).unwrap();
    let mut grad = vec![0.0; net.params.len()];
    let d_extra = net.backward(&cache, &w, &mut grad);
    let h = 1e-6;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    let mut worst = 0.0f64;
    for i in 0..net.params.len() {
        let orig = net.params[i];
        net.params[i] = orig + h;
        let up = loss(&net, &extra);
        net.params[i] = orig - h;
        let down = loss(&net, &extra);
        net.params[i] = orig;
        worst = worst.max(rel(grad[i], (up - down) / (2.0 * h)));
    }
    for j in 0..extra.len() {
        let mut e = extra.clone();
        e[j] += h;
        let up = loss(&net, &e);
        e[j] -= 2.0 * h;
        let down = loss(&net, &e);
        worst = worst.max(rel(d_extra[j], (up - down) / (2.0 * h)));
    }
    worst
}

/// Straight east-bound road of whole kilometres.
pub fn straight_road(length_km: usize, lanes: usize) -> Arc<ReferencePath> {
    let pts: Vec<[f64; 2]> = (0..=length_km).map(|i| [i as f64 * 1000.0, 0.0]).collect();
    Arc::new(ReferencePath::new(&pts, lanes, 3.5).unwrap())
}

pub fn lane_car(id: u32, s: f64, lane: usize, v: f64) -> Vehicle {
    Vehicle::actor(id, FrenetState::new(s, v, (lane as f64 + 0.5) * 3.5), lane, v)
}

/// Three-lane scene with the ego at s = 1000; others are `(ds, lane, speed)`.
pub fn mobil_world(ego_lane: usize, ego_v: f64, others: &[(f64, usize, f64)]) -> World {
    let path = straight_road(3, 3);
    let actors = others
        .iter()
        .enumerate()
        .map(|(i, &(ds, lane, v))| lane_car(i as u32 + 1, 1000.0 + ds, lane, v))
        .collect();
    World::new(path, lane_car(0, 1000.0, ego_lane, ego_v), actors, 500.0, 100.0, 0).unwrap()
}

/// Non-overlapping traffic around an ego in the middle of three lanes.
pub fn random_traffic(rng: &mut ChaCha8Rng) -> Vec<(f64, usize, f64)> {
    let n = rng.random_range(0..8);
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    while out.len() < n {
        let ds: f64 = rng.random_range(-80.0..80.0);
        let lane = rng.random_range(0..3);
        if (lane == 1 && ds.abs() < 8.0) || out.iter().any(|o| o.1 == lane && (o.0 - ds).abs() < 8.0) {
            continue;
        }
        out.push((ds, lane, rng.random_range(5.0..30.0)));
    }
    out
}
