use serde::{Deserialize, Serialize};

use super::spline::CubicSpline;
use crate::error::{Error, Result};

/// Schema version written into path definition files.
pub const PATH_SCHEMA_VERSION: u32 = 1;

/// Table intervals per spline segment used for arc-length inversion.
const TABLE_SUBDIVISIONS: usize = 16;

/// Lateral margin beyond the road edges inside which points can be projected.
pub const PROJECTION_MARGIN: f64 = 5.0;

/// On-disk description of a road: centerline control points and lane layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDefinition {
    pub schema_version: u32,
    pub control_points: Vec<[f64; 2]>,
    pub lane_count: usize,
    pub lane_width: f64,
}

impl PathDefinition {
    pub fn build(&self) -> Result<ReferencePath> {
        if self.schema_version != PATH_SCHEMA_VERSION {
            return Err(Error::InvalidPath(format!(
                "unsupported path schema version {}",
                self.schema_version
            )));
        }
        ReferencePath::new(&self.control_points, self.lane_count, self.lane_width)
    }

    /// A gently curving 3 km, four-lane highway.
    pub fn default_highway() -> Self {
        let control_points = (0..=60)
            .map(|i| {
                let x = i as f64 * 50.0;
                [x, 40.0 * (std::f64::consts::TAU * x / 1500.0).sin()]
            })
            .collect();
        Self {
            schema_version: PATH_SCHEMA_VERSION,
            control_points,
            lane_count: 4,
            lane_width: 3.5,
        }
    }
}

/// Reference frame of the path at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    /// dκ/ds
    pub dkappa: f64,
}

/// Arc-length parameterized road reference line.
///
/// The reference line is the right road edge; Frenet `d` grows to the left,
/// so every lane sits at positive `d`. The curve is a not-a-knot cubic
/// spline through the control points, parameterized by chord length, with a
/// dense table mapping spline parameter to arc length.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    control_points: Vec<[f64; 2]>,
    lane_count: usize,
    lane_width: f64,
    sx: CubicSpline,
    sy: CubicSpline,
    table_u: Vec<f64>,
    table_s: Vec<f64>,
    total_length: f64,
    max_abs_curvature: f64,
}

impl ReferencePath {
    pub fn new(control_points: &[[f64; 2]], lane_count: usize, lane_width: f64) -> Result<Self> {
        if control_points.len() < 4 {
            return Err(Error::InvalidPath(format!(
                "need at least 4 control points, got {}",
                control_points.len()
            )));
        }
        if lane_count < 2 {
            return Err(Error::InvalidPath(format!("lane_count must be >= 2, got {lane_count}")));
        }
        if !(lane_width > 0.0) || !lane_width.is_finite() {
            return Err(Error::InvalidPath(format!("lane_width must be positive, got {lane_width}")));
        }
        let mut knots = Vec::with_capacity(control_points.len());
        knots.push(0.0);
        for (i, w) in control_points.windows(2).enumerate() {
            let chord = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if !(chord > 1e-9) || !chord.is_finite() {
                return Err(Error::InvalidPath(format!(
                    "control points {i} and {} coincide",
                    i + 1
                )));
            }
            knots.push(knots[i] + chord);
        }
        let xs: Vec<f64> = control_points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = control_points.iter().map(|p| p[1]).collect();
        let sx = CubicSpline::new(&knots, &xs)?;
        let sy = CubicSpline::new(&knots, &ys)?;

        let mut path = Self {
            control_points: control_points.to_vec(),
            lane_count,
            lane_width,
            sx,
            sy,
            table_u: Vec::new(),
            table_s: Vec::new(),
            total_length: 0.0,
            max_abs_curvature: 0.0,
        };
        path.build_table()?;
        path.check_curvature()?;
        Ok(path)
    }

    fn build_table(&mut self) -> Result<()> {
        let knots = self.sx.knots().to_vec();
        let mut table_u = vec![knots[0]];
        let mut table_s = vec![0.0];
        let mut s = 0.0;
        for w in knots.windows(2) {
            let step = (w[1] - w[0]) / TABLE_SUBDIVISIONS as f64;
            for k in 0..TABLE_SUBDIVISIONS {
                let a = w[0] + k as f64 * step;
                let b = if k + 1 == TABLE_SUBDIVISIONS { w[1] } else { a + step };
                s += self.length_between(a, b);
                table_u.push(b);
                table_s.push(s);
            }
        }
        if table_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPath("arc-length table is not strictly increasing".into()));
        }
        self.total_length = s;
        self.table_u = table_u;
        self.table_s = table_s;
        Ok(())
    }

    fn check_curvature(&mut self) -> Result<()> {
        let mut max_k: f64 = 0.0;
        for w in self.table_u.windows(2) {
            for u in [w[0], 0.5 * (w[0] + w[1])] {
                let k = self.curvature_at_u(u).0;
                if !k.is_finite() {
                    return Err(Error::InvalidPath(format!("non-finite curvature at u = {u}")));
                }
                max_k = max_k.max(k.abs());
            }
        }
        let width = self.road_width();
        if max_k * width >= 1.0 {
            return Err(Error::InvalidPath(format!(
                "max curvature {max_k:.4} 1/m puts a Frenet singularity inside the {width} m road"
            )));
        }
        self.max_abs_curvature = max_k;
        Ok(())
    }

    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.control_points
    }

    pub fn lane_count(&self) -> usize {
        self.lane_count
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.max_abs_curvature
    }

    pub fn definition(&self) -> PathDefinition {
        PathDefinition {
            schema_version: PATH_SCHEMA_VERSION,
            control_points: self.control_points.clone(),
            lane_count: self.lane_count,
            lane_width: self.lane_width,
        }
    }

    /// `d` of the center of `lane_index` (lane 0 is the rightmost lane).
    pub fn lane_center_offset(&self, lane_index: usize) -> Result<f64> {
        if lane_index >= self.lane_count {
            return Err(Error::LaneOutOfRange {
                index: lane_index,
                lane_count: self.lane_count,
            });
        }
        Ok((lane_index as f64 + 0.5) * self.lane_width)
    }

    /// Lane whose center is nearest to `d`, clamped to the road.
    pub fn nearest_lane(&self, d: f64) -> usize {
        let idx = (d / self.lane_width).floor();
        idx.clamp(0.0, (self.lane_count - 1) as f64) as usize
    }

    pub fn arc_length_table(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.table_u.iter().copied().zip(self.table_s.iter().copied())
    }

    fn derivs(&self, u: f64) -> ([f64; 4], [f64; 4]) {
        let seg = self.sx.segment_of(u);
        (self.sx.eval_on(seg, u), self.sy.eval_on(seg, u))
    }

    fn speed_at_u(&self, u: f64) -> f64 {
        let (x, y) = self.derivs(u);
        x[1].hypot(y[1])
    }

    /// Five-point Gauss-Legendre on one interval.
    fn gauss5(&self, a: f64, b: f64) -> f64 {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * NODES
            .iter()
            .zip(WEIGHTS)
            .map(|(&x, w)| w * self.speed_at_u(mid + half * x))
            .sum::<f64>()
    }

    fn length_between(&self, a: f64, b: f64) -> f64 {
        self.adaptive_length(a, b, self.gauss5(a, b), 0)
    }

    fn adaptive_length(&self, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = self.gauss5(a, m);
        let right = self.gauss5(m, b);
        if depth >= 12 || (left + right - whole).abs() < 1e-12 {
            left + right
        } else {
            self.adaptive_length(a, m, left, depth + 1) + self.adaptive_length(m, b, right, depth + 1)
        }
    }

    fn table_index(&self, s: f64) -> usize {
        let i = self.table_s.partition_point(|&v| v <= s);
        i.saturating_sub(1).min(self.table_s.len() - 2)
    }

    /// Spline parameter at arc length `s` (Newton on the integrated speed).
    fn u_at(&self, s: f64) -> f64 {
        let i = self.table_index(s);
        let (u0, u1) = (self.table_u[i], self.table_u[i + 1]);
        let (s0, s1) = (self.table_s[i], self.table_s[i + 1]);
        let mut u = u0 + (s - s0) / (s1 - s0) * (u1 - u0);
        for _ in 0..8 {
            let f = s0 + self.gauss5(u0, u) - s;
            let step = f / self.speed_at_u(u);
            u = (u - step).clamp(u0, u1);
            if step.abs() < 1e-13 {
                break;
            }
        }
        u
    }

    /// Arc length of spline parameter `u`.
    fn s_at_u(&self, u: f64) -> f64 {
        let i = self.table_u.partition_point(|&v| v <= u).saturating_sub(1).min(self.table_u.len() - 2);
        self.table_s[i] + self.gauss5(self.table_u[i], u)
    }

    fn curvature_at_u(&self, u: f64) -> (f64, f64) {
        let (x, y) = self.derivs(u);
        let speed2 = x[1] * x[1] + y[1] * y[1];
        let speed = speed2.sqrt();
        let num = x[1] * y[2] - y[1] * x[2];
        let den = speed2 * speed;
        let dnum = x[1] * y[3] - y[1] * x[3];
        let dden = 3.0 * speed * (x[1] * x[2] + y[1] * y[2]);
        let kappa = num / den;
        let dkappa_du = (dnum * den - num * dden) / (den * den);
        (kappa, dkappa_du / speed)
    }

    fn point_at_u(&self, u: f64, s: f64) -> PathPoint {
        let (x, y) = self.derivs(u);
        let (kappa, dkappa) = self.curvature_at_u(u);
        PathPoint {
            s,
            x: x[0],
            y: y[0],
            theta: y[1].atan2(x[1]),
            kappa,
            dkappa,
        }
    }

    /// Reference frame at arc length `s`.
    pub fn point_at(&self, s: f64) -> Result<PathPoint> {
        if !(s >= -1e-9 && s <= self.total_length + 1e-9) {
            return Err(Error::OutOfPath {
                s,
                total: self.total_length,
            });
        }
        let s = s.clamp(0.0, self.total_length);
        Ok(self.point_at_u(self.u_at(s), s))
    }

    pub fn curvature(&self, s: f64) -> Result<f64> {
        Ok(self.point_at(s)?.kappa)
    }

    /// Nearest point on the path to `(x, y)`. Returns the reference point
    /// and whether the projection was clamped at a path end.
    ///
    /// With `hint`, the coarse search is restricted to ±60 m around it so that
    /// loops and S-bends cannot capture the projection.
    pub(crate) fn project(&self, x: f64, y: f64, hint: Option<f64>) -> (PathPoint, bool) {
        let (lo_i, hi_i) = match hint {
            Some(h) => (self.table_index((h - 60.0).max(0.0)), self.table_index(h + 60.0) + 1),
            None => (0, self.table_u.len() - 1),
        };
        let dist2 = |u: f64| {
            let (px, py) = self.derivs(u);
            (px[0] - x).powi(2) + (py[0] - y).powi(2)
        };
        let mut best = lo_i;
        let mut best_d = f64::INFINITY;
        for k in lo_i..=hi_i {
            let d = dist2(self.table_u[k]);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        let last = self.table_u.len() - 1;
        let mut lo = self.table_u[best.saturating_sub(1)];
        let mut hi = self.table_u[(best + 1).min(last)];
        // g(u) = (r(u) - p) . r'(u); its root is the foot point.
        let g = |u: f64| {
            let (px, py) = self.derivs(u);
            ((px[0] - x) * px[1] + (py[0] - y) * py[1], px, py)
        };
        let (g_lo, ..) = g(lo);
        let (g_hi, ..) = g(hi);
        let u = if g_lo >= 0.0 {
            lo
        } else if g_hi <= 0.0 {
            hi
        } else {
            let mut u = 0.5 * (lo + hi);
            for _ in 0..60 {
                let (gu, px, py) = g(u);
                if gu > 0.0 {
                    hi = u;
                } else {
                    lo = u;
                }
                let dg = px[1] * px[1] + py[1] * py[1] + (px[0] - x) * px[2] + (py[0] - y) * py[2];
                let mut next = u - gu / dg;
                if !(next > lo && next < hi) || !dg.is_finite() || dg <= 0.0 {
                    next = 0.5 * (lo + hi);
                }
                let done = (next - u).abs() < 1e-14 * (1.0 + u.abs());
                u = next;
                if done || hi - lo < 1e-13 {
                    break;
                }
            }
            u
        };
        let at_start = u <= self.table_u[0];
        let at_end = u >= self.table_u[last];
        let clamped = (at_start && g_lo > 1e-9) || (at_end && g_hi < -1e-9);
        let s = if at_start {
            0.0
        } else if at_end {
            self.total_length
        } else {
            self.s_at_u(u)
        };
        (self.point_at_u(u, s), clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_points(radius: f64, n: usize, sweep: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let a = sweep * i as f64 / (n - 1) as f64;
                [radius * a.sin(), radius * (1.0 - a.cos())]
            })
            .collect()
    }

    #[test]
    fn straight_line_length_and_curvature() {
        let pts = [[0.0, 0.0], [100.0, 0.0], [200.0, 0.0], [300.0, 0.0]];
        let path = ReferencePath::new(&pts, 4, 3.5).unwrap();
        assert!((path.total_length() - 300.0).abs() < 1e-9);
        for i in 0..=30 {
            assert!(path.curvature(i as f64 * 10.0).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn circle_curvature_matches_analytic() {
        // Quarter circle of radius 100 m, counter-clockwise (positive curvature).
        let path = ReferencePath::new(&circle_points(100.0, 25, std::f64::consts::FRAC_PI_2), 2, 3.5)
            .unwrap();
        let l = path.total_length();
        assert!((l - 50.0 * std::f64::consts::PI).abs() < 1e-3);
        for i in 0..=200 {
            let s = l * i as f64 / 200.0;
            let k = path.curvature(s).unwrap();
            assert!((k - 0.01).abs() < 1e-4, "kappa({s}) = {k}");
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        let three = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(matches!(ReferencePath::new(&three, 4, 3.5), Err(Error::InvalidPath(_))));
        let dup = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(ReferencePath::new(&dup, 4, 3.5).is_err());
        let ok = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        assert!(ReferencePath::new(&ok, 1, 3.5).is_err());
        assert!(ReferencePath::new(&ok, 2, 0.0).is_err());
    }

    #[test]
    fn rejects_tight_curves() {
        // R = 10 m cannot carry a 14 m road without a singularity.
        assert!(ReferencePath::new(&circle_points(10.0, 12, 1.5), 4, 3.5).is_err());
    }

    #[test]
    fn lane_centers() {
        let path = ReferencePath::new(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], 4, 3.5)
            .unwrap();
        assert_eq!(path.lane_center_offset(0).unwrap(), 1.75);
        assert_eq!(path.lane_center_offset(1).unwrap(), 5.25);
        assert!(matches!(
            path.lane_center_offset(4),
            Err(Error::LaneOutOfRange { index: 4, lane_count: 4 })
        ));
    }

    #[test]
    fn arc_length_table_matches_chord_refinement() {
        let def = PathDefinition::default_highway();
        let path = def.build().unwrap();
        let table: Vec<(f64, f64)> = path.arc_length_table().collect();
        // Richardson-extrapolated polyline length of a few table intervals.
        for w in table.windows(2).step_by(97) {
            let (u0, s0) = w[0];
            let (u1, s1) = w[1];
            let chord_len = |n: usize| {
                let mut acc = 0.0;
                let mut prev = path.derivs(u0);
                for k in 1..=n {
                    let u = u0 + (u1 - u0) * k as f64 / n as f64;
                    let cur = path.derivs(u);
                    acc += (cur.0[0] - prev.0[0]).hypot(cur.1[0] - prev.1[0]);
                    prev = cur;
                }
                acc
            };
            let coarse = chord_len(2000);
            let fine = chord_len(4000);
            let extrapolated = fine + (fine - coarse) / 3.0;
            assert!((extrapolated - (s1 - s0)).abs() < 1e-6);
        }
    }

    #[test]
    fn definition_round_trips_through_json() {
        let def = PathDefinition::default_highway();
        let text = serde_json::to_string(&def).unwrap();
        let back: PathDefinition = serde_json::from_str(&text).unwrap();
        assert_eq!(def, back);
        let mut bad = back;
        bad.schema_version = 99;
        assert!(bad.build().is_err());
    }
}
