//! Minimal SVG drawing in the unrolled road plane: arc length runs to the
//! right, lateral offset upward.

use std::fmt::Write as _;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct RoadCanvas {
    s0: f64,
    s1: f64,
    road_width: f64,
    lane_count: usize,
    px_per_m_s: f64,
    px_per_m_d: f64,
    margin: f64,
    body: String,
}

impl RoadCanvas {
    /// Canvas covering `[s0, s1]`, scaled to roughly `width_px` wide.
    pub fn new(s0: f64, s1: f64, road_width: f64, lane_count: usize, width_px: f64) -> Self {
        let span = (s1 - s0).max(1.0);
        let mut c = Self {
            s0,
            s1: s0 + span,
            road_width,
            lane_count,
            px_per_m_s: width_px / span,
            px_per_m_d: 12.0,
            margin: 20.0,
            body: String::new(),
        };
        c.draw_road();
        c
    }

    fn x(&self, s: f64) -> f64 {
        self.margin + (s - self.s0) * self.px_per_m_s
    }

    fn y(&self, d: f64) -> f64 {
        self.margin + (self.road_width - d) * self.px_per_m_d
    }

    fn draw_road(&mut self) {
        let (x0, x1) = (self.x(self.s0), self.x(self.s1));
        let _ = writeln!(
            self.body,
            r##"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#eeeeee"/>"##,
            self.y(self.road_width),
            x1 - x0,
            self.road_width * self.px_per_m_d
        );
        let lw = self.road_width / self.lane_count as f64;
        for i in 0..=self.lane_count {
            let y = self.y(i as f64 * lw);
            let dash = if i == 0 || i == self.lane_count { "" } else { r#" stroke-dasharray="6 6""# };
            let _ = writeln!(
                self.body,
                r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#888888"{dash}/>"##
            );
        }
    }

    /// Axis-aligned vehicle box centered at `(s, d)`.
    pub fn vehicle(&mut self, s: f64, d: f64, length: f64, width: f64, fill: &str, opacity: f64, label: Option<&str>) {
        let x = self.x(s - length / 2.0);
        let y = self.y(d + width / 2.0);
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="{opacity}" stroke="black" stroke-width="0.5"/>"#,
            length * self.px_per_m_s,
            width * self.px_per_m_d
        );
        if let Some(t) = label {
            let _ = writeln!(
                self.body,
                r#"<text x="{:.2}" y="{:.2}" font-size="8" text-anchor="middle">{t}</text>"#,
                self.x(s),
                self.y(d) + 3.0
            );
        }
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64, dashed: bool) {
        if points.is_empty() {
            return;
        }
        let pts: Vec<String> = points
            .iter()
            .map(|&(s, d)| format!("{:.2},{:.2}", self.x(s), self.y(d)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="3 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash}/>"#,
            pts.join(" ")
        );
    }

    pub fn caption(&mut self, line: usize, text: &str, color: &str) {
        let y = self.y(0.0) + 16.0 + 12.0 * line as f64;
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{y:.2}" font-size="10" fill="{color}">{}</text>"#,
            self.margin,
            escape(text)
        );
    }

    pub fn finish(self, caption_lines: usize) -> String {
        let w = self.x(self.s1) + self.margin;
        let h = self.y(0.0) + 24.0 + 12.0 * caption_lines as f64;
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
