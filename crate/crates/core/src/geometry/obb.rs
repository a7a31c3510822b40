//! Oriented rectangles in the (s, d) plane and a separating-axis overlap test.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: [f64; 2],
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: [f64; 2], heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    /// The same box grown by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            half_length: self.half_length + margin,
            half_width: self.half_width + margin,
            ..*self
        }
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [u, v] = self.axes();
        let (l, w) = (self.half_length, self.half_width);
        let [cx, cy] = self.center;
        [
            [cx + u[0] * l + v[0] * w, cy + u[1] * l + v[1] * w],
            [cx - u[0] * l + v[0] * w, cy - u[1] * l + v[1] * w],
            [cx - u[0] * l - v[0] * w, cy - u[1] * l - v[1] * w],
            [cx + u[0] * l - v[0] * w, cy + u[1] * l - v[1] * w],
        ]
    }

    /// Projection radius of the box onto a unit axis.
    fn radius_on(&self, axis: [f64; 2]) -> f64 {
        let [u, v] = self.axes();
        self.half_length * (u[0] * axis[0] + u[1] * axis[1]).abs()
            + self.half_width * (v[0] * axis[0] + v[1] * axis[1]).abs()
    }

    /// Separating-axis test; touching boxes do not overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let t = [other.center[0] - self.center[0], other.center[1] - self.center[1]];
        let [a0, a1] = self.axes();
        let [b0, b1] = other.axes();
        [a0, a1, b0, b1].into_iter().all(|axis| {
            let dist = (t[0] * axis[0] + t[1] * axis[1]).abs();
            dist < self.radius_on(axis) + other.radius_on(axis)
        })
    }
}
