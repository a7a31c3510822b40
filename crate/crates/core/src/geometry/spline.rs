//! Not-a-knot cubic interpolation of a scalar sequence over strictly
//! increasing knots.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct CubicSpline {
    knots: Vec<f64>,
    /// Per segment: value, first, second and third derivative at the left knot.
    segments: Vec<[f64; 4]>,
}

impl CubicSpline {
    pub(crate) fn new(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n_pts = knots.len();
        if n_pts < 4 || values.len() != n_pts {
            return Err(Error::InvalidPath(format!(
                "cubic spline needs at least 4 knots, got {n_pts}"
            )));
        }
        let n = n_pts - 1;
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&hi| !(hi > 0.0)) {
            return Err(Error::InvalidPath("knots must be strictly increasing".into()));
        }

        // Second-derivative system: interior continuity rows plus not-a-knot
        // rows at both ends (third derivative continuous at knots 1 and n-1).
        let mut a = DMatrix::<f64>::zeros(n_pts, n_pts);
        let mut rhs = DVector::<f64>::zeros(n_pts);
        a[(0, 0)] = h[1];
        a[(0, 1)] = -(h[0] + h[1]);
        a[(0, 2)] = h[0];
        for i in 1..n {
            a[(i, i - 1)] = h[i - 1];
            a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
            a[(i, i + 1)] = h[i];
            rhs[i] = 6.0
                * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        a[(n, n - 2)] = h[n - 1];
        a[(n, n - 1)] = -(h[n - 2] + h[n - 1]);
        a[(n, n)] = h[n - 2];

        let m = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidPath("singular spline system".into()))?;

        let segments = (0..n)
            .map(|i| {
                let hi = h[i];
                let slope = (values[i + 1] - values[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0;
                [values[i], slope, m[i], (m[i + 1] - m[i]) / hi]
            })
            .collect();

        Ok(Self {
            knots: knots.to_vec(),
            segments,
        })
    }

    pub(crate) fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub(crate) fn segment_of(&self, u: f64) -> usize {
        let n = self.segments.len();
        match self.knots.partition_point(|&k| k <= u) {
            0 => 0,
            i if i > n => n - 1,
            i => i - 1,
        }
    }

    /// Value and first three derivatives at `u` on segment `seg`.
    pub(crate) fn eval_on(&self, seg: usize, u: f64) -> [f64; 4] {
        let [v, d1, d2, d3] = self.segments[seg];
        let t = u - self.knots[seg];
        [
            v + t * (d1 + t * (d2 / 2.0 + t * d3 / 6.0)),
            d1 + t * (d2 + t * d3 / 2.0),
            d2 + t * d3,
            d3,
        ]
    }

    #[cfg(test)]
    fn eval(&self, u: f64) -> [f64; 4] {
        self.eval_on(self.segment_of(u), u)
    }
}
