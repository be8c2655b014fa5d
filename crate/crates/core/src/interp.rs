//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant. `x` must be strictly increasing; if `y` is
    /// monotone the interpolant is monotone too.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidInput(
                "monotone cubic needs at least two (x, y) pairs".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("interpolation nodes must be strictly increasing".into()));
        }
        let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = secants[0];
            slopes[1] = secants[0];
        } else {
            for i in 1..n - 1 {
                let (d0, d1) = (secants[i - 1], secants[i]);
                if d0 * d1 <= 0.0 {
                    slopes[i] = 0.0;
                } else {
                    // weighted harmonic mean
                    let h0 = x[i] - x[i - 1];
                    let h1 = x[i + 1] - x[i];
                    let w1 = 2.0 * h1 + h0;
                    let w2 = h1 + 2.0 * h0;
                    slopes[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = end_slope(x[1] - x[0], x[2] - x[1], secants[0], secants[1]);
            slopes[n - 1] =
                end_slope(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3], secants[n - 2], secants[n - 3]);
        }
        Ok(Self { x, y, slopes })
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.x.len() - 2),
        }
    }

    /// Evaluates the interpolant; extrapolates linearly with the end slopes.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.slopes[0] * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slopes[n - 1] * (t - self.x[n - 1]);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.slopes[0];
        }
        if t >= self.x[n - 1] {
            return self.slopes[n - 1];
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        (d00 * self.y[i] + d01 * self.y[i + 1]) / h + d10 * self.slopes[i] + d11 * self.slopes[i + 1]
    }

    /// Solves `eval(t) = target` for a nondecreasing interpolant by
    /// bisection within the node range. Returns `None` when the target lies
    /// outside `[y_first, y_last]`.
    pub fn solve_increasing(&self, target: f64) -> Option<f64> {
        let n = self.x.len();
        if target < self.y[0] || target > self.y[n - 1] {
            return None;
        }
        // bracket on nodes first
        let k = self.y.partition_point(|&v| v < target);
        if k < n && self.y[k] == target {
            // leftmost node attaining the value
            return Some(self.x[k]);
        }
        let (mut lo, mut hi) = (self.x[k.saturating_sub(1)], self.x[k.min(n - 1)]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

// Three-point end slope, clipped to preserve monotonicity.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let p = MonotoneCubic::new(x, y).unwrap();
        for t in [0.05, 0.71, 1.5, 2.69] {
            assert!((p.eval(t) - (2.0 * t + 1.0)).abs() < 1e-13);
            assert!((p.derivative(t) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stays_monotone_on_steps() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![0.0, 0.0, 0.1, 5.0, 5.0, 5.1];
        let p = MonotoneCubic::new(x, y).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=500 {
            let v = p.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn solve_inverts_eval() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
        let p = MonotoneCubic::new(x, y).unwrap();
        let t = p.solve_increasing(0.5).unwrap();
        assert!((p.eval(t) - 0.5).abs() < 1e-12);
        assert!(p.solve_increasing(10.0).is_none());
    }

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
