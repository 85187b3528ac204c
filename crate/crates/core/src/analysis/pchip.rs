//! Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson).

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if sign(d) != sign(m0) {
        0.0
    } else if sign(m0) != sign(m1) && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(invalid("knot x and y lengths differ"));
        }
        if x.len() < 2 {
            return Err(invalid("interpolation needs at least 2 knots"));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(invalid("knots must be finite"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("knot x values must be strictly increasing"));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = m[0];
            d[1] = m[0];
        } else {
            for k in 1..n - 1 {
                if m[k - 1] * m[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], m[0], m[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&q) {
            return Err(invalid(format!("query {q} outside [{lo}, {hi}]; no extrapolation")));
        }
        let k = (self.x.partition_point(|&v| v <= q).max(1) - 1).min(self.x.len() - 2);
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        if t == 0.0 {
            return Ok(self.y[k]);
        }
        if t == 1.0 {
            return Ok(self.y[k + 1]);
        }
        let t2 = t * t;
        let t3 = t2 * t;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        // Increment form: flat segments reproduce y[k] exactly.
        Ok(self.y[k] + h01 * (self.y[k + 1] - self.y[k]) + h * (h10 * self.d[k] + h11 * self.d[k + 1]))
    }
}

/// Evaluates the monotone interpolant of `(x, y)` at each query.
pub fn pchip_interpolate(x: &[f64], y: &[f64], queries: &[f64]) -> Result<Vec<f64>> {
    let p = Pchip::new(x, y)?;
    queries.iter().map(|&q| p.eval(q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_knots() {
        let x = [0.0, 1.0, 3.0, 4.5];
        let y = [2.0, -1.0, 5.0, 5.5];
        assert_eq!(pchip_interpolate(&x, &y, &x).unwrap(), y.to_vec());
    }

    #[test]
    fn collinear_is_linear() {
        let x = [0.0, 0.5, 2.0, 3.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        for i in 0..=700 {
            let q = i as f64 / 100.0;
            let v = pchip_interpolate(&x, &y, &[q]).unwrap()[0];
            assert!((v - (3.0 * q - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_decreasing_grid_scan() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y = [10.0, 4.0, 2.0, 1.0];
        let p = Pchip::new(&x, &y).unwrap();
        let grid: Vec<f64> = (0..1000).map(|i| 1.0 + 7.0 * i as f64 / 999.0).collect();
        let v: Vec<f64> = grid.iter().map(|&q| p.eval(q).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Pchip::new(&[0.0], &[1.0]).is_err());
        assert!(Pchip::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        let p = Pchip::new(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(p.eval(1.5).is_err());
        assert!(p.eval(-0.1).is_err());
    }
}
