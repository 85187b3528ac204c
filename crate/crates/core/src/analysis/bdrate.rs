//! Rate–distortion curves and the Bjøntegaard delta rate.

use serde::{Deserialize, Serialize};

use super::pchip::Pchip;
use crate::error::{invalid, Result};

/// Default Simpson subinterval count.
pub const BD_SUBINTERVALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    /// Operating-point parameter: `m` for RD/IQ, the step for CM.
    pub param: f64,
    pub rate: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDCurve {
    pub scheme: String,
    points: Vec<RDPoint>,
}

impl RDCurve {
    /// Sorts by rate; rates must be positive and distinct.
    pub fn new(scheme: impl Into<String>, mut points: Vec<RDPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("an R-D curve needs at least 2 points"));
        }
        if points
            .iter()
            .any(|p| !(p.rate > 0.0 && p.rate.is_finite() && p.distortion.is_finite()))
        {
            return Err(invalid("rates must be positive and finite, distortions finite"));
        }
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        if points.windows(2).any(|w| w[1].rate <= w[0].rate) {
            return Err(invalid("R-D curve rates must be distinct"));
        }
        Ok(Self {
            scheme: scheme.into(),
            points,
        })
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }

    /// `log2(rate)` as a monotone function of distortion.
    fn log_rate_of_distortion(&self) -> Result<Pchip> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.distortion, p.rate.log2())).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid(format!(
                "curve '{}' has repeated distortion values",
                self.scheme
            )));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        Pchip::new(&x, &y)
    }

    fn distortion_range(&self) -> (f64, f64) {
        let lo = self.points.iter().map(|p| p.distortion).fold(f64::INFINITY, f64::min);
        let hi = self
            .points
            .iter()
            .map(|p| p.distortion)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn simpson(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, n: usize) -> Result<f64> {
    let n = if n % 2 == 1 { n + 1 } else { n.max(2) };
    let h = (b - a) / n as f64;
    let mut acc = f(a)? + f(b)?;
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f((a + i as f64 * h).min(b))?;
    }
    Ok(acc * h / 3.0)
}

/// Mean of `log2 R_test - log2 R_anchor` over the shared distortion interval.
pub fn bd_log_ratio(anchor: &RDCurve, test: &RDCurve, subintervals: usize) -> Result<f64> {
    let (a_lo, a_hi) = anchor.distortion_range();
    let (t_lo, t_hi) = test.distortion_range();
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(invalid(format!(
            "curves do not overlap in distortion ([{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}])"
        )));
    }
    let pa = anchor.log_rate_of_distortion()?;
    let pt = test.log_rate_of_distortion()?;
    let integral = simpson(|d| Ok(pt.eval(d)? - pa.eval(d)?), lo, hi, subintervals)?;
    Ok(integral / (hi - lo))
}

/// Average rate difference of `test` against `anchor` at equal distortion, in percent.
pub fn bd_rate(anchor: &RDCurve, test: &RDCurve) -> Result<f64> {
    bd_rate_with(anchor, test, BD_SUBINTERVALS)
}

pub fn bd_rate_with(anchor: &RDCurve, test: &RDCurve, subintervals: usize) -> Result<f64> {
    Ok(100.0 * (2f64.powf(bd_log_ratio(anchor, test, subintervals)?) - 1.0))
}
