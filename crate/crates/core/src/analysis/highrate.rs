//! High-rate prediction of index probabilities from the source density.

use serde::{Deserialize, Serialize};

use super::entropy::entropy_gap_of_pmf;
use crate::error::{invalid, Result};
use crate::quantizer::Codebook;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighRatePrediction {
    pub pmf: Vec<f64>,
    pub delta_h: f64,
    pub exponent: f64,
}

/// Index pmf `p(j) ∝ p_Y(c_j)^(2/(C+2))` for a codebook in dimension `C`.
/// `log_density` returns the natural log of the source density.
pub fn high_rate_predicted_pmf<T: Scalar>(
    codebook: &Codebook<T>,
    log_density: impl Fn(&[f64]) -> f64,
    dim: usize,
) -> Result<HighRatePrediction> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let exponent = 2.0 / (dim as f64 + 2.0);
    let logs: Vec<f64> = (0..codebook.len())
        .map(|j| {
            let c: Vec<f64> = codebook.codeword(j).iter().map(|v| v.as_f64()).collect();
            exponent * log_density(&c)
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(invalid("density is zero (or not finite) at every codeword"));
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let delta_h = if pmf.len() >= 2 { entropy_gap_of_pmf(&pmf)? } else { 0.0 };
    Ok(HighRatePrediction { pmf, delta_h, exponent })
}

/// Log density of the standard normal in `x.len()` dimensions.
pub fn standard_normal_log_density(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_gives_uniform_pmf() {
        let cb = Codebook::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let p = high_rate_predicted_pmf(&cb, |_| 0.0, 2).unwrap();
        assert!(p.pmf.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(p.delta_h, 0.0);
    }

    #[test]
    fn flattens_in_high_dimension() {
        let cb = Codebook::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        // density ratio 100 between codewords
        let p = high_rate_predicted_pmf(&cb, |x| -(100f64.ln()) * x[0] / 3.0, 1_000_000).unwrap();
        let max = p.pmf.iter().copied().fold(0.0, f64::max);
        let min = p.pmf.iter().copied().fold(1.0, f64::min);
        assert!(max / min < 1.001);
    }

    #[test]
    fn exponent_follows_dimension() {
        let cb = Codebook::new(1, vec![0.0, 1.0]).unwrap();
        let p = high_rate_predicted_pmf(&cb, |x| if x[0] == 0.0 { 0.0 } else { -3.0 }, 1).unwrap();
        // weights 1 and e^{-2}
        let w = (-2.0f64).exp();
        assert!((p.pmf[0] - 1.0 / (1.0 + w)).abs() < 1e-15);
        assert!(high_rate_predicted_pmf(&cb, |_| f64::NEG_INFINITY, 1).is_err());
    }
}
