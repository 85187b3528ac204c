//! rANS entropy coding and discretized-Gaussian probability tables.

mod rans;
mod table;

pub use rans::{rans_decode, rans_encode, rans_encode_with, RansDecoder, RansStream, RANS_L};
pub use table::{normalize_frequencies, FrequencyTable, MAX_PRECISION, MIN_PRECISION};

use crate::error::{invalid, Result};

/// Smallest admissible scale for the Gaussian conditional.
pub const SIGMA_MIN: f64 = 1e-3;

/// Beyond this many standard deviations the CDF is taken as exactly 0 or 1.
const CDF_CUTOFF: f64 = 40.0;

/// Standard normal CDF, `0.5 * erfc(-x / sqrt(2))`.
///
/// `libm::erfc` is a pure-software rational approximation, so tables built
/// from it are identical on every platform.
pub fn normal_cdf(x: f64) -> f64 {
    if x <= -CDF_CUTOFF {
        0.0
    } else if x >= CDF_CUTOFF {
        1.0
    } else {
        0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Bin masses of `N(mu_offset, (sigma/delta)^2)` on integer bins `-S..=S`,
/// with both tails folded into the edge bins.
pub fn discretized_gaussian_masses(mu_offset: f64, sigma: f64, delta: f64, radius: u32) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= SIGMA_MIN) {
        return Err(invalid(format!("sigma {sigma} below the floor {SIGMA_MIN}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(invalid(format!("step {delta} must be positive")));
    }
    if !(-0.5..=0.5).contains(&mu_offset) {
        return Err(invalid(format!("mean offset {mu_offset} outside [-0.5, 0.5]")));
    }
    let s = radius as i64;
    let scale = delta / sigma;
    // Bins right of the mean use the upper tail so mirrored bins get
    // bit-identical masses.
    let upper_tail = |x: f64| normal_cdf(-x);
    let masses = (-s..=s)
        .map(|k| {
            let a = if k == -s {
                f64::NEG_INFINITY
            } else {
                (k as f64 - 0.5 - mu_offset) * scale
            };
            let b = if k == s {
                f64::INFINITY
            } else {
                (k as f64 + 0.5 - mu_offset) * scale
            };
            if a >= 0.0 {
                upper_tail(a) - upper_tail(b)
            } else if b <= 0.0 {
                normal_cdf(b) - normal_cdf(a)
            } else {
                1.0 - normal_cdf(a) - upper_tail(b)
            }
        })
        .collect();
    Ok(masses)
}

/// Frequency table of the discretized Gaussian; symbol `k + S` stands for bin `k`.
pub fn discretized_gaussian_table(
    mu_offset: f64,
    sigma: f64,
    delta: f64,
    radius: u32,
    precision: u32,
) -> Result<FrequencyTable> {
    let table = normalize_frequencies(
        &discretized_gaussian_masses(mu_offset, sigma, delta, radius)?,
        precision,
    )?;
    if mu_offset != 0.0 {
        return Ok(table);
    }
    // Rounding can split a mirrored pair by one unit; level each pair down
    // and return the surplus to the central bin.
    let mut freqs = table.frequencies().to_vec();
    let centre = radius as usize;
    let mut surplus = 0;
    for k in 1..=centre {
        let lo = freqs[centre - k].min(freqs[centre + k]);
        surplus += freqs[centre - k] + freqs[centre + k] - 2 * lo;
        freqs[centre - k] = lo;
        freqs[centre + k] = lo;
    }
    freqs[centre] += surplus;
    FrequencyTable::from_frequencies(freqs, precision)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_limit() {
        // Edge bins absorb the tails, so only interior bins are flat.
        let t = discretized_gaussian_table(0.0, 50.0, 1.0, 5, 16).unwrap();
        let f = &t.frequencies()[1..10];
        let (mx, mn) = (*f.iter().max().unwrap() as f64, *f.iter().min().unwrap() as f64);
        assert!(mx / mn < 1.05, "{f:?}");
    }

    #[test]
    fn unit_scale_center_mass() {
        // Phi(0.5) - Phi(-0.5) for a standard normal.
        let masses = discretized_gaussian_masses(0.0, 1.0, 1.0, 8).unwrap();
        assert!((masses[8] - 0.382_924_922_548_026).abs() < 1e-12);
        let t = discretized_gaussian_table(0.0, 1.0, 1.0, 8, 16).unwrap();
        assert!((t.probability(8) - 0.3829).abs() < 1e-3);
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_for_centered_mean() {
        for sigma in [0.01, 0.3, 1.0, 7.0, 300.0] {
            let t = discretized_gaussian_table(0.0, sigma, 1.0, 255, 16).unwrap();
            let f = t.frequencies();
            for k in 0..f.len() {
                assert_eq!(f[k], f[f.len() - 1 - k], "sigma {sigma} bin {k}");
            }
        }
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
    }

    #[test]
    fn rejects_small_sigma() {
        assert!(discretized_gaussian_table(0.0, 1e-4, 1.0, 4, 16).is_err());
        assert!(discretized_gaussian_table(0.0, 1.0, 0.0, 4, 16).is_err());
        assert!(discretized_gaussian_table(0.7, 1.0, 1.0, 4, 16).is_err());
    }
}
