use crate::error::{invalid, shape, Error, Result};
use crate::scalar::Scalar;

use super::Codebook;

/// Indices produced by an `m`-stage residual quantizer over `n` vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStack {
    stages: Vec<Vec<u32>>,
}

impl IndexStack {
    pub fn new(stages: Vec<Vec<u32>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(invalid("index stack needs at least one stage"));
        }
        let n = stages[0].len();
        if stages.iter().any(|s| s.len() != n) {
            return Err(shape("all stages of an index stack must have equal length"));
        }
        Ok(Self { stages })
    }

    /// Stages used.
    pub fn m(&self) -> usize {
        self.stages.len()
    }

    /// Vectors per stage.
    pub fn n(&self) -> usize {
        self.stages[0].len()
    }

    pub fn stage(&self, t: usize) -> &[u32] {
        &self.stages[t]
    }

    pub fn stages(&self) -> &[Vec<u32>] {
        &self.stages
    }
}

/// A cascade of codebooks; stage `t` quantizes what stages `1..t` left over.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVQ<T> {
    stages: Vec<Codebook<T>>,
}

impl<T: Scalar> ResidualVQ<T> {
    pub fn new(stages: Vec<Codebook<T>>) -> Result<Self> {
        let Some(first) = stages.first() else {
            return Err(invalid("residual quantizer needs at least one stage"));
        };
        let dim = first.dim();
        if stages.iter().any(|s| s.dim() != dim) {
            return Err(shape("all stages must share the codeword dimension"));
        }
        Ok(Self { stages })
    }

    pub fn max_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.stages[0].dim()
    }

    pub fn stage(&self, t: usize) -> &Codebook<T> {
        &self.stages[t]
    }

    pub fn stages(&self) -> &[Codebook<T>] {
        &self.stages
    }

    /// Codeword count per stage.
    pub fn ks(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.len()).collect()
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.stages.len() {
            return Err(Error::StageOutOfRange {
                m,
                max: self.stages.len(),
            });
        }
        Ok(())
    }

    /// Quantizes with the first `m` stages; returns the indices and the
    /// reconstruction (sum of the selected codewords).
    pub fn quantize(&self, vectors: &[T], m: usize) -> Result<(IndexStack, Vec<T>)> {
        self.check_m(m)?;
        let dim = self.dim();
        if !vectors.len().is_multiple_of(dim) {
            return Err(shape(format!(
                "vector batch length {} not divisible by {dim}",
                vectors.len()
            )));
        }
        let n = vectors.len() / dim;
        let mut residual: Vec<f64> = vectors.iter().map(|v| v.as_f64()).collect();
        let mut recon = vec![0.0f64; vectors.len()];
        let mut stages = Vec::with_capacity(m);
        let mut scratch = vec![T::zero(); dim];
        for cb in &self.stages[..m] {
            let mut idx = Vec::with_capacity(n);
            for p in 0..n {
                let r = &mut residual[p * dim..(p + 1) * dim];
                for (s, v) in scratch.iter_mut().zip(r.iter()) {
                    *s = T::of(*v);
                }
                let (j, _) = cb.nearest(&scratch);
                for (d, c) in cb.codeword(j).iter().enumerate() {
                    let c = c.as_f64();
                    r[d] -= c;
                    recon[p * dim + d] += c;
                }
                idx.push(j as u32);
            }
            stages.push(idx);
        }
        Ok((IndexStack { stages }, recon.into_iter().map(T::of).collect()))
    }

    /// Sum of the codewords named by `stack`.
    pub fn dequantize(&self, stack: &IndexStack) -> Result<Vec<T>> {
        self.check_m(stack.m())?;
        let dim = self.dim();
        let mut recon = vec![0.0f64; stack.n() * dim];
        for (cb, idx) in self.stages.iter().zip(stack.stages()) {
            let k = cb.len();
            for (p, &j) in idx.iter().enumerate() {
                if j as usize >= k {
                    return Err(Error::IndexOutOfRange { index: j, k });
                }
                for (d, c) in cb.codeword(j as usize).iter().enumerate() {
                    recon[p * dim + d] += c.as_f64();
                }
            }
        }
        Ok(recon.into_iter().map(T::of).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_stage() -> ResidualVQ<f64> {
        ResidualVQ::new(vec![
            Codebook::new(1, vec![0.0, 10.0]).unwrap(),
            Codebook::new(1, vec![0.0, 1.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn single_stage_matches_codebook() {
        let rvq = two_stage();
        let v = [3.0, 7.0, 11.0];
        let (stack, recon) = rvq.quantize(&v, 1).unwrap();
        let idx = rvq.stage(0).nn_quantize(&v).unwrap();
        assert_eq!(stack.stage(0), idx.as_slice());
        assert_eq!(recon, rvq.stage(0).dequantize(&idx).unwrap());
    }

    #[test]
    fn two_stage_toy_enumeration() {
        // All four (a, b) combinations of {0, 10} + {0, 1} against 10.8.
        let mut best = (0, 0, f64::INFINITY);
        for (a, ca) in [0.0, 10.0].iter().enumerate() {
            for (b, cb) in [0.0, 1.0].iter().enumerate() {
                let e = (10.8f64 - ca - cb).powi(2);
                if e < best.2 {
                    best = (a, b, e);
                }
            }
        }
        assert_eq!((best.0, best.1), (1, 1));
        let (stack, recon) = two_stage().quantize(&[10.8], 2).unwrap();
        assert_eq!(stack.stage(0), &[1]);
        assert_eq!(stack.stage(1), &[1]);
        assert_eq!(recon, vec![11.0]);
        assert!(((10.8f64 - 11.0).powi(2) - 0.04).abs() < 1e-12);
        assert!((best.2 - 0.04).abs() < 1e-12);
    }

    #[test]
    fn exact_cover_has_zero_error() {
        let rvq = ResidualVQ::new(vec![
            Codebook::new(2, vec![0.0, 0.0, 4.0, -2.0]).unwrap(),
            Codebook::new(2, vec![0.0, 0.0, 0.5, 0.25]).unwrap(),
        ])
        .unwrap();
        let (stack, recon) = rvq.quantize(&[4.5, -1.75], 2).unwrap();
        assert_eq!(recon, vec![4.5, -1.75]);
        assert_eq!(rvq.dequantize(&stack).unwrap(), recon);
    }

    #[test]
    fn stage_range_checked() {
        let rvq = two_stage();
        assert!(matches!(rvq.quantize(&[1.0], 0), Err(Error::StageOutOfRange { .. })));
        assert!(matches!(rvq.quantize(&[1.0], 3), Err(Error::StageOutOfRange { .. })));
        let bad = IndexStack::new(vec![vec![2]]).unwrap();
        assert!(rvq.dequantize(&bad).is_err());
        assert!(IndexStack::new(vec![vec![0], vec![0, 1]]).is_err());
    }
}
