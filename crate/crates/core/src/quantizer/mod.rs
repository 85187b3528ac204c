//! Vector quantization: codebooks, residual stacks, training and usage reports.

mod codebook;
mod rvq;
mod train;

use std::io::{Read, Write};

pub use codebook::Codebook;
pub use rvq::{IndexStack, ResidualVQ};
pub use train::{
    train_codebook, train_rvq, train_rvq_multirate, Init, TrainConfig, TrainedCodebook, DEAD_CODEWORD_FRACTION,
    RVQ_RESTARTS,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::latent::NUM_GROUPS;
use crate::scalar::Scalar;

/// Quantizers for the four latent groups plus the optional hyperprior quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSet<T> {
    pub groups: Vec<ResidualVQ<T>>,
    pub hyper: Option<ResidualVQ<T>>,
}

impl<T: Scalar> QuantizerSet<T> {
    pub fn new(groups: Vec<ResidualVQ<T>>, hyper: Option<ResidualVQ<T>>) -> Result<Self> {
        if groups.len() != NUM_GROUPS {
            return Err(invalid(format!(
                "need {NUM_GROUPS} group quantizers, got {}",
                groups.len()
            )));
        }
        let m = groups[0].max_stages();
        let dim = groups[0].dim();
        for q in groups.iter().chain(hyper.iter()) {
            if q.max_stages() != m {
                return Err(invalid("all quantizers must share the stage count"));
            }
            if q.dim() != dim {
                return Err(invalid("all quantizers must share the codeword dimension"));
            }
        }
        Ok(Self { groups, hyper })
    }

    pub fn max_stages(&self) -> usize {
        self.groups[0].max_stages()
    }

    pub fn dim(&self) -> usize {
        self.groups[0].dim()
    }

    /// Stage-1 codeword count of each group quantizer.
    pub fn group_ks(&self) -> Vec<usize> {
        self.groups.iter().map(|q| q.stage(0).len()).collect()
    }

    pub fn hyper_k(&self) -> Option<usize> {
        self.hyper.as_ref().map(|q| q.stage(0).len())
    }
}

/// Quantization quality and index statistics of a codebook on a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookReport {
    /// Per-element `E||v - c_J(v)||^2 / C`.
    pub quantization_mse: f64,
    /// Same quantity seen from the encoder side; equal under hard assignment.
    pub commitment_mse: f64,
    /// Fraction of codewords used at least once.
    pub utilization: f64,
    /// Plug-in entropy of the index marginal, in bits.
    pub index_entropy_bits: f64,
}

pub fn codebook_report<T: Scalar>(codebook: &Codebook<T>, samples: &[T]) -> Result<CodebookReport> {
    if samples.is_empty() {
        return Err(invalid("codebook report needs at least one sample"));
    }
    let indices = codebook.nn_quantize(samples)?;
    let mut hist = vec![0u64; codebook.len()];
    let mut total = 0.0;
    for (v, &j) in samples.chunks_exact(codebook.dim()).zip(&indices) {
        hist[j as usize] += 1;
        total += crate::scalar::squared_distance(v, codebook.codeword(j as usize));
    }
    let mse = total / samples.len() as f64;
    let used = hist.iter().filter(|&&c| c > 0).count();
    Ok(CodebookReport {
        quantization_mse: mse,
        commitment_mse: mse,
        utilization: used as f64 / codebook.len() as f64,
        index_entropy_bits: crate::analysis::plugin_entropy_bits(&hist),
    })
}

const CODEBOOK_MAGIC: &[u8; 4] = b"EFCB";
const CODEBOOK_VERSION: u8 = 1;

/// Writes a residual quantizer in the `EFCB` format.
pub fn write_rvq<T: Scalar, W: Write>(rvq: &ResidualVQ<T>, mut out: W) -> Result<()> {
    out.write_all(CODEBOOK_MAGIC)?;
    out.write_all(&[CODEBOOK_VERSION])?;
    out.write_all(&(rvq.max_stages() as u32).to_le_bytes())?;
    for cb in rvq.stages() {
        out.write_all(&(cb.len() as u32).to_le_bytes())?;
        out.write_all(&(cb.dim() as u32).to_le_bytes())?;
        for v in cb.codewords() {
            out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads an `EFCB` residual quantizer.
pub fn read_rvq<T: Scalar, R: Read>(mut input: R) -> Result<ResidualVQ<T>> {
    let mut head = [0u8; 5];
    input.read_exact(&mut head)?;
    if &head[..4] != CODEBOOK_MAGIC {
        return Err(Error::Format {
            what: "codebook file",
            detail: "bad magic".into(),
        });
    }
    if head[4] != CODEBOOK_VERSION {
        return Err(Error::Format {
            what: "codebook file",
            detail: format!("unsupported version {}", head[4]),
        });
    }
    let stages = read_u32(&mut input)? as usize;
    let mut out = Vec::with_capacity(stages.min(64));
    for _ in 0..stages {
        let k = read_u32(&mut input)? as usize;
        let c = read_u32(&mut input)? as usize;
        let mut bytes = vec![0u8; k * c * 4];
        input.read_exact(&mut bytes)?;
        let words = bytes
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        out.push(Codebook::new(c, words)?);
    }
    ResidualVQ::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_single_codeword_usage() {
        let cb = Codebook::new(1, vec![0.0f64, 1.0, 4.0, 9.0]).unwrap();
        let r = codebook_report(&cb, &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(r.utilization, 0.25);
        assert_eq!(r.index_entropy_bits, 0.0);
        assert_eq!(r.quantization_mse, 0.0);
    }

    #[test]
    fn report_full_usage() {
        let cb = Codebook::new(1, vec![0.0f64, 1.0, 4.0, 9.0]).unwrap();
        let r = codebook_report(&cb, cb.codewords()).unwrap();
        assert_eq!(r.utilization, 1.0);
        assert!((r.index_entropy_bits - 2.0).abs() < 1e-12);
    }

    #[test]
    fn report_three_codeword_histogram() {
        // Indices 0, 1, 2, 1 -> histogram (1, 2, 1) -> H(1/4, 1/2, 1/4) = 1.5 bits.
        let cb = Codebook::new(1, vec![0.0f64, 1.0, 4.0]).unwrap();
        let r = codebook_report(&cb, &[0.0, 1.0, 4.0, 2.4]).unwrap();
        assert!((r.index_entropy_bits - 1.5).abs() < 1e-12);
        assert_eq!(r.utilization, 1.0);
        assert!((r.quantization_mse - 1.96 / 4.0).abs() < 1e-12);
        assert_eq!(r.commitment_mse, r.quantization_mse);
        assert!(codebook_report(&cb, &[]).is_err());
    }

    #[test]
    fn efcb_round_trip() {
        let rvq = ResidualVQ::new(vec![
            Codebook::new(2, vec![0.0f64, 0.0, 1.5, -2.0]).unwrap(),
            Codebook::new(2, vec![0.0, 0.0, 0.25, 0.5, -0.25, 1.0, 3.0, 3.0]).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_rvq(&rvq, &mut buf).unwrap();
        assert_eq!(&buf[..9], b"EFCB\x01\x02\x00\x00\x00");
        assert_eq!(&buf[9..17], &[2, 0, 0, 0, 2, 0, 0, 0]);
        let back: ResidualVQ<f64> = read_rvq(buf.as_slice()).unwrap();
        assert_eq!(back, rvq);
        assert!(read_rvq::<f64, _>(&buf[..buf.len() - 2]).is_err());
    }

    #[test]
    fn quantizer_set_validation() {
        let one = ResidualVQ::new(vec![Codebook::new(1, vec![0.0f64, 1.0]).unwrap()]).unwrap();
        let two = ResidualVQ::new(vec![
            Codebook::new(1, vec![0.0f64, 1.0]).unwrap(),
            Codebook::new(1, vec![0.0f64, 1.0]).unwrap(),
        ])
        .unwrap();
        assert!(QuantizerSet::new(vec![one.clone(); 4], None).is_ok());
        assert!(QuantizerSet::new(vec![one.clone(); 3], None).is_err());
        assert!(QuantizerSet::new(vec![one.clone(); 4], Some(two)).is_err());
    }
}
