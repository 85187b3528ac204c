use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Plug-in (maximum-likelihood) entropy of a histogram, in bits.
pub fn plugin_entropy_bits(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Counts of each index value over `K` symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHistogram {
    counts: Vec<u64>,
    n: u64,
}

impl IndexHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid("histogram needs at least one bin"));
        }
        let n = counts.iter().sum();
        Ok(Self { counts, n })
    }

    pub fn from_indices(indices: &[u32], k: usize) -> Result<Self> {
        let mut counts = vec![0u64; k];
        for &j in indices {
            let slot = counts
                .get_mut(j as usize)
                .ok_or_else(|| invalid(format!("index {j} outside alphabet of size {k}")))?;
            *slot += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn entropy_bits(&self) -> f64 {
        plugin_entropy_bits(&self.counts)
    }

    /// Empirical probability of each index.
    pub fn pmf(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    /// Fraction of indices observed at least once.
    pub fn utilization(&self) -> f64 {
        self.counts.iter().filter(|&&c| c > 0).count() as f64 / self.k() as f64
    }
}

/// Normalized entropy gap `(n log2 K - H(J)) / (n log2 K)`, estimating
/// `H(J)` as `n` times the entropy of the index marginal.
pub fn entropy_gap(hist: &IndexHistogram) -> Result<f64> {
    if hist.k() < 2 {
        return Err(invalid("entropy gap needs an alphabet of at least 2"));
    }
    if hist.n() == 0 {
        return Err(invalid("entropy gap of an empty histogram"));
    }
    Ok(gap_from_entropy(hist.entropy_bits(), hist.k()))
}

/// Gap of a pmf over `K` symbols.
pub fn entropy_gap_of_pmf(pmf: &[f64]) -> Result<f64> {
    if pmf.len() < 2 {
        return Err(invalid("entropy gap needs an alphabet of at least 2"));
    }
    let h: f64 = pmf.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    Ok(gap_from_entropy(h, pmf.len()))
}

fn gap_from_entropy(h: f64, k: usize) -> f64 {
    let budget = (k as f64).log2();
    ((budget - h) / budget).clamp(0.0, 1.0)
}

/// Total-variation distance between two pmfs on the same alphabet.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(invalid("pmfs must share an alphabet"));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// One codebook's index stream, each index tagged with a discrete context label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledStream {
    pub name: String,
    pub k: usize,
    pub indices: Vec<u32>,
    /// Context label per index; empty means no context.
    pub labels: Vec<u32>,
}

impl LabeledStream {
    fn label_count(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1)
    }
}

/// Per-stream and pooled gaps of a set of labeled streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalGapReport {
    /// Budget-weighted conditional gap over all streams.
    pub delta_h_bar: f64,
    /// Budget-weighted unconditional gap over all streams.
    pub delta_h: f64,
    pub streams: Vec<StreamGap>,
    /// Set when some stream has fewer than 10 observations per (label, index) cell.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamGap {
    pub name: String,
    pub k: usize,
    pub n: usize,
    pub labels: usize,
    pub unconditional: f64,
    pub conditional: f64,
    pub utilization: f64,
    pub unreliable: bool,
}

/// Plug-in `H(J | L)` in bits per symbol.
fn conditional_entropy(stream: &LabeledStream) -> Result<f64> {
    if stream.labels.is_empty() {
        return Ok(IndexHistogram::from_indices(&stream.indices, stream.k)?.entropy_bits());
    }
    if stream.labels.len() != stream.indices.len() {
        return Err(invalid(format!(
            "stream '{}' has {} labels for {} indices",
            stream.name,
            stream.labels.len(),
            stream.indices.len()
        )));
    }
    let l = stream.label_count();
    let mut joint = vec![0u64; l * stream.k];
    let mut marginal = vec![0u64; l];
    for (&j, &c) in stream.indices.iter().zip(&stream.labels) {
        if j as usize >= stream.k {
            return Err(crate::error::Error::IndexOutOfRange { index: j, k: stream.k });
        }
        joint[c as usize * stream.k + j as usize] += 1;
        marginal[c as usize] += 1;
    }
    Ok((plugin_entropy_bits(&joint) - plugin_entropy_bits(&marginal)).max(0.0))
}

/// Normalized gap of the summed budgets against the summed (conditional) entropies.
pub fn conditional_entropy_gap(streams: &[LabeledStream]) -> Result<ConditionalGapReport> {
    if streams.is_empty() {
        return Err(invalid("no index streams"));
    }
    let mut budget = 0.0;
    let mut cond_total = 0.0;
    let mut uncond_total = 0.0;
    let mut out = Vec::with_capacity(streams.len());
    for s in streams {
        if s.k < 2 {
            // A single-codeword stage costs nothing and carries no gap.
            continue;
        }
        if s.indices.is_empty() {
            return Err(invalid(format!("stream '{}' is empty", s.name)));
        }
        let hist = IndexHistogram::from_indices(&s.indices, s.k)?;
        let n = s.indices.len() as f64;
        let bits = (s.k as f64).log2();
        let h = hist.entropy_bits();
        let hc = conditional_entropy(s)?;
        budget += n * bits;
        uncond_total += n * h;
        cond_total += n * hc;
        let labels = if s.labels.is_empty() { 1 } else { s.label_count() };
        let unreliable = (labels * s.k) as f64 > s.indices.len() as f64 / 10.0;
        out.push(StreamGap {
            name: s.name.clone(),
            k: s.k,
            n: s.indices.len(),
            labels,
            unconditional: gap_from_entropy(h, s.k),
            conditional: gap_from_entropy(hc, s.k),
            utilization: hist.utilization(),
            unreliable,
        });
    }
    if budget == 0.0 {
        return Err(invalid("streams carry no fixed-length budget"));
    }
    Ok(ConditionalGapReport {
        delta_h_bar: ((budget - cond_total) / budget).clamp(0.0, 1.0),
        delta_h: ((budget - uncond_total) / budget).clamp(0.0, 1.0),
        unreliable: out.iter().any(|s| s.unreliable),
        streams: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        let uniform = IndexHistogram::from_counts(vec![1, 1, 1, 1]).unwrap();
        assert_eq!(entropy_gap(&uniform).unwrap(), 0.0);
        let point = IndexHistogram::from_counts(vec![0, 9, 0, 0]).unwrap();
        assert_eq!(entropy_gap(&point).unwrap(), 1.0);
        // H(1/2, 1/4, 1/8, 1/8) = 1.75 bits of a 2-bit budget.
        let skew = IndexHistogram::from_counts(vec![4, 2, 1, 1]).unwrap();
        assert!((skew.entropy_bits() - 1.75).abs() < 1e-12);
        assert!((entropy_gap(&skew).unwrap() - 0.125).abs() < 1e-12);
        assert!((entropy_gap_of_pmf(&[0.5, 0.25, 0.125, 0.125]).unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn gap_errors() {
        assert!(entropy_gap(&IndexHistogram::from_counts(vec![0, 0]).unwrap()).is_err());
        assert!(entropy_gap(&IndexHistogram::from_counts(vec![5]).unwrap()).is_err());
        assert!(IndexHistogram::from_indices(&[3], 3).is_err());
    }

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(total_variation(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn conditional_gap_limits() {
        // Labels independent of indices: every (label, index) cell equally often.
        let mut indices = Vec::new();
        let mut labels = Vec::new();
        for l in 0..4u32 {
            for j in [0u32, 0, 1, 2, 3, 3, 3, 1] {
                indices.push(j);
                labels.push(l);
            }
        }
        let s = LabeledStream {
            name: "a".into(),
            k: 4,
            indices: indices.clone(),
            labels: labels.clone(),
        };
        let r = conditional_entropy_gap(&[s]).unwrap();
        assert!((r.delta_h_bar - r.delta_h).abs() < 1e-12);

        // Indices a function of the label.
        let det = LabeledStream {
            name: "b".into(),
            k: 4,
            indices: labels.clone(),
            labels,
        };
        let r = conditional_entropy_gap(&[det]).unwrap();
        assert_eq!(r.delta_h_bar, 1.0);
        assert!(r.delta_h < 1e-12);
        assert!(r.unreliable);
    }

    #[test]
    fn pooled_gap_weights_by_budget() {
        // 2-bit stream with gap 0.125 and an 1-bit uniform stream of equal length.
        let a = LabeledStream {
            name: "a".into(),
            k: 4,
            indices: vec![0, 0, 0, 0, 1, 1, 2, 3],
            labels: vec![],
        };
        let b = LabeledStream {
            name: "b".into(),
            k: 2,
            indices: vec![0, 1, 0, 1, 0, 1, 0, 1],
            labels: vec![],
        };
        let r = conditional_entropy_gap(&[a, b]).unwrap();
        // (16 - 14 + 8 - 8) / 24
        assert!((r.delta_h_bar - 2.0 / 24.0).abs() < 1e-12);
        assert_eq!(r.streams.len(), 2);
    }
}
