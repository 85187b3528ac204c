use crate::error::{invalid, shape, Error, Result};
use crate::scalar::{squared_distance, Scalar};

/// `K` codewords of dimension `C`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    dim: usize,
    codewords: Vec<T>,
    /// Smoothed per-codeword usage from training; all zero for loaded codebooks.
    counts: Vec<f64>,
    /// Distinct values with their lowest index, ascending; scalar codebooks only.
    sorted: Option<Vec<(f64, usize)>>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(dim: usize, codewords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("codeword dimension must be positive"));
        }
        if codewords.is_empty() || !codewords.len().is_multiple_of(dim) {
            return Err(shape(format!(
                "{} values do not form a whole number of {dim}-dimensional codewords",
                codewords.len()
            )));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("codewords must be finite"));
        }
        let k = codewords.len() / dim;
        let sorted = (dim == 1).then(|| {
            let mut v: Vec<(f64, usize)> = codewords.iter().enumerate().map(|(j, c)| (c.as_f64(), j)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v.dedup_by(|b, a| a.0 == b.0);
            v
        });
        Ok(Self {
            dim,
            codewords,
            counts: vec![0.0; k],
            sorted,
        })
    }

    pub(crate) fn with_counts(mut self, counts: Vec<f64>) -> Self {
        debug_assert_eq!(counts.len(), self.len());
        self.counts = counts;
        self
    }

    /// Number of codewords `K`.
    pub fn len(&self) -> usize {
        self.codewords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codeword(&self, j: usize) -> &[T] {
        &self.codewords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn codewords(&self) -> &[T] {
        &self.codewords
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// Fixed-length index cost `log2 K`, or `None` when `K` is not a power of two.
    pub fn index_bits(&self) -> Option<u32> {
        let k = self.len();
        k.is_power_of_two().then(|| k.trailing_zeros())
    }

    /// Index of the closest codeword and its squared distance; ties go to the lower index.
    #[inline]
    pub fn nearest(&self, v: &[T]) -> (usize, f64) {
        if let Some(sorted) = &self.sorted {
            return nearest_sorted(sorted, v[0].as_f64());
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.codewords.chunks_exact(self.dim).enumerate() {
            let d = squared_distance(v, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        (best, best_d)
    }

    fn check_vectors(&self, vectors: &[T]) -> Result<()> {
        if !vectors.len().is_multiple_of(self.dim) {
            return Err(shape(format!(
                "{} values are not a whole number of {}-dimensional vectors",
                vectors.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Maps each `C`-vector in `vectors` to its nearest codeword index.
    pub fn nn_quantize(&self, vectors: &[T]) -> Result<Vec<u32>> {
        self.check_vectors(vectors)?;
        Ok(vectors
            .chunks_exact(self.dim)
            .map(|v| self.nearest(v).0 as u32)
            .collect())
    }

    /// Codeword lookup.
    pub fn dequantize(&self, indices: &[u32]) -> Result<Vec<T>> {
        let k = self.len();
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &j in indices {
            if j as usize >= k {
                return Err(Error::IndexOutOfRange { index: j, k });
            }
            out.extend_from_slice(self.codeword(j as usize));
        }
        Ok(out)
    }
}

fn nearest_sorted(sorted: &[(f64, usize)], x: f64) -> (usize, f64) {
    let p = sorted.partition_point(|u| u.0 < x);
    let mut best = (usize::MAX, f64::INFINITY);
    for &(c, j) in &sorted[p.saturating_sub(1)..(p + 1).min(sorted.len())] {
        let d = (x - c) * (x - c);
        if d < best.1 || (d == best.1 && j < best.0) {
            best = (j, d);
        }
    }
    best
}
