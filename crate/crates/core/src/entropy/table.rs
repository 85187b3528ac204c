use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};

/// Integer symbol frequencies summing to exactly `2^precision`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    precision: u32,
    freqs: Vec<u32>,
    /// `cumulative[s]` is the sum of frequencies below symbol `s`; one extra entry at the end.
    cumulative: Vec<u32>,
}

pub const MIN_PRECISION: u32 = 8;
pub const MAX_PRECISION: u32 = 16;

impl FrequencyTable {
    /// Builds a table from integer frequencies that already sum to `2^precision`.
    pub fn from_frequencies(freqs: Vec<u32>, precision: u32) -> Result<Self> {
        check_precision(precision)?;
        let total: u64 = freqs.iter().map(|&f| f as u64).sum();
        if total != 1u64 << precision {
            return Err(invalid(format!(
                "frequencies sum to {total}, expected {}",
                1u64 << precision
            )));
        }
        let mut cumulative = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cumulative.push(0);
        for &f in &freqs {
            acc += f;
            cumulative.push(acc);
        }
        Ok(Self {
            precision,
            freqs,
            cumulative,
        })
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn frequencies(&self) -> &[u32] {
        &self.freqs
    }

    #[inline]
    pub fn freq(&self, symbol: usize) -> u32 {
        self.freqs[symbol]
    }

    #[inline]
    pub fn start(&self, symbol: usize) -> u32 {
        self.cumulative[symbol]
    }

    /// Symbol whose cumulative interval contains `slot`.
    #[inline]
    pub fn symbol_for(&self, slot: u32) -> usize {
        // Largest s with cumulative[s] <= slot; zero-width symbols are skipped.
        self.cumulative.partition_point(|&c| c <= slot) - 1
    }

    /// Model probability of `symbol`.
    pub fn probability(&self, symbol: usize) -> f64 {
        self.freqs[symbol] as f64 / (1u64 << self.precision) as f64
    }
}

fn check_precision(precision: u32) -> Result<()> {
    if !(MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
        return Err(invalid(format!(
            "precision {precision} outside {MIN_PRECISION}..={MAX_PRECISION}"
        )));
    }
    Ok(())
}

/// Scales non-negative weights to integer frequencies summing to `2^precision`.
///
/// Rounding is largest-remainder (ties to the lower symbol). Every symbol ends
/// with frequency at least 1; the mass for promoted symbols is taken from the
/// currently largest bin.
pub fn normalize_frequencies(raw: &[f64], precision: u32) -> Result<FrequencyTable> {
    check_precision(precision)?;
    if raw.is_empty() {
        return Err(invalid("cannot normalize an empty distribution"));
    }
    let total_freq = 1u64 << precision;
    if raw.len() as u64 > total_freq {
        return Err(invalid(format!(
            "{} symbols do not fit a {precision}-bit table",
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("weights must be finite and non-negative"));
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(invalid("at least one weight must be positive"));
    }

    let scale = total_freq as f64 / sum;
    let mut freqs = Vec::with_capacity(raw.len());
    let mut remainders = Vec::with_capacity(raw.len());
    let mut assigned = 0u64;
    for (s, &w) in raw.iter().enumerate() {
        let exact = w * scale;
        let base = exact.floor();
        freqs.push(base as u64);
        assigned += base as u64;
        remainders.push((exact - base, s));
    }
    let mut left = total_freq.saturating_sub(assigned);
    if left > 0 {
        // Zero remainders never outrank a positive one, so only those compete.
        remainders.retain(|r| r.0 > 0.0);
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let order: Vec<usize> = if remainders.is_empty() {
            (0..raw.len()).collect()
        } else {
            remainders.iter().map(|r| r.1).collect()
        };
        for &s in order.iter().cycle() {
            if left == 0 {
                break;
            }
            freqs[s] += 1;
            left -= 1;
        }
    }
    // Floating error may overshoot by a unit; trim from the largest bins.
    let mut over = freqs.iter().sum::<u64>().saturating_sub(total_freq);
    while over > 0 {
        let s = argmax(&freqs);
        freqs[s] -= 1;
        over -= 1;
    }
    promote_zeros(&mut freqs);
    debug_assert_eq!(freqs.iter().sum::<u64>(), total_freq);
    FrequencyTable::from_frequencies(freqs.into_iter().map(|f| f as u32).collect(), precision)
}

/// First index of the maximum.
fn argmax(v: &[u64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Raises every zero frequency to 1, taking each unit from the bin that is
/// largest at that moment (lowest index on ties).
fn promote_zeros(freqs: &mut [u64]) {
    let zeros = freqs.iter().filter(|&&f| f == 0).count();
    if zeros == 0 {
        return;
    }
    let mut heap: BinaryHeap<(u64, Reverse<usize>)> = freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 1)
        .map(|(i, &f)| (f, Reverse(i)))
        .collect();
    for _ in 0..zeros {
        let (f, Reverse(i)) = heap.pop().expect("table has room for every symbol");
        freqs[i] = f - 1;
        if f - 1 > 1 {
            heap.push((f - 1, Reverse(i)));
        }
    }
    for f in freqs.iter_mut().filter(|f| **f == 0) {
        *f = 1;
    }
}
