//! Linear context predictor mapping decoded neighbours to `(mu, sigma)`.

use std::io::{Read, Write};

use crate::error::{invalid, shape, Error, Result};
use crate::latent::{LatentGrid, NUM_GROUPS};
use crate::scalar::Scalar;

/// Default floor on predicted scales.
pub const SIGMA_MIN: f64 = 1e-3;

/// Default ridge penalty.
pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Quantile buckets used to fit the scale head.
const SCALE_BUCKETS: usize = 8;

/// Per-group affine heads. Row `c` of `mu` (and of `log_sigma`) holds the
/// weights for channel `c` over the group's context features.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupHead {
    pub inputs: usize,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

/// The per-group context extractors for all four groups.
///
/// Group `i` (0-based) sees, at every position, the co-located entries of
/// all channels of decoded groups `0..i`, then the upsampled hyper context
/// (when enabled), then a constant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextPredictor {
    channels: usize,
    hyper: bool,
    sigma_min: f64,
    heads: Vec<GroupHead>,
}

/// Context features for every position of one group, row-major `n x d`.
#[derive(Debug, Clone)]
pub(crate) struct Features {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
}

/// Number of context features seen by `group`.
pub fn feature_count(group: usize, channels: usize, hyper: bool) -> usize {
    group * channels + if hyper { channels } else { 0 } + 1
}

pub(crate) fn build_features<T: Scalar>(
    group: usize,
    channels: usize,
    n: usize,
    decoded: &[LatentGrid<T>],
    hyper: Option<&LatentGrid<T>>,
) -> Result<Features> {
    if decoded.len() < group {
        return Err(invalid(format!("group {} needs {group} decoded groups", group + 1)));
    }
    let d = feature_count(group, channels, hyper.is_some());
    let mut x = Vec::with_capacity(n * d);
    let sources: Vec<&LatentGrid<T>> = decoded[..group].iter().chain(hyper).collect();
    for s in &sources {
        if s.channels() != channels || s.positions() != n {
            return Err(shape("context grids disagree in shape"));
        }
    }
    for p in 0..n {
        for s in &sources {
            let plane = s.positions();
            for c in 0..channels {
                x.push(s.data()[c * plane + p].as_f64());
            }
        }
        x.push(1.0);
    }
    Ok(Features { n, d, x })
}

/// Solves `(A + ridge I) w = b` for symmetric positive semi-definite `A` (Cholesky).
fn solve_ridge(a: &[f64], b: &[f64], d: usize, ridge: f64) -> Result<Vec<f64>> {
    let mut l = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j] + if i == j { ridge } else { 0.0 };
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(invalid("context regression is singular; increase the ridge penalty"));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut y = vec![0.0f64; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    let mut w = vec![0.0f64; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * w[k];
        }
        w[i] = s / l[i * d + i];
    }
    Ok(w)
}

/// Accumulates the Gram matrix of stacked feature blocks.
pub(crate) fn gram(blocks: &[Features]) -> Vec<f64> {
    let d = blocks[0].d;
    let mut a = vec![0.0f64; d * d];
    for f in blocks {
        for row in f.x.chunks_exact(d) {
            for i in 0..d {
                let ri = row[i];
                for j in 0..=i {
                    a[i * d + j] += ri * row[j];
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            a[j * d + i] = a[i * d + j];
        }
    }
    a
}

fn cross(blocks: &[Features], targets: &[Vec<f64>]) -> Vec<f64> {
    let d = blocks[0].d;
    let mut b = vec![0.0f64; d];
    for (f, t) in blocks.iter().zip(targets) {
        for (row, y) in f.x.chunks_exact(d).zip(t) {
            for i in 0..d {
                b[i] += row[i] * y;
            }
        }
    }
    b
}

#[inline]
fn dot(w: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in w.iter().zip(x) {
        acc += a * b;
    }
    acc
}

/// Position-major `(mu, sigma)` for one group: `n x C` each.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GroupHead {
    fn predict(&self, f: &Features, channels: usize, sigma_min: f64) -> GroupParams {
        let mut mu = Vec::with_capacity(f.n * channels);
        let mut sigma = Vec::with_capacity(f.n * channels);
        for row in f.x.chunks_exact(f.d) {
            for c in 0..channels {
                mu.push(dot(&self.mu[c * f.d..(c + 1) * f.d], row));
                let s = dot(&self.log_sigma[c * f.d..(c + 1) * f.d], row).exp();
                sigma.push(if s.is_finite() {
                    s.max(sigma_min)
                } else {
                    f64::MAX.sqrt()
                });
            }
        }
        GroupParams { mu, sigma }
    }

    /// Fits both heads by ridge least squares. `targets[b]` holds the
    /// position-major group values matching feature block `b`.
    pub(crate) fn fit(
        blocks: &[Features],
        targets: &[Vec<f64>],
        channels: usize,
        ridge: f64,
        sigma_min: f64,
    ) -> Result<Self> {
        let d = blocks[0].d;
        let a = gram(blocks);

        let mut mu = Vec::with_capacity(channels * d);
        for c in 0..channels {
            let tc: Vec<Vec<f64>> = targets
                .iter()
                .map(|t| t.iter().skip(c).step_by(channels).copied().collect())
                .collect();
            mu.extend(solve_ridge(&a, &cross(blocks, &tc), d, ridge)?);
        }
        let mut head = GroupHead {
            inputs: d,
            mu,
            log_sigma: vec![0.0; channels * d],
        };

        // Scale head: bucket positions by predicted mean, regress the log of
        // each bucket's residual RMS on the same features.
        let mut log_sigma = Vec::with_capacity(channels * d);
        for c in 0..channels {
            let mut pairs: Vec<(f64, f64)> = Vec::new();
            for (f, t) in blocks.iter().zip(targets) {
                for (row, y) in f.x.chunks_exact(d).zip(t.iter().skip(c).step_by(channels)) {
                    let m = dot(&head.mu[c * d..(c + 1) * d], row);
                    pairs.push((m, y - m));
                }
            }
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            order.sort_by(|&i, &j| pairs[i].0.total_cmp(&pairs[j].0).then(i.cmp(&j)));
            let mut log_rms = vec![0.0f64; pairs.len()];
            let buckets = SCALE_BUCKETS.min(pairs.len()).max(1);
            for b in 0..buckets {
                let lo = b * pairs.len() / buckets;
                let hi = (b + 1) * pairs.len() / buckets;
                let ms = order[lo..hi].iter().map(|&i| pairs[i].1 * pairs[i].1).sum::<f64>() / (hi - lo).max(1) as f64;
                let value = ms.sqrt().max(sigma_min).ln();
                for &i in &order[lo..hi] {
                    log_rms[i] = value;
                }
            }
            let mut offset = 0;
            let split: Vec<Vec<f64>> = blocks
                .iter()
                .map(|f| {
                    let v = log_rms[offset..offset + f.n].to_vec();
                    offset += f.n;
                    v
                })
                .collect();
            log_sigma.extend(solve_ridge(&a, &cross(blocks, &split), d, ridge)?);
        }
        head.log_sigma = log_sigma;
        Ok(head)
    }
}

impl ContextPredictor {
    pub fn new(channels: usize, hyper: bool, sigma_min: f64, heads: Vec<GroupHead>) -> Result<Self> {
        if heads.len() != NUM_GROUPS {
            return Err(invalid(format!("need {NUM_GROUPS} group heads, got {}", heads.len())));
        }
        if !(sigma_min > 0.0 && sigma_min.is_finite()) {
            return Err(invalid("sigma floor must be positive"));
        }
        for (g, h) in heads.iter().enumerate() {
            let d = feature_count(g, channels, hyper);
            if h.inputs != d || h.mu.len() != channels * d || h.log_sigma.len() != channels * d {
                return Err(shape(format!("group {} head does not match {d} features", g + 1)));
            }
        }
        Ok(Self {
            channels,
            hyper,
            sigma_min,
            heads,
        })
    }

    /// A predictor with `mu = 0` and `sigma = 1` everywhere.
    pub fn identity(channels: usize, hyper: bool) -> Self {
        let heads = (0..NUM_GROUPS)
            .map(|g| {
                let d = feature_count(g, channels, hyper);
                GroupHead {
                    inputs: d,
                    mu: vec![0.0; channels * d],
                    log_sigma: vec![0.0; channels * d],
                }
            })
            .collect();
        Self {
            channels,
            hyper,
            sigma_min: SIGMA_MIN,
            heads,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn uses_hyper(&self) -> bool {
        self.hyper
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn head(&self, group: usize) -> &GroupHead {
        &self.heads[group]
    }

    pub(crate) fn set_head(&mut self, group: usize, head: GroupHead) {
        self.heads[group] = head;
    }

    /// Predicts `(mu, sigma)` at the `n` positions of `group` from the groups decoded before it.
    pub fn predict<T: Scalar>(
        &self,
        group: usize,
        n: usize,
        decoded: &[LatentGrid<T>],
        hyper: Option<&LatentGrid<T>>,
    ) -> Result<GroupParams> {
        if hyper.is_some() != self.hyper {
            return Err(Error::Mismatch(format!(
                "predictor expects hyper context: {}, got: {}",
                self.hyper,
                hyper.is_some()
            )));
        }
        let f = build_features(group, self.channels, n, decoded, hyper)?;
        Ok(self.heads[group].predict(&f, self.channels, self.sigma_min))
    }

    pub(crate) fn predict_features(&self, group: usize, f: &Features) -> GroupParams {
        self.heads[group].predict(f, self.channels, self.sigma_min)
    }
}

const PREDICTOR_MAGIC: &[u8; 4] = b"EFPR";
const PREDICTOR_VERSION: u8 = 1;

/// Writes the `EFPR` format: per group a `2C x d` matrix (mean rows, then
/// log-scale rows) of little-endian `f64`, then the scale floor.
pub fn write_predictor<W: Write>(p: &ContextPredictor, mut out: W) -> Result<()> {
    out.write_all(PREDICTOR_MAGIC)?;
    out.write_all(&[PREDICTOR_VERSION])?;
    out.write_all(&(p.heads.len() as u32).to_le_bytes())?;
    for h in &p.heads {
        out.write_all(&((2 * p.channels) as u32).to_le_bytes())?;
        out.write_all(&(h.inputs as u32).to_le_bytes())?;
        for v in h.mu.iter().chain(&h.log_sigma) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.write_all(&p.sigma_min.to_le_bytes())?;
    Ok(())
}

pub fn read_predictor<R: Read>(mut input: R) -> Result<ContextPredictor> {
    let fmt = |detail: &str| Error::Format {
        what: "predictor file",
        detail: detail.into(),
    };
    let mut head = [0u8; 5];
    input.read_exact(&mut head)?;
    if &head[..4] != PREDICTOR_MAGIC {
        return Err(fmt("bad magic"));
    }
    if head[4] != PREDICTOR_VERSION {
        return Err(fmt("unsupported version"));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |input: &mut R| -> Result<usize> {
        input.read_exact(&mut u32_buf)?;
        Ok(u32::from_le_bytes(u32_buf) as usize)
    };
    let groups = read_u32(&mut input)?;
    if groups != NUM_GROUPS {
        return Err(fmt("group count must be 4"));
    }
    let mut heads = Vec::with_capacity(groups);
    let mut channels = 0;
    for _ in 0..groups {
        let rows = read_u32(&mut input)?;
        let cols = read_u32(&mut input)?;
        if rows == 0 || rows % 2 != 0 {
            return Err(fmt("row count must be even and positive"));
        }
        channels = rows / 2;
        let mut values = vec![0.0f64; rows * cols];
        for v in values.iter_mut() {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let log_sigma = values.split_off(channels * cols);
        heads.push(GroupHead {
            inputs: cols,
            mu: values,
            log_sigma,
        });
    }
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    let sigma_min = f64::from_le_bytes(b);
    let hyper = heads[0].inputs == channels + 1;
    if !hyper && heads[0].inputs != 1 {
        return Err(fmt("group 1 width does not match any context layout"));
    }
    ContextPredictor::new(channels, hyper, sigma_min, heads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_recovers_linear_map() {
        // y = 2 x0 - 3 x1 + 0.5
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 0.11).cos();
            x.extend([a, b, 1.0]);
            y.push(2.0 * a - 3.0 * b + 0.5);
        }
        let f = Features { n: 50, d: 3, x };
        let w = solve_ridge(&gram(std::slice::from_ref(&f)), &cross(&[f], &[y]), 3, 1e-12).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-8 && (w[1] + 3.0).abs() < 1e-8 && (w[2] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn feature_layout() {
        let g1 = LatentGrid::new(2, 1, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let phi = LatentGrid::new(2, 1, 2, vec![5.0f64, 6.0, 7.0, 8.0]).unwrap();
        let f = build_features(1, 2, 2, std::slice::from_ref(&g1), Some(&phi)).unwrap();
        assert_eq!(f.d, feature_count(1, 2, true));
        assert_eq!(&f.x[..5], &[1.0, 3.0, 5.0, 7.0, 1.0]);
        assert_eq!(&f.x[5..], &[2.0, 4.0, 6.0, 8.0, 1.0]);
        let f0 = build_features(0, 2, 2, &[g1], None).unwrap();
        assert_eq!(f0.x, vec![1.0, 1.0]);
    }

    #[test]
    fn identity_predicts_unit_scale() {
        let p = ContextPredictor::identity(1, false);
        let g = LatentGrid::new(1, 2, 2, vec![3.0f64; 4]).unwrap();
        let out = p.predict(2, 4, &[g.clone(), g], None).unwrap();
        assert!(out.mu.iter().all(|m| *m == 0.0));
        assert!(out.sigma.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn efpr_round_trip() {
        let mut p = ContextPredictor::identity(2, true);
        let d = feature_count(3, 2, true);
        p.set_head(
            3,
            GroupHead {
                inputs: d,
                mu: (0..2 * d).map(|i| i as f64 * 0.25).collect(),
                log_sigma: (0..2 * d).map(|i| -(i as f64)).collect(),
            },
        );
        let mut buf = Vec::new();
        write_predictor(&p, &mut buf).unwrap();
        assert_eq!(&buf[..9], b"EFPR\x01\x04\x00\x00\x00");
        assert_eq!(read_predictor(buf.as_slice()).unwrap(), p);
        assert!(read_predictor(&buf[..buf.len() - 1]).is_err());
    }
}
