//! Lloyd training with EMA usage tracking and dead-codeword reseeding.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::{Codebook, ResidualVQ};

/// How the initial codewords are drawn from the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// D²-weighted seeding.
    KMeansPlusPlus,
    /// `K` distinct training vectors chosen uniformly.
    RandomSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Decay of the per-codeword usage counters.
    pub ema_decay: f64,
    /// Weight kept on the previous codeword when moving it toward its
    /// cell centroid; 0 is a plain Lloyd step.
    pub codeword_decay: f64,
    pub init: Init,
    /// Keep codeword 0 fixed at the origin.
    pub pin_zero: bool,
    /// Independent runs; the one with the lowest final MSE is kept.
    pub restarts: usize,
}

impl TrainConfig {
    pub fn new(k: usize, iterations: usize, seed: u64) -> Self {
        Self {
            k,
            iterations,
            seed,
            ema_decay: 0.99,
            codeword_decay: 0.0,
            init: Init::KMeansPlusPlus,
            pin_zero: false,
            restarts: 1,
        }
    }
}

/// Lloyd runs per RVQ stage.
pub const RVQ_RESTARTS: usize = 4;

/// Usage below this fraction of the mean per-codeword count marks a codeword dead.
pub const DEAD_CODEWORD_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct TrainedCodebook<T> {
    pub codebook: Codebook<T>,
    pub initial: Codebook<T>,
    /// Per-element quantization MSE of the final codebook on the training set.
    pub mse: f64,
    /// MSE at every assignment step, ending with the final one.
    pub history: Vec<f64>,
    pub reseeded: usize,
}

struct Assignment {
    indices: Vec<u32>,
    mse: f64,
}

fn assign<T: Scalar>(cb: &Codebook<T>, samples: &[T]) -> Assignment {
    let dim = cb.dim();
    let mut total = 0.0;
    let indices = samples
        .chunks_exact(dim)
        .map(|v| {
            let (j, d) = cb.nearest(v);
            total += d;
            j as u32
        })
        .collect::<Vec<_>>();
    Assignment {
        mse: total / samples.len() as f64,
        indices,
    }
}

fn kmeans_pp<T: Scalar>(samples: &[T], dim: usize, k: usize, pin_zero: bool, rng: &mut rng::Rng) -> Vec<T> {
    let n = samples.len() / dim;
    let mut centers: Vec<T> = Vec::with_capacity(k * dim);
    if pin_zero {
        centers.extend(std::iter::repeat_n(T::zero(), dim));
    } else {
        let first = rng.random_range(0..n);
        centers.extend_from_slice(&samples[first * dim..(first + 1) * dim]);
    }
    let mut d2: Vec<f64> = samples
        .chunks_exact(dim)
        .map(|v| crate::scalar::squared_distance(v, &centers[..dim]))
        .collect();
    while centers.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = samples[pick * dim..(pick + 1) * dim].to_vec();
        for (d, v) in d2.iter_mut().zip(samples.chunks_exact(dim)) {
            let nd = crate::scalar::squared_distance(v, &c);
            if nd < *d {
                *d = nd;
            }
        }
        centers.extend(c);
    }
    centers
}

fn random_samples<T: Scalar>(samples: &[T], dim: usize, k: usize, pin_zero: bool, rng: &mut rng::Rng) -> Vec<T> {
    let n = samples.len() / dim;
    let mut centers = Vec::with_capacity(k * dim);
    let free = if pin_zero {
        centers.extend(std::iter::repeat_n(T::zero(), dim));
        k - 1
    } else {
        k
    };
    let mut picks = index::sample(rng, n, free).into_vec();
    picks.sort_unstable();
    for p in picks {
        centers.extend_from_slice(&samples[p * dim..(p + 1) * dim]);
    }
    centers
}

/// Trains a `K`-codeword codebook on `samples` (row-major `C`-vectors).
/// Run `r > 0` of a multi-start uses seed `derive_seed(seed, r)`.
pub fn train_codebook<T: Scalar>(samples: &[T], dim: usize, cfg: &TrainConfig) -> Result<TrainedCodebook<T>> {
    if cfg.restarts == 0 {
        return Err(invalid("at least one training run is required"));
    }
    let mut best = train_once(samples, dim, cfg, cfg.seed)?;
    for r in 1..cfg.restarts {
        let run = train_once(samples, dim, cfg, rng::derive_seed(cfg.seed, r as u64))?;
        if run.mse < best.mse {
            best = run;
        }
    }
    Ok(best)
}

fn train_once<T: Scalar>(samples: &[T], dim: usize, cfg: &TrainConfig, seed: u64) -> Result<TrainedCodebook<T>> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(shape(format!(
            "{} values do not form {dim}-dimensional vectors",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    let k = cfg.k;
    if k == 0 {
        return Err(invalid("codebook size must be positive"));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} samples for {k} codewords")));
    }
    if cfg.iterations == 0 {
        return Err(invalid("at least one training iteration is required"));
    }
    if !(0.0..1.0).contains(&cfg.ema_decay) || !(0.0..1.0).contains(&cfg.codeword_decay) {
        return Err(invalid("decay factors must lie in [0, 1)"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("training samples must be finite"));
    }

    let mut rng = rng::seeded(seed);
    let init = match cfg.init {
        Init::KMeansPlusPlus => kmeans_pp(samples, dim, k, cfg.pin_zero, &mut rng),
        Init::RandomSamples => random_samples(samples, dim, k, cfg.pin_zero, &mut rng),
    };
    let initial = Codebook::new(dim, init.clone())?;
    let mut codewords: Vec<f64> = init.iter().map(|v| v.as_f64()).collect();
    let mut cb = initial.clone();

    let dead_threshold = DEAD_CODEWORD_FRACTION * n as f64 / k as f64;
    let mut ema = vec![0.0f64; k];
    let mut ema_weight = 1.0f64;
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let mut reseeded = 0;
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];

    for _ in 0..cfg.iterations {
        let a = assign(&cb, samples);
        history.push(a.mse);

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (v, &j) in samples.chunks_exact(dim).zip(&a.indices) {
            let j = j as usize;
            counts[j] += 1;
            for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(v) {
                *s += x.as_f64();
            }
        }

        ema_weight *= cfg.ema_decay;
        for (e, &c) in ema.iter_mut().zip(&counts) {
            *e = cfg.ema_decay * *e + (1.0 - cfg.ema_decay) * c as f64;
        }
        let correction = 1.0 - ema_weight;

        for j in 0..k {
            if cfg.pin_zero && j == 0 {
                continue;
            }
            let cw = &mut codewords[j * dim..(j + 1) * dim];
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in cw.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *c = cfg.codeword_decay * *c + (1.0 - cfg.codeword_decay) * s * inv;
                }
            } else if ema[j] / correction < dead_threshold {
                // Unused and dead: move onto a random training vector.
                let p = rng.random_range(0..n);
                for (c, x) in cw.iter_mut().zip(&samples[p * dim..(p + 1) * dim]) {
                    *c = x.as_f64();
                }
                reseeded += 1;
            }
        }
        cb = Codebook::new(dim, codewords.iter().map(|v| T::of(*v)).collect())?;
    }

    let final_assignment = assign(&cb, samples);
    history.push(final_assignment.mse);
    let usage = ema.iter().map(|e| e / (1.0 - ema_weight)).collect();
    Ok(TrainedCodebook {
        codebook: cb.with_counts(usage),
        initial,
        mse: final_assignment.mse,
        history,
        reseeded,
    })
}

/// Trains a residual quantizer stage by stage; each stage keeps the zero
/// vector at index 0 so adding a stage never increases distortion.
pub fn train_rvq<T: Scalar>(
    samples: &[T],
    dim: usize,
    stage_ks: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<ResidualVQ<T>> {
    train_rvq_multirate(&[(samples, stage_ks.len())], dim, stage_ks, iterations, seed)
}

/// Like [`train_rvq`] over several sample sets, each paired with the number of
/// stages it is coded with; stage `s` is trained only on sets that use it.
pub fn train_rvq_multirate<T: Scalar>(
    sets: &[(&[T], usize)],
    dim: usize,
    stage_ks: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<ResidualVQ<T>> {
    if stage_ks.is_empty() {
        return Err(invalid("at least one stage size is required"));
    }
    if sets.iter().any(|(_, m)| *m == 0 || *m > stage_ks.len()) {
        return Err(invalid(
            "every sample set must use between 1 and the total number of stages",
        ));
    }
    let mut residuals: Vec<Vec<T>> = sets.iter().map(|(s, _)| s.to_vec()).collect();
    let mut stages = Vec::with_capacity(stage_ks.len());
    for (t, &k) in stage_ks.iter().enumerate() {
        let active: Vec<usize> = (0..sets.len()).filter(|&i| sets[i].1 > t).collect();
        let pooled: Vec<T> = active.iter().flat_map(|&i| residuals[i].iter().copied()).collect();
        let mut cfg = TrainConfig::new(k, iterations, rng::derive_seed(seed, t as u64));
        cfg.pin_zero = true;
        cfg.restarts = RVQ_RESTARTS;
        let cb = train_codebook(&pooled, dim, &cfg)?.codebook;
        for &i in &active {
            for v in residuals[i].chunks_exact_mut(dim) {
                let (j, _) = cb.nearest(v);
                for (x, c) in v.iter_mut().zip(cb.codeword(j)) {
                    *x = T::of(x.as_f64() - c.as_f64());
                }
            }
        }
        stages.push(cb);
    }
    ResidualVQ::new(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n * dim).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn one_codeword_per_sample_is_lossless() {
        let samples: Vec<f64> = (0..16).map(|i| (i * i) as f64 * 0.37 - 3.0).collect();
        let t = train_codebook(&samples, 2, &TrainConfig::new(8, 5, 3)).unwrap();
        assert_eq!(t.mse, 0.0);
    }

    #[test]
    fn single_codeword_is_the_mean() {
        let samples = gaussian(500, 3, 4);
        let t = train_codebook(&samples, 3, &TrainConfig::new(1, 3, 0)).unwrap();
        for d in 0..3 {
            let mean = samples.iter().skip(d).step_by(3).sum::<f64>() / 500.0;
            assert!((t.codebook.codeword(0)[d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn two_clusters_found() {
        let mut r = rng::seeded(5);
        let mut samples = Vec::new();
        for i in 0..400 {
            let centre = if i % 2 == 0 { -5.0 } else { 5.0 };
            let e: f64 = StandardNormal.sample(&mut r);
            samples.push(centre + 0.5 * e);
        }
        // Oracle: the two cluster means computed from the generating labels.
        let neg = samples.iter().step_by(2).sum::<f64>() / 200.0;
        let pos = samples.iter().skip(1).step_by(2).sum::<f64>() / 200.0;
        let t = train_codebook(&samples, 1, &TrainConfig::new(2, 20, 1)).unwrap();
        let mut c = [t.codebook.codeword(0)[0], t.codebook.codeword(1)[0]];
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((c[0] - neg).abs() < 0.2, "{c:?} vs {neg}");
        assert!((c[1] - pos).abs() < 0.2, "{c:?} vs {pos}");
    }

    #[test]
    fn lloyd_is_monotone_and_deterministic() {
        let samples = gaussian(3000, 2, 6);
        for decay in [0.0, 0.5] {
            let mut cfg = TrainConfig::new(32, 15, 8);
            cfg.codeword_decay = decay;
            let a = train_codebook(&samples, 2, &cfg).unwrap();
            for w in a.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "MSE increased: {w:?}");
            }
            let b = train_codebook(&samples, 2, &cfg).unwrap();
            assert_eq!(a.codebook, b.codebook);
        }
    }

    #[test]
    fn dead_codewords_reseeded() {
        // Random-sample init on heavily duplicated data leaves codewords unused.
        let mut samples = vec![0.0f64; 200];
        samples.extend((0..50).map(|i| i as f64));
        let mut cfg = TrainConfig::new(16, 4, 2);
        cfg.init = Init::RandomSamples;
        let t = train_codebook(&samples, 1, &cfg).unwrap();
        assert!(t.reseeded > 0);
        assert!(t.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn rejects_small_training_sets() {
        assert!(matches!(
            train_codebook(&[1.0f64, 2.0], 1, &TrainConfig::new(3, 1, 0)),
            Err(Error::InsufficientData(_))
        ));
        assert!(train_codebook(&[1.0f64, 2.0], 1, &TrainConfig::new(1, 0, 0)).is_err());
    }

    #[test]
    fn rvq_single_stage_equals_pinned_codebook() {
        let samples = gaussian(400, 2, 9);
        let rvq = train_rvq(&samples, 2, &[8], 10, 77).unwrap();
        let mut cfg = TrainConfig::new(8, 10, rng::derive_seed(77, 0));
        cfg.pin_zero = true;
        cfg.restarts = RVQ_RESTARTS;
        let cb = train_codebook(&samples, 2, &cfg).unwrap().codebook;
        assert_eq!(rvq.stage(0).codewords(), cb.codewords());
        assert_eq!(cb.codeword(0), &[0.0, 0.0]);
    }

    #[test]
    fn rvq_more_stages_never_hurt_held_out() {
        let train = gaussian(4000, 4, 10);
        let test = gaussian(2000, 4, 11);
        let rvq = train_rvq(&train, 4, &[16, 16, 16], 15, 1).unwrap();
        let mut last = f64::INFINITY;
        for m in 1..=3 {
            let (_, recon) = rvq.quantize(&test, m).unwrap();
            let mse = test.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / test.len() as f64;
            assert!(mse <= last, "m={m}: {mse} > {last}");
            last = mse;
        }
    }

    #[test]
    fn second_stage_sees_smaller_residuals() {
        let train = gaussian(8000, 8, 12);
        let rvq = train_rvq(&train, 8, &[256, 256], 10, 2).unwrap();
        let input_var = train.iter().map(|v| v * v).sum::<f64>() / train.len() as f64;
        let (_, recon) = rvq.quantize(&train, 1).unwrap();
        let resid_var = train.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / train.len() as f64;
        assert!(resid_var < input_var, "{resid_var} vs {input_var}");
    }

    #[test]
    fn restarts_keep_the_best_run() {
        let samples = gaussian(1500, 1, 12);
        let mut cfg = TrainConfig::new(16, 8, 3);
        let runs: Vec<f64> = (0..3)
            .map(|r| {
                let mut c = cfg.clone();
                c.seed = if r == 0 { 3 } else { rng::derive_seed(3, r) };
                train_codebook(&samples, 1, &c).unwrap().mse
            })
            .collect();
        cfg.restarts = 3;
        let best = train_codebook(&samples, 1, &cfg).unwrap().mse;
        assert_eq!(best, runs.iter().cloned().fold(f64::INFINITY, f64::min));
        cfg.restarts = 0;
        assert!(train_codebook(&samples, 1, &cfg).is_err());
    }

    #[test]
    fn multirate_stage_sees_only_deep_sets() {
        // The shallow set is far away; a second stage trained on it would move.
        let deep = gaussian(800, 1, 13);
        let shallow: Vec<f64> = gaussian(800, 1, 14).iter().map(|v| v * 40.0).collect();
        let joint = train_rvq_multirate(&[(&deep[..], 2), (&shallow[..], 1)], 1, &[8, 8], 10, 5).unwrap();
        let first = joint.stage(0).clone();
        // Oracle: stage 2 trained directly on the deep set's stage-1 residuals.
        let resid: Vec<f64> = deep
            .iter()
            .map(|v| v - first.codeword(first.nearest(&[*v]).0)[0])
            .collect();
        let mut cfg = TrainConfig::new(8, 10, rng::derive_seed(5, 1));
        cfg.pin_zero = true;
        cfg.restarts = RVQ_RESTARTS;
        assert_eq!(
            joint.stage(1).codewords(),
            train_codebook(&resid, 1, &cfg).unwrap().codebook.codewords()
        );
        assert!(train_rvq_multirate(&[(&deep[..], 3)], 1, &[8, 8], 10, 5).is_err());
    }
}
