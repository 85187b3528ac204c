//! Closed-loop fitting of context predictors and group quantizers.

use serde::{Deserialize, Serialize};

use super::predictor::{build_features, Features, GroupHead};
use super::{
    cm_reconstruct, cm_symbols, destandardize, standardize, ContextPredictor, Scheme, SchemeConfig, SIGMA_MIN,
};
use crate::error::{invalid, Error, Result};
use crate::latent::{block_means, extract_hyper_context, partition_quadtree, GroupedLatent, LatentGrid, NUM_GROUPS};
use crate::quantizer::{train_rvq, train_rvq_multirate, QuantizerSet, ResidualVQ};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Everything needed to train one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub scheme: Scheme,
    /// Codeword count of every stage of each group quantizer.
    pub group_ks: Vec<usize>,
    /// Codeword count of the hyper quantizer; `None` disables the hyperprior.
    pub hyper_k: Option<usize>,
    pub stages: usize,
    pub iterations: usize,
    pub seed: u64,
    pub ridge: f64,
    /// CM step the predictor is fitted at.
    pub delta: f64,
    pub precision: u32,
}

impl ModelConfig {
    pub fn new(scheme: Scheme, group_ks: Vec<usize>, stages: usize, seed: u64) -> Self {
        Self {
            scheme,
            group_ks,
            hyper_k: None,
            stages,
            iterations: 50,
            seed,
            ridge: super::DEFAULT_RIDGE,
            delta: 1.0,
            precision: super::CM_PRECISION,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.scheme != Scheme::Cm && self.group_ks.len() != NUM_GROUPS {
            return Err(invalid(format!(
                "need {NUM_GROUPS} group codebook sizes, got {}",
                self.group_ks.len()
            )));
        }
        if self.stages == 0 {
            return Err(invalid("at least one stage is required"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(invalid("ridge penalty must be non-negative"));
        }
        if self.scheme == Scheme::Cm {
            SchemeConfig {
                scheme: Scheme::Cm,
                m: self.stages,
                delta: self.delta,
                precision: self.precision,
                hyper: false,
            }
            .validate(None)?;
        }
        Ok(())
    }

    /// Scheme configuration of one operating point of this model.
    pub fn operating_point(&self, m: usize) -> SchemeConfig {
        SchemeConfig {
            scheme: self.scheme,
            m,
            delta: self.delta,
            precision: self.precision,
            hyper: self.hyper_k.is_some(),
        }
    }
}

/// A trained model; `quantizers` is absent for CM, `predictor` for IQ.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub config: ModelConfig,
    pub predictor: Option<ContextPredictor>,
    pub quantizers: Option<QuantizerSet<T>>,
    pub hyper: Option<ResidualVQ<T>>,
}

/// How the closed loop codes each group.
enum GroupCoding<'a, T> {
    /// RVQ with given quantizers at the listed stage counts.
    Fixed(&'a [ResidualVQ<T>], Vec<usize>),
    /// RVQ trained on the fly; decoded contexts are produced at every `m` in `1..=stages`.
    Train {
        ks: &'a [usize],
        stages: usize,
        iterations: usize,
        seed: u64,
    },
    /// Uniform scalar quantization with step `delta`.
    Scalar(f64),
}

struct Track<T> {
    m: usize,
    phi: Option<LatentGrid<T>>,
    decoded: Vec<LatentGrid<T>>,
}

struct LoopOutput<T> {
    predictor: ContextPredictor,
    quantizers: Vec<ResidualVQ<T>>,
}

fn group_targets<T: Scalar>(group: &LatentGrid<T>) -> Vec<f64> {
    group.to_vectors().into_iter().map(|v| v.as_f64()).collect()
}

fn check_training<T: Scalar>(training: &[LatentGrid<T>]) -> Result<(usize, usize, usize)> {
    let first = training
        .first()
        .ok_or_else(|| Error::InsufficientData("no training latents".into()))?;
    let shape = first.shape();
    if training.iter().any(|t| t.shape() != shape) {
        return Err(invalid("all training latents must share one shape"));
    }
    Ok(shape)
}

fn closed_loop<T: Scalar>(
    training: &[LatentGrid<T>],
    hyper_q: Option<&ResidualVQ<T>>,
    coding: GroupCoding<'_, T>,
    ridge: f64,
) -> Result<LoopOutput<T>> {
    let (c, _, _) = check_training(training)?;
    let grouped: Vec<GroupedLatent<T>> = training.iter().map(partition_quadtree).collect::<Result<_>>()?;
    let gshape = grouped[0].group_shape();
    let n = gshape.1 * gshape.2;

    let levels: Vec<usize> = match &coding {
        GroupCoding::Fixed(_, ms) => ms.clone(),
        GroupCoding::Train { stages, .. } => (1..=*stages).collect(),
        GroupCoding::Scalar(_) => vec![hyper_q.map_or(1, |q| q.max_stages())],
    };

    let mut predictor = ContextPredictor::identity(c, hyper_q.is_some());
    let params_per_group = 2 * c * super::feature_count(NUM_GROUPS - 1, c, hyper_q.is_some());
    let positions = n * training.len();
    if positions < 10 * params_per_group {
        return Err(Error::InsufficientData(format!(
            "{positions} training positions for {params_per_group} predictor parameters (need 10x)"
        )));
    }

    // One track per (level, image), level-major.
    let mut tracks: Vec<Track<T>> = Vec::with_capacity(levels.len() * training.len());
    for &m in &levels {
        for latent in training {
            let phi = match hyper_q {
                Some(q) => Some(extract_hyper_context(latent, Some(q), m)?.context.upsample_nearest(2)?),
                None => None,
            };
            tracks.push(Track {
                m,
                phi,
                decoded: Vec::with_capacity(NUM_GROUPS),
            });
        }
    }
    let image_of = |t: usize| t % training.len();

    let mut quantizers = Vec::new();
    for g in 0..NUM_GROUPS {
        let blocks: Vec<Features> = tracks
            .iter()
            .map(|t| build_features(g, c, n, &t.decoded, t.phi.as_ref()))
            .collect::<Result<_>>()?;
        let targets: Vec<Vec<f64>> = (0..tracks.len())
            .map(|t| group_targets(&grouped[image_of(t)].groups[g]))
            .collect();
        predictor.set_head(g, GroupHead::fit(&blocks, &targets, c, ridge, SIGMA_MIN)?);
        let params: Vec<_> = blocks.iter().map(|f| predictor.predict_features(g, f)).collect();

        match &coding {
            GroupCoding::Scalar(delta) => {
                for (t, track) in tracks.iter_mut().enumerate() {
                    let (symbols, _) = cm_symbols(&grouped[image_of(t)].groups[g], &params[t], *delta);
                    track
                        .decoded
                        .push(cm_reconstruct(&symbols, &params[t], *delta, gshape)?);
                }
            }
            GroupCoding::Fixed(qs, _) => {
                let q = &qs[g];
                for (t, track) in tracks.iter_mut().enumerate() {
                    let y = standardize(&grouped[image_of(t)].groups[g], &params[t]);
                    let (stack, _) = q.quantize(&y, track.m)?;
                    track
                        .decoded
                        .push(destandardize(&q.dequantize(&stack)?, &params[t], gshape)?);
                }
            }
            GroupCoding::Train {
                ks,
                stages,
                iterations,
                seed,
            } => {
                let standardized: Vec<Vec<T>> = (0..tracks.len())
                    .map(|t| standardize(&grouped[image_of(t)].groups[g], &params[t]))
                    .collect();
                let sets: Vec<(&[T], usize)> = standardized
                    .iter()
                    .zip(&tracks)
                    .map(|(s, t)| (s.as_slice(), t.m))
                    .collect();
                let q = train_rvq_multirate(
                    &sets,
                    c,
                    &vec![ks[g]; *stages],
                    *iterations,
                    derive_seed(*seed, g as u64),
                )?;
                for (t, track) in tracks.iter_mut().enumerate() {
                    let (stack, _) = q.quantize(&standardized[t], track.m)?;
                    track
                        .decoded
                        .push(destandardize(&q.dequantize(&stack)?, &params[t], gshape)?);
                }
                quantizers.push(q);
            }
        }
    }
    Ok(LoopOutput { predictor, quantizers })
}

/// Fits a context predictor for `config` by running the scheme on the
/// training latents with the heads fitted so far (group 1 first), so every
/// head sees decoded rather than clean context.
pub fn fit_context_predictor<T: Scalar>(
    training: &[LatentGrid<T>],
    config: &SchemeConfig,
    qset: Option<&QuantizerSet<T>>,
    ridge: f64,
) -> Result<ContextPredictor> {
    let hyper_q = if config.hyper {
        Some(
            qset.and_then(|q| q.hyper.as_ref())
                .ok_or_else(|| invalid("hyperprior requested but no hyper quantizer given"))?,
        )
    } else {
        None
    };
    let coding = match config.scheme {
        Scheme::Rd => {
            let qset = qset.ok_or_else(|| invalid("rd fitting needs the group quantizers"))?;
            config.validate(Some(qset.max_stages()))?;
            GroupCoding::Fixed(&qset.groups, vec![config.m])
        }
        Scheme::Cm => {
            config.validate(None)?;
            GroupCoding::Scalar(config.delta)
        }
        Scheme::Iq => return Err(invalid("independent quantization has no context predictor")),
    };
    Ok(closed_loop(training, hyper_q, coding, ridge)?.predictor)
}

fn train_hyper<T: Scalar>(training: &[LatentGrid<T>], cfg: &ModelConfig) -> Result<Option<ResidualVQ<T>>> {
    let Some(k) = cfg.hyper_k else { return Ok(None) };
    let (c, _, _) = check_training(training)?;
    let mut samples = Vec::new();
    for latent in training {
        samples.extend(block_means(latent)?.to_vectors());
    }
    Ok(Some(train_rvq(
        &samples,
        c,
        &vec![k; cfg.stages],
        cfg.iterations,
        derive_seed(cfg.seed, 0x4859),
    )?))
}

/// Trains the quantizers and predictor of one scheme. RD fits predictor and
/// group quantizers jointly, group by group, with decoded contexts produced
/// at every stage count; IQ trains each group quantizer on the raw group; CM
/// fits the predictor at the configured step.
pub fn train_model<T: Scalar>(training: &[LatentGrid<T>], cfg: &ModelConfig) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let (c, _, _) = check_training(training)?;
    let hyper = train_hyper(training, cfg)?;
    match cfg.scheme {
        Scheme::Rd => {
            let out = closed_loop(
                training,
                hyper.as_ref(),
                GroupCoding::Train {
                    ks: &cfg.group_ks,
                    stages: cfg.stages,
                    iterations: cfg.iterations,
                    seed: cfg.seed,
                },
                cfg.ridge,
            )?;
            let qset = QuantizerSet::new(out.quantizers, hyper.clone())?;
            Ok(TrainedModel {
                config: cfg.clone(),
                predictor: Some(out.predictor),
                quantizers: Some(qset),
                hyper,
            })
        }
        Scheme::Iq => {
            let grouped: Vec<GroupedLatent<T>> = training.iter().map(partition_quadtree).collect::<Result<_>>()?;
            let mut groups = Vec::with_capacity(NUM_GROUPS);
            for g in 0..NUM_GROUPS {
                let samples: Vec<T> = grouped.iter().flat_map(|gl| gl.groups[g].to_vectors()).collect();
                groups.push(train_rvq(
                    &samples,
                    c,
                    &vec![cfg.group_ks[g]; cfg.stages],
                    cfg.iterations,
                    derive_seed(cfg.seed, g as u64),
                )?);
            }
            let qset = QuantizerSet::new(groups, hyper.clone())?;
            Ok(TrainedModel {
                config: cfg.clone(),
                predictor: None,
                quantizers: Some(qset),
                hyper,
            })
        }
        Scheme::Cm => {
            let out = closed_loop(training, hyper.as_ref(), GroupCoding::Scalar(cfg.delta), cfg.ridge)?;
            Ok(TrainedModel {
                config: cfg.clone(),
                predictor: Some(out.predictor),
                quantizers: None,
                hyper,
            })
        }
    }
}
