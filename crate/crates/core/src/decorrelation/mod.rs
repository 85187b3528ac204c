//! The three coding schemes: representation-domain decorrelation (RD),
//! independent quantization (IQ) and context-modeled scalar quantization
//! with rANS (CM).

mod predictor;
mod train;

use std::borrow::Cow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use predictor::{
    feature_count, read_predictor, write_predictor, ContextPredictor, GroupHead, GroupParams, DEFAULT_RIDGE, SIGMA_MIN,
};
pub use train::{fit_context_predictor, train_model, ModelConfig, TrainedModel};

use crate::entropy::{discretized_gaussian_table, rans_encode_with, RansDecoder, RansStream};
use crate::error::{invalid, Error, Result};
use crate::latent::{
    extract_hyper_context, hyper_context_from_indices, merge_groups, partition_quadtree, GroupedLatent, LatentGrid,
    NUM_GROUPS,
};
use crate::quantizer::{IndexStack, QuantizerSet, ResidualVQ};
use crate::scalar::Scalar;

/// Largest magnitude of a CM symbol; values beyond are clamped.
pub const CM_RADIUS: u32 = 255;

/// Default rANS precision for CM tables.
pub const CM_PRECISION: u32 = 16;

/// Default CM step sweep.
pub const CM_DELTAS: [f64; 5] = [2.0, 1.0, 0.5, 0.25, 0.125];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rd,
    Iq,
    Cm,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rd => "rd",
            Scheme::Iq => "iq",
            Scheme::Cm => "cm",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rd" => Ok(Scheme::Rd),
            "iq" => Ok(Scheme::Iq),
            "cm" => Ok(Scheme::Cm),
            other => Err(invalid(format!("unknown scheme '{other}' (expected rd, iq or cm)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One operating point of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Stage count for RD/IQ, and for the hyper quantizer in every scheme.
    pub m: usize,
    /// CM quantization step.
    pub delta: f64,
    /// CM rANS precision in bits.
    pub precision: u32,
    pub hyper: bool,
}

impl SchemeConfig {
    pub fn rd(m: usize, hyper: bool) -> Self {
        Self {
            scheme: Scheme::Rd,
            m,
            delta: 1.0,
            precision: CM_PRECISION,
            hyper,
        }
    }

    pub fn iq(m: usize, hyper: bool) -> Self {
        Self {
            scheme: Scheme::Iq,
            m,
            delta: 1.0,
            precision: CM_PRECISION,
            hyper,
        }
    }

    pub fn cm(delta: f64, hyper: bool) -> Self {
        Self {
            scheme: Scheme::Cm,
            m: 1,
            delta,
            precision: CM_PRECISION,
            hyper,
        }
    }

    pub fn validate(&self, max_stages: Option<usize>) -> Result<()> {
        match self.scheme {
            Scheme::Cm => {
                if !(self.delta.is_finite() && self.delta > 0.0) {
                    return Err(invalid(format!("CM step must be positive, got {}", self.delta)));
                }
                let need = (2 * CM_RADIUS + 1) as u64;
                if !(crate::entropy::MIN_PRECISION..=crate::entropy::MAX_PRECISION).contains(&self.precision)
                    || (1u64 << self.precision) < need
                {
                    return Err(invalid(format!(
                        "rANS precision {} cannot hold {need} symbols (need 2^p >= {need}, p <= 16)",
                        self.precision
                    )));
                }
            }
            Scheme::Rd | Scheme::Iq => {
                if let Some(max) = max_stages {
                    if self.m == 0 || self.m > max {
                        return Err(Error::StageOutOfRange { m: self.m, max });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Wall-clock time per coding phase, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub quantize_ms: f64,
    pub autoregressive_ms: f64,
    pub entropy_code_ms: f64,
    pub pack_ms: f64,
}

impl PhaseTimings {
    pub fn total_ms(&self) -> f64 {
        self.quantize_ms + self.autoregressive_ms + self.entropy_code_ms + self.pack_ms
    }

    pub fn add(&mut self, other: &PhaseTimings) {
        self.quantize_ms += other.quantize_ms;
        self.autoregressive_ms += other.autoregressive_ms;
        self.entropy_code_ms += other.entropy_code_ms;
        self.pack_ms += other.pack_ms;
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Result of encoding one latent.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedLatent<T> {
    pub scheme: Scheme,
    pub m: usize,
    pub shape: (usize, usize, usize),
    pub hyper: Option<IndexStack>,
    /// Group index stacks (RD/IQ); empty for CM.
    pub groups: Vec<IndexStack>,
    /// One rANS stream per group (CM); empty for RD/IQ.
    pub streams: Vec<RansStream>,
    /// CM symbols clamped into the table support.
    pub clamped: u64,
    pub reconstruction: LatentGrid<T>,
    /// Measured rate in bits.
    pub rate_bits: u64,
    pub timings: PhaseTimings,
}

impl<T: Scalar> CodedLatent<T> {
    /// Rate per latent element.
    pub fn bits_per_element(&self) -> f64 {
        let (c, h, w) = self.shape;
        self.rate_bits as f64 / (c * h * w) as f64
    }
}

/// Decoder output with its phase timings.
#[derive(Debug, Clone)]
pub struct Decoded<T> {
    pub latent: LatentGrid<T>,
    pub timings: PhaseTimings,
}

/// Fixed-length cost of `stack` under `rvq`.
fn stack_bits<T: Scalar>(stack: &IndexStack, rvq: &ResidualVQ<T>) -> Result<u64> {
    let mut bits = 0;
    for (t, _) in stack.stages().iter().enumerate() {
        let b = rvq.stage(t).index_bits().ok_or_else(|| {
            invalid(format!(
                "stage {} size {} is not a power of two",
                t + 1,
                rvq.stage(t).len()
            ))
        })?;
        bits += stack.n() as u64 * b as u64;
    }
    Ok(bits)
}

fn check_stack_m(stack: &IndexStack, m: usize, what: &str) -> Result<()> {
    if stack.m() != m {
        return Err(Error::Mismatch(format!(
            "{what} holds {} stages, expected m = {m}",
            stack.m()
        )));
    }
    Ok(())
}

fn check_latent<T: Scalar>(latent: &LatentGrid<T>, channels: usize) -> Result<()> {
    if latent.channels() != channels {
        return Err(Error::Mismatch(format!(
            "latent has {} channels, model expects {channels}",
            latent.channels()
        )));
    }
    Ok(())
}

/// Hyper context upsampled to the group grid.
fn upsampled<T: Scalar>(context: &LatentGrid<T>) -> Result<LatentGrid<T>> {
    context.upsample_nearest(2)
}

fn hyper_quantizer<T: Scalar>(qset: &QuantizerSet<T>) -> Result<&ResidualVQ<T>> {
    qset.hyper
        .as_ref()
        .ok_or_else(|| Error::Mismatch("hyperprior enabled but no hyper quantizer".into()))
}

/// Standardizes position-major group values: `(y - mu) / sigma`.
fn standardize<T: Scalar>(group: &LatentGrid<T>, params: &GroupParams) -> Vec<T> {
    let (c, _, _) = group.shape();
    let n = group.positions();
    let data = group.data();
    let mut out = Vec::with_capacity(n * c);
    for p in 0..n {
        for ch in 0..c {
            let k = p * c + ch;
            out.push(T::of((data[ch * n + p].as_f64() - params.mu[k]) / params.sigma[k]));
        }
    }
    out
}

/// Inverse of [`standardize`]: `sigma * y' + mu`.
fn destandardize<T: Scalar>(values: &[T], params: &GroupParams, shape: (usize, usize, usize)) -> Result<LatentGrid<T>> {
    let out: Vec<T> = values
        .iter()
        .zip(params.sigma.iter().zip(&params.mu))
        .map(|(v, (s, m))| T::of(s * v.as_f64() + m))
        .collect();
    LatentGrid::from_vectors(shape.0, shape.1, shape.2, &out)
}

/// Encodes with representation-domain decorrelation.
pub fn rd_encode<T: Scalar>(
    latent: &LatentGrid<T>,
    predictor: &ContextPredictor,
    qset: &QuantizerSet<T>,
    m: usize,
) -> Result<CodedLatent<T>> {
    SchemeConfig::rd(m, predictor.uses_hyper()).validate(Some(qset.max_stages()))?;
    check_latent(latent, predictor.channels())?;
    let mut timings = PhaseTimings::default();
    let grouped = partition_quadtree(latent)?;
    let gshape = grouped.group_shape();
    let n = gshape.1 * gshape.2;

    let t = Instant::now();
    let hyper = if predictor.uses_hyper() {
        Some(extract_hyper_context(latent, Some(hyper_quantizer(qset)?), m)?)
    } else {
        None
    };
    timings.quantize_ms += elapsed_ms(t);
    let phi = hyper.as_ref().map(|h| upsampled(&h.context)).transpose()?;

    let mut decoded: Vec<LatentGrid<T>> = Vec::with_capacity(NUM_GROUPS);
    let mut stacks = Vec::with_capacity(NUM_GROUPS);
    for g in 0..NUM_GROUPS {
        let t = Instant::now();
        let params = predictor.predict(g, n, &decoded, phi.as_ref())?;
        let standardized = standardize(&grouped.groups[g], &params);
        timings.autoregressive_ms += elapsed_ms(t);

        let t = Instant::now();
        let (stack, _) = qset.groups[g].quantize(&standardized, m)?;
        let recon = qset.groups[g].dequantize(&stack)?;
        timings.quantize_ms += elapsed_ms(t);

        let t = Instant::now();
        decoded.push(destandardize(&recon, &params, gshape)?);
        timings.autoregressive_ms += elapsed_ms(t);
        stacks.push(stack);
    }

    let hyper_stack = hyper.and_then(|h| h.indices);
    let mut rate_bits = 0;
    if let Some(s) = &hyper_stack {
        rate_bits += stack_bits(s, hyper_quantizer(qset)?)?;
    }
    for (s, q) in stacks.iter().zip(&qset.groups) {
        rate_bits += stack_bits(s, q)?;
    }
    let reconstruction = merge_groups(&GroupedLatent {
        groups: decoded,
        origin_shape: latent.shape(),
    })?;
    Ok(CodedLatent {
        scheme: Scheme::Rd,
        m,
        shape: latent.shape(),
        hyper: hyper_stack,
        groups: stacks,
        streams: Vec::new(),
        clamped: 0,
        reconstruction,
        rate_bits,
        timings,
    })
}

/// Decodes RD index stacks for a latent of `shape`.
pub fn rd_decode_indices<T: Scalar>(
    shape: (usize, usize, usize),
    m: usize,
    hyper: Option<&IndexStack>,
    groups: &[IndexStack],
    predictor: &ContextPredictor,
    qset: &QuantizerSet<T>,
) -> Result<Decoded<T>> {
    SchemeConfig::rd(m, predictor.uses_hyper()).validate(Some(qset.max_stages()))?;
    if groups.len() != NUM_GROUPS {
        return Err(Error::Mismatch(format!(
            "expected {NUM_GROUPS} group stacks, got {}",
            groups.len()
        )));
    }
    let (c, h, w) = shape;
    if c != predictor.channels() {
        return Err(Error::Mismatch(format!(
            "stream has {c} channels, predictor expects {}",
            predictor.channels()
        )));
    }
    let gshape = (c, h / 2, w / 2);
    let n = gshape.1 * gshape.2;
    let mut timings = PhaseTimings::default();

    let t = Instant::now();
    let phi = match (predictor.uses_hyper(), hyper) {
        (true, Some(stack)) => {
            check_stack_m(stack, m, "hyper stack")?;
            let ctx = hyper_context_from_indices(hyper_quantizer(qset)?, stack, (c, h / 4, w / 4))?;
            Some(upsampled(&ctx.context)?)
        }
        (false, None) => None,
        (true, None) => return Err(Error::Mismatch("predictor expects hyper indices".into())),
        (false, Some(_)) => {
            return Err(Error::Mismatch(
                "hyper indices present but predictor has no hyper input".into(),
            ))
        }
    };
    timings.quantize_ms += elapsed_ms(t);

    let mut decoded: Vec<LatentGrid<T>> = Vec::with_capacity(NUM_GROUPS);
    for (g, stack) in groups.iter().enumerate() {
        check_stack_m(stack, m, &format!("group {} stack", g + 1))?;
        if stack.n() != n {
            return Err(Error::Mismatch(format!(
                "group {} stack has {} positions, expected {n}",
                g + 1,
                stack.n()
            )));
        }
        let t = Instant::now();
        let params = predictor.predict(g, n, &decoded, phi.as_ref())?;
        timings.autoregressive_ms += elapsed_ms(t);
        let t = Instant::now();
        let recon = qset.groups[g].dequantize(stack)?;
        timings.quantize_ms += elapsed_ms(t);
        let t = Instant::now();
        decoded.push(destandardize(&recon, &params, gshape)?);
        timings.autoregressive_ms += elapsed_ms(t);
    }
    let latent = merge_groups(&GroupedLatent {
        groups: decoded,
        origin_shape: shape,
    })?;
    Ok(Decoded { latent, timings })
}

pub fn rd_decode<T: Scalar>(
    coded: &CodedLatent<T>,
    predictor: &ContextPredictor,
    qset: &QuantizerSet<T>,
) -> Result<LatentGrid<T>> {
    rd_decode_timed(coded, predictor, qset).map(|d| d.latent)
}

pub fn rd_decode_timed<T: Scalar>(
    coded: &CodedLatent<T>,
    predictor: &ContextPredictor,
    qset: &QuantizerSet<T>,
) -> Result<Decoded<T>> {
    if coded.scheme != Scheme::Rd {
        return Err(Error::Mismatch(format!("expected an rd stream, got {}", coded.scheme)));
    }
    rd_decode_indices(
        coded.shape,
        coded.m,
        coded.hyper.as_ref(),
        &coded.groups,
        predictor,
        qset,
    )
}

/// Encodes each group with its quantizer and no context. When the set has a
/// hyper quantizer its indices are sent too, so rates match RD with the
/// hyperprior on.
pub fn iq_encode<T: Scalar>(latent: &LatentGrid<T>, qset: &QuantizerSet<T>, m: usize) -> Result<CodedLatent<T>> {
    SchemeConfig::iq(m, qset.hyper.is_some()).validate(Some(qset.max_stages()))?;
    check_latent(latent, qset.dim())?;
    let mut timings = PhaseTimings::default();
    let t = Instant::now();
    let grouped = partition_quadtree(latent)?;
    let gshape = grouped.group_shape();
    let hyper = match &qset.hyper {
        Some(q) => extract_hyper_context(latent, Some(q), m)?.indices,
        None => None,
    };
    let mut decoded = Vec::with_capacity(NUM_GROUPS);
    let mut stacks = Vec::with_capacity(NUM_GROUPS);
    for (group, q) in grouped.groups.iter().zip(&qset.groups) {
        let (stack, _) = q.quantize(&group.to_vectors(), m)?;
        let recon = q.dequantize(&stack)?;
        decoded.push(LatentGrid::from_vectors(gshape.0, gshape.1, gshape.2, &recon)?);
        stacks.push(stack);
    }
    timings.quantize_ms += elapsed_ms(t);

    let mut rate_bits = 0;
    if let (Some(s), Some(q)) = (&hyper, &qset.hyper) {
        rate_bits += stack_bits(s, q)?;
    }
    for (s, q) in stacks.iter().zip(&qset.groups) {
        rate_bits += stack_bits(s, q)?;
    }
    let reconstruction = merge_groups(&GroupedLatent {
        groups: decoded,
        origin_shape: latent.shape(),
    })?;
    Ok(CodedLatent {
        scheme: Scheme::Iq,
        m,
        shape: latent.shape(),
        hyper,
        groups: stacks,
        streams: Vec::new(),
        clamped: 0,
        reconstruction,
        rate_bits,
        timings,
    })
}

pub fn iq_decode_indices<T: Scalar>(
    shape: (usize, usize, usize),
    m: usize,
    groups: &[IndexStack],
    qset: &QuantizerSet<T>,
) -> Result<Decoded<T>> {
    SchemeConfig::iq(m, false).validate(Some(qset.max_stages()))?;
    if groups.len() != NUM_GROUPS {
        return Err(Error::Mismatch(format!(
            "expected {NUM_GROUPS} group stacks, got {}",
            groups.len()
        )));
    }
    let (c, h, w) = shape;
    let t = Instant::now();
    let mut decoded = Vec::with_capacity(NUM_GROUPS);
    for (g, (stack, q)) in groups.iter().zip(&qset.groups).enumerate() {
        check_stack_m(stack, m, &format!("group {} stack", g + 1))?;
        let recon = q.dequantize(stack)?;
        decoded.push(LatentGrid::from_vectors(c, h / 2, w / 2, &recon)?);
    }
    let latent = merge_groups(&GroupedLatent {
        groups: decoded,
        origin_shape: shape,
    })?;
    let timings = PhaseTimings {
        quantize_ms: elapsed_ms(t),
        ..Default::default()
    };
    Ok(Decoded { latent, timings })
}

pub fn iq_decode<T: Scalar>(coded: &CodedLatent<T>, qset: &QuantizerSet<T>) -> Result<LatentGrid<T>> {
    iq_decode_timed(coded, qset).map(|d| d.latent)
}

pub fn iq_decode_timed<T: Scalar>(coded: &CodedLatent<T>, qset: &QuantizerSet<T>) -> Result<Decoded<T>> {
    if coded.scheme != Scheme::Iq {
        return Err(Error::Mismatch(format!("expected an iq stream, got {}", coded.scheme)));
    }
    iq_decode_indices(coded.shape, coded.m, &coded.groups, qset)
}

fn cm_table(sigma: f64, config: &SchemeConfig) -> Result<crate::entropy::FrequencyTable> {
    discretized_gaussian_table(0.0, sigma, config.delta, CM_RADIUS, config.precision)
}

/// Scalar quantization of `(y - mu) / delta`, clamped to the table support.
fn cm_symbols<T: Scalar>(group: &LatentGrid<T>, params: &GroupParams, delta: f64) -> (Vec<usize>, u64) {
    let c = group.channels();
    let n = group.positions();
    let data = group.data();
    let r = CM_RADIUS as i64;
    let mut clamped = 0;
    let mut symbols = Vec::with_capacity(n * c);
    for p in 0..n {
        for ch in 0..c {
            let k = ((data[ch * n + p].as_f64() - params.mu[p * c + ch]) / delta).round();
            let k = if k.is_nan() {
                0
            } else {
                k.clamp(-(r as f64) - 1.0, r as f64 + 1.0) as i64
            };
            let kc = k.clamp(-r, r);
            if kc != k {
                clamped += 1;
            }
            symbols.push((kc + r) as usize);
        }
    }
    (symbols, clamped)
}

fn cm_reconstruct<T: Scalar>(
    symbols: &[usize],
    params: &GroupParams,
    delta: f64,
    shape: (usize, usize, usize),
) -> Result<LatentGrid<T>> {
    let r = CM_RADIUS as i64;
    let values: Vec<T> = symbols
        .iter()
        .zip(&params.mu)
        .map(|(&s, mu)| T::of(mu + delta * (s as i64 - r) as f64))
        .collect();
    LatentGrid::from_vectors(shape.0, shape.1, shape.2, &values)
}

/// Encodes with scalar quantization and a Gaussian context model coded by rANS.
/// With the hyperprior on, `hyper_quantizer` codes the side information at
/// `config.m` stages with fixed-length indices.
pub fn cm_encode<T: Scalar>(
    latent: &LatentGrid<T>,
    predictor: &ContextPredictor,
    hyper_quantizer: Option<&ResidualVQ<T>>,
    config: &SchemeConfig,
) -> Result<CodedLatent<T>> {
    config.validate(None)?;
    check_latent(latent, predictor.channels())?;
    let mut timings = PhaseTimings::default();
    let grouped = partition_quadtree(latent)?;
    let gshape = grouped.group_shape();
    let n = gshape.1 * gshape.2;

    let t = Instant::now();
    let hyper = if predictor.uses_hyper() {
        let q = hyper_quantizer.ok_or_else(|| Error::Mismatch("hyperprior enabled but no hyper quantizer".into()))?;
        Some(extract_hyper_context(latent, Some(q), config.m)?)
    } else {
        None
    };
    timings.quantize_ms += elapsed_ms(t);
    let phi = hyper.as_ref().map(|h| upsampled(&h.context)).transpose()?;

    let mut decoded: Vec<LatentGrid<T>> = Vec::with_capacity(NUM_GROUPS);
    let mut streams = Vec::with_capacity(NUM_GROUPS);
    let mut clamped = 0;
    for g in 0..NUM_GROUPS {
        let t = Instant::now();
        let params = predictor.predict(g, n, &decoded, phi.as_ref())?;
        timings.autoregressive_ms += elapsed_ms(t);

        let t = Instant::now();
        let (symbols, c) = cm_symbols(&grouped.groups[g], &params, config.delta);
        clamped += c;
        timings.quantize_ms += elapsed_ms(t);

        let t = Instant::now();
        let stream = rans_encode_with(&symbols, config.precision, |i| {
            Ok(Cow::Owned(cm_table(params.sigma[i], config)?))
        })?;
        timings.entropy_code_ms += elapsed_ms(t);

        let t = Instant::now();
        decoded.push(cm_reconstruct(&symbols, &params, config.delta, gshape)?);
        timings.autoregressive_ms += elapsed_ms(t);
        streams.push(stream);
    }

    let hyper_stack = hyper.and_then(|h| h.indices);
    let mut rate_bits: u64 = streams.iter().map(|s| s.coded_bits()).sum();
    if let (Some(s), Some(q)) = (&hyper_stack, hyper_quantizer) {
        rate_bits += stack_bits(s, q)?;
    }
    let reconstruction = merge_groups(&GroupedLatent {
        groups: decoded,
        origin_shape: latent.shape(),
    })?;
    Ok(CodedLatent {
        scheme: Scheme::Cm,
        m: config.m,
        shape: latent.shape(),
        hyper: hyper_stack,
        groups: Vec::new(),
        streams,
        clamped,
        reconstruction,
        rate_bits,
        timings,
    })
}

pub fn cm_decode<T: Scalar>(
    coded: &CodedLatent<T>,
    predictor: &ContextPredictor,
    hyper_quantizer: Option<&ResidualVQ<T>>,
    config: &SchemeConfig,
) -> Result<LatentGrid<T>> {
    cm_decode_timed(coded, predictor, hyper_quantizer, config).map(|d| d.latent)
}

pub fn cm_decode_timed<T: Scalar>(
    coded: &CodedLatent<T>,
    predictor: &ContextPredictor,
    hyper_quantizer: Option<&ResidualVQ<T>>,
    config: &SchemeConfig,
) -> Result<Decoded<T>> {
    config.validate(None)?;
    if coded.scheme != Scheme::Cm {
        return Err(Error::Mismatch(format!("expected a cm stream, got {}", coded.scheme)));
    }
    if coded.streams.len() != NUM_GROUPS {
        return Err(Error::Mismatch(format!(
            "expected {NUM_GROUPS} rANS streams, got {}",
            coded.streams.len()
        )));
    }
    let (c, h, w) = coded.shape;
    if c != predictor.channels() {
        return Err(Error::Mismatch(format!(
            "stream has {c} channels, predictor expects {}",
            predictor.channels()
        )));
    }
    let gshape = (c, h / 2, w / 2);
    let n = gshape.1 * gshape.2;
    let mut timings = PhaseTimings::default();

    let t = Instant::now();
    let phi = match (predictor.uses_hyper(), &coded.hyper) {
        (true, Some(stack)) => {
            let q = hyper_quantizer
                .ok_or_else(|| Error::Mismatch("hyper indices present but no hyper quantizer".into()))?;
            check_stack_m(stack, config.m, "hyper stack")?;
            Some(upsampled(
                &hyper_context_from_indices(q, stack, (c, h / 4, w / 4))?.context,
            )?)
        }
        (false, None) => None,
        (true, None) => return Err(Error::Mismatch("predictor expects hyper indices".into())),
        (false, Some(_)) => {
            return Err(Error::Mismatch(
                "hyper indices present but predictor has no hyper input".into(),
            ))
        }
    };
    timings.quantize_ms += elapsed_ms(t);

    let mut decoded: Vec<LatentGrid<T>> = Vec::with_capacity(NUM_GROUPS);
    for (g, stream) in coded.streams.iter().enumerate() {
        if stream.symbol_count as usize != n * c {
            return Err(Error::Mismatch(format!(
                "group {} stream holds {} symbols, expected {}",
                g + 1,
                stream.symbol_count,
                n * c
            )));
        }
        let t = Instant::now();
        let params = predictor.predict(g, n, &decoded, phi.as_ref())?;
        timings.autoregressive_ms += elapsed_ms(t);

        let t = Instant::now();
        let mut decoder = RansDecoder::new(stream);
        let symbols = params
            .sigma
            .iter()
            .map(|&s| decoder.decode(&cm_table(s, config)?))
            .collect::<Result<Vec<_>>>()?;
        decoder.finish()?;
        timings.entropy_code_ms += elapsed_ms(t);

        let t = Instant::now();
        decoded.push(cm_reconstruct(&symbols, &params, config.delta, gshape)?);
        timings.autoregressive_ms += elapsed_ms(t);
    }
    let latent = merge_groups(&GroupedLatent {
        groups: decoded,
        origin_shape: coded.shape,
    })?;
    Ok(Decoded { latent, timings })
}

/// Encodes `latent` with whichever scheme `config` selects.
pub fn encode<T: Scalar>(
    latent: &LatentGrid<T>,
    predictor: Option<&ContextPredictor>,
    qset: &QuantizerSet<T>,
    config: &SchemeConfig,
) -> Result<CodedLatent<T>> {
    let need = || Error::Mismatch(format!("{} requires a context predictor", config.scheme));
    match config.scheme {
        Scheme::Rd => rd_encode(latent, predictor.ok_or_else(need)?, qset, config.m),
        Scheme::Iq => iq_encode(latent, qset, config.m),
        Scheme::Cm => cm_encode(latent, predictor.ok_or_else(need)?, qset.hyper.as_ref(), config),
    }
}

/// Decodes `coded` with whichever scheme produced it.
pub fn decode_timed<T: Scalar>(
    coded: &CodedLatent<T>,
    predictor: Option<&ContextPredictor>,
    qset: &QuantizerSet<T>,
    config: &SchemeConfig,
) -> Result<Decoded<T>> {
    let need = || Error::Mismatch(format!("{} requires a context predictor", config.scheme));
    match coded.scheme {
        Scheme::Rd => rd_decode_timed(coded, predictor.ok_or_else(need)?, qset),
        Scheme::Iq => iq_decode_timed(coded, qset),
        Scheme::Cm => cm_decode_timed(coded, predictor.ok_or_else(need)?, qset.hyper.as_ref(), config),
    }
}

#[cfg(test)]
mod tests;
