//! Rate–distortion sweeps over trained schemes on synthetic data.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::bdrate::{RDCurve, RDPoint};
use super::entropy::{entropy_gap, IndexHistogram};
use crate::bitstream::F_Y;
use crate::decorrelation::{
    decode_timed, encode, train_model, ModelConfig, PhaseTimings, Scheme, SchemeConfig, TrainedModel, CM_DELTAS,
    CM_PRECISION, DEFAULT_RIDGE,
};
use crate::error::{invalid, Error, Result};
use crate::latent::LatentGrid;
use crate::quantizer::QuantizerSet;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::source::{gauss_markov_sample, SourceConfig};

/// Training and held-out samples drawn from one source.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub train: Vec<LatentGrid<T>>,
    pub holdout: Vec<LatentGrid<T>>,
    pub train_seeds: Vec<u64>,
    pub holdout_seeds: Vec<u64>,
}

/// Draws `train` and `holdout` images with seeds derived from `source.seed`.
/// Training seeds use even labels and held-out seeds odd ones.
pub fn make_dataset<T: Scalar>(source: &SourceConfig, train: usize, holdout: usize) -> Result<Dataset<T>> {
    source.validate()?;
    let train_seeds: Vec<u64> = (0..train as u64).map(|i| derive_seed(source.seed, 2 * i)).collect();
    let holdout_seeds: Vec<u64> = (0..holdout as u64)
        .map(|i| derive_seed(source.seed, 2 * i + 1))
        .collect();
    if train_seeds.iter().any(|s| holdout_seeds.contains(s)) {
        return Err(invalid("training and held-out seeds collide"));
    }
    let draw = |seeds: &[u64]| -> Result<Vec<LatentGrid<T>>> {
        seeds
            .iter()
            .map(|&s| gauss_markov_sample(&source.with_seed(s)))
            .collect()
    };
    Ok(Dataset {
        train: draw(&train_seeds)?,
        holdout: draw(&holdout_seeds)?,
        train_seeds,
        holdout_seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub source: SourceConfig,
    pub train_images: usize,
    pub holdout_images: usize,
    pub schemes: Vec<Scheme>,
    pub group_ks: Vec<usize>,
    pub hyper_k: Option<usize>,
    pub stages: usize,
    pub iterations: usize,
    pub deltas: Vec<f64>,
    pub ridge: f64,
    pub precision: u32,
}

impl SweepConfig {
    /// The ρ = 0.9, 1×128×128 source with the 256/128/64/32 ladder and three stages.
    pub fn reference(seed: u64) -> Self {
        Self {
            source: SourceConfig::new((1, 128, 128), 0.9, 1.0, seed),
            train_images: 16,
            holdout_images: 8,
            schemes: vec![Scheme::Rd, Scheme::Iq, Scheme::Cm],
            group_ks: vec![256, 128, 64, 32],
            hyper_k: None,
            stages: 3,
            iterations: 50,
            deltas: CM_DELTAS.to_vec(),
            ridge: DEFAULT_RIDGE,
            precision: CM_PRECISION,
        }
    }

    pub fn model_config(&self, scheme: Scheme, delta: f64) -> ModelConfig {
        ModelConfig {
            scheme,
            group_ks: self.group_ks.clone(),
            hyper_k: self.hyper_k,
            stages: self.stages,
            iterations: self.iterations,
            seed: self.source.seed,
            ridge: self.ridge,
            delta,
            precision: self.precision,
        }
    }
}

/// Measured performance of one operating point, averaged over held-out images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: Scheme,
    /// `m` for RD/IQ, the step for CM.
    pub param: f64,
    /// Mean coded size per image.
    pub rate_bits: f64,
    pub bits_per_element: f64,
    /// Rate per pixel of the image the latent stands for (`F_Y` downsampling).
    pub bpp: f64,
    pub mse: f64,
    pub clamped: u64,
    pub images: usize,
    pub encode: PhaseTimings,
    pub decode: PhaseTimings,
}

impl SweepPoint {
    pub fn rd_point(&self) -> RDPoint {
        RDPoint {
            param: self.param,
            rate: self.bpp,
            distortion: self.mse,
        }
    }
}

/// Encodes and decodes every held-out image at one operating point. Fails if
/// any decode differs from the encoder's reconstruction.
pub fn evaluate<T: Scalar>(
    model: &TrainedModel<T>,
    holdout: &[LatentGrid<T>],
    op: &SchemeConfig,
) -> Result<SweepPoint> {
    if holdout.is_empty() {
        return Err(invalid("no held-out images"));
    }
    let empty;
    let qset = match &model.quantizers {
        Some(q) => q,
        None => {
            empty = QuantizerSet {
                groups: Vec::new(),
                hyper: model.hyper.clone(),
            };
            &empty
        }
    };
    let mut encode_t = PhaseTimings::default();
    let mut decode_t = PhaseTimings::default();
    let (mut bits, mut mse, mut clamped, mut elements) = (0.0, 0.0, 0, 0usize);
    let (c, h, w) = holdout[0].shape();
    for latent in holdout {
        let coded = encode(latent, model.predictor.as_ref(), qset, op)?;
        let decoded = decode_timed(&coded, model.predictor.as_ref(), qset, op)?;
        if decoded.latent != coded.reconstruction {
            return Err(Error::Mismatch(format!(
                "{} decoder diverged from the encoder",
                op.scheme
            )));
        }
        encode_t.add(&coded.timings);
        decode_t.add(&decoded.timings);
        bits += coded.rate_bits as f64;
        mse += latent.mse(&coded.reconstruction)?;
        clamped += coded.clamped;
        elements += c * h * w;
    }
    let images = holdout.len() as f64;
    let rate_bits = bits / images;
    Ok(SweepPoint {
        scheme: op.scheme,
        param: if op.scheme == Scheme::Cm { op.delta } else { op.m as f64 },
        rate_bits,
        bits_per_element: bits / elements as f64,
        bpp: rate_bits / (h * w * F_Y * F_Y) as f64,
        mse: mse / images,
        clamped,
        images: holdout.len(),
        encode: encode_t,
        decode: decode_t,
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult<T> {
    pub points: Vec<SweepPoint>,
    pub curves: Vec<RDCurve>,
    /// RD and IQ models, and one CM model per step.
    pub models: Vec<TrainedModel<T>>,
    pub train_seeds: Vec<u64>,
    pub holdout_seeds: Vec<u64>,
}

/// Trains every requested scheme and measures its operating points: `m` in
/// `1..=stages` for RD and IQ, every step of `deltas` for CM (one model per step).
pub fn rd_sweep<T: Scalar>(cfg: &SweepConfig) -> Result<SweepResult<T>> {
    let data = make_dataset::<T>(&cfg.source, cfg.train_images, cfg.holdout_images)?;
    rd_sweep_on(cfg, &data)
}

pub fn rd_sweep_on<T: Scalar>(cfg: &SweepConfig, data: &Dataset<T>) -> Result<SweepResult<T>> {
    let mut points = Vec::new();
    let mut curves = Vec::new();
    let mut models = Vec::new();
    for &scheme in &cfg.schemes {
        let mut scheme_points = Vec::new();
        match scheme {
            Scheme::Rd | Scheme::Iq => {
                let mc = cfg.model_config(scheme, 1.0);
                let model = train_model(&data.train, &mc)?;
                for m in 1..=cfg.stages {
                    scheme_points.push(evaluate(&model, &data.holdout, &mc.operating_point(m))?);
                }
                models.push(model);
            }
            Scheme::Cm => {
                for &delta in &cfg.deltas {
                    let mc = cfg.model_config(scheme, delta);
                    let model = train_model(&data.train, &mc)?;
                    scheme_points.push(evaluate(&model, &data.holdout, &mc.operating_point(cfg.stages))?);
                    models.push(model);
                }
            }
        }
        let rd: Vec<RDPoint> = scheme_points.iter().map(|p| p.rd_point()).collect();
        if rd.len() >= 2 {
            curves.push(RDCurve::new(scheme.name(), rd)?);
        }
        points.extend(scheme_points);
    }
    Ok(SweepResult {
        points,
        curves,
        models,
        train_seeds: data.train_seeds.clone(),
        holdout_seeds: data.holdout_seeds.clone(),
    })
}

pub const RD_CSV_HEADER: &str = "scheme,m_or_delta,rate_bits,bpp,mse";

pub fn write_rd_csv<W: Write>(points: &[SweepPoint], mut out: W) -> Result<()> {
    writeln!(out, "{RD_CSV_HEADER}")?;
    for p in points {
        writeln!(out, "{},{},{},{},{}", p.scheme, p.param, p.rate_bits, p.bpp, p.mse)?;
    }
    Ok(())
}

/// Reads `rd_curves.csv` rows into one curve per scheme (in order of first appearance).
/// The `bpp` column is the rate axis.
pub fn read_rd_csv<R: BufRead>(input: R) -> Result<Vec<RDCurve>> {
    let fmt = |detail: String| Error::Format {
        what: "R-D csv",
        detail,
    };
    let mut groups: Vec<(String, Vec<RDPoint>)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("scheme")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(fmt(format!("line {}: expected 5 columns, got {}", i + 1, cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| fmt(format!("line {}: '{s}': {e}", i + 1)));
        let point = RDPoint {
            param: num(cols[1])?,
            rate: num(cols[3])?,
            distortion: num(cols[4])?,
        };
        match groups.iter_mut().find(|(s, _)| s == cols[0]) {
            Some((_, pts)) => pts.push(point),
            None => groups.push((cols[0].to_string(), vec![point])),
        }
    }
    if groups.is_empty() {
        return Err(fmt("no data rows".into()));
    }
    groups.into_iter().map(|(s, pts)| RDCurve::new(s, pts)).collect()
}

/// One row of the per-codebook entropy report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub quantizer: String,
    pub stage: usize,
    pub k: usize,
    pub utilization: f64,
    pub delta_h: f64,
}

/// Index statistics of each stage of each RVQ in `model`, on held-out data at full depth.
pub fn entropy_report<T: Scalar>(model: &TrainedModel<T>, holdout: &[LatentGrid<T>]) -> Result<Vec<EntropyRow>> {
    let Some(qset) = &model.quantizers else {
        return Ok(Vec::new());
    };
    let op = model.config.operating_point(qset.max_stages());
    let mut streams: Vec<(String, Vec<usize>, Vec<Vec<u32>>)> = Vec::new();
    for latent in holdout {
        let coded = encode(latent, model.predictor.as_ref(), qset, &op)?;
        let mut named: Vec<(String, &crate::quantizer::IndexStack, Vec<usize>)> = Vec::new();
        if let (Some(h), Some(q)) = (&coded.hyper, &qset.hyper) {
            named.push(("hyper".into(), h, q.ks()));
        }
        for (g, (s, q)) in coded.groups.iter().zip(&qset.groups).enumerate() {
            named.push((format!("group{}", g + 1), s, q.ks()));
        }
        for (name, stack, ks) in named {
            let entry = match streams.iter_mut().position(|(n, _, _)| *n == name) {
                Some(i) => &mut streams[i],
                None => {
                    streams.push((name, ks, vec![Vec::new(); stack.m()]));
                    streams.last_mut().unwrap()
                }
            };
            for (t, idx) in stack.stages().iter().enumerate() {
                entry.2[t].extend_from_slice(idx);
            }
        }
    }
    let mut rows = Vec::new();
    for (name, ks, stages) in streams {
        for (t, idx) in stages.iter().enumerate() {
            let hist = IndexHistogram::from_indices(idx, ks[t])?;
            let delta_h = if ks[t] >= 2 { entropy_gap(&hist)? } else { 0.0 };
            rows.push(EntropyRow {
                quantizer: name.clone(),
                stage: t + 1,
                k: ks[t],
                utilization: hist.utilization(),
                delta_h,
            });
        }
    }
    Ok(rows)
}

pub fn write_entropy_csv<W: Write>(rows: &[EntropyRow], mut out: W) -> Result<()> {
    writeln!(out, "quantizer,stage,k,utilization,delta_h,normalized_entropy")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.quantizer,
            r.stage,
            r.k,
            r.utilization,
            r.delta_h,
            1.0 - r.delta_h
        )?;
    }
    Ok(())
}
