//! Property experiments with their pass criteria. Each returns a
//! serializable report carrying the measured values and the verdict.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::entropy::{
    conditional_entropy_gap, entropy_gap, total_variation, ConditionalGapReport, IndexHistogram, LabeledStream,
};
use super::highrate::{high_rate_predicted_pmf, standard_normal_log_density};
use super::sweep::{evaluate, make_dataset, rd_sweep_on, Dataset, SweepConfig, SweepPoint, SweepResult};
use crate::decorrelation::{encode, train_model, Scheme, TrainedModel};
use crate::error::{invalid, Result};
use crate::latent::LatentGrid;
use crate::quantizer::{train_codebook, Codebook, Init, TrainConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::source::gauss_markov_sample;

pub const SHAPING_MAX_GAP: f64 = 0.05;
pub const DENSITY_LAW_MAX_TV: f64 = 0.1;
/// RD may exceed IQ distortion by this factor at any `m`.
pub const RD_IQ_TOLERANCE: f64 = 1.02;
/// RD must reach this fraction of IQ distortion at some `m`.
pub const RD_IQ_STRICT: f64 = 0.95;
/// Rate overhead allowance `epsilon` of the RD-vs-CM matching.
pub const MATCH_EPSILON: f64 = 0.10;
pub const MATCH_DISTORTION_SLACK: f64 = 1.05;
pub const CONDITIONAL_MAX_GAP: f64 = 0.05;

fn gaussian_vectors(n: usize, dim: usize, rng: &mut rng::Rng) -> Vec<f64> {
    (0..n * dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Codebook training on i.i.d. standard normal vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingConfig {
    pub dim: usize,
    pub k: usize,
    pub samples: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Fresh samples for the density-law histogram.
    pub eval_samples: usize,
}

impl ShapingConfig {
    /// `C = 8`, `K = 256`, 10^5 training vectors, 50 iterations, seed 1, 10^6 evaluation vectors.
    pub fn reference() -> Self {
        Self {
            dim: 8,
            k: 256,
            samples: 100_000,
            iterations: 50,
            seed: 1,
            eval_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingReport {
    pub config: ShapingConfig,
    pub initial_delta_h: f64,
    pub final_delta_h: f64,
    pub initial_mse: f64,
    pub final_mse: f64,
    pub utilization: f64,
    pub train_ms: f64,
    pub pass: bool,
}

/// Trains from a random-sample initialization and compares the index
/// entropy gap on the training set before and after.
pub fn entropy_shaping(cfg: &ShapingConfig) -> Result<(ShapingReport, Codebook<f64>)> {
    let samples = gaussian_vectors(cfg.samples, cfg.dim, &mut rng::stream(cfg.seed, 0));
    let mut tc = TrainConfig::new(cfg.k, cfg.iterations, cfg.seed);
    tc.init = Init::RandomSamples;
    let t = Instant::now();
    let trained = train_codebook(&samples, cfg.dim, &tc)?;
    let train_ms = ms_since(t);
    let initial = IndexHistogram::from_indices(&trained.initial.nn_quantize(&samples)?, cfg.k)?;
    let last = IndexHistogram::from_indices(&trained.codebook.nn_quantize(&samples)?, cfg.k)?;
    let initial_delta_h = entropy_gap(&initial)?;
    let final_delta_h = entropy_gap(&last)?;
    let report = ShapingReport {
        config: cfg.clone(),
        initial_delta_h,
        final_delta_h,
        initial_mse: trained.history[0],
        final_mse: trained.mse,
        utilization: last.utilization(),
        train_ms,
        pass: final_delta_h <= SHAPING_MAX_GAP && final_delta_h <= initial_delta_h,
    };
    Ok((report, trained.codebook))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityLawReport {
    pub samples: usize,
    pub exponent: f64,
    pub total_variation: f64,
    pub predicted_delta_h: f64,
    pub empirical_delta_h: f64,
    pub pass: bool,
}

/// Compares the high-rate index pmf of `codebook` with its index histogram on
/// fresh standard normal samples.
pub fn density_law(cfg: &ShapingConfig, codebook: &Codebook<f64>) -> Result<DensityLawReport> {
    let dim = codebook.dim();
    let predicted = high_rate_predicted_pmf(codebook, standard_normal_log_density, dim)?;
    let mut r = rng::stream(cfg.seed, 1);
    let mut counts = vec![0u64; codebook.len()];
    let mut v = vec![0.0; dim];
    for _ in 0..cfg.eval_samples {
        v.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut r));
        counts[codebook.nearest(&v).0] += 1;
    }
    let hist = IndexHistogram::from_counts(counts)?;
    let tv = total_variation(&predicted.pmf, &hist.pmf())?;
    Ok(DensityLawReport {
        samples: cfg.eval_samples,
        exponent: predicted.exponent,
        total_variation: tv,
        predicted_delta_h: predicted.delta_h,
        empirical_delta_h: entropy_gap(&hist)?,
        pass: tv <= DENSITY_LAW_MAX_TV,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdIqRow {
    pub m: usize,
    pub rate_bits: f64,
    pub rd_mse: f64,
    pub iq_mse: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationReport {
    pub rows: Vec<RdIqRow>,
    pub never_worse: bool,
    pub strictly_better_somewhere: bool,
    pub pass: bool,
}

fn scheme_points(points: &[SweepPoint], scheme: Scheme) -> Vec<&SweepPoint> {
    points.iter().filter(|p| p.scheme == scheme).collect()
}

/// RD against IQ at equal fixed-length rate, one row per `m`.
pub fn decorrelation_gain(points: &[SweepPoint]) -> Result<DecorrelationReport> {
    let rd = scheme_points(points, Scheme::Rd);
    let iq = scheme_points(points, Scheme::Iq);
    if rd.is_empty() || rd.len() != iq.len() {
        return Err(invalid("need matching RD and IQ operating points"));
    }
    let mut rows = Vec::with_capacity(rd.len());
    for (a, b) in rd.iter().zip(&iq) {
        if a.param != b.param || a.rate_bits != b.rate_bits {
            return Err(invalid(format!("RD m={} and IQ m={} differ in rate", a.param, b.param)));
        }
        rows.push(RdIqRow {
            m: a.param as usize,
            rate_bits: a.rate_bits,
            rd_mse: a.mse,
            iq_mse: b.mse,
            ratio: a.mse / b.mse,
        });
    }
    let never_worse = rows.iter().all(|r| r.ratio <= RD_IQ_TOLERANCE);
    let strictly_better_somewhere = rows.iter().any(|r| r.ratio <= RD_IQ_STRICT);
    Ok(DecorrelationReport {
        rows,
        never_worse,
        strictly_better_somewhere,
        pass: never_worse && strictly_better_somewhere,
    })
}

/// An RD model family member: per-group codeword counts and stage count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub group_ks: Vec<usize>,
    pub stages: usize,
}

/// Single-stage ladders spanning rates from zero up. Group 1 gets `a` bits
/// per index; groups 2 and 3 get between `a - 4` and `a` bits and group 4,
/// which has the most context, the same or one bit less.
pub fn ladder_family(max_bits: u32) -> Vec<Ladder> {
    let mut out = Vec::new();
    for a in 0..=max_bits {
        for b in a.saturating_sub(4)..=a {
            for d in [1, 0] {
                if d > b {
                    continue;
                }
                let c = b - d;
                out.push(Ladder {
                    group_ks: vec![1 << a, 1 << b, 1 << b, 1 << c],
                    stages: 1,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub ladder: Ladder,
    pub m: usize,
    pub bits_per_element: f64,
    pub mse: f64,
}

/// Trains an RD model per ladder and measures every stage count.
pub fn rd_family<T: Scalar>(cfg: &SweepConfig, data: &Dataset<T>, ladders: &[Ladder]) -> Result<Vec<FamilyPoint>> {
    let mut out = Vec::new();
    for ladder in ladders {
        let mut mc = cfg.model_config(Scheme::Rd, 1.0);
        mc.group_ks = ladder.group_ks.clone();
        mc.stages = ladder.stages;
        let model = train_model(&data.train, &mc)?;
        for m in 1..=ladder.stages {
            let p = evaluate(&model, &data.holdout, &mc.operating_point(m))?;
            out.push(FamilyPoint {
                ladder: ladder.clone(),
                m,
                bits_per_element: p.bits_per_element,
                mse: p.mse,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub delta: f64,
    pub cm_bits_per_element: f64,
    pub cm_mse: f64,
    pub rate_budget: f64,
    pub distortion_budget: f64,
    /// Lowest-rate RD point within both budgets.
    pub matched: Option<FamilyPoint>,
    /// Lowest-distortion RD point within the rate budget.
    pub closest: Option<FamilyPoint>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub epsilon: f64,
    pub rows: Vec<MatchRow>,
    pub candidates: usize,
    pub pass: bool,
}

/// For each CM operating point, looks for an RD point with rate at most
/// `R_CM / (1 - epsilon)` and distortion at most `1.05 D_CM`.
pub fn rd_matches_cm(points: &[SweepPoint], family: &[FamilyPoint]) -> Result<MatchReport> {
    let cm = scheme_points(points, Scheme::Cm);
    if cm.is_empty() {
        return Err(invalid("no CM operating points"));
    }
    let rows: Vec<MatchRow> = cm
        .iter()
        .map(|p| {
            let rate_budget = p.bits_per_element / (1.0 - MATCH_EPSILON);
            let distortion_budget = MATCH_DISTORTION_SLACK * p.mse;
            let affordable: Vec<&FamilyPoint> = family.iter().filter(|f| f.bits_per_element <= rate_budget).collect();
            let matched = affordable
                .iter()
                .filter(|f| f.mse <= distortion_budget)
                .min_by(|a, b| a.bits_per_element.total_cmp(&b.bits_per_element))
                .map(|f| (*f).clone());
            let closest = affordable
                .iter()
                .min_by(|a, b| a.mse.total_cmp(&b.mse))
                .map(|f| (*f).clone());
            MatchRow {
                delta: p.param,
                cm_bits_per_element: p.bits_per_element,
                cm_mse: p.mse,
                rate_budget,
                distortion_budget,
                pass: matched.is_some(),
                matched,
                closest,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(MatchReport {
        epsilon: MATCH_EPSILON,
        rows,
        candidates: family.len(),
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalLevel {
    pub m: usize,
    pub gap: ConditionalGapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalReport {
    pub images: usize,
    /// One entry per stage count.
    pub levels: Vec<ConditionalLevel>,
    /// Largest conditional gap over all stage counts.
    pub worst: f64,
    pub pass: bool,
}

/// Index streams of an RD model at `m` stages. Group 1 streams carry no
/// context; every stage of groups 2-4 is labeled with the co-located group-1
/// stage-1 index.
pub fn labeled_streams<T: Scalar>(
    model: &TrainedModel<T>,
    latents: &[LatentGrid<T>],
    m: usize,
) -> Result<Vec<LabeledStream>> {
    let qset = model
        .quantizers
        .as_ref()
        .ok_or_else(|| invalid("model has no quantizers"))?;
    let op = model.config.operating_point(m);
    let mut streams: Vec<LabeledStream> = Vec::new();
    for (g, q) in qset.groups.iter().enumerate() {
        for (t, k) in q.ks().into_iter().take(m).enumerate() {
            streams.push(LabeledStream {
                name: format!("group{}.stage{}", g + 1, t + 1),
                k,
                indices: Vec::new(),
                labels: Vec::new(),
            });
        }
    }
    for latent in latents {
        let coded = encode(latent, model.predictor.as_ref(), qset, &op)?;
        let context = coded.groups[0].stage(0).to_vec();
        let mut s = 0;
        for (g, stack) in coded.groups.iter().enumerate() {
            for idx in stack.stages() {
                streams[s].indices.extend_from_slice(idx);
                if g > 0 {
                    streams[s].labels.extend_from_slice(&context);
                }
                s += 1;
            }
        }
    }
    Ok(streams)
}

/// Conditional gap of `model` at every stage count, on `images` fresh
/// latents from the sweep source.
pub fn conditional_gap<T: Scalar>(
    cfg: &SweepConfig,
    model: &TrainedModel<T>,
    images: usize,
) -> Result<ConditionalReport> {
    // Labels far above those used by the training and held-out splits.
    let latents: Vec<LatentGrid<T>> = (0..images as u64)
        .map(|i| gauss_markov_sample(&cfg.source.with_seed(rng::derive_seed(cfg.source.seed, (1 << 40) + i))))
        .collect::<Result<_>>()?;
    let stages = model.quantizers.as_ref().map_or(0, |q| q.max_stages());
    let levels: Vec<ConditionalLevel> = (1..=stages)
        .map(|m| {
            Ok(ConditionalLevel {
                m,
                gap: conditional_entropy_gap(&labeled_streams(model, &latents, m)?)?,
            })
        })
        .collect::<Result<_>>()?;
    let worst = levels.iter().map(|l| l.gap.delta_h_bar).fold(0.0, f64::max);
    Ok(ConditionalReport {
        images,
        pass: !levels.is_empty() && worst <= CONDITIONAL_MAX_GAP,
        levels,
        worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub scheme: Scheme,
    pub operating_points: usize,
    /// Decode time per image per operating point, by phase.
    pub decode_ms: f64,
    pub decode_entropy_code_ms: f64,
    pub encode_ms: f64,
    pub encode_entropy_code_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rd: LatencyRow,
    pub cm: LatencyRow,
    pub cm_entropy_coding_exceeds_rd: bool,
    pub rd_decode_faster: bool,
    pub pass: bool,
}

fn latency_row(points: &[&SweepPoint], scheme: Scheme, count: usize) -> LatencyRow {
    let used = &points[..count];
    let per = (used.iter().map(|p| p.images).sum::<usize>()).max(1) as f64;
    let sum = |f: &dyn Fn(&SweepPoint) -> f64| used.iter().map(|p| f(p)).sum::<f64>() / per;
    LatencyRow {
        scheme,
        operating_points: count,
        decode_ms: sum(&|p| p.decode.total_ms()),
        decode_entropy_code_ms: sum(&|p| p.decode.entropy_code_ms),
        encode_ms: sum(&|p| p.encode.total_ms()),
        encode_entropy_code_ms: sum(&|p| p.encode.entropy_code_ms),
    }
}

/// Phase-time ordering of RD and CM over the same number of operating points.
pub fn latency_structure(points: &[SweepPoint]) -> Result<LatencyReport> {
    let rd = scheme_points(points, Scheme::Rd);
    let cm = scheme_points(points, Scheme::Cm);
    let count = rd.len().min(cm.len());
    if count == 0 {
        return Err(invalid("need RD and CM operating points"));
    }
    let rd = latency_row(&rd, Scheme::Rd, count);
    let cm = latency_row(&cm, Scheme::Cm, count);
    let cm_entropy_coding_exceeds_rd = cm.decode_entropy_code_ms > rd.decode_entropy_code_ms
        && cm.encode_entropy_code_ms > rd.encode_entropy_code_ms
        && rd.decode_entropy_code_ms == 0.0;
    let rd_decode_faster = rd.decode_ms < cm.decode_ms;
    Ok(LatencyReport {
        pass: cm_entropy_coding_exceeds_rd && rd_decode_faster,
        rd,
        cm,
        cm_entropy_coding_exceeds_rd,
        rd_decode_faster,
    })
}

/// Source-level claims [`source_experiments`] can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceClaims {
    pub decorrelation: bool,
    pub matching: bool,
    pub conditional: bool,
    pub latency: bool,
}

impl SourceClaims {
    pub fn all() -> Self {
        Self {
            decorrelation: true,
            matching: true,
            conditional: true,
            latency: true,
        }
    }

    pub fn none() -> Self {
        Self {
            decorrelation: false,
            matching: false,
            conditional: false,
            latency: false,
        }
    }

    /// Schemes the sweep must cover.
    pub fn schemes(&self) -> Vec<Scheme> {
        let mut out = vec![Scheme::Rd];
        if self.decorrelation {
            out.push(Scheme::Iq);
        }
        if self.matching || self.latency {
            out.push(Scheme::Cm);
        }
        out
    }
}

/// Everything measured on the reference source; reports not requested are absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceExperiments {
    pub config: SweepConfig,
    pub train_seeds: Vec<u64>,
    pub holdout_seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
    pub decorrelation: Option<DecorrelationReport>,
    pub matching: Option<MatchReport>,
    pub conditional: Option<ConditionalReport>,
    pub latency: Option<LatencyReport>,
    pub sweep_ms: f64,
    pub family_ms: f64,
}

/// Options of [`source_experiments`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceExperimentConfig {
    pub sweep: SweepConfig,
    pub claims: SourceClaims,
    pub family: Vec<Ladder>,
    pub conditional_images: usize,
}

impl SourceExperimentConfig {
    pub fn reference(seed: u64) -> Self {
        Self {
            sweep: SweepConfig::reference(seed),
            claims: SourceClaims::all(),
            family: ladder_family(FAMILY_MAX_BITS),
            conditional_images: 128,
        }
    }
}

/// Largest group-1 index size of the reference RD family.
pub const FAMILY_MAX_BITS: u32 = 7;

/// Runs the sweep once over the schemes the requested claims need and
/// derives the source-level reports from it.
pub fn source_experiments(cfg: &SourceExperimentConfig) -> Result<(SourceExperiments, SweepResult<f64>)> {
    let mut sweep = cfg.sweep.clone();
    sweep.schemes = cfg.claims.schemes();
    let data: Dataset<f64> = make_dataset(&sweep.source, sweep.train_images, sweep.holdout_images)?;
    let t = Instant::now();
    let result = rd_sweep_on(&sweep, &data)?;
    let sweep_ms = ms_since(t);

    let t = Instant::now();
    let matching = if cfg.claims.matching {
        let mut family = rd_family(&sweep, &data, &cfg.family)?;
        for p in scheme_points(&result.points, Scheme::Rd) {
            family.push(FamilyPoint {
                ladder: Ladder {
                    group_ks: sweep.group_ks.clone(),
                    stages: sweep.stages,
                },
                m: p.param as usize,
                bits_per_element: p.bits_per_element,
                mse: p.mse,
            });
        }
        Some(rd_matches_cm(&result.points, &family)?)
    } else {
        None
    };
    let family_ms = ms_since(t);

    let conditional = if cfg.claims.conditional {
        let rd_model = result
            .models
            .iter()
            .find(|m| m.config.scheme == Scheme::Rd)
            .ok_or_else(|| invalid("sweep trained no RD model"))?;
        Some(conditional_gap(&sweep, rd_model, cfg.conditional_images)?)
    } else {
        None
    };
    let report = SourceExperiments {
        config: sweep.clone(),
        train_seeds: result.train_seeds.clone(),
        holdout_seeds: result.holdout_seeds.clone(),
        decorrelation: cfg
            .claims
            .decorrelation
            .then(|| decorrelation_gain(&result.points))
            .transpose()?,
        matching,
        conditional,
        latency: cfg
            .claims
            .latency
            .then(|| latency_structure(&result.points))
            .transpose()?,
        points: result.points.clone(),
        sweep_ms,
        family_ms,
    };
    Ok((report, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decorrelation::{ModelConfig, PhaseTimings};
    use crate::source::SourceConfig;

    fn point(scheme: Scheme, param: f64, bits: f64, mse: f64) -> SweepPoint {
        SweepPoint {
            scheme,
            param,
            rate_bits: bits * 1024.0,
            bits_per_element: bits,
            bpp: bits / 256.0,
            mse,
            clamped: 0,
            images: 2,
            encode: PhaseTimings::default(),
            decode: PhaseTimings::default(),
        }
    }

    fn family(bits: f64, mse: f64) -> FamilyPoint {
        FamilyPoint {
            ladder: Ladder {
                group_ks: vec![2; 4],
                stages: 1,
            },
            m: 1,
            bits_per_element: bits,
            mse,
        }
    }

    #[test]
    fn decorrelation_needs_both_conditions() {
        let pts = |rd: [f64; 2]| {
            vec![
                point(Scheme::Rd, 1.0, 1.0, rd[0]),
                point(Scheme::Rd, 2.0, 2.0, rd[1]),
                point(Scheme::Iq, 1.0, 1.0, 1.0),
                point(Scheme::Iq, 2.0, 2.0, 1.0),
            ]
        };
        assert!(decorrelation_gain(&pts([1.0, 0.9])).unwrap().pass);
        let r = decorrelation_gain(&pts([1.03, 0.5])).unwrap();
        assert!(!r.never_worse && r.strictly_better_somewhere && !r.pass);
        let r = decorrelation_gain(&pts([1.01, 0.96])).unwrap();
        assert!(r.never_worse && !r.strictly_better_somewhere && !r.pass);
    }

    #[test]
    fn decorrelation_rejects_unequal_rates() {
        let pts = vec![point(Scheme::Rd, 1.0, 1.0, 0.5), point(Scheme::Iq, 1.0, 2.0, 1.0)];
        assert!(decorrelation_gain(&pts).is_err());
    }

    #[test]
    fn matching_respects_both_budgets() {
        let cm = vec![point(Scheme::Cm, 0.5, 0.9, 0.1)];
        // Budgets: rate <= 1.0, distortion <= 0.105.
        let r = rd_matches_cm(&cm, &[family(1.0, 0.105), family(0.5, 0.2)]).unwrap();
        assert!(r.pass);
        assert_eq!(r.rows[0].matched.as_ref().unwrap().bits_per_element, 1.0);
        let r = rd_matches_cm(&cm, &[family(1.01, 0.01), family(0.9, 0.11)]).unwrap();
        assert!(!r.pass);
        assert_eq!(r.rows[0].closest.as_ref().unwrap().mse, 0.11);
    }

    #[test]
    fn matching_picks_the_cheapest_qualifier() {
        let cm = vec![point(Scheme::Cm, 1.0, 2.0, 0.1)];
        let r = rd_matches_cm(&cm, &[family(2.2, 0.01), family(1.5, 0.1), family(1.8, 0.05)]).unwrap();
        assert_eq!(r.rows[0].matched.as_ref().unwrap().bits_per_element, 1.5);
    }

    #[test]
    fn latency_orders_phases() {
        let mut rd = point(Scheme::Rd, 1.0, 1.0, 1.0);
        rd.decode.quantize_ms = 2.0;
        rd.encode.quantize_ms = 2.0;
        let mut cm = point(Scheme::Cm, 1.0, 1.0, 1.0);
        cm.decode.entropy_code_ms = 6.0;
        cm.encode.entropy_code_ms = 6.0;
        let extra = point(Scheme::Cm, 0.5, 2.0, 0.5);
        let r = latency_structure(&[rd.clone(), cm.clone(), extra]).unwrap();
        assert!(r.pass);
        assert_eq!(r.cm.operating_points, 1);
        assert_eq!(r.rd.decode_ms, 1.0);
        assert_eq!(r.cm.decode_entropy_code_ms, 3.0);
        rd.decode.quantize_ms = 7.0;
        assert!(!latency_structure(&[rd, cm]).unwrap().rd_decode_faster);
    }

    #[test]
    fn ladder_family_spans_zero_rate_to_max() {
        let fam = ladder_family(3);
        assert!(fam.iter().all(|l| l.stages == 1 && l.group_ks.len() == 4));
        assert!(fam.contains(&Ladder {
            group_ks: vec![1, 1, 1, 1],
            stages: 1
        }));
        assert!(fam.contains(&Ladder {
            group_ks: vec![8, 8, 8, 8],
            stages: 1
        }));
        assert!(fam.contains(&Ladder {
            group_ks: vec![4, 1, 1, 1],
            stages: 1
        }));
        for l in &fam {
            let (a, b, c) = (l.group_ks[0], l.group_ks[1], l.group_ks[3]);
            assert!(b <= a && a <= 16 * b && (c == b || 2 * c == b));
            assert_eq!(l.group_ks[1], l.group_ks[2]);
        }
        let mut keys: Vec<_> = fam.iter().map(|l| l.group_ks.clone()).collect();
        keys.dedup();
        assert_eq!(keys.len(), fam.len());
    }

    #[test]
    fn streams_are_labeled_by_group_one() {
        let source = SourceConfig::new((1, 16, 16), 0.9, 1.0, 3);
        let data: Vec<LatentGrid<f64>> = (0..8)
            .map(|i| gauss_markov_sample(&source.with_seed(i)).unwrap())
            .collect();
        let mut mc = ModelConfig::new(Scheme::Rd, vec![4, 4, 4, 4], 2, 5);
        mc.iterations = 5;
        let model = train_model(&data, &mc).unwrap();
        let streams = labeled_streams(&model, &data[..2], 2).unwrap();
        assert_eq!(streams.len(), 8);
        assert_eq!(streams[0].name, "group1.stage1");
        assert!(streams[0].labels.is_empty() && streams[1].labels.is_empty());
        assert_eq!(streams[0].indices.len(), 2 * 64);
        for s in &streams[2..] {
            assert_eq!(s.labels, streams[0].indices);
        }
    }
}
