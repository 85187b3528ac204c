use super::*;
use crate::entropy::FrequencyTable;
use crate::quantizer::{train_rvq, Codebook};
use crate::rng;
use crate::source::{gauss_markov_sample, SourceConfig};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn gm(seed: u64, rho: f64, h: usize) -> LatentGrid<f64> {
    gauss_markov_sample(&SourceConfig::new((1, h, h), rho, 1.0, seed)).unwrap()
}

fn small_qset(seed: u64) -> QuantizerSet<f64> {
    let mut r = rng::seeded(seed);
    let samples: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut r)).collect();
    let groups = (0..4)
        .map(|g| train_rvq(&samples, 1, &[8, 4], 10, g).unwrap())
        .collect();
    QuantizerSet::new(groups, None).unwrap()
}

#[test]
fn identity_predictor_reduces_rd_to_iq() {
    let qset = small_qset(1);
    let y = gm(5, 0.9, 32);
    let p = ContextPredictor::identity(1, false);
    for m in 1..=2 {
        let rd = rd_encode(&y, &p, &qset, m).unwrap();
        let iq = iq_encode(&y, &qset, m).unwrap();
        assert_eq!(rd.groups, iq.groups);
        assert_eq!(rd.reconstruction, iq.reconstruction);
        assert_eq!(rd.rate_bits, iq.rate_bits);
    }
}

#[test]
fn affine_round_trip_without_quantization() {
    let y = gm(2, 0.9, 16);
    let g = partition_quadtree(&y).unwrap().groups.remove(1);
    let n = g.positions();
    let params = GroupParams {
        mu: (0..n).map(|i| (i as f64 * 0.37).sin()).collect(),
        sigma: (0..n).map(|i| 0.25 + (i % 7) as f64 * 0.5).collect(),
    };
    let back = destandardize(&standardize(&g, &params), &params, g.shape()).unwrap();
    for (a, b) in back.data().iter().zip(g.data()) {
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0));
    }
    // Power-of-two scales make the round trip exact.
    let pow2 = GroupParams {
        mu: vec![0.0; n],
        sigma: vec![0.5; n],
    };
    assert_eq!(destandardize(&standardize(&g, &pow2), &pow2, g.shape()).unwrap(), g);
}

#[test]
fn rd_decode_matches_encoder() {
    let data: Vec<_> = (0..6).map(|s| gm(100 + s, 0.9, 32)).collect();
    let mut cfg = ModelConfig::new(Scheme::Rd, vec![8, 8, 4, 4], 2, 3);
    cfg.iterations = 10;
    let model = train_model(&data, &cfg).unwrap();
    let (p, q) = (model.predictor.as_ref().unwrap(), model.quantizers.as_ref().unwrap());
    let y = gm(999, 0.9, 32);
    for m in 1..=2 {
        let coded = rd_encode(&y, p, q, m).unwrap();
        assert_eq!(rd_decode(&coded, p, q).unwrap(), coded.reconstruction);
        assert_eq!(coded.rate_bits, 256 * m as u64 * (3 + 3 + 2 + 2));
    }
    let mut coded = rd_encode(&y, p, q, 2).unwrap();
    coded.m = 1;
    assert!(rd_decode(&coded, p, q).is_err());
    assert!(rd_encode(&y, p, q, 3).is_err());
    assert!(rd_encode(&y, p, q, 0).is_err());
}

#[test]
fn duplicated_group_is_predicted_exactly() {
    // Group 1 takes 4 values that an 8-codeword quantizer (one pinned at
    // zero) can hit exactly, and group 2 copies it, so its prediction residual is zero.
    let levels = [-1.5, -0.5, 0.5, 1.5];
    let mut r = rng::seeded(11);
    let make = |r: &mut rng::Rng| {
        let mut v = vec![0.0f64; 32 * 32];
        for i in 0..32 {
            for j in 0..32 {
                v[i * 32 + j] = if i % 2 == 0 && j % 2 == 1 {
                    v[i * 32 + j - 1]
                } else if i % 2 == 0 {
                    levels[r.random_range(0..4)]
                } else {
                    StandardNormal.sample(r)
                };
            }
        }
        LatentGrid::new(1, 32, 32, v).unwrap()
    };
    let data: Vec<_> = (0..8).map(|_| make(&mut r)).collect();
    let mut cfg = ModelConfig::new(Scheme::Rd, vec![8, 4, 4, 4], 1, 1);
    cfg.iterations = 20;
    let model = train_model(&data, &cfg).unwrap();
    let (p, q) = (model.predictor.as_ref().unwrap(), model.quantizers.as_ref().unwrap());
    let y = make(&mut r);
    let coded = rd_encode(&y, p, q, 1).unwrap();
    let parts = partition_quadtree(&y).unwrap();
    let rec = partition_quadtree(&coded.reconstruction).unwrap();
    assert!(rec.groups[0].mse(&parts.groups[0]).unwrap() < 1e-20);
    let var = parts.groups[1].variance();
    assert!(parts.groups[1].mse(&rec.groups[1]).unwrap() < 1e-4 * var);

    // Sigma sits at its floor, so standardized residuals are small but not zero.
    let params = p.predict(1, 256, &rec.groups[..1], None).unwrap();
    let std2 = standardize(&parts.groups[1], &params);
    let worst = std2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 1e-2, "{worst}");
    assert!(q.groups[1].stage(0).codeword(0)[0] == 0.0);
}

#[test]
fn iid_source_has_nothing_to_predict() {
    let train: Vec<_> = (0..8).map(|s| gm(200 + s, 0.0, 64)).collect();
    let qset = small_qset(2);
    let p = fit_context_predictor(&train, &SchemeConfig::rd(2, false), Some(&qset), DEFAULT_RIDGE).unwrap();
    for g in 1..4 {
        let head = p.head(g);
        // context weights only (last entry is the bias)
        assert!(
            head.mu[..head.inputs - 1].iter().all(|w| w.abs() < 0.05),
            "{:?}",
            head.mu
        );
    }
    // Held-out residual variance against the raw variance of each group.
    let y = gm(777, 0.0, 64);
    let coded = rd_encode(&y, &p, &qset, 2).unwrap();
    let parts = partition_quadtree(&y).unwrap();
    let rec = partition_quadtree(&coded.reconstruction).unwrap();
    for g in 1..4 {
        let params = p.predict(g, 1024, &rec.groups[..g], None).unwrap();
        let y_g = parts.groups[g].to_vectors();
        let raw = parts.groups[g].variance();
        let mean = y_g.iter().sum::<f64>() / y_g.len() as f64;
        let resid = y_g.iter().zip(&params.mu).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() / y_g.len() as f64;
        let raw_ms = y_g.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / y_g.len() as f64;
        assert!((raw_ms - raw).abs() < 1e-9);
        assert!((resid / raw - 1.0).abs() < 0.05, "group {g}: {resid} vs {raw}");
    }
}

#[test]
fn iq_matches_rd_on_iid_source() {
    let train: Vec<_> = (0..12).map(|s| gm(300 + s, 0.0, 64)).collect();
    let hold: Vec<_> = (0..4).map(|s| gm(400 + s, 0.0, 64)).collect();
    // One stage: deeper 1-D stages differ by several percent between training seeds alone.
    let mut cfg = ModelConfig::new(Scheme::Rd, vec![16, 16, 8, 8], 1, 5);
    cfg.iterations = 25;
    let rd = train_model(&train, &cfg).unwrap();
    cfg.scheme = Scheme::Iq;
    let iq = train_model(&train, &cfg).unwrap();
    let mut d = [0.0; 2];
    for y in &hold {
        let a = rd_encode(y, rd.predictor.as_ref().unwrap(), rd.quantizers.as_ref().unwrap(), 1).unwrap();
        let b = iq_encode(y, iq.quantizers.as_ref().unwrap(), 1).unwrap();
        d[0] += y.mse(&a.reconstruction).unwrap();
        d[1] += y.mse(&b.reconstruction).unwrap();
    }
    assert!((d[0] / d[1] - 1.0).abs() < 0.02, "rd {} iq {}", d[0], d[1]);
}

#[test]
fn constant_source_is_predicted() {
    let c = 0.75;
    let train: Vec<_> = (0..4).map(|_| LatentGrid::filled(1, 32, 32, c).unwrap()).collect();
    let p = fit_context_predictor(&train, &SchemeConfig::cm(0.5, false), None, DEFAULT_RIDGE).unwrap();
    let y = LatentGrid::filled(1, 32, 32, c).unwrap();
    let coded = cm_encode(&y, &p, None, &SchemeConfig::cm(0.5, false)).unwrap();
    for g in 0..4 {
        let rec = partition_quadtree(&coded.reconstruction).unwrap();
        let params = p.predict(g, 256, &rec.groups[..g], None).unwrap();
        assert!(params.mu.iter().all(|m| (m - c).abs() < 1e-4), "group {g}");
    }
    assert!(y.mse(&coded.reconstruction).unwrap() < 1e-8);
}

#[test]
fn fitting_rejects_too_little_data() {
    let train = vec![gm(1, 0.9, 4)];
    assert!(matches!(
        fit_context_predictor(&train, &SchemeConfig::cm(1.0, false), None, DEFAULT_RIDGE),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn cm_zero_residual_stream_is_minimal() {
    let y = LatentGrid::<f64>::zeros(1, 32, 32).unwrap();
    let cfg = SchemeConfig::cm(1.0, false);
    let p = fit_context_predictor(&vec![y.clone(); 4], &cfg, None, DEFAULT_RIDGE).unwrap();
    let coded = cm_encode(&y, &p, None, &cfg).unwrap();
    for s in &coded.streams {
        assert!(s.payload.len() <= 8, "{} bytes", s.payload.len());
    }
    assert_eq!(coded.clamped, 0);
    assert_eq!(cm_decode(&coded, &p, None, &cfg).unwrap(), y);
}

#[test]
fn cm_round_trip_and_rate() {
    // Identity predictor on unit Gaussian data: sigma is exact, step = sigma / 2.
    let p = ContextPredictor::identity(1, false);
    let y = gm(42, 0.0, 128);
    let cfg = SchemeConfig::cm(0.5, false);
    let coded = cm_encode(&y, &p, None, &cfg).unwrap();
    assert_eq!(cm_decode(&coded, &p, None, &cfg).unwrap(), coded.reconstruction);

    let table: FrequencyTable = discretized_gaussian_table(0.0, 1.0, 0.5, CM_RADIUS, CM_PRECISION).unwrap();
    let self_info: f64 = y
        .data()
        .iter()
        .map(|v| {
            let k = (v / 0.5).round() as i64 + CM_RADIUS as i64;
            -table.probability(k as usize).log2()
        })
        .sum();
    let bits = coded.rate_bits as f64;
    assert!((bits / self_info - 1.0).abs() < 0.03, "{bits} vs {self_info}");
    assert!(y.mse(&coded.reconstruction).unwrap() < 0.25 * 0.25 / 3.0 * 1.05);
}

#[test]
fn cm_clamps_out_of_range_symbols() {
    let p = ContextPredictor::identity(1, false);
    let mut v = vec![0.0; 16 * 16];
    v[0] = 1e6;
    v[5] = -1e6;
    let y = LatentGrid::new(1, 16, 16, v).unwrap();
    let cfg = SchemeConfig::cm(1.0, false);
    let coded = cm_encode(&y, &p, None, &cfg).unwrap();
    assert_eq!(coded.clamped, 2);
    assert_eq!(cm_decode(&coded, &p, None, &cfg).unwrap(), coded.reconstruction);
    assert_eq!(coded.reconstruction.data()[0], 255.0);
}

#[test]
fn cm_config_validation() {
    assert!(SchemeConfig::cm(0.0, false).validate(None).is_err());
    let mut c = SchemeConfig::cm(1.0, false);
    c.precision = 8;
    assert!(c.validate(None).is_err());
    c.precision = 9;
    assert!(c.validate(None).is_ok());
}

#[test]
fn hyperprior_path_round_trips() {
    let data: Vec<_> = (0..6).map(|s| gm(500 + s, 0.9, 32)).collect();
    let mut cfg = ModelConfig::new(Scheme::Rd, vec![8, 8, 4, 4], 2, 9);
    cfg.hyper_k = Some(16);
    cfg.iterations = 10;
    let model = train_model(&data, &cfg).unwrap();
    let (p, q) = (model.predictor.as_ref().unwrap(), model.quantizers.as_ref().unwrap());
    assert!(p.uses_hyper());
    let y = gm(900, 0.9, 32);
    let coded = rd_encode(&y, p, q, 2).unwrap();
    assert_eq!(coded.hyper.as_ref().unwrap().n(), 64);
    assert_eq!(rd_decode(&coded, p, q).unwrap(), coded.reconstruction);
    assert_eq!(coded.rate_bits, 2 * (64 * 4 + 256 * (3 + 3 + 2 + 2)));

    cfg.scheme = Scheme::Cm;
    cfg.delta = 0.5;
    let cm = train_model(&data, &cfg).unwrap();
    let op = cfg.operating_point(2);
    let coded = cm_encode(&y, cm.predictor.as_ref().unwrap(), cm.hyper.as_ref(), &op).unwrap();
    let back = cm_decode(&coded, cm.predictor.as_ref().unwrap(), cm.hyper.as_ref(), &op).unwrap();
    assert_eq!(back, coded.reconstruction);
}

#[test]
fn f32_pipeline_round_trips() {
    let y: LatentGrid<f32> = gm(8, 0.9, 32).cast();
    let cb = Codebook::new(1, vec![0.0f32, -1.0, 1.0, 2.0]).unwrap();
    let rvq = ResidualVQ::new(vec![cb]).unwrap();
    let qset = QuantizerSet::new(vec![rvq; 4], None).unwrap();
    let p = ContextPredictor::identity(1, false);
    let coded = rd_encode(&y, &p, &qset, 1).unwrap();
    assert_eq!(rd_decode(&coded, &p, &qset).unwrap(), coded.reconstruction);
}
