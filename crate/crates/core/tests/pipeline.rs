use vqcodec::codec::{decode_stream, encode_stream};
use vqcodec::decorrelation::{train_model, ModelConfig, Scheme, TrainedModel};
use vqcodec::latent::LatentGrid;
use vqcodec::quantizer::{read_rvq, write_rvq, QuantizerSet};
use vqcodec::source::{gauss_markov_sample, SourceConfig};

fn latents<T: vqcodec::Scalar>(n: u64, seed: u64) -> Vec<LatentGrid<T>> {
    let src = SourceConfig::new((1, 32, 32), 0.9, 1.0, seed);
    (0..n)
        .map(|i| gauss_markov_sample(&src.with_seed(seed + i)).unwrap())
        .collect()
}

fn config(scheme: Scheme) -> ModelConfig {
    let mut cfg = ModelConfig::new(scheme, vec![32, 16, 16, 8], 2, 9);
    cfg.iterations = 15;
    cfg.delta = 0.5;
    cfg
}

#[test]
fn every_scheme_decodes_what_it_encodes() {
    let train = latents::<f64>(12, 100);
    let test = latents::<f64>(2, 500);
    for scheme in [Scheme::Rd, Scheme::Iq, Scheme::Cm] {
        let model = train_model(&train, &config(scheme)).unwrap();
        for y in &test {
            let enc = encode_stream(&model, y, 2).unwrap();
            let dec = decode_stream(&model, &enc.bytes).unwrap();
            assert_eq!(dec.latent, enc.coded.reconstruction, "{scheme}");
            assert!(y.mse(&dec.latent).unwrap() < y.variance(), "{scheme}");
        }
    }
}

#[test]
fn decorrelation_beats_independent_quantization_on_a_correlated_source() {
    let train = latents::<f64>(16, 1);
    let test = latents::<f64>(4, 900);
    let mse = |scheme| {
        let model = train_model(&train, &config(scheme)).unwrap();
        test.iter()
            .map(|y| {
                y.mse(&encode_stream(&model, y, 1).unwrap().coded.reconstruction)
                    .unwrap()
            })
            .sum::<f64>()
    };
    let (rd, iq) = (mse(Scheme::Rd), mse(Scheme::Iq));
    assert!(rd < 0.8 * iq, "rd {rd} iq {iq}");
}

#[test]
fn single_precision_core_tracks_double_precision() {
    let cfg = config(Scheme::Rd);
    let m64: TrainedModel<f64> = train_model(&latents::<f64>(12, 100), &cfg).unwrap();
    let m32: TrainedModel<f32> = train_model(&latents::<f32>(12, 100), &cfg).unwrap();
    let y64 = &latents::<f64>(1, 700)[0];
    let y32 = &latents::<f32>(1, 700)[0];
    let e64 = y64
        .mse(&encode_stream(&m64, y64, 2).unwrap().coded.reconstruction)
        .unwrap();
    let e32 = y32
        .mse(&encode_stream(&m32, y32, 2).unwrap().coded.reconstruction)
        .unwrap();
    assert!((e64 - e32).abs() < 0.25 * e64, "{e64} vs {e32}");
}

#[test]
fn stored_codebooks_are_single_precision_and_reload() {
    let model = train_model(&latents::<f64>(12, 100), &config(Scheme::Iq)).unwrap();
    let qset = model.quantizers.as_ref().unwrap();
    let mut groups = Vec::new();
    for q in &qset.groups {
        let mut bytes = Vec::new();
        write_rvq(q, &mut bytes).unwrap();
        let back = read_rvq::<f64, _>(bytes.as_slice()).unwrap();
        assert_eq!(back.ks(), q.ks());
        for (a, b) in back.stages().iter().zip(q.stages()) {
            for (x, y) in a.codewords().iter().zip(b.codewords()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        groups.push(back);
    }
    let reloaded = TrainedModel {
        quantizers: Some(QuantizerSet::new(groups, None).unwrap()),
        ..model
    };
    let y = &latents::<f64>(1, 300)[0];
    let enc = encode_stream(&reloaded, y, 2).unwrap();
    assert_eq!(
        decode_stream(&reloaded, &enc.bytes).unwrap().latent,
        enc.coded.reconstruction
    );
}
