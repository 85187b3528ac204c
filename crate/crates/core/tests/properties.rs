use proptest::prelude::*;
use vqcodec::analysis::{bd_rate, entropy_gap, IndexHistogram, Pchip, RDCurve, RDPoint};
use vqcodec::bitstream::{compute_bpp, pack, unpack, BppConfig, StreamHeader, StreamLayout, F_Y, F_Z};
use vqcodec::latent::{merge_groups, partition_quadtree, read_latent, write_latent, LatentGrid};
use vqcodec::quantizer::{train_rvq, IndexStack};

fn grid(c: usize, h: usize, w: usize, values: &[f32]) -> LatentGrid<f32> {
    LatentGrid::from_fn(c, h, w, |ch, i, j| values[(ch * h + i) * w + j]).unwrap()
}

fn stacks(ks: &[usize], m: usize, n: usize, seed: u64) -> IndexStack {
    let mut s = seed;
    let stages = (0..m)
        .map(|t| {
            (0..n)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((s >> 33) % ks[t] as u64) as u32
                })
                .collect()
        })
        .collect();
    IndexStack::new(stages).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quadtree_merge_inverts_partition(c in 1usize..4, h2 in 1usize..8, w2 in 1usize..8, seed in any::<u32>()) {
        let (h, w) = (2 * h2, 2 * w2);
        let values: Vec<f32> = (0..c * h * w).map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / 1e9).collect();
        let y = grid(c, h, w, &values);
        let parts = partition_quadtree(&y).unwrap();
        prop_assert_eq!(parts.groups.len(), 4);
        prop_assert_eq!(merge_groups(&parts).unwrap(), y);
    }

    #[test]
    fn latent_files_round_trip_exactly(c in 1usize..3, h in 1usize..9, w in 1usize..9, values in prop::collection::vec(-1e6f32..1e6, 200)) {
        let y = grid(c, h, w, &values);
        let mut bytes = Vec::new();
        write_latent(&y, &mut bytes).unwrap();
        prop_assert_eq!(bytes.len(), 5 + 12 + 4 * c * h * w);
        let back: LatentGrid<f32> = read_latent(bytes.as_slice()).unwrap();
        prop_assert_eq!(back, y);
    }

    #[test]
    fn header_round_trips(h in 0usize..16384, w in 0usize..16384, q in 0usize..16) {
        let header = StreamHeader::new(h, w, q).unwrap();
        prop_assert_eq!(StreamHeader::from_bytes(header.to_bytes()).unwrap(), header);
    }

    #[test]
    fn packing_round_trips_and_matches_closed_form(
        hb in 1usize..6, wb in 1usize..6, bits in prop::collection::vec(0u32..=10, 5),
        hyper in any::<bool>(), stages in 1usize..4, seed in any::<u64>(),
    ) {
        let (height, width) = (hb * F_Z, wb * F_Z);
        let m = stages;
        let layout = StreamLayout {
            f_y: F_Y,
            f_z: F_Z,
            group_ks: bits[..4].iter().map(|&b| vec![1usize << b; stages]).collect(),
            hyper_ks: hyper.then(|| vec![1usize << bits[4]; stages]),
        };
        let (ng, nz) = layout.positions(height, width);
        let h = layout.hyper_ks.as_ref().map(|ks| stacks(ks, m, nz, seed));
        let groups: Vec<IndexStack> = layout.group_ks.iter().enumerate().map(|(g, ks)| stacks(ks, m, ng, seed ^ g as u64)).collect();
        let packed = pack(StreamHeader::new(height, width, m).unwrap(), h.as_ref(), &groups, &layout).unwrap();
        let back = unpack(&packed, &layout).unwrap();
        prop_assert_eq!(back.hyper, h);
        prop_assert_eq!(back.groups, groups);
        let expected = compute_bpp(&layout.bpp_config().unwrap(), m).unwrap() * (height * width) as f64;
        let pad = packed.payload.len() as f64 * 8.0 - expected;
        prop_assert!((0.0..8.0).contains(&pad));
    }

    #[test]
    fn bpp_is_linear_in_stages(m in 1usize..16) {
        let cfg = BppConfig::reference();
        let one = compute_bpp(&cfg, 1).unwrap();
        prop_assert!((compute_bpp(&cfg, m).unwrap() - m as f64 * one).abs() < 1e-12);
    }

    #[test]
    fn entropy_gap_is_a_fraction(counts in prop::collection::vec(0u64..50, 2..64)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let gap = entropy_gap(&IndexHistogram::from_counts(counts).unwrap()).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&gap));
    }

    #[test]
    fn pchip_keeps_monotone_data_monotone(steps in prop::collection::vec((0.01f64..2.0, prop_oneof![Just(0.0), 0.0f64..3.0]), 2..12)) {
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        for (dx, dy) in &steps {
            x.push(x.last().unwrap() + dx);
            y.push(y.last().unwrap() + dy);
        }
        let p = Pchip::new(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((p.eval(*xi).unwrap() - yi).abs() < 1e-9);
        }
        let end = *x.last().unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| p.eval((end * i as f64 / 400.0).min(end)).unwrap()).collect();
        prop_assert!(grid.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn bd_rate_of_scaled_rates(scale in 0.2f64..5.0) {
        let anchor: Vec<RDPoint> = [0.1, 0.3, 0.7, 1.5]
            .iter()
            .enumerate()
            .map(|(i, &r)| RDPoint { param: i as f64, rate: r, distortion: 1.0 / (1.0 + 4.0 * r) })
            .collect();
        let test: Vec<RDPoint> = anchor.iter().map(|p| RDPoint { rate: p.rate * scale, ..*p }).collect();
        let v = bd_rate(&RDCurve::new("a", anchor).unwrap(), &RDCurve::new("b", test).unwrap()).unwrap();
        prop_assert!((v - (scale - 1.0) * 100.0).abs() < 1e-6, "{v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn extra_stages_never_hurt(seed in any::<u64>(), dim in 1usize..3) {
        let mut s = seed | 1;
        let samples: Vec<f64> = (0..600 * dim)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 10_000) as f64 / 5_000.0 - 1.0
            })
            .collect();
        let rvq = train_rvq(&samples, dim, &[8, 4, 4], 8, seed).unwrap();
        let mut last = f64::INFINITY;
        for m in 1..=3 {
            let (_, recon) = rvq.quantize(&samples, m).unwrap();
            let mse = samples.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / samples.len() as f64;
            prop_assert!(mse <= last + 1e-12, "m={} {} > {}", m, mse, last);
            last = mse;
        }
    }
}
