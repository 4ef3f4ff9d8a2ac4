use melseed::audio::{resample_signal, split_by_fold, FoldAssignment};
use melseed::features::{segment_clip, FeatureParams, MelExtractor, SegmentKind};
use melseed::nn::{LayerSpec, Padding, Sequential, Tensor};
use proptest::prelude::*;

mod common;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn same_padding_length_is_ceil(len in 1usize..2000, k in 1usize..40, s in 1usize..300) {
        let spec = LayerSpec::Conv1d { in_channels: 1, filters: 1, kernel: k, stride: s, padding: Padding::Same };
        prop_assert_eq!(spec.output_shape(&[1, len]).unwrap(), vec![1, len.div_ceil(s)]);
        let net = Sequential::<f32>::build(&[spec], &[1, len], 0).unwrap();
        let y = net.forward(&Tensor::zeros(&[1, 1, len])).unwrap();
        prop_assert_eq!(y.shape(), &[1, 1, len.div_ceil(s)][..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn resampling_is_linear(
        a in proptest::collection::vec(-1.0f64..1.0, 50..400),
        seed in 0u64..1000,
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let b: Vec<f64> = common::random_signal(a.len(), seed);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        let (ra, rb, rm) = (
            resample_signal(&a, 44_100, 22_050),
            resample_signal(&b, 44_100, 22_050),
            resample_signal(&mix, 44_100, 22_050),
        );
        prop_assert_eq!(rm.len(), ra.len());
        for i in 0..rm.len() {
            prop_assert!((rm[i] - (alpha * ra[i] + beta * rb[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn every_clip_is_tested_exactly_once(folds in proptest::collection::vec(1u8..=5, 1..200)) {
        let mut tested = vec![0; folds.len()];
        for f in 1..=5 {
            let a = FoldAssignment::for_test_fold(f).unwrap();
            let s = split_by_fold((0..folds.len()).collect(), &a, |&i| folds[i]);
            prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), folds.len());
            prop_assert!(s.validation.iter().all(|&i| folds[i] == a.validation_fold));
            for i in s.test {
                tested[i] += 1;
            }
        }
        prop_assert!(tested.iter().all(|&t| t == 1));
    }

    #[test]
    fn log_mel_shifts_by_log_of_gain(seed in 0u64..1000, gain in 0.05f64..20.0) {
        let ex = MelExtractor::new(&FeatureParams::default()).unwrap();
        let x = common::random_signal(8192, seed);
        let scaled: Vec<f64> = x.iter().map(|v| v * gain).collect();
        let (a, b) = (ex.log_mel(&x).unwrap().values, ex.log_mel(&scaled).unwrap().values);
        for (u, v) in a.data().iter().zip(b.data()) {
            // the floor is negligible for these energies
            prop_assert!((v - u - gain.ln()).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn segment_targets_come_from_their_own_samples(seed in 0u64..1000, mst in any::<bool>()) {
        let params = FeatureParams::default();
        let ex = MelExtractor::new(&params).unwrap();
        let x = common::random_signal(110_250, seed);
        let clip = melseed::audio::AudioClip::new(x, 22_050, "1-1-A-0", 0, 1).unwrap();
        let kind = if mst { SegmentKind::Mst } else { SegmentKind::Classification };
        let segs = segment_clip(&clip, "orig", &ex, kind).unwrap();
        prop_assert_eq!(segs.len(), 3);
        for s in &segs {
            prop_assert_eq!(s.raw.len(), kind.raw_len(&params));
            prop_assert!((s.raw.iter().fold(0.0f32, |m, v| m.max(v.abs())) - 1.0).abs() < 1e-6);
            let raw: Vec<f64> = s.raw.iter().map(|&v| v as f64).collect();
            let full = ex.log_mel(&raw).unwrap().values;
            prop_assert_eq!(full.cols(), s.frames + 1);
            for b in 0..s.n_mels {
                for t in 0..s.frames {
                    prop_assert!((full.get(b, t) as f32 - s.log_mel[b * s.frames + t]).abs() < 1e-5);
                }
            }
        }
    }
}
