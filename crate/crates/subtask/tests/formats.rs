use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subtask::checkpoint::{decode_checkpoint, encode_checkpoint};
use subtask::formats::*;
use subtask_core::data::{ClassVocabulary, StreamNormalizer, Video};
use subtask_core::model::{ModelConfig, ModelParams};
use subtask_core::numcore::Tensor;
use subtask_core::tcn::ScheduleKind;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e6f32..1e6, r * c).prop_map(move |v| {
            Tensor::new(&[r, c], v.into_iter().map(f64::from).collect()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn features_round_trip_exactly(x in matrix(20, 9)) {
        let bytes = encode_features(&x);
        prop_assert_eq!(bytes.len(), 13 + 4 * x.len());
        prop_assert_eq!(decode_features(&bytes).unwrap(), x);
    }

    #[test]
    fn truncated_or_padded_features_are_rejected(x in matrix(6, 4), cut in 1usize..20) {
        let bytes = encode_features(&x);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_features(&bytes[..bytes.len() - cut]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(decode_features(&longer).is_err());
    }

    #[test]
    fn labels_round_trip(labels in prop::collection::vec(0usize..8, 1..100)) {
        let v = ClassVocabulary::standard();
        let text = encode_labels(&labels, &v).unwrap();
        prop_assert_eq!(decode_labels(&text, &v).unwrap(), labels);
    }

    #[test]
    fn normalizer_round_trips_bit_for_bit(seed in any::<u64>(), t in 2usize..12, d in 1usize..6) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Tensor::new(&[t, d], (0..t * d).map(|_| rng.random_range(-50.0..50.0)).collect()).unwrap();
        let video = Video { name: "v".into(), task: "t".into(), rgb: draw(), flow: draw(), labels: vec![0; t] };
        let n = StreamNormalizer::fit(&[video]).unwrap();
        prop_assert_eq!(decode_normalizer(&encode_normalizer(&n)).unwrap(), n);
    }

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), stages in 1usize..3, layers in 1usize..4, fib in any::<bool>()) {
        let cfg = ModelConfig {
            channels: 4,
            layers,
            stages,
            schedule: if fib { ScheduleKind::Fibonacci } else { ScheduleKind::Exponential },
            ..ModelConfig::standard(3, 5)
        };
        let m = ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back), bytes.clone());
        prop_assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sanitized_names_are_safe(name in ".{0,20}") {
        let s = sanitize(&name);
        prop_assert!(s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)));
    }
}
