mod oracle;

use earshot_core::fewshot::{nearest_prototypes, open_set_decision, Verdict};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn nearest_prototypes_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ties = 0;
    for case in 0..1000 {
        let (q, protos) = oracle::random_nn_case(&mut rng);
        let got = nearest_prototypes(&q, &protos).unwrap();
        let (nearest, d1, d2, ratio) = oracle::brute_nearest(&q, &protos);
        assert_eq!(got.nearest, nearest, "case {case}");
        assert_eq!(got.d1.to_bits(), d1.to_bits(), "case {case}");
        assert_eq!(got.d2.to_bits(), d2.to_bits(), "case {case}");
        assert_eq!(got.ratio.to_bits(), ratio.to_bits(), "case {case}");
        ties += usize::from(d1 == d2);
    }
    assert!(ties > 0, "generator produced no ties");
}

proptest! {
    #[test]
    fn scaling_keeps_decisions(seed in any::<u64>(), k in 1u32..5, t in 0.05f64..1.0) {
        // Powers of two scale f32 values exactly.
        let c = 2f32.powi(k as i32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, protos) = oracle::random_nn_case(&mut rng);
        let a = nearest_prototypes(&q, &protos).unwrap();
        let qs: Vec<f32> = q.iter().map(|v| v * c).collect();
        let ps: Vec<Vec<f32>> = protos.iter().map(|p| p.iter().map(|v| v * c).collect()).collect();
        let b = nearest_prototypes(&qs, &ps).unwrap();
        prop_assert_eq!(a.nearest, b.nearest);
        prop_assert_eq!(a.ratio, b.ratio);
        prop_assert_eq!(open_set_decision(&a, t), open_set_decision(&b, t));
    }

    #[test]
    fn probabilities_follow_distances(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, protos) = oracle::random_nn_case(&mut rng);
        let d = nearest_prototypes(&q, &protos).unwrap();
        let sum: f64 = d.probabilities.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        let best = d.probabilities[d.nearest];
        prop_assert!(d.probabilities.iter().all(|&p| p <= best));
        // T = 1 accepts everything since R ≤ 1.
        prop_assert_eq!(open_set_decision(&d, 1.0), Verdict::Class(d.nearest));
    }
}
