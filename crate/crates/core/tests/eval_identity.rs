mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sspb_core::eval::MatchResult;
use sspb_core::{average_recall, curve_sweep, oracle_match, recall_at, BoundingBox, EvalImage};

#[test]
fn closed_form_ar_matches_trapezoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let n = rng.gen_range(1..80);
        let best_iou: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..=1.0) })
            .collect();
        let m = MatchResult {
            matched: vec![None; n],
            best_iou: best_iou.clone(),
        };
        let closed = average_recall(&m).unwrap();
        let trap = oracles::ar_trapezoid(&best_iou, 0.001);
        assert!((closed - trap).abs() <= 1e-3, "{closed} vs {trap}");
    }
}

#[test]
fn perfect_proposals_give_unit_ar() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let images: Vec<EvalImage> = (0..20)
        .map(|_| {
            let gt: Vec<BoundingBox> = (0..rng.gen_range(1..6))
                .map(|_| oracles::random_int_box(&mut rng, 200, 60))
                .collect();
            EvalImage {
                proposals: gt.clone(),
                gt,
            }
        })
        .collect();
    for (n, curve) in curve_sweep(&images, &[10, 100, 1000]).unwrap() {
        assert_eq!(curve.ar, 1.0, "budget {n}");
        assert!(curve.recall.iter().all(|&r| r == 1.0));
    }
}

#[test]
fn recall_curve_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let gt: Vec<BoundingBox> = (0..30).map(|_| oracles::random_int_box(&mut rng, 100, 40)).collect();
    let props: Vec<BoundingBox> = (0..200).map(|_| oracles::random_int_box(&mut rng, 100, 40)).collect();
    let m = oracle_match(&gt, &props);
    let mut last = 1.0;
    for i in 0..=100 {
        let r = recall_at(&m, 0.5 + i as f64 * 0.005).unwrap();
        assert!(r <= last);
        last = r;
    }
}
