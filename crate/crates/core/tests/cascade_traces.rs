//! Composed traces: each stage must equal the hand-assembled sequence of
//! its documented steps.

mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sspb_core::cascade::{stage_one, stage_one_descriptor, stage_two, stage_two_descriptor, Ranked};
use sspb_core::data_io::synth::{generate_synthetic_scene, SyntheticSceneSpec};
use sspb_core::geometry::{arnms_indices, greedy_nms_indices};
use sspb_core::{
    build_spp_bank, propose, quantize_orientations, train_cascade, ArnmsConfig, BevBank,
    BinSelection, Candidate, CascadeTrainConfig, GroupStructure, ImageBundle, LinearModel, NmsMode,
    ScoredBox, StageOneModel, StageTwoModel, TrainingImage,
};

fn random_model(rng: &mut ChaCha8Rng, dim: usize) -> LinearModel {
    let w = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    LinearModel::new(w, rng.gen_range(-0.5..0.5), GroupStructure::single(dim)).unwrap()
}

fn scene(seed: u64) -> sspb_core::data_io::SyntheticScene {
    generate_synthetic_scene(&SyntheticSceneSpec {
        seed,
        channels: 4,
        ..SyntheticSceneSpec::default()
    })
    .unwrap()
}

#[test]
fn stage_one_is_truncate_rescore_suppress() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let s = scene(1);
    let sel = BinSelection::new(vec![0, 7, 100], None);
    let mut m1 = StageOneModel::new(random_model(&mut rng, 3 * 4 + 1), sel.clone()).unwrap();
    m1.pool_cap = 300;
    m1.output_cap = 120;
    let got = stage_one(&s.candidates, &s.features, &m1).unwrap();

    let mut order: Vec<usize> = (0..s.candidates.len()).collect();
    order.sort_by(|&a, &b| {
        s.candidates[b].eb_score.total_cmp(&s.candidates[a].eb_score).then(a.cmp(&b))
    });
    order.truncate(300);
    let bank = build_spp_bank().with_selection(sel).unwrap();
    let pool: Vec<Candidate> = order.iter().map(|&i| s.candidates[i]).collect();
    let scored: Vec<ScoredBox> = pool
        .iter()
        .map(|c| ScoredBox::new(c.bbox, m1.model.score(&stage_one_descriptor(c, &s.features, &bank).unwrap()).unwrap()))
        .collect();
    let keep = arnms_indices(&scored, &ArnmsConfig::new(vec![1.0, 0.7, 0.5], 120).unwrap()).unwrap();
    let want: Vec<Ranked> = keep
        .iter()
        .map(|&i| Ranked { candidate: pool[i], score: scored[i].score })
        .collect();
    assert_eq!(got.len(), 120);
    assert_eq!(got, want);
}

#[test]
fn stage_two_is_rescore_then_final_nms() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let s = scene(2);
    let ints = quantize_orientations(&s.edges);
    let bev_sel = BinSelection::new(vec![3, 200, 1119], None);
    let spp_sel = BinSelection::new(vec![1, 2], None);
    let m2 = StageTwoModel {
        model: random_model(&mut rng, 3 * 4 + 2 * 4 + 1),
        bev_selection: bev_sel.clone(),
        spp_selection: spp_sel.clone(),
    };
    let bev = BevBank::standard().with_selection(bev_sel).unwrap();
    let spp = build_spp_bank().with_selection(spp_sel).unwrap();
    let input: Vec<Candidate> = s.candidates[..200].to_vec();
    for mode in [NmsMode::default(), NmsMode::sspb60()] {
        let got = stage_two(&input, &s.features, &ints, &bev, &spp, &m2, 25, &mode).unwrap();
        let scored: Vec<ScoredBox> = input
            .iter()
            .map(|c| {
                let d = stage_two_descriptor(c, &s.features, &ints, &bev, &spp).unwrap();
                assert_eq!(d.len(), 21);
                assert_eq!(d[20], c.eb_score);
                ScoredBox::new(c.bbox, m2.model.score(&d).unwrap())
            })
            .collect();
        let keep = match &mode {
            NmsMode::Greedy { threshold } => {
                let mut k = greedy_nms_indices(&scored, *threshold);
                k.truncate(25);
                k
            }
            NmsMode::Arnms { thresholds } => {
                arnms_indices(&scored, &ArnmsConfig::new(thresholds.clone(), 25).unwrap()).unwrap()
            }
        };
        let want: Vec<usize> = got
            .iter()
            .map(|r| input.iter().position(|c| *c == r.candidate).unwrap())
            .collect();
        assert_eq!(want, keep);
    }
}

#[test]
fn trained_cascade_respects_budget_and_is_deterministic() {
    let scenes: Vec<_> = (0..12).map(|i| scene(100 + i)).collect();
    let train: Vec<TrainingImage> = scenes
        .iter()
        .map(|s| TrainingImage {
            gt: s.gt.iter().map(|g| g.bbox()).collect(),
            candidates: s.candidates.clone(),
            features: s.features.clone(),
            integrals: quantize_orientations(&s.edges),
        })
        .collect();
    let cfg = CascadeTrainConfig {
        stage_one_spp_bins: 2,
        stage_two_spp_bins: 2,
        stage_two_bev_bins: 8,
        ..CascadeTrainConfig::default()
    };
    let (a, summary) = train_cascade(&train, &cfg).unwrap();
    let (b, _) = train_cascade(&train, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(summary.stage_one_spp.len(), 2);
    assert_eq!(summary.stage_two_spp.len(), 2);
    assert_eq!(summary.stage_two_bev.len(), 8);
    assert_eq!(a.stage_one.model.dim(), 2 * 4 + 1);
    assert_eq!(a.stage_two.model.dim(), 8 * 4 + 2 * 4 + 1);
    let bundle = ImageBundle {
        candidates: Some(scenes[0].candidates.clone()),
        features: Some(scenes[0].features.clone()),
        integrals: Some(train[0].integrals.clone()),
    };
    for n in [1, 10, 100] {
        let out = propose(&bundle, &a, n, &NmsMode::default()).unwrap();
        assert!(out.len() <= n);
        assert_eq!(out, propose(&bundle, &b, n, &NmsMode::default()).unwrap());
    }
}
