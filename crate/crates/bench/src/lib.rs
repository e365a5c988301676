//! Fixtures shared by the pipeline benchmarks.

use sspb_core::data_io::synth::scene_seed;
use sspb_core::data_io::{generate_synthetic_scene, SyntheticScene, SyntheticSceneSpec};
use sspb_core::{
    quantize_orientations, train_cascade, CascadeModels, CascadeTrainConfig, ImageBundle, Result,
    ScoredBox, TrainingImage,
};

/// One synthetic scene of the default size.
pub fn scene(seed: u64) -> Result<SyntheticScene> {
    generate_synthetic_scene(&SyntheticSceneSpec {
        seed,
        ..SyntheticSceneSpec::default()
    })
}

/// The scene's candidates as scored boxes.
pub fn scored_candidates(scene: &SyntheticScene) -> Vec<ScoredBox> {
    scene
        .candidates
        .iter()
        .map(|c| ScoredBox::new(c.bbox, c.eb_score))
        .collect()
}

pub fn training_image(scene: &SyntheticScene) -> TrainingImage {
    TrainingImage {
        gt: scene.gt.iter().map(|g| g.bbox()).collect(),
        candidates: scene.candidates.clone(),
        features: scene.features.clone(),
        integrals: quantize_orientations(&scene.edges),
    }
}

pub fn bundle(scene: &SyntheticScene) -> ImageBundle {
    ImageBundle {
        candidates: Some(scene.candidates.clone()),
        features: Some(scene.features.clone()),
        integrals: Some(quantize_orientations(&scene.edges)),
    }
}

/// A small cascade trained on `count` scenes with 2 SPP and 8 BEV bins.
pub fn small_cascade(count: usize) -> Result<CascadeModels> {
    let images = (0..count)
        .map(|i| scene(scene_seed(1, i)).map(|s| training_image(&s)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = CascadeTrainConfig {
        stage_one_spp_bins: 2,
        stage_two_spp_bins: 2,
        stage_two_bev_bins: 8,
        ..CascadeTrainConfig::default()
    };
    Ok(train_cascade(&images, &cfg)?.0)
}
