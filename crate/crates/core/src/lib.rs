//! Cascaded window scoring for class-agnostic object proposals.
//!
//! The pipeline ranks a dense pool of candidate boxes in two linear-SVM
//! stages. Stage one rescores the candidates with a handful of max-pooled
//! convolutional bins plus the edge-based candidate score; stage two adds
//! boundary edge vectors and more pooled bins. Which bins are pooled is
//! learned with a group-lasso SVM. A staged NMS tuned for average recall
//! produces the final list, and [`eval`] measures overlap recall.

pub mod cascade;
pub mod data_io;
pub mod edge_bev;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod sparse_svm;
pub mod spp;

pub use cascade::{
    extract_training_features, propose, train_cascade, Candidate, CascadeModels, CascadeTrainConfig, ImageBundle, NmsMode,
    StageOneModel, StageTwoModel, TrainingImage,
};
pub use edge_bev::{
    build_bev_layout, enlarge_box, extract_bev, quantize_orientations, BevBank, BevLayout, EdgeMap,
    OrientationIntegrals,
};
pub use error::{Error, Result};
pub use eval::{average_recall, curve_sweep, oracle_match, recall_at, EvalImage, RecallCurve};
pub use geometry::{arnms, greedy_nms, iou, ArnmsConfig, BoundingBox, ScoredBox};
pub use sparse_svm::{
    group_prox, score, select_regularizer_for_count, smooth_objective, select_top_groups_for_count, strip_and_renormalize, train_group_lasso_svm,
    train_l2_svm, BinSelection, GroupStructure, LinearModel, TrainConfig,
};
pub use spp::{build_spp_bank, extract_spp, project_box, FeatureMap, SppBank};

/// Scales `v` to unit ℓ2 norm in place; the zero vector is left alone.
pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
