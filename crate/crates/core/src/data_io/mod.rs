//! File formats and dataset plumbing: binary edge maps, feature maps and
//! model files, cascade stage files, JSON-lines candidate and proposal records, the dataset
//! manifest, Pascal VOC annotations and a synthetic scene generator.

pub mod binary;
pub mod manifest;
pub mod models;
pub mod pascal;
pub mod records;
pub mod synth;

pub use binary::{
    read_edge_map, read_feature_map, read_model, write_edge_map, write_feature_map, write_model,
};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, GtBox, ImageEntry};
pub use models::{read_stage_one, read_stage_two, write_stage_one, write_stage_two};
pub use pascal::{load_pascal_annotations, parse_annotation};
pub use records::{read_candidates, read_proposals, write_candidates, write_proposals};
pub use synth::{generate_synthetic_scene, write_synthetic_dataset, SyntheticScene, SyntheticSceneSpec};
