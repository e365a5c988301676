//! Dataset manifest: one JSON document listing, per image, its size, the
//! edge-map, feature-map and candidate files (paths relative to the
//! manifest) and its ground-truth boxes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::binary::{peek_edge_map, peek_feature_map, read_edge_map, read_feature_map};
use super::records::read_candidates;
use crate::cascade::{Candidate, ImageBundle, TrainingImage};
use crate::edge_bev::{quantize_orientations, EdgeMap};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::spp::FeatureMap;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(default)]
    pub difficult: bool,
}

impl GtBox {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub edge_map: PathBuf,
    pub feature_map: PathBuf,
    pub candidates: PathBuf,
    #[serde(default)]
    pub gt: Vec<GtBox>,
}

impl ImageEntry {
    pub fn gt_boxes(&self) -> Vec<BoundingBox> {
        self.gt.iter().map(GtBox::bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Free-form description of the upstream candidate generator, e.g.
    /// `{"name": "edgeboxes", "alpha": 0.75, "beta": 1.0}`.
    #[serde(default)]
    pub generator: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub images: Vec<ImageEntry>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            generator: BTreeMap::new(),
            images: Vec::new(),
            root: root.into(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_edge_map(&self, i: usize) -> Result<EdgeMap> {
        let e = &self.images[i];
        read_edge_map(&self.resolve(&e.edge_map)).map_err(|err| wrap(e, "edge_map", err))
    }

    pub fn load_feature_map(&self, i: usize) -> Result<FeatureMap> {
        let e = &self.images[i];
        read_feature_map(&self.resolve(&e.feature_map)).map_err(|err| wrap(e, "feature_map", err))
    }

    pub fn load_candidates(&self, i: usize) -> Result<Vec<Candidate>> {
        let e = &self.images[i];
        read_candidates(&self.resolve(&e.candidates), &e.image_id)
            .map_err(|err| wrap(e, "candidates", err))
    }

    pub fn load_bundle(&self, i: usize) -> Result<ImageBundle> {
        Ok(ImageBundle {
            candidates: Some(self.load_candidates(i)?),
            features: Some(self.load_feature_map(i)?),
            integrals: Some(quantize_orientations(&self.load_edge_map(i)?)),
        })
    }

    pub fn load_training_image(&self, i: usize) -> Result<TrainingImage> {
        Ok(TrainingImage {
            gt: self.images[i].gt_boxes(),
            candidates: self.load_candidates(i)?,
            features: self.load_feature_map(i)?,
            integrals: quantize_orientations(&self.load_edge_map(i)?),
        })
    }
}

fn wrap(e: &ImageEntry, field: &str, err: Error) -> Error {
    Error::Manifest {
        image_id: e.image_id.clone(),
        field: field.to_string(),
        message: err.to_string(),
    }
}

fn manifest_err(e: &ImageEntry, field: &str, message: String) -> Error {
    Error::Manifest {
        image_id: e.image_id.clone(),
        field: field.to_string(),
        message,
    }
}

fn validate_entry(m: &DatasetManifest, e: &ImageEntry) -> Result<()> {
    if e.width == 0 || e.height == 0 {
        return Err(manifest_err(e, "width/height", "image size must be positive".into()));
    }
    let (w, h) = peek_edge_map(&m.resolve(&e.edge_map)).map_err(|err| wrap(e, "edge_map", err))?;
    if (w, h) != (e.width, e.height) {
        return Err(manifest_err(
            e,
            "edge_map",
            format!("edge map is {w}x{h}, image is {}x{}", e.width, e.height),
        ));
    }
    let fh = peek_feature_map(&m.resolve(&e.feature_map)).map_err(|err| wrap(e, "feature_map", err))?;
    if (fh.image_width, fh.image_height) != (e.width, e.height) {
        return Err(manifest_err(
            e,
            "feature_map",
            format!(
                "feature map was computed on {}x{}, image is {}x{}",
                fh.image_width, fh.image_height, e.width, e.height
            ),
        ));
    }
    read_candidates(&m.resolve(&e.candidates), &e.image_id).map_err(|err| wrap(e, "candidates", err))?;
    for (k, g) in e.gt.iter().enumerate() {
        BoundingBox::try_new(g.x, g.y, g.w, g.h)
            .map_err(|err| manifest_err(e, &format!("gt[{k}]"), err.to_string()))?;
    }
    Ok(())
}

/// Parses and validates a manifest. Every referenced file must exist and
/// carry a header consistent with the image size.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unsupported manifest version {}", m.version),
        });
    }
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = std::collections::BTreeSet::new();
    for e in &m.images {
        if !seen.insert(e.image_id.as_str()) {
            return Err(manifest_err(e, "image_id", "duplicate image id".into()));
        }
        validate_entry(&m, e)?;
    }
    Ok(m)
}

pub fn save_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
