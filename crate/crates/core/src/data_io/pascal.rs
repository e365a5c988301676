//! Pascal VOC XML annotations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::manifest::GtBox;
use crate::error::{Error, Result};

fn xml_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Xml {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.has_tag_name(name))
        .and_then(|c| c.text())
        .map(str::trim)
}

/// Parses one annotation document. Corners are 1-based and inclusive, so
/// `(xmin, ymin, xmax, ymax)` becomes `(xmin − 1, ymin − 1, xmax − xmin + 1,
/// ymax − ymin + 1)`.
pub fn parse_annotation(xml: &str, path: &Path) -> Result<(String, Vec<GtBox>)> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| xml_err(path, e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(xml_err(path, format!("root element is <{}>", root.tag_name().name())));
    }
    let image_id = child_text(root, "filename")
        .map(|f| {
            Path::new(f)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| f.to_string())
        })
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let mut boxes = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let class_name = child_text(obj, "name")
            .ok_or_else(|| xml_err(path, "object without <name>"))?
            .to_string();
        let difficult = matches!(child_text(obj, "difficult"), Some("1"));
        let bnd = obj
            .children()
            .find(|c| c.has_tag_name("bndbox"))
            .ok_or_else(|| xml_err(path, format!("object {class_name:?} without <bndbox>")))?;
        let coord = |name: &str| -> Result<f64> {
            child_text(bnd, name)
                .ok_or_else(|| xml_err(path, format!("missing <{name}>")))?
                .parse::<f64>()
                .map_err(|e| xml_err(path, format!("<{name}>: {e}")))
        };
        let (xmin, ymin, xmax, ymax) = (coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?);
        let (w, h) = (xmax - xmin + 1.0, ymax - ymin + 1.0);
        if !(w > 0.0 && h > 0.0) {
            return Err(xml_err(path, format!("degenerate box for {class_name:?}")));
        }
        boxes.push(GtBox {
            x: xmin - 1.0,
            y: ymin - 1.0,
            w,
            h,
            class_name,
            difficult,
        });
    }
    Ok((image_id, boxes))
}

/// Ground truth of every `*.xml` file in `dir`, keyed by image id. Files
/// that fail to parse are reported alongside and do not stop the others.
pub fn load_pascal_annotations(
    dir: &Path,
) -> Result<(BTreeMap<String, Vec<GtBox>>, Vec<(PathBuf, Error)>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xml"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for p in paths {
        let parsed = std::fs::read_to_string(&p)
            .map_err(|e| Error::io(&p, e))
            .and_then(|text| parse_annotation(&text, &p));
        match parsed {
            Ok((id, boxes)) => {
                out.insert(id, boxes);
            }
            Err(e) => {
                log::warn!("{e}");
                errors.push((p, e));
            }
        }
    }
    Ok((out, errors))
}
