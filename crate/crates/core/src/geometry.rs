//! Axis-aligned boxes, IoU, greedy NMS and the staged ARNMS suppression.
//!
//! Boxes are `(x, y, w, h)` in continuous pixel coordinates. Suppression is
//! strict: a box is removed only when its IoU with an already kept box is
//! *greater* than the threshold, so a threshold of `1.0` keeps everything.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Checked constructor; rejects non-finite values and empty extents.
    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite box ({x}, {y}, {w}, {h})")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!("empty box ({x}, {y}, {w}, {h})")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when the box overlaps the `[0, width] x [0, height]` image plane
    /// with positive area.
    pub fn intersects_image(&self, width: f64, height: f64) -> bool {
        self.x < width && self.y < height && self.right() > 0.0 && self.bottom() > 0.0
    }
}

/// Intersection over union. Identical boxes give exactly `1.0`, disjoint
/// boxes exactly `0.0`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BoundingBox, score: f64) -> Self {
        Self { bbox, score }
    }
}

/// Indices ordered by descending score; ties keep the lower input index first.
pub fn rank_by_score(boxes: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .score
            .partial_cmp(&boxes[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy NMS over the candidates listed in `order` (already ranked).
/// Returns the kept subset of `order`, preserving its order.
fn greedy_over(boxes: &[ScoredBox], order: &[usize], threshold: f64) -> Vec<usize> {
    if threshold >= 1.0 {
        return order.to_vec();
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        let b = &boxes[i].bbox;
        if kept.iter().all(|&k| iou(&boxes[k].bbox, b) <= threshold) {
            kept.push(i);
        }
    }
    kept
}

/// Greedy NMS returning the indices of kept boxes in descending score order.
pub fn greedy_nms_indices(boxes: &[ScoredBox], threshold: f64) -> Vec<usize> {
    let order = rank_by_score(boxes);
    greedy_over(boxes, &order, threshold)
}

pub fn greedy_nms(boxes: &[ScoredBox], threshold: f64) -> Vec<ScoredBox> {
    greedy_nms_indices(boxes, threshold)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArnmsConfig {
    /// One IoU threshold per stage, strictly decreasing.
    pub thresholds: Vec<f64>,
    pub output_size: usize,
}

impl ArnmsConfig {
    pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 0.7, 0.5];

    pub fn new(thresholds: Vec<f64>, output_size: usize) -> Result<Self> {
        let cfg = Self {
            thresholds,
            output_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Three stages at `(1.0, 0.7, 0.5)`.
    pub fn with_defaults(output_size: usize) -> Self {
        Self {
            thresholds: Self::DEFAULT_THRESHOLDS.to_vec(),
            output_size,
        }
    }

    pub fn stages(&self) -> usize {
        self.thresholds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidParameter("ARNMS needs at least one stage".into()));
        }
        if self.output_size == 0 {
            return Err(Error::InvalidParameter("ARNMS output size must be >= 1".into()));
        }
        for &t in &self.thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "ARNMS threshold {t} outside (0, 1]"
                )));
            }
        }
        if self.thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(
                "ARNMS thresholds must be strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    /// Cumulative number of boxes that should have been emitted after each
    /// stage: `floor(N/S) * s` for the first `S - 1` stages and `N` at the end.
    pub fn cumulative_targets(&self) -> Vec<usize> {
        let s = self.stages();
        let per = self.output_size / s;
        (1..=s)
            .map(|k| if k == s { self.output_size } else { per * k })
            .collect()
    }
}

/// ARNMS returning indices into `boxes` in emission order.
///
/// Each stage runs greedy NMS at its threshold over the boxes not yet
/// emitted and emits the best survivors up to the stage's cumulative target.
/// Boxes suppressed in one stage stay in the pool for later stages. A stage
/// that cannot fill its quota passes the shortfall to the next one.
pub fn arnms_indices(boxes: &[ScoredBox], cfg: &ArnmsConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut pool = rank_by_score(boxes);
    let mut emitted: Vec<usize> = Vec::with_capacity(cfg.output_size.min(boxes.len()));
    for (&threshold, target) in cfg.thresholds.iter().zip(cfg.cumulative_targets()) {
        if pool.is_empty() {
            break;
        }
        let quota = target.saturating_sub(emitted.len());
        if quota == 0 {
            continue;
        }
        let survivors = greedy_over(boxes, &pool, threshold);
        let take: Vec<usize> = survivors.into_iter().take(quota).collect();
        if take.is_empty() {
            continue;
        }
        let mut taken = vec![false; boxes.len()];
        for &i in &take {
            taken[i] = true;
        }
        pool.retain(|&i| !taken[i]);
        emitted.extend(take);
    }
    Ok(emitted)
}

pub fn arnms(boxes: &[ScoredBox], cfg: &ArnmsConfig) -> Result<Vec<ScoredBox>> {
    Ok(arnms_indices(boxes, cfg)?
        .into_iter()
        .map(|i| boxes[i])
        .collect())
}
