//! Overlap recall and average recall with a per-ground-truth oracle
//! matcher: each ground-truth box is credited with its best-overlapping
//! proposal, independently of the others.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

/// Spacing of the emitted recall curves over `[0.5, 1]`.
pub const CURVE_STEP: f64 = 0.005;
pub const DEFAULT_BUDGETS: [usize; 3] = [10, 100, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub best_iou: Vec<f64>,
    pub matched: Vec<Option<usize>>,
}

impl MatchResult {
    pub fn len(&self) -> usize {
        self.best_iou.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best_iou.is_empty()
    }

    /// Concatenates per-image results into one dataset-level result.
    /// Proposal indices stay relative to their own image.
    pub fn concat(parts: &[MatchResult]) -> MatchResult {
        MatchResult {
            best_iou: parts.iter().flat_map(|p| p.best_iou.iter().copied()).collect(),
            matched: parts.iter().flat_map(|p| p.matched.iter().copied()).collect(),
        }
    }
}

/// For every ground-truth box, the proposal with the highest IoU (lowest
/// index on ties) or `None` when nothing overlaps.
pub fn oracle_match(gt: &[BoundingBox], proposals: &[BoundingBox]) -> MatchResult {
    let mut best_iou = Vec::with_capacity(gt.len());
    let mut matched = Vec::with_capacity(gt.len());
    for g in gt {
        let mut best = 0.0;
        let mut arg = None;
        for (j, p) in proposals.iter().enumerate() {
            let o = iou(g, p);
            if o > best {
                best = o;
                arg = Some(j);
            }
        }
        best_iou.push(best);
        matched.push(arg);
    }
    MatchResult { best_iou, matched }
}

/// Fraction of ground-truth boxes whose best IoU is at least `t`.
pub fn recall_at(m: &MatchResult, t: f64) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::InvalidParameter("recall needs at least one ground-truth box".into()));
    }
    let hits = m.best_iou.iter().filter(|&&o| o >= t).count();
    Ok(hits as f64 / m.len() as f64)
}

/// Area under the recall curve on `[0.5, 1]`, rescaled to `[0, 1]`:
/// `2 · mean(max(0, best_iou − 0.5))`.
pub fn average_recall(m: &MatchResult) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::InvalidParameter(
            "average recall needs at least one ground-truth box".into(),
        ));
    }
    let s: f64 = m.best_iou.iter().map(|&o| (o - 0.5).max(0.0)).sum();
    Ok(2.0 * s / m.len() as f64)
}

/// Thresholds `0.5, 0.5 + step, ..., 1.0`.
pub fn threshold_grid(step: f64) -> Vec<f64> {
    let n = (0.5 / step).round() as usize;
    (0..=n).map(|i| 0.5 + i as f64 * 0.5 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
    pub ar: f64,
}

impl RecallCurve {
    pub fn from_match(m: &MatchResult, step: f64) -> Result<Self> {
        let thresholds = threshold_grid(step);
        let recall = thresholds
            .iter()
            .map(|&t| recall_at(m, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            thresholds,
            recall,
            ar: average_recall(m)?,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold,recall")?;
        for (t, r) in self.thresholds.iter().zip(&self.recall) {
            writeln!(out, "{t:.3},{r:.6}")?;
        }
        Ok(())
    }
}

/// Ground truth and emission-ordered proposals of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage {
    pub gt: Vec<BoundingBox>,
    pub proposals: Vec<BoundingBox>,
}

/// Dataset-level curves for each budget, keeping the first `n` proposals of
/// every image. Images without ground truth are skipped.
pub fn curve_sweep(images: &[EvalImage], budgets: &[usize]) -> Result<BTreeMap<usize, RecallCurve>> {
    let mut out = BTreeMap::new();
    for &n in budgets {
        let parts: Vec<MatchResult> = images
            .iter()
            .filter(|im| !im.gt.is_empty())
            .map(|im| oracle_match(&im.gt, &im.proposals[..n.min(im.proposals.len())]))
            .collect();
        let all = MatchResult::concat(&parts);
        out.insert(n, RecallCurve::from_match(&all, CURVE_STEP)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    fn from_ious(v: &[f64]) -> MatchResult {
        MatchResult {
            best_iou: v.to_vec(),
            matched: vec![None; v.len()],
        }
    }

    #[test]
    fn identity_and_empty_matching() {
        let gt = vec![bx(0.0, 0.0, 10.0, 10.0), bx(20.0, 5.0, 8.0, 4.0)];
        let m = oracle_match(&gt, &gt);
        assert_eq!(m.best_iou, vec![1.0, 1.0]);
        assert_eq!(m.matched, vec![Some(0), Some(1)]);
        let m = oracle_match(&gt, &[]);
        assert_eq!(m.best_iou, vec![0.0, 0.0]);
        assert_eq!(m.matched, vec![None, None]);
    }

    #[test]
    fn one_proposal_can_serve_many() {
        let gt = vec![bx(0.0, 0.0, 10.0, 10.0), bx(0.0, 0.0, 10.0, 10.0)];
        let m = oracle_match(&gt, &[bx(0.0, 0.0, 10.0, 10.0)]);
        assert_eq!(m.matched, vec![Some(0), Some(0)]);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at(&from_ious(&[1.0, 1.0]), 0.9).unwrap(), 1.0);
        assert_eq!(recall_at(&from_ious(&[0.6, 0.4]), 0.5).unwrap(), 0.5);
        assert_eq!(recall_at(&from_ious(&[0.6, 0.4]), 0.6001).unwrap(), 0.0);
        assert!(recall_at(&from_ious(&[]), 0.5).is_err());
    }

    #[test]
    fn ar_examples() {
        assert_eq!(average_recall(&from_ious(&[1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_abs_diff_eq!(average_recall(&from_ious(&[0.75])).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(average_recall(&from_ious(&[0.5, 0.2, 0.0])).unwrap(), 0.0);
        assert!(average_recall(&from_ious(&[])).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = threshold_grid(CURVE_STEP);
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.5);
        assert_eq!(*g.last().unwrap(), 1.0);
    }

    #[test]
    fn sweep_saturation_and_empty_budget() {
        let images = vec![
            EvalImage {
                gt: vec![bx(0.0, 0.0, 10.0, 10.0)],
                proposals: vec![bx(30.0, 30.0, 5.0, 5.0), bx(1.0, 0.0, 10.0, 10.0)],
            },
            EvalImage {
                gt: vec![],
                proposals: vec![bx(0.0, 0.0, 1.0, 1.0)],
            },
        ];
        let c = curve_sweep(&images, &[0, 1, 2, 50]).unwrap();
        assert!(c[&0].recall.iter().all(|&r| r == 0.0));
        assert_eq!(c[&0].ar, 0.0);
        assert_eq!(c[&2], c[&50]);
        assert!(c[&1].ar <= c[&2].ar);
    }

    #[test]
    fn csv_header() {
        let c = RecallCurve::from_match(&from_ious(&[0.7]), CURVE_STEP).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("threshold,recall\n0.500,1.000000\n"));
        assert_eq!(s.lines().count(), 102);
    }
}
