//! Two-stage cascade: training-sample assembly, per-stage descriptors,
//! scoring and suppression.
//!
//! Stage one keeps the best candidates by their edge-based score, rescores
//! them with a few pooled convolutional bins plus that score, and thins the
//! pool with ARNMS. Stage two scores the survivors with boundary edge
//! vectors, more convolutional bins and the edge score, then emits the
//! final list through ARNMS (or plain greedy NMS).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge_bev::{extract_bev, BevBank, OrientationIntegrals, ORIENTATION_BINS};
use crate::error::{Error, Result};
use crate::geometry::{arnms_indices, greedy_nms_indices, iou, ArnmsConfig, BoundingBox, ScoredBox};
use crate::sparse_svm::{
    select_top_groups_for_count, strip_and_renormalize, train_l2_svm, BinSelection,
    GroupStructure, LinearModel, TrainConfig,
};
use crate::spp::{extract_spp, FeatureMap, SppBank};

pub const STAGE_ONE_POOL_CAP: usize = 30_000;
pub const STAGE_ONE_OUTPUT_CAP: usize = 10_000;
pub const STAGE_ONE_SPP_TARGET: usize = 3;
pub const STAGE_TWO_SPP_TARGET: usize = 43;
pub const STAGE_TWO_BEV_TARGET: usize = 311;
pub const SSPB60_THRESHOLD: f64 = 0.6;
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
const MIN_NEGATIVE_SIDE: f64 = 8.0;

/// A candidate window with its upstream edge-based score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub eb_score: f64,
}

/// A candidate rescored by a cascade stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub candidate: Candidate,
    pub score: f64,
}

impl Ranked {
    pub fn scored_box(&self) -> ScoredBox {
        ScoredBox::new(self.candidate.bbox, self.score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOneModel {
    /// Weights over `[selected SPP bins ‖ edge score]`.
    pub model: LinearModel,
    pub spp_selection: BinSelection,
    pub pool_cap: usize,
    pub output_cap: usize,
}

impl StageOneModel {
    pub fn new(model: LinearModel, spp_selection: BinSelection) -> Result<Self> {
        if spp_selection.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(Self {
            model,
            spp_selection,
            pool_cap: STAGE_ONE_POOL_CAP,
            output_cap: STAGE_ONE_OUTPUT_CAP,
        })
    }

    pub fn spp_bank(&self) -> Result<SppBank> {
        crate::spp::build_spp_bank().with_selection(self.spp_selection.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTwoModel {
    /// Weights over `[selected BEV ‖ selected SPP ‖ edge score]`.
    pub model: LinearModel,
    pub bev_selection: BinSelection,
    pub spp_selection: BinSelection,
}

impl StageTwoModel {
    pub fn bev_bank(&self) -> Result<BevBank> {
        BevBank::standard().with_selection(self.bev_selection.clone())
    }

    pub fn spp_bank(&self) -> Result<SppBank> {
        crate::spp::build_spp_bank().with_selection(self.spp_selection.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModels {
    pub stage_one: StageOneModel,
    pub stage_two: StageTwoModel,
}

/// Final suppression step of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum NmsMode {
    /// ARNMS with the given per-stage thresholds and output size `N`.
    Arnms { thresholds: Vec<f64> },
    /// Greedy NMS at a fixed threshold, truncated to `N`.
    Greedy { threshold: f64 },
}

impl NmsMode {
    pub fn arnms_default() -> Self {
        NmsMode::Arnms {
            thresholds: ArnmsConfig::DEFAULT_THRESHOLDS.to_vec(),
        }
    }

    /// Greedy NMS at 0.6.
    pub fn sspb60() -> Self {
        NmsMode::Greedy {
            threshold: SSPB60_THRESHOLD,
        }
    }

    /// Indices of `boxes` to emit, in emission order.
    pub fn select(&self, boxes: &[ScoredBox], n: usize) -> Result<Vec<usize>> {
        match self {
            NmsMode::Arnms { thresholds } => {
                let cfg = ArnmsConfig::new(thresholds.clone(), n)?;
                arnms_indices(boxes, &cfg)
            }
            NmsMode::Greedy { threshold } => {
                if !(*threshold > 0.0 && *threshold <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "NMS threshold {threshold} outside (0, 1]"
                    )));
                }
                let mut kept = greedy_nms_indices(boxes, *threshold);
                kept.truncate(n);
                Ok(kept)
            }
        }
    }
}

impl Default for NmsMode {
    fn default() -> Self {
        Self::arnms_default()
    }
}

/// `[SPP(selected) ‖ edge score]`.
pub fn stage_one_descriptor(c: &Candidate, fm: &FeatureMap, spp: &SppBank) -> Result<Vec<f64>> {
    let mut d = extract_spp(&c.bbox, fm, spp)?;
    d.push(c.eb_score);
    Ok(d)
}

/// `[BEV(selected) ‖ SPP(selected) ‖ edge score]`; each pooled block is
/// normalized on its own and an empty selection contributes nothing.
pub fn stage_two_descriptor(
    c: &Candidate,
    fm: &FeatureMap,
    integrals: &OrientationIntegrals,
    bev: &BevBank,
    spp: &SppBank,
) -> Result<Vec<f64>> {
    let mut d = extract_bev(&c.bbox, integrals, bev);
    if spp.active_bins().is_empty() {
        // nothing to pool, but the box must still project onto the map
        crate::spp::project_box(&c.bbox, fm)?;
    } else {
        d.extend(extract_spp(&c.bbox, fm, spp)?);
    }
    d.push(c.eb_score);
    Ok(d)
}

fn in_image(c: &Candidate, fm: &FeatureMap) -> bool {
    c.bbox
        .intersects_image(fm.image_width() as f64, fm.image_height() as f64)
}

fn rank_candidates(cands: &[Candidate]) -> Vec<usize> {
    let boxes: Vec<ScoredBox> = cands
        .iter()
        .map(|c| ScoredBox::new(c.bbox, c.eb_score))
        .collect();
    crate::geometry::rank_by_score(&boxes)
}

/// Stage one: edge-score truncation to `pool_cap`, rescoring, ARNMS down to
/// `output_cap`. Candidates that miss the image are dropped.
pub fn stage_one(cands: &[Candidate], fm: &FeatureMap, m: &StageOneModel) -> Result<Vec<Ranked>> {
    let mut order = rank_candidates(cands);
    order.truncate(m.pool_cap);
    let pool: Vec<Candidate> = order
        .into_iter()
        .map(|i| cands[i])
        .filter(|c| in_image(c, fm))
        .collect();
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let spp = m.spp_bank()?;
    let scores = pool
        .par_iter()
        .map(|c| m.model.score(&stage_one_descriptor(c, fm, &spp)?))
        .collect::<Result<Vec<f64>>>()?;
    let boxes: Vec<ScoredBox> = pool
        .iter()
        .zip(&scores)
        .map(|(c, &s)| ScoredBox::new(c.bbox, s))
        .collect();
    let keep = arnms_indices(&boxes, &ArnmsConfig::with_defaults(m.output_cap))?;
    Ok(keep
        .into_iter()
        .map(|i| Ranked {
            candidate: pool[i],
            score: scores[i],
        })
        .collect())
}

/// Stage two: rescoring with the full descriptor and final suppression to
/// at most `n` boxes, in emission order.
#[allow(clippy::too_many_arguments)]
pub fn stage_two(
    boxes: &[Candidate],
    fm: &FeatureMap,
    integrals: &OrientationIntegrals,
    bev: &BevBank,
    spp: &SppBank,
    m: &StageTwoModel,
    n: usize,
    mode: &NmsMode,
) -> Result<Vec<Ranked>> {
    let pool: Vec<Candidate> = boxes.iter().copied().filter(|c| in_image(c, fm)).collect();
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let expected = bev.descriptor_len() + spp.descriptor_len(fm.channels()) + 1;
    if expected != m.model.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.model.dim(),
            actual: expected,
        });
    }
    let scores = pool
        .par_iter()
        .map(|c| m.model.score(&stage_two_descriptor(c, fm, integrals, bev, spp)?))
        .collect::<Result<Vec<f64>>>()?;
    let scored: Vec<ScoredBox> = pool
        .iter()
        .zip(&scores)
        .map(|(c, &s)| ScoredBox::new(c.bbox, s))
        .collect();
    Ok(mode
        .select(&scored, n)?
        .into_iter()
        .map(|i| Ranked {
            candidate: pool[i],
            score: scores[i],
        })
        .collect())
}

/// Everything the cascade needs for one image.
#[derive(Debug, Clone)]
pub struct ImageBundle {
    pub candidates: Option<Vec<Candidate>>,
    pub features: Option<FeatureMap>,
    pub integrals: Option<OrientationIntegrals>,
}

/// Runs both stages and returns at most `n` proposals in emission order.
pub fn propose(
    bundle: &ImageBundle,
    models: &CascadeModels,
    n: usize,
    mode: &NmsMode,
) -> Result<Vec<ScoredBox>> {
    let missing = |what: &str| Error::InvalidParameter(format!("image bundle is missing its {what}"));
    let cands = bundle.candidates.as_ref().ok_or_else(|| missing("candidates"))?;
    let fm = bundle.features.as_ref().ok_or_else(|| missing("feature map"))?;
    let ints = bundle.integrals.as_ref().ok_or_else(|| missing("edge map"))?;
    if ints.width() != fm.image_width() || ints.height() != fm.image_height() {
        return Err(Error::InvalidParameter(format!(
            "edge map is {}x{} but feature map was computed on {}x{}",
            ints.width(),
            ints.height(),
            fm.image_width(),
            fm.image_height()
        )));
    }
    let first: Vec<Candidate> = stage_one(cands, fm, &models.stage_one)?
        .into_iter()
        .map(|r| r.candidate)
        .collect();
    let bev = models.stage_two.bev_bank()?;
    let spp = models.stage_two.spp_bank()?;
    Ok(stage_two(&first, fm, ints, &bev, &spp, &models.stage_two, n, mode)?
        .iter()
        .map(Ranked::scored_box)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    /// Largest IoU a negative may have with any ground truth of its image.
    pub neg_iou_max: f64,
    /// Share of negatives drawn around ground-truth boxes.
    pub vicinity_fraction: f64,
    /// Number of negatives relative to the number of positives.
    pub neg_to_pos_ratio: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            neg_iou_max: 0.3,
            vicinity_fraction: 0.5,
            neg_to_pos_ratio: 0.5,
            seed: 0,
        }
    }
}

/// Ground truth and size of one training image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleImage {
    pub width: usize,
    pub height: usize,
    pub gt: Vec<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub image: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub positives: Vec<Sample>,
    pub negatives: Vec<Sample>,
    pub warnings: Vec<String>,
}

fn clip_to_image(b: BoundingBox, w: f64, h: f64) -> Option<BoundingBox> {
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = b.right().min(w);
    let y1 = b.bottom().min(h);
    if x1 - x0 >= 2.0 && y1 - y0 >= 2.0 {
        Some(BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
    } else {
        None
    }
}

fn vicinity_box(rng: &mut ChaCha8Rng, g: &BoundingBox, w: f64, h: f64) -> Option<BoundingBox> {
    let (cx, cy) = g.center();
    let cx = cx + rng.gen_range(-0.5..=0.5) * g.w;
    let cy = cy + rng.gen_range(-0.5..=0.5) * g.h;
    let bw = g.w * rng.gen_range(0.5..=2.0);
    let bh = g.h * rng.gen_range(0.5..=2.0);
    clip_to_image(BoundingBox::new(cx - 0.5 * bw, cy - 0.5 * bh, bw, bh), w, h)
}

fn uniform_box(rng: &mut ChaCha8Rng, w: f64, h: f64) -> BoundingBox {
    let min_w = MIN_NEGATIVE_SIDE.min(w);
    let min_h = MIN_NEGATIVE_SIDE.min(h);
    let bw = rng.gen_range(min_w..=w);
    let bh = rng.gen_range(min_h..=h);
    let x = rng.gen_range(0.0..=(w - bw));
    let y = rng.gen_range(0.0..=(h - bh));
    BoundingBox::new(x, y, bw, bh)
}

/// Positives are all ground-truth boxes. Negatives number
/// `round(ratio · positives)`, split between jittered ground truth and
/// uniformly placed boxes, all with IoU at most `neg_iou_max` against every
/// ground truth of their image.
pub fn assemble_training_samples(images: &[SampleImage], spec: &SampleSpec) -> Result<SampleSet> {
    for (name, v) in [
        ("neg_iou_max", spec.neg_iou_max),
        ("vicinity_fraction", spec.vicinity_fraction),
        ("neg_to_pos_ratio", spec.neg_to_pos_ratio),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let positives: Vec<Sample> = images
        .iter()
        .enumerate()
        .flat_map(|(i, im)| im.gt.iter().map(move |&b| Sample { image: i, bbox: b }))
        .collect();
    if positives.is_empty() {
        return Err(Error::Training("no ground-truth boxes in the training set".into()));
    }
    let total = (spec.neg_to_pos_ratio * positives.len() as f64).round() as usize;
    let n_vicinity = (spec.vicinity_fraction * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut crowded = vec![false; images.len()];
    let mut set = SampleSet {
        positives,
        ..SampleSet::default()
    };

    let fits = |im: &SampleImage, b: &BoundingBox| im.gt.iter().all(|g| iou(g, b) <= spec.neg_iou_max);

    for k in 0..total {
        let vicinity = k < n_vicinity;
        let placed = loop {
            let (image, anchor) = if vicinity {
                let choices: Vec<&Sample> =
                    set.positives.iter().filter(|s| !crowded[s.image]).collect();
                if choices.is_empty() {
                    break None;
                }
                let s = choices[rng.gen_range(0..choices.len())];
                (s.image, Some(s.bbox))
            } else {
                let open: Vec<usize> = (0..images.len()).filter(|&i| !crowded[i]).collect();
                if open.is_empty() {
                    break None;
                }
                (open[rng.gen_range(0..open.len())], None)
            };
            let im = &images[image];
            let (w, h) = (im.width as f64, im.height as f64);
            let mut found = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let cand = match &anchor {
                    Some(g) => vicinity_box(&mut rng, g, w, h),
                    None => Some(uniform_box(&mut rng, w, h)),
                };
                if let Some(b) = cand {
                    if fits(im, &b) {
                        found = Some(b);
                        break;
                    }
                }
            }
            match found {
                Some(b) => break Some(Sample { image, bbox: b }),
                None => {
                    crowded[image] = true;
                    let msg = format!(
                        "image {image}: no valid negative after {MAX_PLACEMENT_ATTEMPTS} attempts, skipping it"
                    );
                    log::warn!("{msg}");
                    set.warnings.push(msg);
                }
            }
        };
        match placed {
            Some(s) => set.negatives.push(s),
            None => break,
        }
    }
    Ok(set)
}

/// Inputs for training: one entry per image.
#[derive(Debug, Clone)]
pub struct TrainingImage {
    pub gt: Vec<BoundingBox>,
    pub candidates: Vec<Candidate>,
    pub features: FeatureMap,
    pub integrals: OrientationIntegrals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeTrainConfig {
    pub stage_one_spp_bins: usize,
    pub stage_two_spp_bins: usize,
    pub stage_two_bev_bins: usize,
    /// When set, bins are selected at this fixed strength instead of by
    /// searching for the target counts.
    pub lambda: Option<f64>,
    pub svm: TrainConfig,
    /// Solver settings for the group-lasso selection runs.
    pub selection: TrainConfig,
    pub samples: SampleSpec,
}

impl Default for CascadeTrainConfig {
    fn default() -> Self {
        Self {
            stage_one_spp_bins: STAGE_ONE_SPP_TARGET,
            stage_two_spp_bins: STAGE_TWO_SPP_TARGET,
            stage_two_bev_bins: STAGE_TWO_BEV_TARGET,
            lambda: None,
            svm: TrainConfig::default(),
            selection: TrainConfig {
                tol: 1e-5,
                max_epochs: 2000,
                ..TrainConfig::default()
            },
            samples: SampleSpec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub positives: usize,
    pub negatives: usize,
    pub stage_one_spp: BinSelection,
    pub stage_two_spp: BinSelection,
    pub stage_two_bev: BinSelection,
    pub warnings: Vec<String>,
}

/// Edge score of the candidate overlapping `b` the most; the image's lowest
/// candidate score when nothing overlaps, zero without candidates.
pub fn nearest_candidate_score(b: &BoundingBox, cands: &[Candidate]) -> f64 {
    let mut best = (0.0, None);
    for c in cands {
        let o = iou(b, &c.bbox);
        if o > best.0 {
            best = (o, Some(c.eb_score));
        }
    }
    match best.1 {
        Some(s) => s,
        None => cands
            .iter()
            .map(|c| c.eb_score)
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))))
            .unwrap_or(0.0),
    }
}

fn select_bins(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &GroupStructure,
    target: usize,
    cfg: &CascadeTrainConfig,
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<BinSelection> {
    if target == 0 {
        return Ok(BinSelection::new(Vec::new(), None));
    }
    let sel = match cfg.lambda {
        Some(lambda) if lambda == 0.0 => {
            let msg = format!("{what}: lambda is 0, every bin is kept");
            log::warn!("{msg}");
            warnings.push(msg);
            BinSelection::all(groups.len())
        }
        Some(lambda) => {
            let tc = TrainConfig {
                lambda,
                ..cfg.selection.clone()
            };
            crate::sparse_svm::train_group_lasso_svm(x, y, groups, &tc)?.selection
        }
        None => {
            let (choice, truncated) = select_top_groups_for_count(x, y, groups, target, &cfg.selection)?;
            if truncated {
                let msg = format!(
                    "{what}: no lambda keeps exactly {target} bins; kept the {target} strongest of the sparsest larger fit"
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            choice.selection
        }
    };
    log::info!("{what}: {} of {} bins kept", sel.len(), groups.len());
    Ok(sel)
}

fn concat_rows(blocks: &[&[Vec<f64>]], eb: &[f64]) -> Vec<Vec<f64>> {
    (0..eb.len())
        .map(|i| {
            let mut row: Vec<f64> = blocks.iter().flat_map(|b| b[i].iter().copied()).collect();
            row.push(eb[i]);
            row
        })
        .collect()
}

fn strip_or_empty(
    x: &[Vec<f64>],
    groups: &GroupStructure,
    sel: &BinSelection,
) -> Result<Vec<Vec<f64>>> {
    if sel.is_empty() {
        Ok(vec![Vec::new(); x.len()])
    } else {
        strip_and_renormalize(x, groups, sel)
    }
}

/// Labelled descriptors of one shared training sample set: full SPP and
/// full BEV per sample plus the edge score of its nearest candidate.
#[derive(Debug, Clone)]
pub struct TrainingFeatures {
    pub labels: Vec<f64>,
    pub spp: Vec<Vec<f64>>,
    pub bev: Vec<Vec<f64>>,
    pub eb: Vec<f64>,
    pub channels: usize,
    pub positives: usize,
    pub negatives: usize,
    pub warnings: Vec<String>,
}

impl TrainingFeatures {
    pub fn spp_groups(&self) -> GroupStructure {
        GroupStructure::uniform(crate::spp::build_spp_bank().total_bins(), self.channels)
    }

    pub fn bev_groups(&self) -> GroupStructure {
        GroupStructure::uniform(BevBank::standard().total_bins(), ORIENTATION_BINS)
    }
}

/// Assembles samples and extracts every descriptor the selection and
/// training steps need.
pub fn extract_training_features(images: &[TrainingImage], spec: &SampleSpec) -> Result<TrainingFeatures> {
    let channels = images
        .first()
        .map(|im| im.features.channels())
        .ok_or_else(|| Error::Training("empty training set".into()))?;
    if let Some(im) = images.iter().find(|im| im.features.channels() != channels) {
        return Err(Error::DimensionMismatch {
            expected: channels,
            actual: im.features.channels(),
        });
    }
    let sample_images: Vec<SampleImage> = images
        .iter()
        .map(|im| SampleImage {
            width: im.features.image_width(),
            height: im.features.image_height(),
            gt: im.gt.clone(),
        })
        .collect();
    let set = assemble_training_samples(&sample_images, spec)?;
    if set.negatives.is_empty() {
        return Err(Error::Training("could not place any negative sample".into()));
    }
    let samples: Vec<(Sample, f64)> = set
        .positives
        .iter()
        .map(|&s| (s, 1.0))
        .chain(set.negatives.iter().map(|&s| (s, -1.0)))
        .collect();

    let full_spp = crate::spp::build_spp_bank();
    let full_bev = BevBank::standard();
    let extracted = samples
        .par_iter()
        .map(|(s, _)| {
            let im = &images[s.image];
            let spp = extract_spp(&s.bbox, &im.features, &full_spp)?;
            let bev = extract_bev(&s.bbox, &im.integrals, &full_bev);
            let eb = nearest_candidate_score(&s.bbox, &im.candidates);
            Ok((spp, bev, eb))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = TrainingFeatures {
        labels: samples.iter().map(|s| s.1).collect(),
        spp: Vec::with_capacity(samples.len()),
        bev: Vec::with_capacity(samples.len()),
        eb: Vec::with_capacity(samples.len()),
        channels,
        positives: set.positives.len(),
        negatives: set.negatives.len(),
        warnings: set.warnings,
    };
    for (s, b, e) in extracted {
        out.spp.push(s);
        out.bev.push(b);
        out.eb.push(e);
    }
    Ok(out)
}

/// Full training protocol for both stages on one shared sample set.
pub fn train_cascade(
    images: &[TrainingImage],
    cfg: &CascadeTrainConfig,
) -> Result<(CascadeModels, TrainSummary)> {
    let f = extract_training_features(images, &cfg.samples)?;
    let y = &f.labels;
    let mut warnings = f.warnings.clone();
    let spp_groups = f.spp_groups();
    let bev_groups = f.bev_groups();

    // stage one
    let s1_sel = select_bins(&f.spp, y, &spp_groups, cfg.stage_one_spp_bins, cfg, "stage 1 SPP", &mut warnings)?;
    if s1_sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    let s1_spp = strip_and_renormalize(&f.spp, &spp_groups, &s1_sel)?;
    let x1 = concat_rows(&[&s1_spp], &f.eb);
    let (m1, _) = train_l2_svm(&x1, y, &cfg.svm)?;
    let g1 = spp_groups.restrict(&s1_sel)?.concat(&GroupStructure::single(1));
    let stage_one = StageOneModel::new(LinearModel::new(m1.weights, m1.bias, g1)?, s1_sel.clone())?;

    // stage two
    let s2_spp_sel = select_bins(&f.spp, y, &spp_groups, cfg.stage_two_spp_bins, cfg, "stage 2 SPP", &mut warnings)?;
    let s2_bev_sel = select_bins(&f.bev, y, &bev_groups, cfg.stage_two_bev_bins, cfg, "stage 2 BEV", &mut warnings)?;
    let s2_spp = strip_or_empty(&f.spp, &spp_groups, &s2_spp_sel)?;
    let s2_bev = strip_or_empty(&f.bev, &bev_groups, &s2_bev_sel)?;
    let x2 = concat_rows(&[&s2_bev, &s2_spp], &f.eb);
    let (m2, _) = train_l2_svm(&x2, y, &cfg.svm)?;
    let g2 = bev_groups
        .restrict(&s2_bev_sel)?
        .concat(&spp_groups.restrict(&s2_spp_sel)?)
        .concat(&GroupStructure::single(1));
    let stage_two = StageTwoModel {
        model: LinearModel::new(m2.weights, m2.bias, g2)?,
        bev_selection: s2_bev_sel.clone(),
        spp_selection: s2_spp_sel.clone(),
    };

    let summary = TrainSummary {
        positives: f.positives,
        negatives: f.negatives,
        stage_one_spp: s1_sel,
        stage_two_spp: s2_spp_sel,
        stage_two_bev: s2_bev_sel,
        warnings,
    };
    Ok((
        CascadeModels {
            stage_one,
            stage_two,
        },
        summary,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_bev::{quantize_orientations, EdgeMap};

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn one_gt_gives_one_negative() {
        let images = vec![SampleImage {
            width: 100,
            height: 100,
            gt: vec![bx(30.0, 30.0, 20.0, 20.0)],
        }];
        let set = assemble_training_samples(&images, &SampleSpec::default()).unwrap();
        assert_eq!(set.positives.len(), 1);
        assert_eq!(set.negatives.len(), 1);
        assert!(iou(&set.negatives[0].bbox, &images[0].gt[0]) <= 0.3);
    }

    #[test]
    fn no_gt_is_an_error() {
        let images = vec![SampleImage {
            width: 100,
            height: 100,
            gt: vec![],
        }];
        assert!(assemble_training_samples(&images, &SampleSpec::default()).is_err());
    }

    #[test]
    fn hundred_gt_give_fifty_negatives() {
        let images: Vec<SampleImage> = (0..25)
            .map(|i| SampleImage {
                width: 200,
                height: 150,
                gt: (0..4)
                    .map(|k| bx(10.0 + 40.0 * k as f64, 20.0 + i as f64, 30.0, 40.0))
                    .collect(),
            })
            .collect();
        let set = assemble_training_samples(&images, &SampleSpec::default()).unwrap();
        assert_eq!(set.positives.len(), 100);
        assert!((49..=51).contains(&set.negatives.len()));
        for s in &set.negatives {
            for g in &images[s.image].gt {
                assert!(iou(g, &s.bbox) <= 0.3);
            }
        }
    }

    #[test]
    fn crowded_image_is_skipped() {
        // the only image is entirely covered by its ground truth
        let images = vec![
            SampleImage {
                width: 20,
                height: 20,
                gt: vec![bx(0.0, 0.0, 20.0, 20.0); 4],
            },
        ];
        let spec = SampleSpec {
            neg_iou_max: 0.0,
            ..SampleSpec::default()
        };
        let set = assemble_training_samples(&images, &spec).unwrap();
        assert!(set.negatives.is_empty());
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn sampling_is_seeded() {
        let images = vec![SampleImage {
            width: 120,
            height: 90,
            gt: vec![bx(10.0, 10.0, 30.0, 30.0), bx(60.0, 40.0, 30.0, 30.0)],
        }; 5];
        let a = assemble_training_samples(&images, &SampleSpec::default()).unwrap();
        let b = assemble_training_samples(&images, &SampleSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = assemble_training_samples(
            &images,
            &SampleSpec {
                seed: 9,
                ..SampleSpec::default()
            },
        )
        .unwrap();
        assert_ne!(a.negatives, c.negatives);
    }

    #[test]
    fn greedy_mode_truncates() {
        let boxes: Vec<ScoredBox> = (0..5)
            .map(|i| ScoredBox::new(bx(20.0 * i as f64, 0.0, 10.0, 10.0), i as f64))
            .collect();
        assert_eq!(NmsMode::sspb60().select(&boxes, 2).unwrap(), vec![4, 3]);
        assert!(NmsMode::Greedy { threshold: 0.0 }.select(&boxes, 2).is_err());
    }

    #[test]
    fn nearest_score_lookup() {
        let cands = vec![
            Candidate { bbox: bx(0.0, 0.0, 10.0, 10.0), eb_score: 0.4 },
            Candidate { bbox: bx(50.0, 50.0, 10.0, 10.0), eb_score: -0.2 },
        ];
        assert_eq!(nearest_candidate_score(&bx(1.0, 1.0, 10.0, 10.0), &cands), 0.4);
        assert_eq!(nearest_candidate_score(&bx(90.0, 0.0, 5.0, 5.0), &cands), -0.2);
        assert_eq!(nearest_candidate_score(&bx(90.0, 0.0, 5.0, 5.0), &[]), 0.0);
    }

    #[test]
    fn propose_names_missing_parts() {
        let fm = FeatureMap::new(1, 4, 4, 32, 32, vec![0.0; 16]).unwrap();
        let ints = quantize_orientations(&EdgeMap::zeros(32, 32));
        let s1 = StageOneModel::new(
            LinearModel::new(vec![0.0; 2], 0.0, GroupStructure::single(2)).unwrap(),
            BinSelection::new(vec![0], None),
        )
        .unwrap();
        let s2 = StageTwoModel {
            model: LinearModel::new(vec![0.0; 2], 0.0, GroupStructure::single(2)).unwrap(),
            bev_selection: BinSelection::new(vec![], None),
            spp_selection: BinSelection::new(vec![0], None),
        };
        let models = CascadeModels { stage_one: s1, stage_two: s2 };
        let bundle = ImageBundle {
            candidates: Some(vec![]),
            features: Some(fm),
            integrals: None,
        };
        let err = propose(&bundle, &models, 5, &NmsMode::default()).unwrap_err();
        assert!(err.to_string().contains("edge map"));
        let bundle = ImageBundle {
            integrals: Some(ints),
            ..bundle
        };
        assert!(propose(&bundle, &models, 5, &NmsMode::default()).unwrap().is_empty());
    }
}
