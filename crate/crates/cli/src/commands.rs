use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sspb_core::cascade::extract_training_features;
use sspb_core::data_io::{
    load_manifest, read_candidates, read_proposals, read_stage_one, read_stage_two,
    write_proposals, write_stage_one, write_stage_two, write_synthetic_dataset, DatasetManifest,
};
use sspb_core::sparse_svm::group_lasso_lambda_max;
use sspb_core::{
    curve_sweep, propose, train_cascade, train_group_lasso_svm, BoundingBox, CascadeModels,
    EvalImage, TrainConfig, TrainingImage,
};

use crate::config::{EffectiveConfig, FeatureKind, RunConfig};

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes `<output>/<command>.config.toml`.
pub fn echo_config(command: &str, cfg: &RunConfig) -> Result<()> {
    ensure_dir(&cfg.output)?;
    let path = cfg.output.join(format!("{command}.config.toml"));
    std::fs::write(&path, EffectiveConfig::new(command, cfg).to_toml()?)
        .with_context(|| format!("writing {}", path.display()))
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg.manifest.as_ref().context("no manifest given (use --manifest)")?;
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn load_training_images(m: &DatasetManifest) -> Result<Vec<TrainingImage>> {
    (0..m.images.len())
        .into_par_iter()
        .map(|i| m.load_training_image(i))
        .collect::<std::result::Result<Vec<_>, _>>()
        .context("loading training images")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub images: usize,
    pub positives: usize,
    pub negatives: usize,
    pub stage_one_spp: Vec<usize>,
    pub stage_two_spp: Vec<usize>,
    pub stage_two_bev: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    let m = manifest(cfg)?;
    if m.images.iter().all(|e| e.gt.is_empty()) {
        bail!("the manifest has no ground-truth boxes to train on");
    }
    let images = load_training_images(&m)?;
    let (models, summary) = train_cascade(&images, &cfg.train_config()).context("training the cascade")?;
    ensure_dir(&cfg.output)?;
    let (p1, p2) = (cfg.stage_one_path(), cfg.stage_two_path());
    write_stage_one(&p1, &models.stage_one).with_context(|| format!("writing {}", p1.display()))?;
    write_stage_two(&p2, &models.stage_two).with_context(|| format!("writing {}", p2.display()))?;
    let report = TrainReport {
        images: images.len(),
        positives: summary.positives,
        negatives: summary.negatives,
        stage_one_spp: summary.stage_one_spp.kept().to_vec(),
        stage_two_spp: summary.stage_two_spp.kept().to_vec(),
        stage_two_bev: summary.stage_two_bev.kept().to_vec(),
        warnings: summary.warnings,
    };
    write_json(&cfg.output.join("train_summary.json"), &report)?;
    echo_config("train", cfg)?;
    println!(
        "trained on {} images ({} positives, {} negatives)",
        report.images, report.positives, report.negatives
    );
    println!("stage 1: {} SPP bins", report.stage_one_spp.len());
    println!(
        "stage 2: {} SPP bins, {} BEV bins",
        report.stage_two_spp.len(),
        report.stage_two_bev.len()
    );
    Ok(report)
}

pub fn load_models(cfg: &RunConfig) -> Result<CascadeModels> {
    let (p1, p2) = (cfg.stage_one_path(), cfg.stage_two_path());
    let mut stage_one = read_stage_one(&p1).with_context(|| format!("loading stage-one model {}", p1.display()))?;
    stage_one.pool_cap = cfg.stage_one.pool_cap;
    stage_one.output_cap = cfg.stage_one.output_cap;
    let stage_two = read_stage_two(&p2).with_context(|| format!("loading stage-two model {}", p2.display()))?;
    Ok(CascadeModels {
        stage_one,
        stage_two,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeReport {
    pub images: usize,
    pub proposals: usize,
}

pub fn run_propose(cfg: &RunConfig) -> Result<ProposeReport> {
    let models = load_models(cfg)?;
    let m = manifest(cfg)?;
    let mode = cfg.nms.mode();
    let all = (0..m.images.len())
        .into_par_iter()
        .map(|i| {
            let id = &m.images[i].image_id;
            let bundle = m.load_bundle(i)?;
            propose(&bundle, &models, cfg.n, &mode).with_context(|| format!("proposing for image {id}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = cfg.proposals_dir();
    ensure_dir(&dir)?;
    let mut total = 0;
    for (e, boxes) in m.images.iter().zip(&all) {
        total += boxes.len();
        write_proposals(&dir.join(format!("{}.jsonl", e.image_id)), &e.image_id, boxes)?;
    }
    echo_config("propose", cfg)?;
    println!("{} proposals for {} images in {}", total, all.len(), dir.display());
    Ok(ProposeReport {
        images: all.len(),
        proposals: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `proposals` or `candidates`.
    pub source: String,
    pub images: usize,
    pub gt_boxes: usize,
    /// Average recall per budget.
    pub ar: BTreeMap<usize, f64>,
}

fn eval_images(cfg: &RunConfig, m: &DatasetManifest) -> Result<Vec<EvalImage>> {
    let dir = cfg.proposals_dir();
    m.images
        .iter()
        .filter(|e| !e.gt.is_empty())
        .map(|e| {
            let proposals: Vec<BoundingBox> = if cfg.eval.rank_candidates {
                let mut c = read_candidates(&m.resolve(&e.candidates), &e.image_id)?;
                c.sort_by(|a, b| b.eb_score.total_cmp(&a.eb_score));
                c.iter().map(|c| c.bbox).collect()
            } else {
                let path = dir.join(format!("{}.jsonl", e.image_id));
                let recs = read_proposals(&path)
                    .with_context(|| format!("reading proposals of image {}", e.image_id))?;
                if let Some(r) = recs.iter().find(|r| r.image_id != e.image_id) {
                    bail!("{} holds a proposal for image {}", path.display(), r.image_id);
                }
                recs.iter().map(|r| r.bbox()).collect()
            };
            Ok(EvalImage {
                gt: e.gt_boxes(),
                proposals,
            })
        })
        .collect()
}

pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let m = manifest(cfg)?;
    let images = eval_images(cfg, &m)?;
    if images.is_empty() {
        bail!("no image in the manifest has ground truth");
    }
    let mut budgets = cfg.eval.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    for &n in &budgets {
        let short = images.iter().filter(|im| im.proposals.len() < n).count();
        if short > 0 {
            log::warn!("budget {n}: {short} images have fewer proposals, their recall is saturated");
        }
    }
    let curves = curve_sweep(&images, &budgets)?;
    let source = if cfg.eval.rank_candidates { "candidates" } else { "proposals" };
    let dir = cfg.output.join(format!("eval_{source}"));
    ensure_dir(&dir)?;
    for (n, c) in &curves {
        let path = dir.join(format!("recall_{n}.csv"));
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        c.write_csv(BufWriter::new(f))?;
    }
    let report = EvalReport {
        source: source.to_string(),
        images: images.len(),
        gt_boxes: images.iter().map(|im| im.gt.len()).sum(),
        ar: curves.iter().map(|(&n, c)| (n, c.ar)).collect(),
    };
    write_json(&dir.join("ar_summary.json"), &report)?;
    echo_config("eval", cfg)?;
    for (n, ar) in &report.ar {
        println!("AR@{n}: {ar:.4}");
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectBinsReport {
    pub feature: FeatureKind,
    pub lambda_max: f64,
    pub sweep: Vec<SweepPoint>,
}

pub fn run_select_bins(cfg: &RunConfig) -> Result<SelectBinsReport> {
    if cfg.select_bins.points < 2 {
        bail!("a sweep needs at least 2 points");
    }
    let m = manifest(cfg)?;
    let images = load_training_images(&m)?;
    let f = extract_training_features(&images, &cfg.sample_spec())?;
    let (x, groups) = match cfg.select_bins.feature {
        FeatureKind::Spp => (&f.spp, f.spp_groups()),
        FeatureKind::Bev => (&f.bev, f.bev_groups()),
    };
    let solver = cfg.selection_solver.to_train(cfg.seed);
    let lambda_max = group_lasso_lambda_max(x, &f.labels, &groups, solver.smoothing)?;
    let last = (cfg.select_bins.points - 1) as f64;
    let sweep = (0..cfg.select_bins.points)
        .map(|i| {
            let lambda = lambda_max * i as f64 / last;
            let fit = train_group_lasso_svm(x, &f.labels, &groups, &TrainConfig { lambda, ..solver.clone() })?;
            println!("lambda {lambda:.6e}: {} of {} bins kept", fit.selection.len(), groups.len());
            Ok(SweepPoint {
                lambda,
                kept: fit.selection.kept().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SelectBinsReport {
        feature: cfg.select_bins.feature,
        lambda_max,
        sweep,
    };
    ensure_dir(&cfg.output)?;
    write_json(&cfg.output.join("select_bins.json"), &report)?;
    echo_config("select-bins", cfg)?;
    Ok(report)
}

pub fn run_synth(cfg: &RunConfig) -> Result<DatasetManifest> {
    let m = write_synthetic_dataset(&cfg.output, cfg.synth.count, &cfg.synth_spec())
        .with_context(|| format!("writing synthetic dataset to {}", cfg.output.display()))?;
    echo_config("synth", cfg)?;
    println!(
        "{} synthetic images in {}",
        m.images.len(),
        cfg.output.join("manifest.json").display()
    );
    Ok(m)
}
