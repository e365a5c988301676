//! Run configuration, read from TOML and overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sspb_core::cascade::{
    CascadeTrainConfig, SampleSpec, STAGE_ONE_OUTPUT_CAP, STAGE_ONE_POOL_CAP, STAGE_ONE_SPP_TARGET,
    STAGE_TWO_BEV_TARGET, STAGE_TWO_SPP_TARGET, SSPB60_THRESHOLD,
};
use sspb_core::data_io::SyntheticSceneSpec;
use sspb_core::edge_bev::{DEFAULT_ENLARGEMENT, DEFAULT_STRIPE_FRACTIONS};
use sspb_core::eval::DEFAULT_BUDGETS;
use sspb_core::spp::DEFAULT_GRID_SIZES;
use sspb_core::{ArnmsConfig, NmsMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// ARNMS as the final suppression.
    Sspb,
    /// Greedy NMS at a fixed threshold as the final suppression.
    Sspb60,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsConfig {
    pub variant: Variant,
    pub arnms_thresholds: Vec<f64>,
    pub greedy_threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sspb,
            arnms_thresholds: ArnmsConfig::DEFAULT_THRESHOLDS.to_vec(),
            greedy_threshold: SSPB60_THRESHOLD,
        }
    }
}

impl NmsConfig {
    pub fn mode(&self) -> NmsMode {
        match self.variant {
            Variant::Sspb => NmsMode::Arnms {
                thresholds: self.arnms_thresholds.clone(),
            },
            Variant::Sspb60 => NmsMode::Greedy {
                threshold: self.greedy_threshold,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOneCaps {
    pub pool_cap: usize,
    pub output_cap: usize,
}

impl Default for StageOneCaps {
    fn default() -> Self {
        Self {
            pool_cap: STAGE_ONE_POOL_CAP,
            output_cap: STAGE_ONE_OUTPUT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionTargets {
    pub stage_one_spp: usize,
    pub stage_two_spp: usize,
    pub stage_two_bev: usize,
    /// Fixed group-lasso strength; when absent the strength is searched
    /// per feature type to hit the targets.
    pub lambda: Option<f64>,
}

impl Default for SelectionTargets {
    fn default() -> Self {
        Self {
            stage_one_spp: STAGE_ONE_SPP_TARGET,
            stage_two_spp: STAGE_TWO_SPP_TARGET,
            stage_two_bev: STAGE_TWO_BEV_TARGET,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub neg_iou_max: f64,
    pub vicinity_fraction: f64,
    pub neg_to_pos_ratio: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let s = SampleSpec::default();
        Self {
            neg_iou_max: s.neg_iou_max,
            vicinity_fraction: s.vicinity_fraction,
            neg_to_pos_ratio: s.neg_to_pos_ratio,
        }
    }
}

/// Solver settings without a seed; the run seed is injected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub c: f64,
    pub max_epochs: usize,
    pub tol: f64,
    pub smoothing: f64,
}

impl SolverConfig {
    fn from_train(t: &TrainConfig) -> Self {
        Self {
            c: t.c,
            max_epochs: t.max_epochs,
            tol: t.tol,
            smoothing: t.smoothing,
        }
    }

    pub fn to_train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            c: self.c,
            lambda: 0.0,
            max_epochs: self.max_epochs,
            tol: self.tol,
            seed,
            smoothing: self.smoothing,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::from_train(&TrainConfig::default())
    }
}

fn default_selection_solver() -> SolverConfig {
    SolverConfig::from_train(&CascadeTrainConfig::default().selection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub budgets: Vec<usize>,
    /// Directory of per-image proposal files; defaults to
    /// `<output>/proposals`.
    pub proposals: Option<PathBuf>,
    /// Rank the manifest's candidates by their edge score instead of
    /// reading proposals.
    pub rank_candidates: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            budgets: DEFAULT_BUDGETS.to_vec(),
            proposals: None,
            rank_candidates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectBinsConfig {
    pub feature: FeatureKind,
    /// Number of evenly spaced λ values on `[0, λ_max]`.
    pub points: usize,
}

impl Default for SelectBinsConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::Spp,
            points: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Spp,
    Bev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    pub scene: SyntheticSceneSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 100,
            scene: SyntheticSceneSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    pub output: PathBuf,
    pub manifest: Option<PathBuf>,
    /// Proposals emitted per image.
    pub n: usize,
    /// Stage-one model file; `<output>/stage1.sspb` when absent.
    pub stage_one_model: Option<PathBuf>,
    /// Stage-two model file; `<output>/stage2.sspb` when absent.
    pub stage_two_model: Option<PathBuf>,
    pub nms: NmsConfig,
    pub stage_one: StageOneCaps,
    pub selection: SelectionTargets,
    pub svm: SolverConfig,
    #[serde(default = "default_selection_solver")]
    pub selection_solver: SolverConfig,
    pub sampling: SamplingConfig,
    pub eval: EvalConfig,
    pub select_bins: SelectBinsConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            output: PathBuf::from("sspb-out"),
            manifest: None,
            n: 1000,
            stage_one_model: None,
            stage_two_model: None,
            nms: NmsConfig::default(),
            stage_one: StageOneCaps::default(),
            selection: SelectionTargets::default(),
            svm: SolverConfig::default(),
            selection_solver: default_selection_solver(),
            sampling: SamplingConfig::default(),
            eval: EvalConfig::default(),
            select_bins: SelectBinsConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn stage_one_path(&self) -> PathBuf {
        self.stage_one_model
            .clone()
            .unwrap_or_else(|| self.output.join("stage1.sspb"))
    }

    pub fn stage_two_path(&self) -> PathBuf {
        self.stage_two_model
            .clone()
            .unwrap_or_else(|| self.output.join("stage2.sspb"))
    }

    pub fn proposals_dir(&self) -> PathBuf {
        self.eval
            .proposals
            .clone()
            .unwrap_or_else(|| self.output.join("proposals"))
    }

    pub fn sample_spec(&self) -> SampleSpec {
        SampleSpec {
            neg_iou_max: self.sampling.neg_iou_max,
            vicinity_fraction: self.sampling.vicinity_fraction,
            neg_to_pos_ratio: self.sampling.neg_to_pos_ratio,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> CascadeTrainConfig {
        CascadeTrainConfig {
            stage_one_spp_bins: self.selection.stage_one_spp,
            stage_two_spp_bins: self.selection.stage_two_spp,
            stage_two_bev_bins: self.selection.stage_two_bev,
            lambda: self.selection.lambda,
            svm: self.svm.to_train(self.seed),
            selection: self.selection_solver.to_train(self.seed),
            samples: self.sample_spec(),
        }
    }

    pub fn synth_spec(&self) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            seed: self.seed,
            ..self.synth.scene.clone()
        }
    }
}

/// Feature-bank parameters compiled into the library. They are echoed with
/// every run for reference and cannot be changed from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedParameters {
    pub bev_stripe_fractions: Vec<f64>,
    pub bev_bins: usize,
    pub bev_enlargement: f64,
    pub spp_grid_sizes: Vec<usize>,
    pub spp_bins: usize,
}

impl FixedParameters {
    pub fn current() -> Self {
        Self {
            bev_stripe_fractions: DEFAULT_STRIPE_FRACTIONS.to_vec(),
            bev_bins: sspb_core::BevBank::standard().total_bins(),
            bev_enlargement: DEFAULT_ENLARGEMENT,
            spp_grid_sizes: DEFAULT_GRID_SIZES.to_vec(),
            spp_bins: sspb_core::build_spp_bank().total_bins(),
        }
    }
}

/// What gets written next to a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub command: String,
    pub run: RunConfig,
    pub fixed: FixedParameters,
}

impl EffectiveConfig {
    pub fn new(command: &str, run: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            run: run.clone(),
            fixed: FixedParameters::current(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
