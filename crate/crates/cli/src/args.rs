use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{FeatureKind, RunConfig, Variant};

#[derive(Debug, Parser)]
#[command(name = "sspb", version, about = "Cascaded window scoring for object proposals")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select bins and train both cascade stages.
    Train(TrainArgs),
    /// Emit proposals for every image of the manifest.
    Propose(ProposeArgs),
    /// Overlap-recall curves and average recall.
    Eval(EvalArgs),
    /// Kept-bin counts over a sweep of regularizer strengths.
    SelectBins(SelectBinsArgs),
    /// Write a synthetic dataset and its manifest.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Propose(_) => "propose",
            Command::Eval(_) => "eval",
            Command::SelectBins(_) => "select-bins",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub stage_one_spp: Option<usize>,
    #[arg(long)]
    pub stage_two_spp: Option<usize>,
    #[arg(long)]
    pub stage_two_bev: Option<usize>,
    /// Loss weight of the final linear SVMs.
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ProposeArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    /// Threshold of the greedy NMS used by `sspb60`.
    #[arg(long)]
    pub nms_threshold: Option<f64>,
    #[arg(long)]
    pub stage_one_model: Option<PathBuf>,
    #[arg(long)]
    pub stage_two_model: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    /// Evaluate the candidates ranked by edge score instead of proposals.
    #[arg(long)]
    pub rank_candidates: bool,
}

#[derive(Debug, Args, Default)]
pub struct SelectBinsArgs {
    #[arg(long, value_enum)]
    pub feature: Option<FeatureKind>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub edge_noise: Option<f64>,
    #[arg(long)]
    pub eb_noise: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Cli {
    /// Config file (or defaults) with every given flag applied.
    pub fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let g = &self.global;
        set(&mut cfg.seed, g.seed);
        if g.threads.is_some() {
            cfg.threads = g.threads;
        }
        set(&mut cfg.output, g.output.clone());
        if g.manifest.is_some() {
            cfg.manifest = g.manifest.clone();
        }
        match &self.command {
            Command::Train(a) => {
                if a.lambda.is_some() {
                    cfg.selection.lambda = a.lambda;
                }
                set(&mut cfg.selection.stage_one_spp, a.stage_one_spp);
                set(&mut cfg.selection.stage_two_spp, a.stage_two_spp);
                set(&mut cfg.selection.stage_two_bev, a.stage_two_bev);
                set(&mut cfg.svm.c, a.c);
            }
            Command::Propose(a) => {
                set(&mut cfg.n, a.n);
                set(&mut cfg.nms.variant, a.variant);
                set(&mut cfg.nms.greedy_threshold, a.nms_threshold);
                if a.stage_one_model.is_some() {
                    cfg.stage_one_model = a.stage_one_model.clone();
                }
                if a.stage_two_model.is_some() {
                    cfg.stage_two_model = a.stage_two_model.clone();
                }
            }
            Command::Eval(a) => {
                set(&mut cfg.eval.budgets, a.budgets.clone());
                if a.proposals.is_some() {
                    cfg.eval.proposals = a.proposals.clone();
                }
                cfg.eval.rank_candidates |= a.rank_candidates;
            }
            Command::SelectBins(a) => {
                set(&mut cfg.select_bins.feature, a.feature);
                set(&mut cfg.select_bins.points, a.points);
            }
            Command::Synth(a) => {
                set(&mut cfg.synth.count, a.count);
                set(&mut cfg.synth.scene.edge_noise, a.edge_noise);
                set(&mut cfg.synth.scene.eb_noise, a.eb_noise);
            }
        }
        Ok(cfg)
    }
}
