use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::pipeline::Stage;

#[derive(Debug, Parser)]
#[command(name = "g4d", version, about = "Propagate first-frame edits through a dynamic Gaussian scene")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scene and its session document.
    Gen(GenArgs),
    /// Extract anchors for the source and edited clouds.
    Anchors(StageArgs),
    /// Extract anchors and match them.
    Match(StageArgs),
    /// Transfer the source motion to the edited cloud.
    Propagate(StageArgs),
    /// Propagate, then refine appearance.
    Refine(StageArgs),
    /// Render one cloud from every session camera.
    Render(RenderArgs),
    /// Diagnostics for a directory of propagated frames.
    Metrics(MetricsArgs),
    /// Run the whole pipeline.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StageArgs {
    /// Session document.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed in the session document.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write uncertainty, mask, flow and warp images for every refined pair.
    #[arg(long)]
    pub emit_maps: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    #[arg(long, value_enum, default_value_t = Stage::Render)]
    pub stop_after: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    /// Rotating blob, recolor edit.
    Rigid,
    /// Rotating blob, edited cloud identical to the source.
    RigidIdentity,
    /// Rotating blob, recolor edit plus jittered clones.
    RigidClone,
    /// Sliding occluder revealing corrupted colors.
    Occlusion,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub scene: SceneKind,
    #[arg(long, default_value = "scene")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rigid scenes only.
    #[arg(long, default_value_t = 2000)]
    pub n_gaussians: usize,
    /// Rigid scenes only.
    #[arg(long, default_value_t = 20)]
    pub frames: u32,
    /// Rotation per frame in radians; rigid scenes only.
    #[arg(long, default_value_t = 0.05)]
    pub omega: f64,
    /// Rotation axis as `x,y,z`; rigid scenes only.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.2, 1.0, 0.1])]
    pub axis: Vec<f64>,
    /// Overrides `n_rays` in the written session.
    #[arg(long)]
    pub n_rays: Option<usize>,
    /// Overrides `refine_iters` in the written session.
    #[arg(long)]
    pub refine_iters: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Session document providing the cameras.
    #[arg(long)]
    pub config: PathBuf,
    /// Cloud to render.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, default_value = "renders")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory with `frame_0001.g4dc` ... `frame_T.g4dc`.
    #[arg(long)]
    pub frames: PathBuf,
    /// Write the metrics JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}
