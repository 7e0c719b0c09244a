//! `gmm`: dataset generation, training, evaluation and latent-space tools.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{
    EvalArgs, GenDatasetArgs, InterpolateArgs, PoseStudyArgs, ReconstructArgs, SampleArgs, TrainAeArgs,
    TrainEncoderArgs,
};

#[derive(Debug, Parser)]
#[command(name = "gmm", version, about = "Spectral mesh autoencoder toolkit")]
pub struct Cli {
    /// Directory that receives every output file.
    #[arg(long, global = true, env = "GMM_OUTPUT_DIR", default_value = "gmm-out")]
    pub output_dir: PathBuf,

    /// JSON config file; keys are subcommand names holding kebab-case
    /// settings. Command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Run batch loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample posed meshes from a rig's morphable model and render keypoints.
    GenDataset(GenDatasetArgs),
    /// Train the mesh autoencoder on a dataset's training split.
    TrainAe(TrainAeArgs),
    /// Train the keypoint encoder against a frozen decoder.
    TrainEncoder(TrainEncoderArgs),
    /// Reconstruction error, keypoint error, parameter count and latency.
    Eval(EvalArgs),
    /// Decode a latent path between two encoded meshes.
    Interpolate(InterpolateArgs),
    /// Decode random latent codes.
    Sample(SampleArgs),
    /// Encode and decode one OBJ mesh.
    Reconstruct(ReconstructArgs),
    /// Compare pooling hierarchies built from differently posed templates.
    PoseStudy(PoseStudyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
