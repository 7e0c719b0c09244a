//! Per-subcommand settings. Each value comes from the flag if given, else the
//! config file section, else the default printed in `--help`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Comma-separated list flag, e.g. `--filters 16,32,32,48`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

macro_rules! settings {
    (
        $(#[$meta:meta])*
        $args:ident => $resolved:ident {
            $( $field:ident : $ty:ty = $default:expr, $help:literal; )*
        }
        optional {
            $( $ofield:ident : $oty:ty, $ohelp:literal; )*
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, clap::Args, Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        pub struct $args {
            $(
                #[arg(long, help = $help)]
                pub $field: Option<$ty>,
            )*
            $(
                #[arg(long, help = $ohelp)]
                pub $ofield: Option<$oty>,
            )*
        }

        #[derive(Debug, Clone, Serialize)]
        pub struct $resolved {
            $( pub $field: $ty, )*
            $( pub $ofield: Option<$oty>, )*
        }

        impl $args {
            pub fn resolve(&self, file: Option<&$args>) -> $resolved {
                $resolved {
                    $(
                        $field: self
                            .$field
                            .clone()
                            .or_else(|| file.and_then(|f| f.$field.clone()))
                            .unwrap_or_else(|| $default),
                    )*
                    $(
                        $ofield: self.$ofield.clone().or_else(|| file.and_then(|f| f.$ofield.clone())),
                    )*
                }
            }
        }
    };
}

settings! {
    GenDatasetArgs => GenDataset {
        rig: String = "tube".into(),
            "Built-in rig (`tube`, `hand`, `finger`) or a rig.json path [default: tube; desk-scale choice]";
        name: String = "dataset".into(),
            "Dataset directory name under the output dir [default: dataset]";
        count: usize = 2000,
            "Number of samples [default: 2000; desk-scale choice]";
        clusters: usize = 64,
            "Euler-angle cluster centers per joint [default: 64; reference setup]";
        jitter: f64 = 0.05,
            "Gaussian jitter around cluster centers, radians [default: 0.05; desk-scale choice, 0 disables]";
        corpus: usize = 2000,
            "Poses clustered to build the cluster book [default: 2000; desk-scale choice]";
        components: usize = 8,
            "Shape components of the morphable model [default: 8; unstated in reference, desk-scale choice]";
        registrations: usize = 120,
            "Synthetic registrations behind the shape model [default: 120; desk-scale choice]";
        image_size: f64 = 256.0,
            "Square image side in pixels [default: 256; desk-scale choice]";
        visibility: f64 = 0.95,
            "Probability a keypoint is annotated [default: 0.95; desk-scale choice]";
        split: List<f64> = List(vec![0.87, 0.065, 0.065]),
            "Train,val,test fractions [default: 0.87,0.065,0.065; reference split proportions]";
        seed: u64 = 0,
            "Random seed [default: 0]";
    }
    optional {}
}

settings! {
    TrainAeArgs => TrainAe {
        epochs: usize = 200,
            "Training epochs [default: 200; desk-scale choice]";
        batch_size: usize = 64,
            "Mini-batch size [default: 64; reference setup]";
        lr: f64 = 1e-3,
            "AdamW learning rate [default: 0.001; reference setup]";
        lr_decay: f64 = 1.0,
            "Learning-rate multiplier applied per epoch [default: 1; no schedule in reference]";
        weight_decay: f64 = 1e-5,
            "AdamW decoupled decay [default: 1e-5; reference value read as 10e-6]";
        latent_penalty: f64 = 5e-7,
            "Weight of the squared latent norm [default: 5e-7; reference setup]";
        l2: f64 = 5e-5,
            "Weight of the squared weight norm [default: 5e-5; reference setup]";
        latent: usize = 64,
            "Latent size Z [default: 64; reference setup]";
        filters: List<usize> = List(vec![16, 32, 32, 48]),
            "Encoder filter widths per level [default: 16,32,32,48; reference setup]";
        factors: List<usize> = List(vec![4, 4, 2, 2]),
            "Vertex reduction factor per level [default: 4,4,2,2; reference setup]";
        cheb_order: usize = 3,
            "Chebyshev order r [default: 3; reference setup]";
        leaky_slope: f64 = 0.2,
            "Leaky ReLU slope [default: 0.2; unstated in reference, common choice]";
        decimation_pose: String = "half-articulated".into(),
            "Template pose the pooling hierarchy is decimated in: rest or half-articulated [default: half-articulated; reference setup]";
        chunk_size: usize = 8,
            "Samples per parallel gradient chunk [default: 8; does not change results]";
        seed: u64 = 0,
            "Random seed [default: 0]";
        name: String = "ae".into(),
            "Output file stem: <name>.gmm and <name>_metrics.csv [default: ae]";
    }
    optional {
        dataset: PathBuf, "Dataset directory [default: <output-dir>/dataset]";
        resume: PathBuf, "Checkpoint to continue training from";
    }
}

settings! {
    TrainEncoderArgs => TrainEncoder {
        epochs: usize = 130,
            "Training epochs [default: 130; reference setup]";
        batch_size: usize = 64,
            "Mini-batch size [default: 64; desk-scale choice]";
        lr: f64 = 1e-4,
            "AdamW learning rate [default: 0.0001; reference setup]";
        weight_decay: f64 = 1e-5,
            "AdamW decoupled decay [default: 1e-5; same as the autoencoder]";
        kpts_weight: f64 = 0.01,
            "Weight of the reprojection term [default: 0.01; reference setup]";
        embed_weight: f64 = 5e-5,
            "Weight of the latent norm term [default: 5e-5; reference setup]";
        hidden: List<usize> = List(vec![256, 256]),
            "Hidden widths of the encoder trunk [default: 256,256; desk-scale choice]";
        noise_mm: f64 = 1.0,
            "Std of the noise on 3-D keypoint observations, mm [default: 1.0; desk-scale choice]";
        chunk_size: usize = 8,
            "Samples per parallel gradient chunk [default: 8; does not change results]";
        seed: u64 = 0,
            "Random seed [default: 0]";
        name: String = "encoder".into(),
            "Output file stem: <name>.gmm and <name>_metrics.csv [default: encoder]";
    }
    optional {
        dataset: PathBuf, "Dataset directory [default: <output-dir>/dataset]";
        decoder: PathBuf, "Autoencoder checkpoint [default: <output-dir>/ae.gmm]";
    }
}

settings! {
    EvalArgs => Eval {
        split: String = "test".into(),
            "Split to evaluate: train, val or test [default: test]";
        latency_runs: usize = 1000,
            "Decoder passes timed for the latency figure [default: 1000; reference protocol]";
        noise_mm: f64 = 1.0,
            "Observation noise for encoder inputs, mm [default: 1.0; matches train-encoder]";
        seed: u64 = 0,
            "Seed for the observation noise [default: 0]";
        name: String = "eval".into(),
            "Output file stem: <name>.json and <name>.csv [default: eval]";
    }
    optional {
        dataset: PathBuf, "Dataset directory [default: <output-dir>/dataset]";
        decoder: PathBuf, "Autoencoder checkpoint [default: <output-dir>/ae.gmm]";
        encoder: PathBuf, "Encoder checkpoint; without it keypoints use the true camera";
    }
}

settings! {
    InterpolateArgs => Interpolate {
        steps: usize = 11,
            "Meshes along the path, endpoints included [default: 11; reference figure]";
        name: String = "interp".into(),
            "Output file stem: <name>_NN.obj [default: interp]";
    }
    optional {
        decoder: PathBuf, "Autoencoder checkpoint [default: <output-dir>/ae.gmm]";
        a: PathBuf, "First endpoint mesh (OBJ)";
        b: PathBuf, "Second endpoint mesh (OBJ)";
    }
}

settings! {
    SampleArgs => Sample {
        count: usize = 10,
            "Number of meshes [default: 10]";
        seed: u64 = 0,
            "Random seed [default: 0]";
        name: String = "sample".into(),
            "Output file stem: <name>_NNN.obj [default: sample]";
    }
    optional {
        decoder: PathBuf, "Autoencoder checkpoint [default: <output-dir>/ae.gmm]";
    }
}

settings! {
    ReconstructArgs => Reconstruct {
        name: String = "reconstruction".into(),
            "Output file stem: <name>.obj [default: reconstruction]";
    }
    optional {
        decoder: PathBuf, "Autoencoder checkpoint [default: <output-dir>/ae.gmm]";
        input: PathBuf, "Mesh to reconstruct (OBJ, template topology)";
    }
}

settings! {
    PoseStudyArgs => PoseStudy {
        poses: List<String> = List(vec!["rest".into(), "half-articulated".into()]),
            "Reference poses: rest, half-articulated [default: rest,half-articulated]";
        epochs: usize = 50,
            "Training epochs per hierarchy [default: 50; desk-scale choice]";
        batch_size: usize = 64,
            "Mini-batch size [default: 64; reference setup]";
        lr: f64 = 1e-3,
            "AdamW learning rate [default: 0.001; reference setup]";
        latent: usize = 16,
            "Latent size Z [default: 16; desk-scale choice]";
        filters: List<usize> = List(vec![16, 32, 32, 48]),
            "Encoder filter widths per level [default: 16,32,32,48; reference setup]";
        factors: List<usize> = List(vec![4, 4, 2, 2]),
            "Vertex reduction factor per level [default: 4,4,2,2; reference setup]";
        seed: u64 = 0,
            "Random seed shared by every run [default: 0]";
        name: String = "pose_study".into(),
            "Output file stem: <name>.csv [default: pose_study]";
    }
    optional {
        dataset: PathBuf, "Dataset directory [default: <output-dir>/dataset]";
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parses_and_reports_the_bad_item() {
        assert_eq!("4, 4,2".parse::<List<usize>>().unwrap(), List(vec![4, 4, 2]));
        let e = "4,x".parse::<List<usize>>().unwrap_err();
        assert!(e.contains("\"x\""), "{e}");
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file: TrainAeArgs = serde_json::from_str(r#"{"epochs": 7, "latent": 8}"#).unwrap();
        let flags = TrainAeArgs {
            latent: Some(4),
            ..Default::default()
        };
        let r = flags.resolve(Some(&file));
        assert_eq!((r.epochs, r.latent, r.batch_size), (7, 4, 64));
        assert!(serde_json::from_str::<TrainAeArgs>(r#"{"lattent": 8}"#).is_err());
    }
}
