use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relight_core::dataset::Dataset;
use relight_core::export::{self, ViewFilter};
use relight_core::metrics::{evaluate_dirs, evaluate_normal_dirs};
use relight_core::synth::{generate_dataset, AnalyticScene, SceneKind, SynthOptions};
use relight_core::trainer::{fit, Checkpoint, TrainConfig, Trainer};
use relight_core::{Error, LightProbe, Result};

#[derive(Parser)]
#[command(name = "relight", version, about = "Relightable dynamic human fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with ground-truth maps.
    Makedata {
        #[arg(long, default_value = "smoke")]
        scene: SceneKind,
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        cams: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 2000)]
        anchors: usize,
        /// Skip rendering the held-out relighting references.
        #[arg(long)]
        no_relight: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a dataset, writing checkpoints and a CSV log.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Flat `key = value` file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint; its stored configuration is used.
        #[arg(long, conflicts_with = "config")]
        resume: Option<PathBuf>,
    },
    /// Render training views of a fitted model under a new probe.
    Relight {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Probe PFM path or `olat:row,col,intensity`.
        #[arg(long)]
        probe: String,
        #[arg(long)]
        frame: Option<usize>,
        #[arg(long)]
        camera: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Normals and visibility computed from the density field alone.
    Bake {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Albedo, roughness, normal, visibility, depth and radiance maps plus
    /// the estimated probe.
    Decompose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare predicted images (and optionally normals) with references.
    /// The JSON report goes to stdout, the table to stderr.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        /// Reference normal maps, unmapped unit vectors.
        #[arg(long)]
        gt_normals: Option<PathBuf>,
        /// Predicted normal maps in [0, 1]; defaults to `normal` next to
        /// or inside the prediction directory.
        #[arg(long)]
        pred_normals: Option<PathBuf>,
        /// Fit a per-channel gain per image before scoring.
        #[arg(long)]
        align: bool,
    },
}

fn load_model(data: &Path, checkpoint: &Path) -> Result<(Dataset, Trainer)> {
    let dataset = Dataset::load(data)?;
    let trainer = Trainer::from_checkpoint(&dataset, Checkpoint::load(checkpoint)?)?;
    Ok((dataset, trainer))
}

fn default_pred_normals(pred_dir: &Path) -> Result<PathBuf> {
    let inside = pred_dir.join("normal");
    if inside.is_dir() {
        return Ok(inside);
    }
    match pred_dir.parent().map(|p| p.join("normal")) {
        Some(sibling) if sibling.is_dir() => Ok(sibling),
        _ => Err(Error::input("no predicted normal directory; pass --pred-normals")),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Makedata {
            scene,
            frames,
            cams,
            seed,
            width,
            height,
            anchors,
            no_relight,
            out,
        } => {
            let scene = AnalyticScene::new(scene, frames)?;
            let opts = SynthOptions {
                cams,
                width,
                height,
                n_anchors: anchors,
                seed,
                relight: !no_relight,
            };
            let manifest = generate_dataset(&scene, &opts, &out)?;
            eprintln!("wrote {} frames x {cams} views to {}", manifest.frame_count, out.display());
        }
        Command::Train { data, config, out, resume } => {
            let dataset = Dataset::load(&data)?;
            let resume = resume.map(Checkpoint::load).transpose()?;
            let config = match config {
                Some(path) => TrainConfig::load(path)?,
                None => resume.as_ref().map(|c| c.config.clone()).unwrap_or_default(),
            };
            let trainer = fit(&dataset, config, &out, resume)?;
            eprintln!("trained to iteration {} in {}", trainer.iteration, out.display());
        }
        Command::Relight {
            data,
            checkpoint,
            probe,
            frame,
            camera,
            out_dir,
        } => {
            let probe = LightProbe::from_arg(&probe)?;
            let (dataset, trainer) = load_model(&data, &checkpoint)?;
            let n = export::relight(&dataset, &trainer, &probe, ViewFilter { frame, camera }, &out_dir)?;
            eprintln!("rendered {n} views to {}", out_dir.display());
        }
        Command::Bake {
            data,
            checkpoint,
            out_dir,
        } => {
            let (dataset, trainer) = load_model(&data, &checkpoint)?;
            let n = export::bake(&dataset, &trainer, &out_dir)?;
            eprintln!("baked {n} views to {}", out_dir.display());
        }
        Command::Decompose {
            data,
            checkpoint,
            out_dir,
        } => {
            let (dataset, trainer) = load_model(&data, &checkpoint)?;
            let n = export::decompose(&dataset, &trainer, &out_dir)?;
            eprintln!("decomposed {n} views to {}", out_dir.display());
        }
        Command::Eval {
            pred_dir,
            gt_dir,
            gt_normals,
            pred_normals,
            align,
        } => {
            let mut report = evaluate_dirs(&pred_dir, &gt_dir, align)?;
            if let Some(gt_normals) = gt_normals {
                let pred_normals = match pred_normals {
                    Some(p) => p,
                    None => default_pred_normals(&pred_dir)?,
                };
                report.normals = Some(evaluate_normal_dirs(&pred_normals, &gt_normals)?);
            }
            eprint!("{}", report.table());
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
