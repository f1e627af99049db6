use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use equiforecast::config::Config;
use equiforecast::data::{
    generate_scenes, ingest_csv, load_dataset, save_dataset, ForecastFile, ScenarioKind, ScenarioSpec, SceneFile,
};
use equiforecast::plot::render_svg;
use equiforecast::predictor::Model;
use equiforecast::train::{check_dataset, evaluate, predict, train, Checkpoint, TrainOutput};

#[derive(Parser)]
#[command(version, about = "Equivariant multi-agent motion forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a directory of scene files.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config entry, e.g. `--set epochs=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Report minADE, minFDE and miss rate for a model and the constant-velocity baseline.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
        tau: Vec<usize>,
        #[arg(long = "miss-d")]
        miss_d: Option<f64>,
    },
    /// Write every head, its probability and the selected head for one scene.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a scene and optionally a forecast as SVG.
    Plot {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        forecast: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic scenes.
    Gen {
        #[arg(long, default_value = "fork")]
        kind: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        modes: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        #[arg(long, default_value_t = 50.0)]
        radius: f64,
        /// Config whose tensor sizes the scenes follow.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Convert CSV trajectories into scene files.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>, overrides: &[String]) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Config::from_text(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Config::default(),
    };
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("override `{o}` is not KEY=VALUE");
        };
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            data,
            out,
            overrides,
        } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            let files = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
            let pairs = check_dataset(&files, &cfg.dims())?;
            let mut ckpt = Checkpoint::new(Model::new(cfg)?);
            eprintln!(
                "training {} parameters on {} scenes",
                ckpt.model.param_count(),
                pairs.len()
            );
            let output = TrainOutput { checkpoint: Some(out) };
            train(&mut ckpt, &pairs, &output, |log| println!("{}", log.line()))?;
        }
        Command::Eval {
            ckpt,
            data,
            tau,
            miss_d,
        } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let files = load_dataset(&data)?;
            let d = miss_d.unwrap_or(ckpt.model.config.miss_threshold);
            let report = evaluate(&ckpt.model, &files, &tau, d)?;
            print!("{}", report.to_text());
        }
        Command::Predict { ckpt, scene, out } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let file = SceneFile::read(&scene)?;
            predict(&ckpt.model, &file)?.write(&out)?;
        }
        Command::Plot { scene, forecast, out } => {
            let scene = SceneFile::read(&scene)?;
            let forecast = forecast.map(|p| ForecastFile::read(&p)).transpose()?;
            fs::write(&out, render_svg(&scene, forecast.as_ref())?)?;
        }
        Command::Gen {
            kind,
            n,
            seed,
            out,
            modes,
            noise,
            speed,
            radius,
            config,
        } => {
            let cfg = load_config(config.as_ref(), &[])?;
            let spec = ScenarioSpec {
                kind: kind.parse::<ScenarioKind>()?,
                speed,
                turn_radius: radius,
                mode_count: modes,
                noise,
            };
            let dims = cfg.dims();
            let files = generate_scenes(&spec, &dims, cfg.sample_rate_hz, n, seed)?
                .into_iter()
                .map(|s| s.into_file(&dims, cfg.sample_rate_hz))
                .collect::<equiforecast::error::Result<Vec<_>>>()?;
            save_dataset(&out, &files)?;
            eprintln!("wrote {} scenes to {}", files.len(), out.display());
        }
        Command::Ingest { csv, out, config } => {
            let cfg = load_config(config.as_ref(), &[])?;
            let ingested = ingest_csv(&csv, &cfg)?;
            for p in &ingested.skipped {
                eprintln!("warning: skipped {} (focal track shorter than the window)", p.display());
            }
            let files = ingested
                .samples
                .into_iter()
                .map(|(s, gt)| SceneFile::new(s, Some(gt), cfg.t_out, cfg.sample_rate_hz))
                .collect::<equiforecast::error::Result<Vec<_>>>()?;
            save_dataset(&out, &files)?;
            eprintln!(
                "wrote {} scenes to {}, skipped {}",
                files.len(),
                out.display(),
                ingested.skipped.len()
            );
        }
    }
    Ok(())
}
