//! Command line interface.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use sketchedit_core::autodiff::check;
use sketchedit_core::color::ColorLayer;
use sketchedit_core::dataset::Conditioning;
use sketchedit_core::editor::CopyPasteRequest;
use sketchedit_core::BinaryMask;

use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::error::{AppError, Result};
use crate::forge::{forge, Source};
use crate::imageio;
use crate::server::{serve, AppState};
use crate::train::{metrics_row, train, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "sketchedit", version, about = "Sketch-conditioned face image editing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forge training shards from annotated photos or synthetic portraits.
    Forge {
        /// Directory of source images named in the annotation file.
        #[arg(long, requires = "annotations", conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Eye annotations CSV (`file,lx,ly,rx,ry`).
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Draw this many toy portraits instead of reading photos.
        #[arg(long, required_unless_present = "input")]
        synthetic: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output shards; samples are split evenly across them.
        #[arg(long, num_args = 1.., required = true)]
        out: Vec<PathBuf>,
    },
    /// Train (or resume training) up to a step count.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        shards: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Complete the masked region of an image from sketch and color layers.
    Edit {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Grayscale stroke layer; bright pixels are strokes.
        #[arg(long)]
        sketch: Option<PathBuf>,
        /// RGBA color layer; opaque pixels are constraints.
        #[arg(long)]
        color: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paste the sketch of a source region into a target image.
    CopyPaste {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        source_mask: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Placement offset `X,Y` in pixels.
        #[arg(long, value_parser = parse_offset, allow_hyphen_values = true)]
        offset: (isize, isize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every autodiff primitive.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP edit API.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn parse_offset(s: &str) -> std::result::Result<(isize, isize), String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    Ok((x.trim().parse().map_err(|e| format!("{e}"))?, y.trim().parse().map_err(|e| format!("{e}"))?))
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

/// Runs a command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Forge { input, annotations, synthetic, config, out } => {
            let config = load_config(&config)?;
            let source = match (input, annotations, synthetic) {
                (Some(dir), Some(annotations), _) => Source::Annotated { dir, annotations },
                (_, _, Some(count)) => Source::Synthetic { count },
                _ => return Err(AppError::Config("forge needs --input with --annotations, or --synthetic".into())),
            };
            let n = forge(&source, &config, &out)?;
            println!("forged {n} samples into {} shard(s)", out.len());
        }
        Command::Train { shards, config, steps, out, resume } => {
            let config = load_config(&config)?;
            let opts = TrainOptions { shards, config, steps, out, resume };
            let ck = train(&opts, |m| {
                if m.step % 50 == 0 {
                    eprintln!("{}", metrics_row(m));
                }
            })?;
            println!("trained to step {}", ck.state.step);
        }
        Command::Edit { image, mask, sketch, color, seed, ckpt, out } => {
            let model = Checkpoint::load(&ckpt)?.edit_model()?;
            let image = imageio::load_rgb(&image)?;
            let mask = imageio::load_mask(&mask)?;
            let (w, h) = (image.width(), image.height());
            let sketch = match sketch {
                Some(p) => imageio::load_mask(&p)?,
                None => BinaryMask::empty(w, h),
            };
            let color = match color {
                Some(p) => imageio::load_color_layer(&p)?,
                None => ColorLayer::empty(w, h)?,
            };
            let result = model.edit_layers(&image, &mask, &Conditioning { sketch, color }, seed)?;
            imageio::save_png(&out, &result)?;
        }
        Command::CopyPaste { source, source_mask, target, offset, seed, ckpt, out } => {
            let model = Checkpoint::load(&ckpt)?.edit_model()?;
            let req = CopyPasteRequest {
                source: imageio::load_rgb(&source)?,
                source_mask: imageio::load_mask(&source_mask)?,
                target: imageio::load_rgb(&target)?,
                offset,
                noise_seed: seed,
            };
            imageio::save_png(&out, &model.copy_paste(&req)?)?;
        }
        Command::Gradcheck { seed } => {
            let reports = check::run_suite(seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{:<28} {:>10.3e} (tol {:.0e}, {} checked) {}", r.name, r.max_rel_err, r.tolerance, r.checked, if r.passed() { "ok" } else { "FAIL" });
                ok &= r.passed();
            }
            return Ok(if ok { 0 } else { 1 });
        }
        Command::Serve { ckpt, addr } => {
            let ck = Checkpoint::load(&ckpt)?;
            let state = Arc::new(AppState::new(ck.edit_model()?, ck.hash()));
            let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io(&ckpt, e))?;
            rt.block_on(serve(state, &addr)).map_err(|e| AppError::Io { path: addr.clone(), source: e })?;
        }
    }
    Ok(0)
}
