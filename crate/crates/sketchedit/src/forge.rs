//! Dataset forging: align annotated photos (or draw toy portraits), assemble
//! training samples and write them to shards.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sketchedit_core::dataset::{align_and_crop, assemble_sample, EyeAnnotation, TrainingSample};
use sketchedit_core::geom::Point;
use sketchedit_core::rng;
use sketchedit_core::synth::toy_portrait;

use crate::config::Config;
use crate::error::{AppError, Result};
use crate::imageio;
use crate::shard::write_shard;

#[derive(Debug, Deserialize)]
struct Row {
    file: String,
    lx: f32,
    ly: f32,
    rx: f32,
    ry: f32,
}

/// Reads eye annotations from a CSV with header `file,lx,ly,rx,ry`.
pub fn read_annotations(path: &Path) -> Result<Vec<EyeAnnotation>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row.map_err(|e| csv_error(path, e))?;
        out.push(EyeAnnotation { file: r.file, left: Point::new(r.lx, r.ly), right: Point::new(r.rx, r.ry) });
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    let offset = e.position().map(|p| p.byte()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        kind => AppError::format(path.display().to_string(), offset, format!("{kind:?}")),
    }
}

/// Where forged samples come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// Photos in a directory with eye annotations.
    Annotated { dir: PathBuf, annotations: PathBuf },
    /// `count` seeded toy portraits.
    Synthetic { count: usize },
}

/// Sample `i` uses seed `derive(config.seed, i)`.
pub fn forge_samples(source: &Source, config: &Config) -> Result<Vec<TrainingSample>> {
    let cfg = config.dataset()?;
    let mut out = Vec::new();
    match source {
        Source::Annotated { dir, annotations } => {
            for (i, ann) in read_annotations(annotations)?.iter().enumerate() {
                let img = imageio::load_rgb(&dir.join(&ann.file))?;
                ann.validate(img.width(), img.height())?;
                let aligned = align_and_crop(&img, ann, config.size)?;
                out.push(assemble_sample(&aligned, rng::derive(config.seed, i as u64), &cfg)?);
            }
        }
        Source::Synthetic { count } => {
            for i in 0..*count {
                let img = toy_portrait(config.size, rng::derive(config.seed ^ 0x5EED, i as u64))?;
                out.push(assemble_sample(&img, rng::derive(config.seed, i as u64), &cfg)?);
            }
        }
    }
    Ok(out)
}

/// Splits the samples into contiguous, near-equal runs, one per output.
pub fn forge(source: &Source, config: &Config, outputs: &[PathBuf]) -> Result<usize> {
    if outputs.is_empty() {
        return Err(AppError::Config("at least one output shard is required".into()));
    }
    let samples = forge_samples(source, config)?;
    if samples.len() < outputs.len() {
        return Err(AppError::Config(format!("{} samples cannot fill {} shards", samples.len(), outputs.len())));
    }
    let per = samples.len().div_ceil(outputs.len());
    let mut rest = samples.as_slice();
    for (k, path) in outputs.iter().enumerate() {
        let left = outputs.len() - k;
        let take = per.min(rest.len() - (left - 1));
        write_shard(path, &rest[..take])?;
        rest = &rest[take..];
    }
    Ok(samples.len())
}
