//! Dataset shard files.
//!
//! Little-endian layout: magic `FSDS`, `u32` version (1), `u32` sample
//! count, `u16` side, then per sample the target (`S*S*3` interleaved RGB
//! `f32`), the input (`9*S*S` channel-major `f32`) and the mask rectangle
//! (`cx, cy, w, h, angle` as `f32`).

use std::path::Path;

use sketchedit_core::dataset::{TrainingSample, INPUT_CHANNELS};
use sketchedit_core::geom::Point;
use sketchedit_core::mask::MaskSpec;
use sketchedit_core::RasterImage;

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 4] = b"FSDS";
pub const VERSION: u32 = 1;
const HEADER: usize = 14;

fn sample_floats(side: usize) -> usize {
    side * side * 3 + INPUT_CHANNELS * side * side + 5
}

pub fn encode_shard(samples: &[TrainingSample]) -> Result<Vec<u8>> {
    let first = samples.first().ok_or_else(|| AppError::Core(sketchedit_core::Error::InvalidArgument("shard needs at least one sample".into())))?;
    let side = first.side();
    if samples.iter().any(|s| s.side() != side) || side > u16::MAX as usize {
        return Err(AppError::Core(sketchedit_core::Error::InvalidArgument("all samples of a shard must share a side below 65536".into())));
    }
    let mut out = Vec::with_capacity(HEADER + samples.len() * sample_floats(side) * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&(side as u16).to_le_bytes());
    for s in samples {
        let m = s.mask_spec();
        let rect = [m.center.x, m.center.y, m.width, m.height, m.angle];
        let floats = s.target().data().iter().chain(s.input()).chain(&rect);
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_shard(bytes: &[u8], context: &str) -> Result<Vec<TrainingSample>> {
    let err = |offset: usize, msg: &str| AppError::format(context, offset as u64, msg);
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err(0, "missing FSDS magic"));
    }
    if bytes.len() < HEADER {
        return Err(err(bytes.len(), "truncated header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(err(4, &format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if count == 0 {
        return Err(err(8, "shard holds no samples"));
    }
    let side = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
    if side == 0 {
        return Err(err(12, "side is zero"));
    }
    let per = sample_floats(side) * 4;
    let expected = HEADER + count * per;
    if bytes.len() < expected {
        let complete = (bytes.len() - HEADER) / per;
        return Err(err(HEADER + complete * per, &format!("truncated payload: sample {complete} of {count} is incomplete")));
    }
    if bytes.len() > expected {
        return Err(err(expected, "trailing bytes after the last sample"));
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let start = HEADER + i * per;
        let floats: Vec<f32> = bytes[start..start + per].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let t = side * side * 3;
        let n = INPUT_CHANNELS * side * side;
        let target = RasterImage::new(side, side, 3, floats[..t].to_vec()).map_err(|e| err(start, &e.to_string()))?;
        let m = &floats[t + n..];
        let spec = MaskSpec { center: Point::new(m[0], m[1]), width: m[2], height: m[3], angle: m[4] };
        let sample = TrainingSample::new(target, floats[t..t + n].to_vec(), spec).map_err(|e| err(start, &e.to_string()))?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes via a temporary file and a rename.
pub fn write_shard(path: &Path, samples: &[TrainingSample]) -> Result<()> {
    crate::atomic_write(path, &encode_shard(samples)?)
}

pub fn read_shard(path: &Path) -> Result<Vec<TrainingSample>> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_shard(&bytes, &path.display().to_string())
}

pub fn read_shards(paths: &[impl AsRef<Path>]) -> Result<Vec<TrainingSample>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_shard(p.as_ref())?);
    }
    Ok(all)
}
