//! Checkpoint files.
//!
//! Little-endian layout: magic `FSCK`, `u32` version (1), `u32` header length,
//! a JSON header (config, step, seed, optimizer step counts), six tensor
//! sections (generator, discriminator, generator Adam `m` and `v`,
//! discriminator Adam `m` and `v`), and a trailing SHA-256 of everything
//! before it. Each section is a `u32` tensor count followed by tensors
//! encoded as `u16` name length, UTF-8 name, `u8` rank, `u32` dims and `f32`
//! data.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sketchedit_core::autodiff::{AdamState, Array};
use sketchedit_core::editor::EditModel;
use sketchedit_core::model::{Discriminator, Generator, ParamSet};
use sketchedit_core::training::TrainState;
use sketchedit_core::Error as CoreError;

use crate::config::Config;
use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 4] = b"FSCK";
pub const VERSION: u32 = 1;
const DIGEST: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub state: TrainState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: Config,
    step: u64,
    seed: u64,
    gen_adam_step: u64,
    disc_adam_step: u64,
}

fn put_set(out: &mut Vec<u8>, entries: &[(&str, &Array<f32>)]) {
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, a) in entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(a.shape().len() as u8);
        for d in a.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in a.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(AppError::format(self.context, self.bytes.len() as u64, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn set(&mut self) -> Result<Vec<(String, Array<f32>)>> {
        let n = self.u32()? as usize;
        let mut out = Vec::new();
        for _ in 0..n {
            let at = self.pos;
            let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(self.take(len)?).map_err(|_| AppError::format(self.context, at as u64, "tensor name is not UTF-8"))?.to_string();
            let rank = self.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32()? as usize);
            }
            let count: usize = shape.iter().product();
            let data = self.take(count.checked_mul(4).ok_or_else(|| AppError::format(self.context, at as u64, "tensor too large"))?)?;
            let data = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            out.push((name, Array::new(shape, data)?));
        }
        Ok(out)
    }
}

fn to_params(entries: Vec<(String, Array<f32>)>) -> Result<ParamSet<f32>> {
    let mut p = ParamSet::new();
    for (n, a) in entries {
        p.push(n, a)?;
    }
    Ok(p)
}

impl Checkpoint {
    /// Fresh state for `config`.
    pub fn initial(config: Config) -> Result<Self> {
        let gen = Generator::new(config.generator())?;
        let disc = Discriminator::new(config.discriminator())?;
        let state = TrainState::init(&gen, &disc, &config.training()?)?;
        Ok(Self { config, state })
    }

    pub fn encode(&self) -> Vec<u8> {
        let s = &self.state;
        let header = Header { config: self.config.clone(), step: s.step, seed: s.seed, gen_adam_step: s.gen_adam.step, disc_adam_step: s.disc_adam.step };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let gen: Vec<(&str, &Array<f32>)> = s.gen_params.iter().collect();
        let disc: Vec<(&str, &Array<f32>)> = s.disc_params.iter().collect();
        put_set(&mut out, &gen);
        put_set(&mut out, &disc);
        for (params, adam) in [(&s.gen_params, &s.gen_adam), (&s.disc_params, &s.disc_adam)] {
            for moments in [&adam.m, &adam.v] {
                let entries: Vec<(&str, &Array<f32>)> = params.names().zip(moments.iter()).collect();
                put_set(&mut out, &entries);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8], context: &str) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(AppError::format(context, 0, "missing FSCK magic"));
        }
        if bytes.len() < 12 + DIGEST {
            return Err(AppError::format(context, bytes.len() as u64, "truncated checkpoint"));
        }
        let body = &bytes[..bytes.len() - DIGEST];
        if Sha256::digest(body).as_slice() != &bytes[body.len()..] {
            return Err(AppError::format(context, body.len() as u64, "checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 4, context };
        let version = r.u32()?;
        if version != VERSION {
            return Err(AppError::format(context, 4, format!("unsupported version {version}")));
        }
        let hlen = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| AppError::format(context, 12, e.to_string()))?;
        header.config.validate()?;
        let gen_params = to_params(r.set()?)?;
        let disc_params = to_params(r.set()?)?;
        let mut moments = Vec::new();
        for _ in 0..4 {
            moments.push(r.set()?.into_iter().map(|(_, a)| a).collect::<Vec<_>>());
        }
        if r.pos != body.len() {
            return Err(AppError::format(context, r.pos as u64, "trailing bytes before the checksum"));
        }
        let adam = header.config.training()?.adam;
        let disc_v = moments.pop().unwrap();
        let disc_m = moments.pop().unwrap();
        let gen_v = moments.pop().unwrap();
        let gen_m = moments.pop().unwrap();
        let state = TrainState {
            step: header.step,
            seed: header.seed,
            gen_params,
            disc_params,
            gen_adam: AdamState { config: adam, step: header.gen_adam_step, m: gen_m, v: gen_v },
            disc_adam: AdamState { config: adam, step: header.disc_adam_step, m: disc_m, v: disc_v },
        };
        let ck = Self { config: header.config, state };
        ck.check_layout()?;
        Ok(ck)
    }

    /// Parameter and optimizer tensors must match the configured networks.
    pub fn check_layout(&self) -> Result<()> {
        let s = &self.state;
        let gen = Generator::new(self.config.generator())?.init_params::<f32>(0)?;
        let disc = Discriminator::new(self.config.discriminator())?.init_params::<f32>(0)?;
        gen.check_layout(&s.gen_params)?;
        disc.check_layout(&s.disc_params)?;
        for (params, adam) in [(&s.gen_params, &s.gen_adam), (&s.disc_params, &s.disc_adam)] {
            for moments in [&adam.m, &adam.v] {
                let ok = moments.len() == params.len() && moments.iter().zip(params.shapes()).all(|(a, s)| a.shape() == s);
                if !ok {
                    return Err(CoreError::ConfigMismatch("optimizer moments do not match the parameters".into()).into());
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::atomic_write(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }

    /// Hex SHA-256 of the encoded checkpoint.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.encode()))
    }

    pub fn edit_model(&self) -> Result<EditModel> {
        Ok(EditModel::new(Generator::new(self.config.generator())?, self.state.gen_params.clone(), self.config.dataset()?)?)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
