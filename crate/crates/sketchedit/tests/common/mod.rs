#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sketchedit::config::Config;
use sketchedit::forge::{forge, Source};

pub const SMALL: &str = "size = 32\nseed = 3\n[model]\ngenerator_channels = [4, 6, 8, 8]\ndisc_base_channels = 4\ndisc_feature_dim = 8\nglobal_layers = 8\nlocal_layers = 7\n[train]\ncheckpoint_every = 5\n";

pub fn small_config() -> Config {
    Config::parse(SMALL).unwrap()
}

/// Forges `count` toy portraits into one shard under `dir`.
pub fn small_shard(dir: &Path, count: usize) -> PathBuf {
    let path = dir.join("data.fsds");
    forge(&Source::Synthetic { count }, &small_config(), &[path.clone()]).unwrap();
    path
}
