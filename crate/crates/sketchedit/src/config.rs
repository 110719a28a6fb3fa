//! The key-value config document shared by `forge`, `train` and the editors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sketchedit_core::autodiff::AdamConfig;
use sketchedit_core::color::{ColorMapConfig, StrokeConfig};
use sketchedit_core::dataset::{DatasetConfig, NoiseDist, DEFAULT_SIDE};
use sketchedit_core::mask::MaskSizeRange;
use sketchedit_core::model::{DiscriminatorConfig, GeneratorConfig};
use sketchedit_core::sketch::{EdgeDetector, SketchConfig};
use sketchedit_core::training::{GanVariant, LossWeights, TrainConfig};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub size: usize,
    pub seed: u64,
    pub full_frame_conditioning: bool,
    pub mask: MaskSection,
    pub sketch: SketchSection,
    pub color: ColorSection,
    pub noise: NoiseSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            size: DEFAULT_SIDE,
            seed: 0,
            full_frame_conditioning: false,
            mask: MaskSection::default(),
            sketch: SketchSection::default(),
            color: ColorSection::default(),
            noise: NoiseSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub min: f32,
    pub max: f32,
    pub axis_aligned: bool,
}

impl Default for MaskSection {
    fn default() -> Self {
        let r = MaskSizeRange::default();
        Self { min: r.min, max: r.max, axis_aligned: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SketchSection {
    pub detector: String,
    pub threshold: f32,
    pub max_error: f32,
    pub min_bbox_area: f32,
    pub smooth_iterations: usize,
    pub smooth_radius: f32,
    pub stroke_width: f32,
    pub raw_edges: bool,
}

impl Default for SketchSection {
    fn default() -> Self {
        let s = SketchConfig::default();
        Self {
            detector: s.detector.id().to_string(),
            threshold: s.threshold,
            max_error: s.max_error,
            min_bbox_area: s.min_bbox_area,
            smooth_iterations: s.smooth_iterations,
            smooth_radius: s.smooth_radius,
            stroke_width: s.stroke_width,
            raw_edges: s.raw_edges,
        }
    }
}

/// Unset map side and spatial sigma follow the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorSection {
    pub map_side: Option<usize>,
    pub median_kernel: usize,
    pub sigma_range: f32,
    pub sigma_domain: Option<f32>,
    pub iterations: usize,
    pub stroke_count: [usize; 2],
    pub stroke_length: [f32; 2],
    pub stroke_thickness: [f32; 2],
    pub jitter: f32,
    pub deviation_threshold: f32,
    pub iris: bool,
}

impl Default for ColorSection {
    fn default() -> Self {
        let m = ColorMapConfig::default();
        let s = StrokeConfig::default();
        Self {
            map_side: None,
            median_kernel: m.median_kernel,
            sigma_range: m.sigma_range,
            sigma_domain: None,
            iterations: m.iterations,
            stroke_count: [s.count.0, s.count.1],
            stroke_length: [s.length.0, s.length.1],
            stroke_thickness: [s.thickness.0, s.thickness.1],
            jitter: s.jitter,
            deviation_threshold: s.deviation_threshold,
            iris: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub dist: String,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { dist: NoiseDist::Normal.id().to_string() }
    }
}

/// `scale` picks the layer table (`desk` or `full`); the optional fields
/// override single entries. Network sides always follow `size`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub scale: Scale,
    pub generator_channels: Option<Vec<usize>>,
    pub dilated_blocks: Option<usize>,
    pub skips: Option<bool>,
    pub lrn_layers: Option<usize>,
    pub noise_input: Option<bool>,
    pub global_layers: Option<usize>,
    pub local_layers: Option<usize>,
    pub disc_base_channels: Option<usize>,
    pub disc_feature_dim: Option<usize>,
    pub disc_mask_input: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub epsilon_drift: f64,
    pub gan_variant: String,
    pub n_critic: usize,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch: t.batch,
            lr: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            alpha: t.weights.alpha,
            lambda: t.weights.lambda,
            epsilon_drift: t.weights.epsilon_drift,
            gan_variant: t.weights.gan_variant.id().to_string(),
            n_critic: t.n_critic,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| AppError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Builds every derived config once so errors surface at load time.
    pub fn validate(&self) -> Result<()> {
        let d = self.dataset()?;
        d.sketch.validate()?;
        d.strokes.validate()?;
        sketchedit_core::model::Generator::new(self.generator())?;
        sketchedit_core::model::Discriminator::new(self.discriminator())?;
        self.training()?.validate()?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        let mut d = DatasetConfig::for_side(self.size);
        d.mask_size = MaskSizeRange { min: self.mask.min, max: self.mask.max };
        d.axis_aligned_masks = self.mask.axis_aligned;
        let s = &self.sketch;
        d.sketch = SketchConfig {
            detector: EdgeDetector::from_id(&s.detector)?,
            threshold: s.threshold,
            max_error: s.max_error,
            min_bbox_area: s.min_bbox_area,
            smooth_iterations: s.smooth_iterations,
            smooth_radius: s.smooth_radius,
            stroke_width: s.stroke_width,
            raw_edges: s.raw_edges,
        };
        let c = &self.color;
        if let Some(side) = c.map_side {
            d.color_map.side = side;
        }
        if let Some(sd) = c.sigma_domain {
            d.color_map.sigma_domain = sd;
        }
        d.color_map.median_kernel = c.median_kernel;
        d.color_map.sigma_range = c.sigma_range;
        d.color_map.iterations = c.iterations;
        d.strokes = StrokeConfig {
            count: (c.stroke_count[0], c.stroke_count[1]),
            length: (c.stroke_length[0], c.stroke_length[1]),
            thickness: (c.stroke_thickness[0], c.stroke_thickness[1]),
            jitter: c.jitter,
            deviation_threshold: c.deviation_threshold,
        };
        d.iris = c.iris;
        d.full_frame_conditioning = self.full_frame_conditioning;
        d.noise = NoiseDist::from_id(&self.noise.dist)?;
        Ok(d)
    }

    pub fn generator(&self) -> GeneratorConfig {
        let m = &self.model;
        let mut g = match m.scale {
            Scale::Desk => GeneratorConfig::desk(),
            Scale::Full => GeneratorConfig::full(),
        };
        g.side = self.size;
        if let Some(c) = &m.generator_channels {
            g.channels = c.clone();
        }
        g.dilated_blocks = m.dilated_blocks.unwrap_or(g.dilated_blocks);
        g.skips = m.skips.unwrap_or(g.skips);
        g.lrn_layers = m.lrn_layers.unwrap_or(g.lrn_layers);
        g.noise = m.noise_input.unwrap_or(g.noise);
        g
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        let m = &self.model;
        let mut d = match m.scale {
            Scale::Desk => DiscriminatorConfig::desk(),
            Scale::Full => DiscriminatorConfig::full(),
        };
        d.side = self.size;
        d.global_layers = m.global_layers.unwrap_or(d.global_layers);
        d.local_layers = m.local_layers.unwrap_or(d.local_layers);
        d.base_channels = m.disc_base_channels.unwrap_or(d.base_channels);
        d.feature_dim = m.disc_feature_dim.unwrap_or(d.feature_dim);
        d.mask_input = m.disc_mask_input.unwrap_or(d.mask_input);
        d
    }

    pub fn training(&self) -> Result<TrainConfig> {
        let t = &self.train;
        Ok(TrainConfig {
            batch: t.batch,
            n_critic: t.n_critic,
            adam: AdamConfig { lr: t.lr, beta1: t.beta1, beta2: t.beta2, eps: t.adam_eps },
            weights: LossWeights { alpha: t.alpha, lambda: t.lambda, epsilon_drift: t.epsilon_drift, gan_variant: GanVariant::from_id(&t.gan_variant)? },
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
        })
    }
}
