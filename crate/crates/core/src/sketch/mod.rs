//! Sketch domain: edge map, skeleton tracing, cubic spline fitting, pruning of
//! small curves, control point smoothing and rasterization into a binary layer.

mod edges;
mod fit;
mod paths;
mod trace;

use alloc::vec::Vec;

pub use edges::{detect_edges, gaussian_blur, EdgeDetector, EdgeMap};
pub use fit::{fit_splines, nearest_distance, point_segment_distance, CubicBezier, SplinePath};
pub use paths::{bbox_area, prune_small, rasterize, smooth_controls, turning};
pub use trace::{binarize, thin, trace, trace_skeleton, Polyline};

use crate::error::{invalid, Result};
use crate::raster::{BinaryMask, RasterImage};

/// Binary stroke layer with the dimensions of its source image.
pub type SketchLayer = BinaryMask;

/// Side length the pruning area is specified at; it scales with image area.
pub const REFERENCE_SIDE: f32 = 512.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SketchConfig {
    pub detector: EdgeDetector,
    /// Edge strength at or above which a pixel is traced.
    pub threshold: f32,
    /// Spline fit tolerance in pixels.
    pub max_error: f32,
    /// Minimum control-point bounding-box area at 512 x 512.
    pub min_bbox_area: f32,
    pub smooth_iterations: usize,
    /// Arc-length distance of the smoothing neighbors, pixels.
    pub smooth_radius: f32,
    pub stroke_width: f32,
    /// Skip fitting, pruning and smoothing: the layer is the traced skeleton.
    pub raw_edges: bool,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            detector: EdgeDetector::default(),
            threshold: 0.5,
            max_error: 1.0,
            min_bbox_area: 64.0,
            smooth_iterations: 2,
            smooth_radius: 2.0,
            stroke_width: 1.0,
            raw_edges: false,
        }
    }
}

impl SketchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(invalid("sketch threshold must lie in (0, 1)"));
        }
        if !(self.max_error > 0.0) {
            return Err(invalid("max_error must be positive"));
        }
        if !(self.min_bbox_area >= 0.0) {
            return Err(invalid("min_bbox_area must be non-negative"));
        }
        if !(self.smooth_radius >= 0.0) {
            return Err(invalid("smooth_radius must be non-negative"));
        }
        if !(self.stroke_width >= 1.0) {
            return Err(invalid("stroke width must be at least 1"));
        }
        Ok(())
    }

    /// Pruning area for a `width x height` image.
    pub fn scaled_min_area(&self, width: usize, height: usize) -> f32 {
        self.min_bbox_area * (width * height) as f32 / (REFERENCE_SIDE * REFERENCE_SIDE)
    }
}

/// Smoothed spline paths of `img` (the vector form of its sketch).
pub fn sketch_paths(img: &RasterImage, cfg: &SketchConfig) -> Result<Vec<SplinePath>> {
    cfg.validate()?;
    let edges = detect_edges(img, &cfg.detector)?;
    let mut paths = Vec::new();
    for line in trace(&edges, cfg.threshold) {
        paths.push(fit_splines(&line.points, line.closed, cfg.max_error)?);
    }
    let paths = prune_small(paths, cfg.scaled_min_area(img.width(), img.height()));
    Ok(paths.iter().map(|p| smooth_controls(p, cfg.smooth_iterations, cfg.smooth_radius)).collect())
}

/// Rasterizes traced chains point by point.
pub fn rasterize_polylines(lines: &[Polyline], width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::empty(width, height);
    for l in lines {
        for p in &l.points {
            m.set_checked(p.x as isize, p.y as isize, true);
        }
    }
    m
}

/// Full pipeline: edges, tracing, fitting, pruning, smoothing, rasterization.
pub fn make_sketch(img: &RasterImage, cfg: &SketchConfig) -> Result<SketchLayer> {
    cfg.validate()?;
    if cfg.raw_edges {
        let edges = detect_edges(img, &cfg.detector)?;
        return Ok(rasterize_polylines(&trace(&edges, cfg.threshold), img.width(), img.height()));
    }
    let paths = sketch_paths(img, cfg)?;
    rasterize(&paths, img.width(), img.height(), cfg.stroke_width)
}
