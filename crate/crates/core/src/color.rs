//! Color domain: a flattened color map of the face, random color strokes drawn
//! from it, pupil localization and iris disks.

#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::geom::{Point, Rect};
use crate::raster::{bilateral_filter, median_filter, resize, resize_nearest, BinaryMask, RasterImage};
use crate::rng;

/// Side the stroke and iris geometry is specified at.
pub const STROKE_REFERENCE_SIDE: f32 = 128.0;
/// Side the iris radius is specified at.
pub const IRIS_REFERENCE_SIDE: f32 = 512.0;
pub const IRIS_RADIUS_AT_REFERENCE: f32 = 10.0;
/// Eye boxes are rescaled to this height before the pupil search.
pub const EYE_BOX_HEIGHT: usize = 64;
/// Radius of the iris color sampling circle in the normalized eye box.
pub const IRIS_SAMPLE_RADIUS: f32 = 6.0;

/// Semantic label ids accepted in label rasters.
pub mod label {
    pub const NONE: u8 = 0;
    pub const HAIR: u8 = 1;
    pub const LIPS: u8 = 2;
    pub const TEETH: u8 = 3;
    pub const BROWS: u8 = 4;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorMapConfig {
    pub side: usize,
    pub median_kernel: usize,
    /// Range sigma in 8-bit units.
    pub sigma_range: f32,
    pub sigma_domain: f32,
    pub iterations: usize,
}

impl Default for ColorMapConfig {
    fn default() -> Self {
        Self { side: 128, median_kernel: 3, sigma_range: 25.0, sigma_domain: 7.0, iterations: 40 }
    }
}

/// Single-channel label image (one id per pixel), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

/// Smoothed, low-resolution color image with largely constant regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    image: RasterImage,
}

impl ColorMap {
    pub fn from_image(image: RasterImage) -> Result<Self> {
        if image.channels() != 3 {
            return Err(invalid("a color map has three channels"));
        }
        Ok(Self { image })
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    /// Nearest-neighbor upsampling, so every value is an exact map value.
    pub fn at_size(&self, width: usize, height: usize) -> Result<RasterImage> {
        if width == self.image.width() && height == self.image.height() {
            return Ok(self.image.clone());
        }
        resize_nearest(&self.image, width, height)
    }
}

fn channel_median(values: &mut [f32]) -> f32 {
    values.sort_by(f32::total_cmp);
    values[values.len() / 2]
}

/// Resize, 3x3 median, repeated bilateral filtering; optional semantic regions
/// are then flattened to their median color.
pub fn build_color_map(img: &RasterImage, labels: Option<&LabelRaster>, cfg: &ColorMapConfig) -> Result<ColorMap> {
    if img.channels() != 3 {
        return Err(invalid("color map source must be RGB"));
    }
    if let Some(l) = labels {
        if l.width != img.width() || l.height != img.height() || l.labels.len() != l.width * l.height {
            return Err(invalid("label raster must match the image dimensions"));
        }
    }
    let small = resize(img, cfg.side, cfg.side)?;
    let med = median_filter(&small, cfg.median_kernel)?;
    let mut map = bilateral_filter(&med, cfg.sigma_range, cfg.sigma_domain, cfg.iterations)?;
    if let Some(l) = labels {
        let side = cfg.side;
        let at = |x: usize, y: usize| {
            let sx = ((x * l.width) / side).min(l.width - 1);
            let sy = ((y * l.height) / side).min(l.height - 1);
            l.labels[sy * l.width + sx]
        };
        for id in [label::HAIR, label::LIPS, label::TEETH, label::BROWS] {
            let pix: Vec<(usize, usize)> =
                (0..side).flat_map(|y| (0..side).map(move |x| (x, y))).filter(|(x, y)| at(*x, *y) == id).collect();
            if pix.is_empty() {
                continue;
            }
            let mut color = [0.0f32; 3];
            for (c, out) in color.iter_mut().enumerate() {
                let mut vals: Vec<f32> = pix.iter().map(|(x, y)| map.get(*x, *y, c)).collect();
                *out = channel_median(&mut vals);
            }
            for (x, y) in pix {
                for (c, v) in color.iter().enumerate() {
                    map.set(x, y, c, *v);
                }
            }
        }
    }
    ColorMap::from_image(map)
}

/// Sparse RGB constraints: `rgb` is zero wherever `valid` is unset.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorLayer {
    rgb: RasterImage,
    valid: BinaryMask,
}

impl ColorLayer {
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Ok(Self { rgb: RasterImage::zeros(width, height, 3)?, valid: BinaryMask::empty(width, height) })
    }

    /// Builds a layer, zeroing colors outside `valid`.
    pub fn new(mut rgb: RasterImage, valid: BinaryMask) -> Result<Self> {
        if rgb.channels() != 3 || !valid.same_dims(rgb.width(), rgb.height()) {
            return Err(invalid("color layer needs an RGB image and a mask of equal size"));
        }
        for y in 0..rgb.height() {
            for x in 0..rgb.width() {
                if !valid.get(x, y) {
                    for c in 0..3 {
                        rgb.set(x, y, c, 0.0);
                    }
                }
            }
        }
        Ok(Self { rgb, valid })
    }

    pub fn rgb(&self) -> &RasterImage {
        &self.rgb
    }

    pub fn valid(&self) -> &BinaryMask {
        &self.valid
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn paint(&mut self, x: usize, y: usize, color: [f32; 3]) {
        for (c, v) in color.iter().enumerate() {
            self.rgb.set(x, y, c, *v);
        }
        self.valid.set(x, y, true);
    }

    pub fn clear(&mut self, x: usize, y: usize) {
        for c in 0..3 {
            self.rgb.set(x, y, c, 0.0);
        }
        self.valid.set(x, y, false);
    }

    /// Pixels where `other` is valid take its color.
    pub fn overlay(&mut self, other: &ColorLayer) {
        for y in 0..self.height().min(other.height()) {
            for x in 0..self.width().min(other.width()) {
                if other.valid.get(x, y) {
                    let p = other.rgb.pixel(x, y);
                    self.paint(x, y, [p[0], p[1], p[2]]);
                }
            }
        }
    }

    /// Keeps only the pixels inside `mask`.
    pub fn restricted(&self, mask: &BinaryMask) -> ColorLayer {
        let valid = self.valid.and(mask);
        ColorLayer::new(self.rgb.clone(), valid).expect("dimensions unchanged")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeConfig {
    /// Inclusive stroke count range.
    pub count: (usize, usize),
    /// Length range in pixels at 128 x 128.
    pub length: (f32, f32),
    /// Thickness range in pixels at 128 x 128.
    pub thickness: (f32, f32),
    /// Upper bound of the per-stroke orthogonal jitter amplitude at 128 x 128.
    pub jitter: f32,
    /// L-infinity color deviation that ends a stroke.
    pub deviation_threshold: f32,
}

impl Default for StrokeConfig {
    fn default() -> Self {
        Self { count: (0, 8), length: (8.0, 64.0), thickness: (2.0, 8.0), jitter: 2.0, deviation_threshold: 0.1 }
    }
}

impl StrokeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.count.0 <= self.count.1
            && 0.0 < self.length.0
            && self.length.0 <= self.length.1
            && 0.0 < self.thickness.0
            && self.thickness.0 <= self.thickness.1
            && self.jitter >= 0.0
            && self.deviation_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid("stroke ranges must be non-empty and the threshold positive"))
        }
    }
}

/// One drawn stroke: its color and the centers that were stamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub color: [f32; 3],
    pub radius: f32,
    /// Planned length in pixels.
    pub length: f32,
    pub samples: Vec<Point>,
}

fn deviation(a: &[f32], b: [f32; 3]) -> f32 {
    (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0, f32::max)
}

/// Random strokes over a `width x height` canvas. Each takes the map color at
/// its start and walks toward its end with orthogonal jitter; it stops at the
/// first sample leaving the image or deviating from the start color by more
/// than the threshold. Stamps only cover pixels whose map color is within the
/// threshold, so strokes never spill across a color boundary.
pub fn synth_strokes(map: &ColorMap, width: usize, height: usize, seed: u64, cfg: &StrokeConfig) -> Result<(ColorLayer, Vec<Stroke>)> {
    cfg.validate()?;
    let canvas = map.at_size(width, height)?;
    let scale = width.min(height) as f32 / STROKE_REFERENCE_SIDE;
    let mut r = rng::seeded(seed);
    let mut layer = ColorLayer::empty(width, height)?;
    let mut strokes = Vec::new();
    let n = r.random_range(cfg.count.0..=cfg.count.1);
    for _ in 0..n {
        let start = Point::new(r.random_range(0.0..width as f32 - 1.0), r.random_range(0.0..height as f32 - 1.0));
        let len = r.random_range(cfg.length.0..=cfg.length.1) * scale;
        let radius = 0.5 * r.random_range(cfg.thickness.0..=cfg.thickness.1) * scale;
        let amp = r.random_range(0.0..=cfg.jitter) * scale;
        let angle = r.random_range(0.0..core::f32::consts::TAU);
        let dir = Point::new(angle.cos(), angle.sin());
        let normal = Point::new(-dir.y, dir.x);
        let steps = len.ceil().max(1.0) as usize;
        let offsets: Vec<f32> = (0..=steps).map(|_| if amp > 0.0 { r.random_range(-amp..=amp) } else { 0.0 }).collect();
        let sp = canvas.pixel(start.x.round() as usize, start.y.round() as usize);
        let color = [sp[0], sp[1], sp[2]];
        let mut samples = Vec::new();
        for (k, off) in offsets.iter().enumerate() {
            let t = len * k as f32 / steps as f32;
            let p = if k == 0 { start } else { start + dir * t + normal * *off };
            let (px, py) = (p.x.round(), p.y.round());
            if px < 0.0 || py < 0.0 || px >= width as f32 || py >= height as f32 {
                break;
            }
            if deviation(canvas.pixel(px as usize, py as usize), color) > cfg.deviation_threshold {
                break;
            }
            samples.push(p);
            stamp_disk(&mut layer, &canvas, p, radius, color, cfg.deviation_threshold);
        }
        strokes.push(Stroke { color, radius, length: len, samples });
    }
    Ok((layer, strokes))
}

fn stamp_disk(layer: &mut ColorLayer, canvas: &RasterImage, p: Point, radius: f32, color: [f32; 3], threshold: f32) {
    let r = radius.max(0.5);
    let (x0, x1) = ((p.x - r).ceil().max(0.0) as usize, (p.x + r).floor().min(layer.width() as f32 - 1.0));
    let (y0, y1) = ((p.y - r).ceil().max(0.0) as usize, (p.y + r).floor().min(layer.height() as f32 - 1.0));
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let d = Point::new(x as f32, y as f32).dist(p);
            if d <= r && deviation(canvas.pixel(x, y), color) <= threshold {
                layer.paint(x, y, color);
            }
        }
    }
}

/// Pupil position and iris color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrisEstimate {
    pub center: Point,
    pub color: [f32; 3],
    pub radius: f32,
}

/// Iris disk radius for an image of the given side.
pub fn iris_radius(side: usize) -> f32 {
    IRIS_RADIUS_AT_REFERENCE * side as f32 / IRIS_REFERENCE_SIDE
}

/// Gradient objective `mean_i (d_i . g_i)^2` for every candidate center of a
/// gray plane, where `g_i` are unit gradients of the strong-gradient pixels and
/// `d_i` unit displacements from the candidate. Returns `None` when the plane
/// has no gradient.
pub fn pupil_objective(gray: &[f32], w: usize, h: usize) -> Option<Vec<f32>> {
    let at = |x: isize, y: isize| gray[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut grads = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y) - at(x - 1, y)) * 0.5;
            let gy = (at(x, y + 1) - at(x, y - 1)) * 0.5;
            grads.push((x as f32, y as f32, gx, gy, (gx * gx + gy * gy).sqrt()));
        }
    }
    let n = grads.len() as f32;
    let mean = grads.iter().map(|g| g.4).sum::<f32>() / n;
    let var = grads.iter().map(|g| (g.4 - mean) * (g.4 - mean)).sum::<f32>() / n;
    let thresh = mean + 0.3 * var.sqrt();
    let strong: Vec<(f32, f32, f32, f32)> =
        grads.iter().filter(|g| g.4 > 1e-6 && g.4 >= thresh).map(|g| (g.0, g.1, g.2 / g.4, g.3 / g.4)).collect();
    if strong.is_empty() {
        return None;
    }
    let mut obj = vec![0.0f32; w * h];
    for cy in 0..h {
        for cx in 0..w {
            let (fx, fy) = (cx as f32, cy as f32);
            let mut acc = 0.0f32;
            for (x, y, gx, gy) in &strong {
                let (dx, dy) = (x - fx, y - fy);
                let d2 = dx * dx + dy * dy;
                if d2 == 0.0 {
                    continue;
                }
                let dot = (dx * gx + dy * gy) / d2.sqrt();
                acc += dot * dot;
            }
            obj[cy * w + cx] = acc / strong.len() as f32;
        }
    }
    Some(obj)
}

/// Locates the pupil inside `search_box` of `img`. The box is rescaled to a
/// fixed height, the objective maximized over the box grid, and the iris color
/// taken as the per-channel median inside a fixed circle around the center.
pub fn locate_pupil(img: &RasterImage, search_box: Rect, image_side: usize) -> Result<IrisEstimate> {
    if !search_box.fits(img.width(), img.height()) || search_box.w < 8 || search_box.h < 8 {
        return Err(invalid("pupil search box must be at least 8x8 and inside the image"));
    }
    let crop = img.crop(search_box)?;
    let k = EYE_BOX_HEIGHT as f32 / search_box.h as f32;
    let nw = ((search_box.w as f32 * k).round() as usize).max(1);
    let nh = EYE_BOX_HEIGHT;
    let norm = resize(&crop, nw, nh)?;
    let gray = norm.to_gray();
    let obj = pupil_objective(gray.data(), nw, nh).ok_or(Error::NoPupil)?;
    let best = (0..obj.len()).fold(0, |b, i| if obj[i] > obj[b] { i } else { b });
    let (bx, by) = ((best % nw) as f32, (best / nw) as f32);
    let color_src = if norm.channels() == 3 { norm.clone() } else { resize(&crop, nw, nh)? };
    let mut chans: [Vec<f32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let r = IRIS_SAMPLE_RADIUS;
    for y in 0..nh {
        for x in 0..nw {
            if Point::new(x as f32, y as f32).dist(Point::new(bx, by)) <= r {
                let p = color_src.pixel(x, y);
                for (c, ch) in chans.iter_mut().enumerate() {
                    ch.push(p[c.min(p.len() - 1)]);
                }
            }
        }
    }
    let color = [channel_median(&mut chans[0]), channel_median(&mut chans[1]), channel_median(&mut chans[2])];
    // map the normalized grid position back to image coordinates (pixel centers)
    let center = Point::new(
        search_box.x0 as f32 + (bx + 0.5) / (nw as f32 / search_box.w as f32) - 0.5,
        search_box.y0 as f32 + (by + 0.5) / k - 0.5,
    );
    Ok(IrisEstimate { center, color, radius: iris_radius(image_side) })
}

/// Filled iris disk (pixel centers with `|p - c| <= r`).
pub fn draw_iris(layer: &mut ColorLayer, iris: &IrisEstimate) {
    let r = iris.radius;
    let c = iris.center;
    let y0 = (c.y - r).ceil().max(0.0) as usize;
    let x0 = (c.x - r).ceil().max(0.0) as usize;
    let y1 = ((c.y + r).floor() as isize).min(layer.height() as isize - 1);
    let x1 = ((c.x + r).floor() as isize).min(layer.width() as isize - 1);
    if y1 < 0 || x1 < 0 {
        return;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let (dx, dy) = (x as f32 - c.x, y as f32 - c.y);
            if dx * dx + dy * dy <= r * r {
                layer.paint(x, y, iris.color);
            }
        }
    }
}

/// With probability one half returns an empty layer.
pub fn maybe_drop_color(layer: ColorLayer, seed: u64) -> ColorLayer {
    let mut r = rng::seeded(seed);
    if r.random_bool(0.5) {
        ColorLayer::empty(layer.width(), layer.height()).expect("non-zero dimensions")
    } else {
        layer
    }
}
