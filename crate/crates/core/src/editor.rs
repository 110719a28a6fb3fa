//! Inference-time editing: user strokes to generator input, completion and
//! composition, and copy-paste of the sketch domain between images.

#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::autodiff::Array;
use crate::color::{self, ColorLayer, IrisEstimate, STROKE_REFERENCE_SIDE};
use crate::dataset::{self, Conditioning, DatasetConfig, INPUT_CHANNELS};
use crate::error::{invalid, Error, Result};
use crate::geom::Point;
use crate::model::{Generator, ParamSet};
use crate::raster::{clamp01, BinaryMask, RasterImage};
use crate::sketch::{self, point_segment_distance};
use crate::training;

/// Pen polyline; `erase` clears sketch bits instead of setting them.
#[derive(Debug, Clone, PartialEq)]
pub struct PenStroke {
    pub points: Vec<Point>,
    pub erase: bool,
    /// Stroke width in pixels.
    pub width: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorStroke {
    pub points: Vec<Point>,
    pub color: [f32; 3],
    pub thickness: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrisCircle {
    pub center: Point,
    pub radius: f32,
    pub color: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditRequest {
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub pen: Vec<PenStroke>,
    pub color: Vec<ColorStroke>,
    pub iris: Vec<IrisCircle>,
    pub noise_seed: u64,
}

fn in_bounds(p: Point, w: usize, h: usize) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f32 && p.y <= (h - 1) as f32
}

fn valid_color(c: &[f32; 3]) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl EditRequest {
    /// Request with no strokes: pure completion of the masked region.
    pub fn completion(image: RasterImage, mask: BinaryMask, noise_seed: u64) -> Self {
        Self { image, mask, pen: Vec::new(), color: Vec::new(), iris: Vec::new(), noise_seed }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image.width(), self.image.height());
        if self.image.channels() != 3 {
            return Err(invalid("image must be RGB"));
        }
        if !self.mask.same_dims(w, h) {
            return Err(invalid("mask and image sizes differ"));
        }
        if self.mask.is_empty() {
            return Err(invalid("mask has no set pixels"));
        }
        for s in &self.pen {
            if s.points.is_empty() || !(s.width > 0.0) || !s.points.iter().all(|p| in_bounds(*p, w, h)) {
                return Err(invalid("pen strokes need in-bounds points and a positive width"));
            }
        }
        for s in &self.color {
            if s.points.is_empty() || !(s.thickness > 0.0) || !valid_color(&s.color) || !s.points.iter().all(|p| in_bounds(*p, w, h)) {
                return Err(invalid("color strokes need in-bounds points, a positive thickness and colors in [0, 1]"));
            }
        }
        for c in &self.iris {
            if !(c.radius > 0.0) || !valid_color(&c.color) || !in_bounds(c.center, w, h) {
                return Err(invalid("iris circles need an in-bounds center, a positive radius and a color in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Calls `f` for every pixel whose center lies within `radius` of the polyline.
fn cover_polyline(points: &[Point], radius: f32, w: usize, h: usize, mut f: impl FnMut(usize, usize)) {
    let r = radius.max(0.5);
    let segs: Vec<(Point, Point)> = if points.len() == 1 { alloc::vec![(points[0], points[0])] } else { points.windows(2).map(|p| (p[0], p[1])).collect() };
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let x0 = (lo.x - r).ceil().max(0.0) as usize;
    let y0 = (lo.y - r).ceil().max(0.0) as usize;
    let x1 = ((hi.x + r).floor().max(0.0) as usize).min(w - 1);
    let y1 = ((hi.y + r).floor().max(0.0) as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let q = Point::new(x as f32, y as f32);
            if segs.iter().any(|(a, b)| point_segment_distance(q, *a, *b) <= r) {
                f(x, y);
            }
        }
    }
}

/// Sketch and color layers drawn by the request, over the whole frame.
/// Pen strokes apply in order (erase clears); color strokes, then iris disks,
/// paint in order with the last writer winning.
pub fn user_conditioning(req: &EditRequest) -> Result<Conditioning> {
    req.validate()?;
    let (w, h) = (req.image.width(), req.image.height());
    let mut sketch = BinaryMask::empty(w, h);
    for s in &req.pen {
        cover_polyline(&s.points, s.width / 2.0, w, h, |x, y| sketch.set(x, y, !s.erase));
    }
    let mut layer = ColorLayer::empty(w, h)?;
    for s in &req.color {
        cover_polyline(&s.points, s.thickness / 2.0, w, h, |x, y| layer.paint(x, y, s.color));
    }
    for c in &req.iris {
        color::draw_iris(&mut layer, &IrisEstimate { center: c.center, color: c.color, radius: c.radius });
    }
    Ok(Conditioning { sketch, color: layer })
}

/// The nine input planes of an edit: conditioning restricted to the mask,
/// masked RGB zeroed, seeded noise.
pub fn rasterize_user_input(req: &EditRequest, cfg: &DatasetConfig) -> Result<Vec<f32>> {
    let cond = user_conditioning(req)?;
    pack(&req.image, &req.mask, &cond, req.noise_seed, cfg)
}

fn pack(image: &RasterImage, mask: &BinaryMask, cond: &Conditioning, seed: u64, cfg: &DatasetConfig) -> Result<Vec<f32>> {
    let n = image.width() * image.height();
    dataset::pack_input(image, mask, cond, mask, &dataset::noise_plane(n, cfg.noise, seed))
}

/// Generator, its parameters, and the data settings it was trained with.
#[derive(Debug, Clone)]
pub struct EditModel {
    pub generator: Generator,
    pub params: ParamSet<f32>,
    pub data: DatasetConfig,
}

impl EditModel {
    pub fn new(generator: Generator, params: ParamSet<f32>, data: DatasetConfig) -> Result<Self> {
        generator.init_params::<f32>(0)?.check_layout(&params)?;
        if data.size != generator.config().side {
            return Err(Error::ConfigMismatch(alloc::format!("data side {} but generator side {}", data.size, generator.config().side)));
        }
        Ok(Self { generator, params, data })
    }

    pub fn side(&self) -> usize {
        self.data.size
    }

    fn check_image(&self, img: &RasterImage) -> Result<()> {
        let s = self.side();
        if img.width() != s || img.height() != s {
            return Err(Error::ConfigMismatch(alloc::format!("model expects {s}x{s} images, got {}x{}", img.width(), img.height())));
        }
        Ok(())
    }

    /// Runs the generator on packed input and composites its clamped output
    /// into `image` inside `mask`; pixels outside are copied verbatim.
    pub fn complete(&self, image: &RasterImage, mask: &BinaryMask, input: Vec<f32>) -> Result<RasterImage> {
        self.check_image(image)?;
        let s = self.side();
        let x = Array::new(alloc::vec![1, INPUT_CHANNELS, s, s], input)?;
        let y = training::generate(&self.generator, &self.params, &x)?;
        let plane = s * s;
        let mut out = image.clone();
        for yy in 0..s {
            for xx in 0..s {
                if mask.get(xx, yy) {
                    for c in 0..3 {
                        out.set(xx, yy, c, clamp01(y.data()[c * plane + yy * s + xx]));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn edit(&self, req: &EditRequest) -> Result<RasterImage> {
        self.check_image(&req.image)?;
        let input = rasterize_user_input(req, &self.data)?;
        self.complete(&req.image, &req.mask, input)
    }

    /// Edit from already rasterized sketch and color layers.
    pub fn edit_layers(&self, image: &RasterImage, mask: &BinaryMask, cond: &Conditioning, noise_seed: u64) -> Result<RasterImage> {
        self.check_image(image)?;
        if mask.is_empty() {
            return Err(invalid("mask has no set pixels"));
        }
        let input = pack(image, mask, cond, noise_seed, &self.data)?;
        self.complete(image, mask, input)
    }

    /// Target-frame mask and packed input of a copy-paste.
    pub fn copy_paste_input(&self, req: &CopyPasteRequest) -> Result<(BinaryMask, Vec<f32>)> {
        self.check_image(&req.target)?;
        let (mask, cond) = copy_paste_conditioning(req, &self.data)?;
        let input = pack(&req.target, &mask, &cond, req.noise_seed, &self.data)?;
        Ok((mask, input))
    }

    pub fn copy_paste(&self, req: &CopyPasteRequest) -> Result<RasterImage> {
        let (mask, input) = self.copy_paste_input(req)?;
        self.complete(&req.target, &mask, input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopyPasteRequest {
    pub source: RasterImage,
    pub source_mask: BinaryMask,
    pub target: RasterImage,
    /// Placement offset `(dx, dy)` of the source region in the target.
    pub offset: (isize, isize),
    pub noise_seed: u64,
}

/// Target-frame mask and conditioning for a copy-paste: the source sketch
/// inside the region, shifted by the offset, and the source color map
/// sampled along the shifted sketch.
pub fn copy_paste_conditioning(req: &CopyPasteRequest, cfg: &DatasetConfig) -> Result<(BinaryMask, Conditioning)> {
    let (sw, sh) = (req.source.width(), req.source.height());
    let (tw, th) = (req.target.width(), req.target.height());
    if req.source.channels() != 3 || req.target.channels() != 3 {
        return Err(invalid("source and target must be RGB"));
    }
    if !req.source_mask.same_dims(sw, sh) {
        return Err(invalid("source mask and source image sizes differ"));
    }
    if req.source_mask.is_empty() {
        return Err(invalid("source region has no set pixels"));
    }
    let (dx, dy) = req.offset;
    for y in 0..sh {
        for x in 0..sw {
            if req.source_mask.get(x, y) {
                let (px, py) = (x as isize + dx, y as isize + dy);
                if px < 0 || py < 0 || px >= tw as isize || py >= th as isize {
                    return Err(invalid("translated source region leaves the target image"));
                }
            }
        }
    }
    let src_sketch = sketch::make_sketch(&req.source, &cfg.sketch)?.and(&req.source_mask);
    let map = color::build_color_map(&req.source, None, &cfg.color_map)?.at_size(sw, sh)?;
    let radius = (0.5 * (cfg.strokes.thickness.0 + cfg.strokes.thickness.1) / 2.0 * sw.min(sh) as f32 / STROKE_REFERENCE_SIDE).max(0.5);

    let mut mask = BinaryMask::empty(tw, th);
    let mut sk = BinaryMask::empty(tw, th);
    for y in 0..sh {
        for x in 0..sw {
            let (px, py) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
            if req.source_mask.get(x, y) {
                mask.set(px, py, true);
            }
            if src_sketch.get(x, y) {
                sk.set(px, py, true);
            }
        }
    }
    let mut layer = ColorLayer::empty(tw, th)?;
    for y in 0..sh {
        for x in 0..sw {
            if !src_sketch.get(x, y) {
                continue;
            }
            let p = map.pixel(x, y);
            let col = [p[0], p[1], p[2]];
            let c = Point::new((x as isize + dx) as f32, (y as isize + dy) as f32);
            cover_polyline(&[c], radius, tw, th, |qx, qy| {
                if mask.get(qx, qy) {
                    layer.paint(qx, qy, col);
                }
            });
        }
    }
    Ok((mask, Conditioning { sketch: sk, color: layer }))
}
