//! Face alignment and assembly of the nine-channel conditional training
//! samples, plus the seeded epoch order used by loaders.

#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::color::{self, ColorLayer, ColorMapConfig, StrokeConfig};
use crate::error::{invalid, Error, Result};
use crate::geom::{Point, Rect};
use crate::mask::{self, MaskSizeRange, MaskSpec};
use crate::raster::{BinaryMask, RasterImage};
use crate::rng;
use crate::sketch::{self, SketchConfig};

/// Channels of the generator input, in order.
pub const INPUT_CHANNELS: usize = 9;
pub const CH_RGB: usize = 0;
pub const CH_SKETCH: usize = 3;
pub const CH_COLOR: usize = 4;
pub const CH_MASK: usize = 7;
pub const CH_NOISE: usize = 8;
/// Canonical inter-eye distance as a fraction of the output side.
pub const EYE_DISTANCE_FRACTION: f32 = 0.25;
/// Desk-scale default sample side.
pub const DEFAULT_SIDE: usize = 64;

/// Eye positions of one source image.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeAnnotation {
    pub file: String,
    pub left: Point,
    pub right: Point,
}

impl EyeAnnotation {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let inside = |p: Point| p.x >= 0.0 && p.y >= 0.0 && p.x <= width as f32 - 1.0 && p.y <= height as f32 - 1.0;
        if self.left.dist(self.right) < 1e-3 {
            return Err(invalid("eye positions coincide"));
        }
        if !inside(self.left) || !inside(self.right) {
            return Err(invalid("eye positions must lie inside the image"));
        }
        Ok(())
    }
}

/// Where the eyes land in an aligned `side x side` image (left, right).
pub fn canonical_eyes(side: usize) -> (Point, Point) {
    let c = (side as f32 - 1.0) / 2.0;
    let half = EYE_DISTANCE_FRACTION * side as f32 / 2.0;
    (Point::new(c - half, c), Point::new(c + half, c))
}

/// Similarity transform from output to source pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Source point the output center maps to.
    pub src_center: Point,
    pub out_center: Point,
    pub scale: f32,
    pub cos: f32,
    pub sin: f32,
}

impl Similarity {
    /// Output to source.
    pub fn apply(&self, p: Point) -> Point {
        let d = p - self.out_center;
        let r = Point::new(self.cos * d.x - self.sin * d.y, self.sin * d.x + self.cos * d.y);
        self.src_center + r * self.scale
    }

    /// Source to output.
    pub fn invert(&self, q: Point) -> Point {
        let d = (q - self.src_center) * (1.0 / self.scale);
        let r = Point::new(self.cos * d.x + self.sin * d.y, -self.sin * d.x + self.cos * d.y);
        self.out_center + r
    }
}

/// Transform that puts the annotated eyes on their canonical positions.
pub fn eye_transform(ann: &EyeAnnotation, out_size: usize) -> Result<Similarity> {
    let e = ann.right - ann.left;
    let dist = e.norm();
    if dist < 1e-3 {
        return Err(invalid("eye positions coincide"));
    }
    let (cl, cr) = canonical_eyes(out_size);
    let mid_out = cl.lerp(cr, 0.5);
    let d = e * (1.0 / dist);
    Ok(Similarity {
        src_center: ann.left.lerp(ann.right, 0.5),
        out_center: mid_out,
        scale: dist / cl.dist(cr),
        cos: d.x,
        sin: d.y,
    })
}

/// Bilinear lookup; taps outside the image read `fill`.
fn sample_bilinear(img: &RasterImage, q: Point, fill: &[f32], out: &mut [f32]) {
    let (x0, y0) = (q.x.floor(), q.y.floor());
    let (fx, fy) = (q.x - x0, q.y - y0);
    let (w, h) = (img.width() as isize, img.height() as isize);
    out.iter_mut().for_each(|v| *v = 0.0);
    for (dx, dy, wt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        if wt == 0.0 {
            continue;
        }
        let (x, y) = (x0 as isize + dx, y0 as isize + dy);
        let px = if x >= 0 && y >= 0 && x < w && y < h { img.pixel(x as usize, y as usize) } else { fill };
        for (o, v) in out.iter_mut().zip(px) {
            *o += wt * v;
        }
    }
}

/// Rotates, scales and translates `img` so the eyes land on their canonical
/// positions, padding with the mean color, and returns an `out_size` square.
pub fn align_and_crop(img: &RasterImage, ann: &EyeAnnotation, out_size: usize) -> Result<RasterImage> {
    if out_size == 0 {
        return Err(invalid("output size must be positive"));
    }
    ann.validate(img.width(), img.height())?;
    let t = eye_transform(ann, out_size)?;
    let fill = img.mean_color();
    let ch = img.channels();
    let mut data = alloc::vec![0.0; out_size * out_size * ch];
    for y in 0..out_size {
        for x in 0..out_size {
            let q = t.apply(Point::new(x as f32, y as f32));
            let i = (y * out_size + x) * ch;
            sample_bilinear(img, q, &fill, &mut data[i..i + ch]);
        }
    }
    RasterImage::new(out_size, out_size, ch, data)
}

/// Search boxes around the canonical eye positions of an aligned image.
pub fn eye_boxes(side: usize) -> [Rect; 2] {
    let (l, r) = canonical_eyes(side);
    let bw = ((0.16 * side as f32).round() as usize).max(8).min(side);
    let bh = ((0.10 * side as f32).round() as usize).max(8).min(side);
    let place = |p: Point| {
        let x = (p.x - bw as f32 / 2.0 + 0.5).round().clamp(0.0, (side - bw) as f32) as usize;
        let y = (p.y - bh as f32 / 2.0 + 0.5).round().clamp(0.0, (side - bh) as f32) as usize;
        Rect::new(x, y, bw, bh)
    };
    [place(l), place(r)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDist {
    #[default]
    Normal,
    Uniform,
}

impl NoiseDist {
    pub fn id(self) -> &'static str {
        match self {
            NoiseDist::Normal => "normal",
            NoiseDist::Uniform => "uniform",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "normal" => Ok(NoiseDist::Normal),
            "uniform" => Ok(NoiseDist::Uniform),
            _ => Err(invalid(alloc::format!("unknown noise distribution {id:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub size: usize,
    pub mask_size: MaskSizeRange,
    pub axis_aligned_masks: bool,
    pub sketch: SketchConfig,
    pub color_map: ColorMapConfig,
    pub strokes: StrokeConfig,
    /// Locate pupils and draw iris disks into the color layer.
    pub iris: bool,
    /// Keep sketch and color over the whole frame instead of the mask only.
    pub full_frame_conditioning: bool,
    pub noise: NoiseDist,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::for_side(DEFAULT_SIDE)
    }
}

impl DatasetConfig {
    /// Defaults for a sample side. The color map stays at 128 px unless the
    /// image is smaller, in which case it shrinks to the image side with the
    /// spatial sigma scaled alongside.
    pub fn for_side(size: usize) -> Self {
        let reference = ColorMapConfig::default();
        let side = reference.side.min(size).max(1);
        let color_map = ColorMapConfig { side, sigma_domain: reference.sigma_domain * side as f32 / reference.side as f32, ..reference };
        Self {
            size,
            mask_size: MaskSizeRange::default(),
            axis_aligned_masks: false,
            sketch: SketchConfig::default(),
            color_map,
            strokes: StrokeConfig::default(),
            iris: true,
            full_frame_conditioning: false,
            noise: NoiseDist::Normal,
        }
    }
}

/// One training pair: the target image and the CHW generator input.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    side: usize,
    target: RasterImage,
    input: Vec<f32>,
    mask_spec: MaskSpec,
}

impl TrainingSample {
    /// Checks the structural invariants: RGB target of the given side, nine
    /// input planes, a binary mask plane and no target pixels under it.
    pub fn new(target: RasterImage, input: Vec<f32>, mask_spec: MaskSpec) -> Result<Self> {
        let side = target.width();
        if target.height() != side || target.channels() != 3 {
            return Err(invalid("target must be a square RGB image"));
        }
        let plane = side * side;
        if input.len() != INPUT_CHANNELS * plane {
            return Err(Error::Shape { context: "sample input", left: alloc::vec![input.len()], right: alloc::vec![INPUT_CHANNELS, side, side] });
        }
        let m = &input[CH_MASK * plane..(CH_MASK + 1) * plane];
        if m.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(invalid("mask plane must be binary"));
        }
        for c in CH_RGB..CH_RGB + 3 {
            let rgb = &input[c * plane..(c + 1) * plane];
            if rgb.iter().zip(m).any(|(v, m)| *m == 1.0 && *v != 0.0) {
                return Err(invalid("masked RGB must be zero inside the mask"));
            }
        }
        Ok(Self { side, target, input, mask_spec })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn target(&self) -> &RasterImage {
        &self.target
    }

    /// Input planes, channel-major.
    pub fn input(&self) -> &[f32] {
        &self.input
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.side * self.side;
        &self.input[c * plane..(c + 1) * plane]
    }

    pub fn mask_spec(&self) -> &MaskSpec {
        &self.mask_spec
    }

    pub fn mask(&self) -> BinaryMask {
        BinaryMask::new(self.side, self.side, self.channel(CH_MASK).iter().map(|v| *v == 1.0).collect()).expect("plane size")
    }

    /// Target in CHW order.
    pub fn target_chw(&self) -> Vec<f32> {
        to_chw(&self.target)
    }
}

/// Interleaved image to channel-major planes.
pub fn to_chw(img: &RasterImage) -> Vec<f32> {
    let (plane, ch) = (img.width() * img.height(), img.channels());
    let mut out = alloc::vec![0.0; plane * ch];
    for (i, px) in img.data().chunks(ch).enumerate() {
        for (c, v) in px.iter().enumerate() {
            out[c * plane + i] = *v;
        }
    }
    out
}

/// Channel-major planes to an interleaved image.
pub fn from_chw(data: &[f32], width: usize, height: usize, channels: usize) -> Result<RasterImage> {
    let plane = width * height;
    if data.len() != plane * channels {
        return Err(invalid("plane data does not match the image size"));
    }
    let mut out = alloc::vec![0.0; plane * channels];
    for c in 0..channels {
        for i in 0..plane {
            out[i * channels + c] = data[c * plane + i];
        }
    }
    RasterImage::new(width, height, channels, out)
}

/// Conditioning inputs, before masking.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub sketch: BinaryMask,
    pub color: ColorLayer,
}

/// Packs an image, mask and conditioning into the nine input planes.
/// Sketch and color are kept only inside `region`.
pub fn pack_input(img: &RasterImage, mask: &BinaryMask, cond: &Conditioning, region: &BinaryMask, noise: &[f32]) -> Result<Vec<f32>> {
    let (w, h) = (img.width(), img.height());
    let plane = w * h;
    let dims_ok = img.channels() == 3
        && mask.same_dims(w, h)
        && region.same_dims(w, h)
        && cond.sketch.same_dims(w, h)
        && cond.color.width() == w
        && cond.color.height() == h
        && noise.len() == plane;
    if !dims_ok {
        return Err(invalid("input planes must share the image dimensions"));
    }
    let mut input = alloc::vec![0.0; INPUT_CHANNELS * plane];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let inside = mask.get(x, y);
            let keep = region.get(x, y);
            let px = img.pixel(x, y);
            for c in 0..3 {
                input[(CH_RGB + c) * plane + i] = if inside { 0.0 } else { px[c] };
            }
            if keep && cond.sketch.get(x, y) {
                input[CH_SKETCH * plane + i] = 1.0;
            }
            if keep && cond.color.valid().get(x, y) {
                let col = cond.color.rgb().pixel(x, y);
                for c in 0..3 {
                    input[(CH_COLOR + c) * plane + i] = col[c];
                }
            }
            input[CH_MASK * plane + i] = if inside { 1.0 } else { 0.0 };
            input[CH_NOISE * plane + i] = noise[i];
        }
    }
    Ok(input)
}

/// Per-pixel noise plane.
pub fn noise_plane(n: usize, dist: NoiseDist, seed: u64) -> Vec<f32> {
    let mut r = rng::seeded(seed);
    match dist {
        NoiseDist::Normal => (0..n).map(|_| StandardNormal.sample(&mut r)).collect(),
        NoiseDist::Uniform => {
            use rand::Rng as _;
            (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect()
        }
    }
}

/// Sketch and (possibly dropped) color strokes with iris disks for `img`.
pub fn synthesize_conditioning(img: &RasterImage, seed: u64, cfg: &DatasetConfig) -> Result<Conditioning> {
    let (w, h) = (img.width(), img.height());
    let sketch = sketch::make_sketch(img, &cfg.sketch)?;
    let map = color::build_color_map(img, None, &cfg.color_map)?;
    let (mut layer, _) = color::synth_strokes(&map, w, h, rng::derive(seed, 2), &cfg.strokes)?;
    if cfg.iris && w == h {
        for b in eye_boxes(w) {
            // synthetic or occluded eyes simply get no iris
            if let Ok(est) = color::locate_pupil(img, b, w) {
                color::draw_iris(&mut layer, &est);
            }
        }
    }
    let color = color::maybe_drop_color(layer, rng::derive(seed, 3));
    Ok(Conditioning { sketch, color })
}

/// Builds a training sample: random mask, sketch and color conditioning,
/// noise, and the image with the masked region removed.
pub fn assemble_sample(img: &RasterImage, seed: u64, cfg: &DatasetConfig) -> Result<TrainingSample> {
    let side = cfg.size;
    if img.width() != side || img.height() != side || img.channels() != 3 {
        return Err(invalid(alloc::format!("sample source must be a {side}x{side} RGB image")));
    }
    let (spec, mask) = mask::sample_mask_with(side, side, rng::derive(seed, 1), cfg.axis_aligned_masks, cfg.mask_size)?;
    let cond = synthesize_conditioning(img, seed, cfg)?;
    let region = if cfg.full_frame_conditioning { BinaryMask::full(side, side) } else { mask.clone() };
    let noise = noise_plane(side * side, cfg.noise, rng::derive(seed, 4));
    let input = pack_input(img, &mask, &cond, &region, &noise)?;
    TrainingSample::new(img.clone(), input, spec)
}

/// Seeded permutation of `n` items cut into full batches; the tail is dropped.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("dataset is empty"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(rng::derive(seed, epoch)));
    Ok(order.chunks_exact(batch).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn textured(side: usize, seed: u64) -> RasterImage {
        use rand::Rng as _;
        let mut r = rng::seeded(seed);
        let (cx, cy, rad) = (side as f32 * 0.45, side as f32 * 0.55, side as f32 * 0.25);
        let mut data = Vec::new();
        for y in 0..side {
            for x in 0..side {
                let inside = (x as f32 - cx).hypot(y as f32 - cy) < rad;
                let base = if inside { [0.8, 0.6, 0.5] } else { [0.2, 0.3, 0.4] };
                for v in base {
                    data.push(v + r.random_range(-0.01f32..0.01));
                }
            }
        }
        RasterImage::new(side, side, 3, data).unwrap()
    }

    fn smooth_image(w: usize, h: usize) -> RasterImage {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
                data.extend_from_slice(&[0.5 + 0.4 * (6.0 * fx).sin() * (4.0 * fy).cos(), fx, 0.3 + 0.5 * fy * fy]);
            }
        }
        RasterImage::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn canonical_input_is_a_center_crop() {
        let (src, out) = (80usize, 64usize);
        let img = smooth_image(src, src);
        let (cl, cr) = canonical_eyes(out);
        let off = (src - out) as f32 / 2.0;
        let ann = EyeAnnotation { file: "a".into(), left: cl + Point::new(off, off), right: cr + Point::new(off, off) };
        let aligned = align_and_crop(&img, &ann, out).unwrap();
        let crop = img.crop(Rect::new(8, 8, out, out)).unwrap();
        for (a, b) in aligned.data().iter().zip(crop.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn rotation_round_trip() {
        let side = 96usize;
        let img = smooth_image(side, side);
        let ann = EyeAnnotation { file: "a".into(), left: Point::new(38.0, 45.0), right: Point::new(60.0, 47.0) };
        let mid = ann.left.lerp(ann.right, 0.5);
        let (s, c) = 10f32.to_radians().sin_cos();
        // rotate the source about the eye midpoint by 10 degrees
        let rot = |p: Point| {
            let d = p - mid;
            mid + Point::new(c * d.x - s * d.y, s * d.x + c * d.y)
        };
        let inv = Similarity { src_center: mid, out_center: mid, scale: 1.0, cos: c, sin: -s };
        let fill = img.mean_color();
        let mut data = vec![0.0; side * side * 3];
        for y in 0..side {
            for x in 0..side {
                let i = (y * side + x) * 3;
                sample_bilinear(&img, inv.apply(Point::new(x as f32, y as f32)), &fill, &mut data[i..i + 3]);
            }
        }
        let rotated = RasterImage::new(side, side, 3, data).unwrap();
        let ann_r = EyeAnnotation { file: "a".into(), left: rot(ann.left), right: rot(ann.right) };
        let a = align_and_crop(&img, &ann, 48).unwrap();
        let b = align_and_crop(&rotated, &ann_r, 48).unwrap();
        let mad = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.data().len() as f32;
        assert!(mad < 0.02, "{mad}");
    }

    #[test]
    fn eyes_land_on_canonical_positions() {
        let ann = EyeAnnotation { file: "a".into(), left: Point::new(31.0, 52.5), right: Point::new(70.2, 40.0) };
        let t = eye_transform(&ann, 64).unwrap();
        let (cl, cr) = canonical_eyes(64);
        assert!(t.invert(ann.left).dist(cl) < 0.5 && t.invert(ann.right).dist(cr) < 0.5);
        assert!(t.apply(cl).dist(ann.left) < 0.5 && t.apply(cr).dist(ann.right) < 0.5);
        assert!((cl.dist(cr) - 16.0).abs() < 1e-5);
    }

    #[test]
    fn coincident_eyes_rejected() {
        let img = smooth_image(32, 32);
        let ann = EyeAnnotation { file: "a".into(), left: Point::new(10.0, 10.0), right: Point::new(10.0, 10.0) };
        assert!(align_and_crop(&img, &ann, 16).is_err());
    }

    #[test]
    fn out_of_frame_pixels_take_the_mean_color() {
        let img = smooth_image(40, 40);
        let ann = EyeAnnotation { file: "a".into(), left: Point::new(1.0, 1.0), right: Point::new(3.0, 1.0) };
        let out = align_and_crop(&img, &ann, 32).unwrap();
        let mean = img.mean_color();
        // far corner maps well outside the source
        assert!(out.pixel(0, 0).iter().zip(&mean).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn samples_are_deterministic_and_well_formed() {
        let img = textured(48, 1);
        let cfg = DatasetConfig::for_side(48);
        let a = assemble_sample(&img, 11, &cfg).unwrap();
        let b = assemble_sample(&img, 11, &cfg).unwrap();
        assert_eq!(a, b);
        let m = a.mask();
        assert!(!m.is_empty());
        for y in 0..48 {
            for x in 0..48 {
                let i = y * 48 + x;
                if m.get(x, y) {
                    for c in 0..3 {
                        assert_eq!(a.channel(CH_RGB + c)[i], 0.0);
                    }
                } else {
                    assert_eq!(a.channel(CH_SKETCH)[i], 0.0);
                    for c in 0..3 {
                        assert_eq!(a.channel(CH_COLOR + c)[i], 0.0);
                    }
                    for c in 0..3 {
                        assert_eq!(a.channel(CH_RGB + c)[i], img.get(x, y, c));
                    }
                }
            }
        }
        assert_eq!(a.target(), &img);
    }

    #[test]
    fn full_frame_conditioning_keeps_outside_sketch() {
        let img = textured(48, 2);
        let cfg = DatasetConfig { full_frame_conditioning: true, ..DatasetConfig::for_side(48) };
        let s = assemble_sample(&img, 5, &cfg).unwrap();
        let m = s.mask();
        let outside = (0..48 * 48).filter(|i| !m.get(i % 48, i / 48) && s.channel(CH_SKETCH)[*i] == 1.0).count();
        assert!(outside > 0);
    }

    #[test]
    fn noise_statistics() {
        let n = 512 * 512;
        let z = noise_plane(n, NoiseDist::Normal, 9);
        let mean = z.iter().map(|v| *v as f64).sum::<f64>() / n as f64;
        let std = (z.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 0.02 && (std - 1.0).abs() < 0.02, "{mean} {std}");
    }

    #[test]
    fn wrong_sample_side_rejected() {
        let cfg = DatasetConfig::for_side(32);
        assert!(assemble_sample(&textured(48, 0), 0, &cfg).is_err());
    }

    #[test]
    fn sample_invariants_are_checked() {
        let img = textured(4, 0);
        let mut input = vec![0.0; 9 * 16];
        input[CH_MASK * 16] = 1.0;
        input[0] = 0.5;
        let spec = MaskSpec { center: Point::new(0.0, 0.0), width: 1.0, height: 1.0, angle: 0.0 };
        assert!(TrainingSample::new(img.clone(), input.clone(), spec).is_err());
        input[0] = 0.0;
        assert!(TrainingSample::new(img.clone(), input.clone(), spec).is_ok());
        assert!(TrainingSample::new(img, input[..100].to_vec(), spec).is_err());
    }

    #[test]
    fn batches_per_epoch() {
        let b = epoch_batches(10, 4, 3, 0).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.len() == 4));
        assert!(epoch_batches(0, 4, 3, 0).is_err());
        assert!(epoch_batches(3, 0, 3, 0).is_err());
    }

    #[test]
    fn chw_round_trip() {
        let img = smooth_image(5, 3);
        assert_eq!(from_chw(&to_chw(&img), 5, 3, 3).unwrap(), img);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn epoch_is_a_permutation(n in 1usize..60, batch in 1usize..8, seed in any::<u64>(), epoch in 0u64..5) {
            let b = epoch_batches(n, batch, seed, epoch).unwrap();
            prop_assert_eq!(b.len(), n / batch);
            let mut all: Vec<usize> = b.concat();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), (n / batch) * batch);
            prop_assert!(all.iter().all(|i| *i < n));
            prop_assert_eq!(epoch_batches(n, batch, seed, epoch).unwrap(), b);
        }

        #[test]
        fn masked_rgb_never_leaks(seed in any::<u64>()) {
            let img = textured(32, seed);
            let cfg = DatasetConfig { iris: false, ..DatasetConfig::for_side(32) };
            let s = assemble_sample(&img, seed, &cfg).unwrap();
            let m = s.channel(CH_MASK);
            for c in 0..3 {
                let worst = s.channel(CH_RGB + c).iter().zip(m).filter(|(_, m)| **m == 1.0).map(|(v, _)| v.abs()).fold(0.0f32, f32::max);
                prop_assert_eq!(worst, 0.0);
            }
        }
    }
}
