//! Random rotated rectangular training masks and user mask cleanup.

#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::geom::{Point, Rect};
use crate::raster::BinaryMask;
use crate::rng;

/// Smallest image side a training mask can be sampled for.
pub const MIN_MASK_IMAGE_SIDE: usize = 32;
pub const MAX_ANGLE_DEG: f32 = 45.0;

/// Rectangle size range as fractions of the image side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSizeRange {
    pub min: f32,
    pub max: f32,
}

impl Default for MaskSizeRange {
    fn default() -> Self {
        Self { min: 0.25, max: 0.5 }
    }
}

/// Rotated rectangle in pixel coordinates (pixel centers at integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub center: Point,
    pub width: f32,
    pub height: f32,
    /// Degrees in `[0, 45]`.
    pub angle: f32,
}

impl MaskSpec {
    /// Half-open membership: in rectangle-local coordinates `(u, v)` a point
    /// is inside when `-w/2 < u <= w/2` and `-h/2 < v <= h/2`.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.angle.to_radians().sin_cos();
        let d = p - self.center;
        let u = c * d.x + s * d.y;
        let v = -s * d.x + c * d.y;
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        -hw < u && u <= hw && -hh < v && v <= hh
    }

    /// Half extents of the rotated rectangle's axis-aligned bounding box.
    pub fn half_extent(&self) -> (f32, f32) {
        let (s, c) = self.angle.to_radians().sin_cos();
        let (s, c) = (s.abs(), c.abs());
        ((self.width * c + self.height * s) / 2.0, (self.width * s + self.height * c) / 2.0)
    }

    /// Pixels whose centers fall inside the rectangle.
    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMask {
        let (ex, ey) = self.half_extent();
        let x0 = (self.center.x - ex - 1.0).floor().max(0.0) as usize;
        let y0 = (self.center.y - ey - 1.0).floor().max(0.0) as usize;
        let x1 = ((self.center.x + ex + 1.0).ceil().max(0.0) as usize).min(width);
        let y1 = ((self.center.y + ey + 1.0).ceil().max(0.0) as usize).min(height);
        let mut m = BinaryMask::empty(width, height);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.contains(Point::new(x as f32, y as f32)) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }
}

/// Samples a rectangle with sides uniform in the size range of the image
/// side, angle uniform in `[0, 45]` (or 0), and a center placing the rotated
/// rectangle fully inside the image.
pub fn sample_mask_with(width: usize, height: usize, seed: u64, axis_aligned_only: bool, size: MaskSizeRange) -> Result<(MaskSpec, BinaryMask)> {
    if width < MIN_MASK_IMAGE_SIDE || height < MIN_MASK_IMAGE_SIDE {
        return Err(invalid("mask sampling needs an image of at least 32x32"));
    }
    if !(0.0 < size.min && size.min <= size.max && size.max <= 0.7) {
        return Err(invalid("mask size fractions must satisfy 0 < min <= max <= 0.7"));
    }
    let mut r = rng::seeded(seed);
    let mw = r.random_range(size.min..=size.max) * width as f32;
    let mh = r.random_range(size.min..=size.max) * height as f32;
    let angle = if axis_aligned_only { 0.0 } else { r.random_range(0.0..=MAX_ANGLE_DEG) };
    let mut spec = MaskSpec { center: Point::new(0.0, 0.0), width: mw, height: mh, angle };
    let (ex, ey) = spec.half_extent();
    let cx = pick(&mut r, ex, width as f32 - 1.0 - ex);
    let cy = pick(&mut r, ey, height as f32 - 1.0 - ey);
    spec.center = Point::new(cx, cy);
    Ok((spec, spec.rasterize(width, height)))
}

fn pick(r: &mut rng::Rng, lo: f32, hi: f32) -> f32 {
    if hi > lo {
        r.random_range(lo..=hi)
    } else {
        (lo + hi) / 2.0
    }
}

/// [`sample_mask_with`] using the default size range.
pub fn sample_mask(width: usize, height: usize, seed: u64, axis_aligned_only: bool) -> Result<(MaskSpec, BinaryMask)> {
    sample_mask_with(width, height, seed, axis_aligned_only, MaskSizeRange::default())
}

/// 3x3 closing to remove pinholes from a hand-drawn mask.
pub fn normalize_user_mask(raw: &BinaryMask) -> Result<BinaryMask> {
    if raw.is_empty() {
        return Err(invalid("mask has no set pixels"));
    }
    Ok(raw.dilate3().erode3())
}

/// `crop x crop` box centered on the mask centroid and clamped to the image.
/// An empty mask centers the box on the image.
pub fn local_crop_box(mask: &BinaryMask, crop: usize) -> Result<Rect> {
    let (w, h) = (mask.width(), mask.height());
    if crop == 0 || crop > w || crop > h {
        return Err(invalid("crop size must be between 1 and the image side"));
    }
    let (cx, cy) = mask.centroid().unwrap_or(((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0));
    let place = |c: f64, side: usize| -> usize {
        let start = (c + 0.5 - crop as f64 / 2.0).round();
        start.clamp(0.0, (side - crop) as f64) as usize
    };
    Ok(Rect::new(place(cx, w), place(cy, h), crop, crop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn axis_aligned_membership_oracle() {
        let spec = MaskSpec { center: Point::new(32.0, 32.0), width: 16.0, height: 8.0, angle: 0.0 };
        let m = spec.rasterize(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                let expect = (25..=40).contains(&x) && (29..=36).contains(&y);
                assert_eq!(m.get(x, y), expect, "({x},{y})");
            }
        }
        assert_eq!(m.count(), 16 * 8);
    }

    #[test]
    fn rotated_square_preserves_area() {
        let spec = MaskSpec { center: Point::new(50.3, 49.1), width: 30.0, height: 30.0, angle: 45.0 };
        let n = spec.rasterize(100, 100).count() as f32;
        assert!((n / 900.0 - 1.0).abs() <= 0.02, "{n}");
    }

    #[test]
    fn angle_distribution_is_uniform() {
        let n = 10_000;
        let mut angles: Vec<f64> = (0..n).map(|s| sample_mask(64, 64, s, false).unwrap().0.angle as f64 / 45.0).collect();
        angles.sort_by(f64::total_cmp);
        let d = angles
            .iter()
            .enumerate()
            .map(|(i, a)| ((i + 1) as f64 / n as f64 - a).max(a - i as f64 / n as f64))
            .fold(0.0, f64::max);
        // asymptotic Kolmogorov critical value for p = 0.01
        assert!(d * (n as f64).sqrt() < 1.628, "D = {d}");
    }

    #[test]
    fn small_images_rejected() {
        assert!(sample_mask(31, 64, 0, false).is_err());
    }

    #[test]
    fn closing_fills_pinholes() {
        let mut raw = BinaryMask::from_fn(12, 12, |x, y| (3..8).contains(&x) && (3..8).contains(&y));
        raw.set(5, 5, false);
        let out = normalize_user_mask(&raw).unwrap();
        // oracle: a 5x5 block with the hole filled
        assert_eq!(out, BinaryMask::from_fn(12, 12, |x, y| (3..8).contains(&x) && (3..8).contains(&y)));
        let solid = BinaryMask::from_fn(12, 12, |x, y| (2..9).contains(&x) && (4..10).contains(&y));
        assert_eq!(normalize_user_mask(&solid).unwrap(), solid);
        assert!(normalize_user_mask(&BinaryMask::empty(4, 4)).is_err());
    }

    #[test]
    fn crop_box_centered_and_clamped() {
        let centered = BinaryMask::from_fn(512, 512, |x, y| (246..266).contains(&x) && (246..266).contains(&y));
        assert_eq!(local_crop_box(&centered, 256).unwrap(), Rect::new(128, 128, 256, 256));
        let corner = BinaryMask::from_fn(512, 512, |x, y| x < 10 && y > 500);
        assert_eq!(local_crop_box(&corner, 256).unwrap(), Rect::new(0, 256, 256, 256));
        assert!(local_crop_box(&corner, 513).is_err());
    }

    #[test]
    fn centroid_matches_direct_sum() {
        let m = BinaryMask::from_fn(20, 10, |x, y| (x * 7 + y * 3) % 5 == 0);
        let pts: Vec<(f64, f64)> = (0..10).flat_map(|y| (0..20).map(move |x| (x as f64, y as f64))).filter(|(x, y)| m.get(*x as usize, *y as usize)).collect();
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (cx, cy) = m.centroid().unwrap();
        assert!((cx - sx / pts.len() as f64).abs() < 1e-12 && (cy - sy / pts.len() as f64).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn axis_aligned_flag_forces_zero_angle(seed in any::<u64>(), w in 32usize..200, h in 32usize..200) {
            let (spec, _) = sample_mask(w, h, seed, true).unwrap();
            prop_assert_eq!(spec.angle, 0.0);
        }

        #[test]
        // discretization error of the area ratio shrinks with the side; 32 px sides keep it under 10%
        fn sampled_masks_are_valid(seed in any::<u64>(), w in 128usize..256, h in 128usize..256) {
            let (spec, m) = sample_mask(w, h, seed, false).unwrap();
            prop_assert!((0.0..=45.0).contains(&spec.angle));
            prop_assert!(spec.width >= 0.25 * w as f32 - 1e-3 && spec.width <= 0.5 * w as f32 + 1e-3);
            prop_assert!(spec.height >= 0.25 * h as f32 - 1e-3 && spec.height <= 0.5 * h as f32 + 1e-3);
            let ratio = m.count() as f32 / (spec.width * spec.height);
            prop_assert!((0.9..=1.1).contains(&ratio), "ratio {}", ratio);
            prop_assert_eq!(sample_mask(w, h, seed, false).unwrap(), (spec, m));
        }

        #[test]
        fn crop_box_inside_image(w in 16usize..300, h in 16usize..300, px in 0usize..300, py in 0usize..300, crop in 1usize..16) {
            let m = BinaryMask::from_fn(w, h, |x, y| x == px % w && y == py % h);
            let b = local_crop_box(&m, crop).unwrap();
            prop_assert!(b.fits(w, h));
            prop_assert_eq!((b.w, b.h), (crop, crop));
        }
    }
}
