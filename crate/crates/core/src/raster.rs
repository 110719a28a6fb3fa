//! Raster containers and the deterministic filters used throughout the
//! pipeline. All filters clamp to the border (edge replication).

#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::geom::Rect;

/// Row-major, channel-interleaved float image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be non-zero"));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid("image must have 1 or 3 channels"));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape {
                context: "raster data length",
                left: vec![data.len()],
                right: vec![width * height * channels],
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(alloc::format!("sample {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds an image, clamping every sample into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = clamp01(*v);
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, pixel: &[f32]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * pixel.len());
        for _ in 0..width * height {
            data.extend_from_slice(pixel);
        }
        Self::new(width, height, pixel.len(), data)
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let ch = self.channels;
        self.data[(y * self.width + x) * ch + c] = clamp01(v);
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Sample with clamp-to-edge addressing.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f32 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xi, yi, c)
    }

    /// Luma (Rec. 601 weights) for RGB, identity for gray.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| clamp01(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]))
            .collect();
        RasterImage { width: self.width, height: self.height, channels: 1, data }
    }

    /// Per-channel mean over all pixels.
    pub fn mean_color(&self) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.channels];
        for p in self.data.chunks_exact(self.channels) {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += *v as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        acc.into_iter().map(|a| (a / n) as f32).collect()
    }

    pub fn crop(&self, r: Rect) -> Result<RasterImage> {
        if !r.fits(self.width, self.height) || r.w == 0 || r.h == 0 {
            return Err(invalid("crop rectangle outside image"));
        }
        let mut data = Vec::with_capacity(r.w * r.h * self.channels);
        for y in r.y0..r.y1() {
            let row = (y * self.width + r.x0) * self.channels;
            data.extend_from_slice(&self.data[row..row + r.w * self.channels]);
        }
        Ok(RasterImage { width: r.w, height: r.h, channels: self.channels, data })
    }
}

#[inline]
pub fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// One boolean per pixel, `true` marks the editable region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape {
                context: "mask bit count",
                left: vec![bits.len()],
                right: vec![width * height],
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Single-channel image to mask: a pixel is set when its 8-bit value exceeds 127.
    pub fn from_image(img: &RasterImage) -> Self {
        let g = img.to_gray();
        let bits = g.data.iter().map(|v| (v * 255.0).round() > 127.0).collect();
        Self { width: img.width, height: img.height, bits }
    }

    pub fn to_image(&self) -> RasterImage {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        RasterImage { width: self.width, height: self.height, channels: 1, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Sets the pixel if `(x, y)` lies inside; returns whether it did.
    pub fn set_checked(&mut self, x: isize, y: isize, v: bool) -> bool {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, v);
            true
        } else {
            false
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn same_dims(&self, w: usize, h: usize) -> bool {
        self.width == w && self.height == h
    }

    /// Mean of the coordinates of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect();
        BinaryMask { width: self.width, height: self.height, bits }
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        BinaryMask { width: self.width, height: self.height, bits }
    }

    /// 3x3 square dilation with edge replication.
    pub fn dilate3(&self) -> BinaryMask {
        self.morph3(true)
    }

    /// 3x3 square erosion with edge replication.
    pub fn erode3(&self) -> BinaryMask {
        self.morph3(false)
    }

    fn morph3(&self, dilate: bool) -> BinaryMask {
        let (w, h) = (self.width as isize, self.height as isize);
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            let mut hit = !dilate;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let sx = (x as isize + dx).clamp(0, w - 1) as usize;
                    let sy = (y as isize + dy).clamp(0, h - 1) as usize;
                    let b = self.get(sx, sy);
                    if dilate && b {
                        hit = true;
                    }
                    if !dilate && !b {
                        hit = false;
                    }
                }
            }
            hit
        })
    }

    /// Dilation by a Euclidean disk of the given radius (zero outside the frame).
    pub fn dilate_disk(&self, radius: f32) -> BinaryMask {
        let r = radius.ceil() as isize;
        let r2 = radius * radius;
        let mut out = BinaryMask::empty(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        if (dx * dx + dy * dy) as f32 <= r2 {
                            out.set_checked(x as isize + dx, y as isize + dy, true);
                        }
                    }
                }
            }
        }
        out
    }

    /// Shifts every set bit by `(dx, dy)`; bits leaving the frame are dropped.
    pub fn translated(&self, dx: isize, dy: isize) -> BinaryMask {
        let mut out = BinaryMask::empty(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set_checked(x as isize + dx, y as isize + dy, true);
                }
            }
        }
        out
    }

    /// Intersection over union; two empty masks count as identical.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Per-channel median of each `kernel x kernel` window.
pub fn median_filter(img: &RasterImage, kernel: usize) -> Result<RasterImage> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(invalid(alloc::format!("median kernel must be odd and >= 1, got {kernel}")));
    }
    let r = (kernel / 2) as isize;
    let mut out = img.clone();
    let mut window = Vec::with_capacity(kernel * kernel);
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                window.clear();
                for dy in -r..=r {
                    for dx in -r..=r {
                        window.push(img.get_clamped(x as isize + dx, y as isize + dy, c));
                    }
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
                out.data[(y * img.width + x) * img.channels + c] = *m;
            }
        }
    }
    Ok(out)
}

/// Iterated bilateral filter.
///
/// `sigma_range` is in 8-bit intensity units: color differences are measured
/// as the Euclidean distance between pixels rescaled to `0..=255`. The
/// spatial window extends `ceil(3 * sigma_domain)` pixels in each direction.
pub fn bilateral_filter(
    img: &RasterImage,
    sigma_range: f32,
    sigma_domain: f32,
    iterations: usize,
) -> Result<RasterImage> {
    if !(sigma_range > 0.0) || !(sigma_domain > 0.0) {
        return Err(invalid("bilateral sigmas must be positive"));
    }
    if iterations == 0 {
        return Err(invalid("bilateral iterations must be >= 1"));
    }
    let radius = bilateral_radius(sigma_domain);
    let side = 2 * radius + 1;
    let sd2 = 2.0 * (sigma_domain as f64) * (sigma_domain as f64);
    let sr2 = 2.0 * (sigma_range as f64) * (sigma_range as f64);
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -(radius as isize)..=radius as isize {
        for dx in -(radius as isize)..=radius as isize {
            spatial.push((-((dx * dx + dy * dy) as f64) / sd2).exp());
        }
    }

    let (w, h, ch) = (img.width as isize, img.height as isize, img.channels);
    let mut cur = img.clone();
    let mut next = img.clone();
    let mut acc = [0.0f64; 3];
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let center = cur.pixel(x as usize, y as usize);
                acc[..ch].fill(0.0);
                let mut wsum = 0.0f64;
                let mut k = 0;
                for dy in -(radius as isize)..=radius as isize {
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    for dx in -(radius as isize)..=radius as isize {
                        let sx = (x + dx).clamp(0, w - 1) as usize;
                        let p = cur.pixel(sx, sy);
                        let mut d2 = 0.0f64;
                        for c in 0..ch {
                            let d = 255.0 * (p[c] as f64 - center[c] as f64);
                            d2 += d * d;
                        }
                        let wt = spatial[k] * (-d2 / sr2).exp();
                        k += 1;
                        wsum += wt;
                        for c in 0..ch {
                            acc[c] += wt * p[c] as f64;
                        }
                    }
                }
                let base = (y as usize * img.width + x as usize) * ch;
                for c in 0..ch {
                    next.data[base + c] = clamp01((acc[c] / wsum) as f32);
                }
            }
        }
        core::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

pub fn bilateral_radius(sigma_domain: f32) -> usize {
    (3.0 * sigma_domain).ceil().max(1.0) as usize
}

/// Bilinear resampling with half-pixel centers and clamped borders.
pub fn resize(img: &RasterImage, w: usize, h: usize) -> Result<RasterImage> {
    if w == 0 || h == 0 {
        return Err(invalid("resize target must be non-zero"));
    }
    let sx = img.width as f32 / w as f32;
    let sy = img.height as f32 / h as f32;
    let ch = img.channels;
    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f32;
        for x in 0..w {
            let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f32;
            for c in 0..ch {
                let top = img.get(x0, y0, c) * (1.0 - tx) + img.get(x1, y0, c) * tx;
                let bot = img.get(x0, y1, c) * (1.0 - tx) + img.get(x1, y1, c) * tx;
                data.push(clamp01(top * (1.0 - ty) + bot * ty));
            }
        }
    }
    Ok(RasterImage { width: w, height: h, channels: ch, data })
}

/// Nearest-neighbor resampling (pixel values are copied, never blended).
pub fn resize_nearest(img: &RasterImage, w: usize, h: usize) -> Result<RasterImage> {
    if w == 0 || h == 0 {
        return Err(invalid("resize target must be non-zero"));
    }
    let ch = img.channels;
    let mut data = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        let sy = ((y * img.height) / h).min(img.height - 1);
        for x in 0..w {
            let sx = ((x * img.width) / w).min(img.width - 1);
            data.extend_from_slice(img.pixel(sx, sy));
        }
    }
    Ok(RasterImage { width: w, height: h, channels: ch, data })
}

pub fn resize_mask_nearest(mask: &BinaryMask, w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let sx = ((x * mask.width) / w).min(mask.width - 1);
        let sy = ((y * mask.height) / h).min(mask.height - 1);
        mask.get(sx, sy)
    })
}

/// `generated` inside the mask, `original` elsewhere (bit-exact).
pub fn composite(original: &RasterImage, generated: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    if !original.same_dims(generated) || !mask.same_dims(original.width, original.height) {
        return Err(Error::Shape {
            context: "composite operands",
            left: vec![original.width, original.height, original.channels],
            right: vec![generated.width, generated.height, generated.channels, mask.width, mask.height],
        });
    }
    let ch = original.channels;
    let mut out = original.clone();
    for (i, &m) in mask.bits.iter().enumerate() {
        if m {
            out.data[i * ch..(i + 1) * ch].copy_from_slice(&generated.data[i * ch..(i + 1) * ch]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, data: &[f32]) -> RasterImage {
        RasterImage::new(w, h, 1, data.to_vec()).unwrap()
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(RasterImage::new(1, 1, 1, vec![1.5]).is_err());
        assert!(RasterImage::new(1, 1, 2, vec![0.0, 0.0]).is_err());
        assert!(RasterImage::new(2, 1, 1, vec![0.0]).is_err());
    }

    #[test]
    fn median_kernel_one_is_identity() {
        let img = gray(3, 2, &[0.1, 0.9, 0.3, 0.4, 0.5, 0.2]);
        assert_eq!(median_filter(&img, 1).unwrap(), img);
    }

    #[test]
    fn median_even_kernel_rejected() {
        let img = gray(2, 2, &[0.0; 4]);
        assert!(matches!(median_filter(&img, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn median_removes_center_outlier() {
        let img = gray(3, 3, &[0.2, 0.3, 0.2, 0.25, 1.0, 0.3, 0.2, 0.25, 0.2]);
        let out = median_filter(&img, 3).unwrap();
        // Brute force: sort the full 3x3 window of the center.
        let mut w: Vec<f32> = img.data().to_vec();
        w.sort_by(f32::total_cmp);
        assert_eq!(out.get(1, 1, 0), w[4]);
        assert_eq!(out.get(1, 1, 0), 0.25);
    }

    #[test]
    fn median_constant_invariant() {
        let img = RasterImage::filled(5, 4, &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(median_filter(&img, 3).unwrap(), img);
    }

    #[test]
    fn bilateral_constant_unchanged() {
        let img = RasterImage::filled(9, 7, &[0.3, 0.6, 0.1]).unwrap();
        let out = bilateral_filter(&img, 25.0, 2.0, 3).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn bilateral_rejects_bad_sigma() {
        let img = gray(2, 2, &[0.0; 4]);
        assert!(bilateral_filter(&img, 0.0, 1.0, 1).is_err());
        assert!(bilateral_filter(&img, 1.0, -1.0, 1).is_err());
    }

    #[test]
    fn bilateral_iterations_compose() {
        let data: Vec<f32> = (0..64).map(|i| ((i * 37) % 64) as f32 / 63.0).collect();
        let img = gray(8, 8, &data);
        let twice = bilateral_filter(&img, 25.0, 1.5, 2).unwrap();
        let once = bilateral_filter(&img, 25.0, 1.5, 1).unwrap();
        let again = bilateral_filter(&once, 25.0, 1.5, 1).unwrap();
        assert_eq!(twice, again);
    }

    #[test]
    fn resize_identity() {
        let data: Vec<f32> = (0..12).map(|i| i as f32 / 11.0).collect();
        let img = gray(4, 3, &data);
        let out = resize(&img, 4, 3).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_checkerboard_to_single_pixel() {
        let img = gray(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let out = resize(&img, 1, 1).unwrap();
        assert!((out.get(0, 0, 0) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn resize_ramp_matches_bilinear_formula() {
        // 4x4 horizontal ramp v = x / 3; 2x2 output samples source x at 0.5 and 2.5.
        let data: Vec<f32> = (0..16).map(|i| (i % 4) as f32 / 3.0).collect();
        let out = resize(&gray(4, 4, &data), 2, 2).unwrap();
        let expect = [0.5 / 3.0, 2.5 / 3.0];
        for y in 0..2 {
            for x in 0..2 {
                assert!((out.get(x, y, 0) - expect[x]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resize_zero_rejected() {
        assert!(resize(&gray(1, 1, &[0.0]), 0, 1).is_err());
    }

    #[test]
    fn composite_masks() {
        let a = RasterImage::filled(4, 2, &[0.1, 0.2, 0.3]).unwrap();
        let b = RasterImage::filled(4, 2, &[0.9, 0.8, 0.7]).unwrap();
        assert_eq!(composite(&a, &b, &BinaryMask::empty(4, 2)).unwrap(), a);
        assert_eq!(composite(&a, &b, &BinaryMask::full(4, 2)).unwrap(), b);
        let half = BinaryMask::from_fn(4, 2, |x, _| x < 2);
        let out = composite(&a, &b, &half).unwrap();
        for y in 0..2 {
            for x in 0..4 {
                let src = if x < 2 { &b } else { &a };
                assert_eq!(out.pixel(x, y), src.pixel(x, y));
            }
        }
        assert!(composite(&a, &b, &BinaryMask::empty(3, 2)).is_err());
    }

    #[test]
    fn mask_closing_helpers() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        assert_eq!(m.dilate3().count(), 9);
        assert_eq!(m.dilate3().erode3(), m);
        assert_eq!(m.centroid(), Some((2.0, 2.0)));
    }

    proptest! {
        #[test]
        fn filters_keep_range_and_determinism(data in proptest::collection::vec(0.0f32..=1.0, 36)) {
            let img = RasterImage::new(4, 3, 3, data).unwrap();
            let m1 = median_filter(&img, 3).unwrap();
            let b1 = bilateral_filter(&img, 25.0, 1.0, 2).unwrap();
            prop_assert!(m1.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(b1.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(&m1, &median_filter(&img, 3).unwrap());
            prop_assert_eq!(&b1, &bilateral_filter(&img, 25.0, 1.0, 2).unwrap());
        }

        #[test]
        fn composite_exact_outside_mask(
            a in proptest::collection::vec(0.0f32..=1.0, 18),
            b in proptest::collection::vec(0.0f32..=1.0, 18),
            bits in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let x = RasterImage::new(3, 2, 3, a).unwrap();
            let g = RasterImage::new(3, 2, 3, b).unwrap();
            let m = BinaryMask::new(3, 2, bits).unwrap();
            let out = composite(&x, &g, &m).unwrap();
            for yy in 0..2 { for xx in 0..3 {
                if !m.get(xx, yy) { prop_assert_eq!(out.pixel(xx, yy), x.pixel(xx, yy)); }
            }}
        }
    }
}
