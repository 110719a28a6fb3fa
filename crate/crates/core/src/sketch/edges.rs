#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::raster::RasterImage;

/// Per-pixel edge strength in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    strength: Vec<f32>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, strength: Vec<f32>) -> Result<Self> {
        if strength.len() != width * height {
            return Err(invalid("edge map length does not match its dimensions"));
        }
        if strength.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("edge strength outside [0, 1]"));
        }
        Ok(Self { width, height, strength })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn strength(&self) -> &[f32] {
        &self.strength
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.strength[y * self.width + x]
    }
}

/// Edge detector and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeDetector {
    /// Gradient magnitude of a Gaussian-smoothed image; a step of height
    /// `contrast` maps to strength `1 - 1/e`.
    Sobel { sigma: f32, contrast: f32 },
    /// Sobel magnitude with non-maximum suppression and hysteresis; output is
    /// binary. Thresholds are on the normalized Sobel strength.
    Canny { sigma: f32, contrast: f32, low: f32, high: f32 },
    /// Extended difference of Gaussians, strength = 1 - XDoG response.
    Xdog { sigma: f32, k: f32, tau: f32, epsilon: f32, phi: f32 },
}

impl Default for EdgeDetector {
    fn default() -> Self {
        EdgeDetector::Sobel { sigma: 1.0, contrast: 0.2 }
    }
}

impl EdgeDetector {
    /// Detector with default parameters from its id: `sobel`, `canny` or `xdog`.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "sobel" => Ok(Self::default()),
            "canny" => Ok(EdgeDetector::Canny { sigma: 1.0, contrast: 0.2, low: 0.2, high: 0.5 }),
            "xdog" => Ok(EdgeDetector::Xdog { sigma: 0.8, k: 1.6, tau: 0.98, epsilon: 0.0, phi: 200.0 }),
            other => Err(invalid(alloc::format!("unknown edge detector `{other}`"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            EdgeDetector::Sobel { .. } => "sobel",
            EdgeDetector::Canny { .. } => "canny",
            EdgeDetector::Xdog { .. } => "xdog",
        }
    }
}

/// Separable Gaussian blur of a single plane with clamp-to-edge borders.
pub fn gaussian_blur(plane: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f32> = (-r..=r).map(|i| (-((i * i) as f32) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + clampi(x as isize + i as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[clampi(y as isize + i as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Sobel gradient (divided by 8, so a unit ramp gives 1) with clamped borders.
fn sobel(plane: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |x: isize, y: isize| plane[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = ((at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1)))
                / 8.0;
            gy[i] = ((at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1)))
                / 8.0;
        }
    }
    (gx, gy)
}

/// Gradient magnitude mapped to `[0, 1)` by `1 - exp(-m / m_ref)`, where `m_ref`
/// is the peak response to an ideal step of height `contrast` after smoothing
/// with `sigma`. The soft saturation keeps strong edges ordered by strength.
fn magnitude(gray: &[f32], w: usize, h: usize, sigma: f32, contrast: f32) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let blurred = gaussian_blur(gray, w, h, sigma);
    let (gx, gy) = sobel(&blurred, w, h);
    let peak = if sigma > 0.0 { contrast / (sigma * (2.0 * core::f32::consts::PI).sqrt()) } else { contrast / 2.0 };
    let mag = gx.iter().zip(&gy).map(|(a, b)| 1.0 - (-(a * a + b * b).sqrt() / peak).exp()).collect();
    (mag, gx, gy)
}

fn canny(mag: &[f32], gx: &[f32], gy: &[f32], w: usize, h: usize, low: f32, high: f32) -> Vec<f32> {
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            // ties resolved toward the lower index so plateaus keep one pixel
            if m > at(xi - dx, yi - dy) && m >= at(xi + dx, yi + dy) {
                thin[i] = m;
            }
        }
    }
    let mut out = vec![0.0f32; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|i| thin[*i] >= high).collect();
    for i in &stack {
        out[*i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] >= low {
                    out[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    out
}

fn xdog(gray: &[f32], w: usize, h: usize, sigma: f32, k: f32, tau: f32, epsilon: f32, phi: f32) -> Vec<f32> {
    let g1 = gaussian_blur(gray, w, h, sigma);
    let g2 = gaussian_blur(gray, w, h, sigma * k);
    g1.iter()
        .zip(&g2)
        .map(|(a, b)| {
            let d = a - tau * b;
            let e = if d >= epsilon { 1.0 } else { 1.0 + (phi * (d - epsilon)).tanh() };
            (1.0 - e).clamp(0.0, 1.0)
        })
        .collect()
}

/// Runs `detector` on the luma of `img`.
pub fn detect_edges(img: &RasterImage, detector: &EdgeDetector) -> Result<EdgeMap> {
    let gray = img.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let plane = gray.data();
    let strength = match *detector {
        EdgeDetector::Sobel { sigma, contrast } => {
            check_positive(contrast, "contrast")?;
            magnitude(plane, w, h, sigma, contrast).0
        }
        EdgeDetector::Canny { sigma, contrast, low, high } => {
            check_positive(contrast, "contrast")?;
            if !(0.0 < low && low <= high && high <= 1.0) {
                return Err(invalid("canny thresholds must satisfy 0 < low <= high <= 1"));
            }
            let (mag, gx, gy) = magnitude(plane, w, h, sigma, contrast);
            canny(&mag, &gx, &gy, w, h, low, high)
        }
        EdgeDetector::Xdog { sigma, k, tau, epsilon, phi } => {
            check_positive(sigma, "sigma")?;
            check_positive(k, "k")?;
            xdog(plane, w, h, sigma, k, tau, epsilon, phi)
        }
    };
    EdgeMap::new(w, h, strength)
}

fn check_positive(v: f32, name: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(alloc::format!("{name} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: usize, cx: f32, cy: f32, r: f32) -> RasterImage {
        let mut data = vec![1.0; size * size];
        for y in 0..size {
            for x in 0..size {
                if ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt() <= r {
                    data[y * size + x] = 0.0;
                }
            }
        }
        RasterImage::new(size, size, 1, data).unwrap()
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = RasterImage::filled(16, 12, &[0.3, 0.6, 0.2]).unwrap();
        for id in ["sobel", "canny", "xdog"] {
            let e = detect_edges(&img, &EdgeDetector::from_id(id).unwrap()).unwrap();
            assert!(e.strength().iter().all(|v| *v == 0.0), "{id}");
        }
    }

    #[test]
    fn unknown_detector_rejected() {
        assert!(EdgeDetector::from_id("hed").is_err());
    }

    #[test]
    fn step_edge_peaks_at_the_step() {
        let (w, h, c) = (32, 8, 13);
        let data = (0..w * h).map(|i| if i % w >= c { 1.0 } else { 0.0 }).collect();
        let img = RasterImage::new(w, h, 1, data).unwrap();
        for id in ["sobel", "canny"] {
            let e = detect_edges(&img, &EdgeDetector::from_id(id).unwrap()).unwrap();
            let row = &e.strength()[4 * w..5 * w];
            let best = (0..w).fold(0, |b, x| if row[x] > row[b] { x } else { b });
            assert!((best as isize - c as isize).abs() <= 1, "{id}: {best}");
        }
    }

    #[test]
    fn disk_boundary_is_strong() {
        let (size, cx, cy, r) = (64, 31.3, 32.2, 18.0);
        let img = disk(size, cx, cy, r);
        let e = detect_edges(&img, &EdgeDetector::default()).unwrap();
        // boundary pixels: those whose cell straddles the analytic circle
        let mut total = 0;
        let mut strong = 0;
        for y in 0..size {
            for x in 0..size {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                if (d - r).abs() <= 0.5 {
                    total += 1;
                    strong += (e.get(x, y) > 0.5) as usize;
                }
            }
        }
        assert!(total > 100);
        assert!(strong as f32 >= 0.95 * total as f32, "{strong}/{total}");
    }

    #[test]
    fn sobel_is_invariant_to_offset() {
        let a = disk(24, 12.0, 11.0, 6.0);
        let shifted: Vec<f32> = a.data().iter().map(|v| v * 0.5 + 0.25).collect();
        let half: Vec<f32> = a.data().iter().map(|v| v * 0.5).collect();
        let ea = detect_edges(&RasterImage::new(24, 24, 1, shifted).unwrap(), &EdgeDetector::default()).unwrap();
        let eb = detect_edges(&RasterImage::new(24, 24, 1, half).unwrap(), &EdgeDetector::default()).unwrap();
        for (x, y) in ea.strength().iter().zip(eb.strength()) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}
