//! Procedural toy portraits for desk-scale experiments: a face ellipse with
//! hair, two eyes near the canonical aligned positions, and a mouth.

use alloc::vec::Vec;
use rand::Rng as _;

use crate::dataset::canonical_eyes;
use crate::error::{invalid, Result};
use crate::geom::Point;
use crate::raster::RasterImage;
use crate::rng;

struct Ellipse {
    c: Point,
    rx: f32,
    ry: f32,
    color: [f32; 3],
}

impl Ellipse {
    fn contains(&self, x: f32, y: f32) -> bool {
        let u = (x - self.c.x) / self.rx;
        let v = (y - self.c.y) / self.ry;
        u * u + v * v <= 1.0
    }
}

fn color(r: &mut rng::Rng, lo: f32, hi: f32) -> [f32; 3] {
    [r.random_range(lo..hi), r.random_range(lo..hi), r.random_range(lo..hi)]
}

/// Seeded square RGB portrait of side `side` (at least 16). Painted with
/// 4x4 supersampling, back to front.
pub fn toy_portrait(side: usize, seed: u64) -> Result<RasterImage> {
    if side < 16 {
        return Err(invalid("toy portraits need a side of at least 16"));
    }
    let mut r = rng::seeded(seed);
    let s = side as f32;
    let jit = |r: &mut rng::Rng, a: f32| r.random_range(-a..=a) * s;
    let (le, re) = canonical_eyes(side);
    let mid = (le + re) * 0.5;
    let skin = {
        let t = r.random_range(0.0..1.0f32);
        [0.45 + 0.45 * t, 0.3 + 0.4 * t, 0.2 + 0.35 * t]
    };
    let face = Ellipse { c: Point::new(mid.x + jit(&mut r, 0.02), mid.y + 0.08 * s + jit(&mut r, 0.02)), rx: s * r.random_range(0.27..0.33), ry: s * r.random_range(0.34..0.40), color: skin };
    let hair = Ellipse { c: Point::new(face.c.x, face.c.y - 0.12 * s), rx: face.rx * 1.12, ry: face.ry * 0.95, color: color(&mut r, 0.05, 0.55) };
    let sclera = [0.92, 0.92, 0.9];
    let iris_color = color(&mut r, 0.05, 0.45);
    let eye_r = s * r.random_range(0.045..0.06);
    let iris_r = eye_r * 0.55;
    let mut shapes = Vec::new();
    shapes.push(hair);
    shapes.push(face);
    for e in [le, re] {
        let c = Point::new(e.x + jit(&mut r, 0.01), e.y + jit(&mut r, 0.01));
        shapes.push(Ellipse { c, rx: eye_r * 1.5, ry: eye_r, color: sclera });
        shapes.push(Ellipse { c, rx: iris_r, ry: iris_r, color: iris_color });
    }
    shapes.push(Ellipse {
        c: Point::new(mid.x + jit(&mut r, 0.02), mid.y + 0.24 * s + jit(&mut r, 0.02)),
        rx: s * r.random_range(0.07..0.12),
        ry: s * r.random_range(0.02..0.04),
        color: [r.random_range(0.5..0.8), 0.15, 0.2],
    });
    let top = color(&mut r, 0.3, 0.95);
    let bottom = color(&mut r, 0.3, 0.95);

    const SS: usize = 4;
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let mut acc = [0.0f32; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f32 - 0.5 + (sx as f32 + 0.5) / SS as f32;
                    let py = y as f32 - 0.5 + (sy as f32 + 0.5) / SS as f32;
                    let t = py / s;
                    let mut c = [top[0] + (bottom[0] - top[0]) * t, top[1] + (bottom[1] - top[1]) * t, top[2] + (bottom[2] - top[2]) * t];
                    for e in &shapes {
                        if e.contains(px, py) {
                            c = e.color;
                        }
                    }
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            data.extend(acc.iter().map(|v| v / (SS * SS) as f32));
        }
    }
    RasterImage::new(side, side, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let a = toy_portrait(64, 3).unwrap();
        assert_eq!(a, toy_portrait(64, 3).unwrap());
        assert_ne!(a, toy_portrait(64, 4).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(toy_portrait(8, 0).is_err());
    }

    #[test]
    fn pupils_are_dark_near_canonical_eyes() {
        let img = toy_portrait(64, 9).unwrap();
        let (le, _) = canonical_eyes(64);
        let p = img.pixel(le.x.round() as usize, le.y.round() as usize);
        assert!(p.iter().all(|v| *v < 0.5));
    }
}
