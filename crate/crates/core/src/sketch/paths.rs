#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::fit::{CubicBezier, SplinePath};
use crate::error::{invalid, Result};
use crate::geom::Point;
use crate::raster::BinaryMask;

/// Area of the control-point bounding box, counting pixels inclusively so
/// that axis-aligned strokes have a non-zero area.
pub fn bbox_area(path: &SplinePath) -> f32 {
    match path.control_bounds() {
        Some((lo, hi)) => (hi.x - lo.x + 1.0) * (hi.y - lo.y + 1.0),
        None => 0.0,
    }
}

/// Drops paths whose bounding-box area is below `min_bbox_area`, keeping order.
pub fn prune_small(paths: Vec<SplinePath>, min_bbox_area: f32) -> Vec<SplinePath> {
    paths.into_iter().filter(|p| bbox_area(p) >= min_bbox_area).collect()
}

/// Arc-length lookup over a densely sampled path.
struct ArcTable {
    points: Vec<Point>,
    cumulative: Vec<f32>,
    joint_s: Vec<f32>,
}

impl ArcTable {
    fn new(path: &SplinePath) -> Self {
        let mut points = Vec::new();
        let mut cumulative = Vec::new();
        let mut joint_s = Vec::with_capacity(path.segments.len() + 1);
        for (i, seg) in path.segments.iter().enumerate() {
            let samples = seg.sample(0.25);
            let start = if i == 0 { 0 } else { 1 };
            if i == 0 {
                joint_s.push(0.0);
            }
            for p in &samples[start..] {
                let s = match (points.last(), cumulative.last()) {
                    (Some(prev), Some(c)) => c + p.dist(*prev),
                    _ => 0.0,
                };
                points.push(*p);
                cumulative.push(s);
            }
            joint_s.push(*cumulative.last().expect("segment has samples"));
        }
        Self { points, cumulative, joint_s }
    }

    fn total(&self) -> f32 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn at(&self, s: f32) -> Point {
        let c = &self.cumulative;
        let i = c.partition_point(|v| *v < s);
        if i == 0 {
            return self.points[0];
        }
        if i >= c.len() {
            return self.points[c.len() - 1];
        }
        let span = c[i] - c[i - 1];
        let t = if span > 0.0 { (s - c[i - 1]) / span } else { 0.0 };
        self.points[i - 1].lerp(self.points[i], t)
    }
}

/// Moves every on-curve point toward the average of itself and the two path
/// points at arc-length distance `radius` on either side, `iterations` times.
/// Handles travel with their joint and are re-aligned so the tangent stays
/// continuous. Open paths keep their end points.
pub fn smooth_controls(path: &SplinePath, iterations: usize, radius: f32) -> SplinePath {
    let mut out = path.clone();
    for _ in 0..iterations {
        let table = ArcTable::new(&out);
        let total = table.total();
        if total <= 0.0 || out.segments.is_empty() {
            break;
        }
        let old = out.joints();
        let m = old.len();
        let mut new = old.clone();
        for j in 0..m {
            let s = table.joint_s[j];
            let (a, b) = if out.closed {
                if j == m - 1 {
                    continue;
                }
                let wrap = |v: f32| v - total * (v / total).floor();
                (table.at(wrap(s - radius)), table.at(wrap(s + radius)))
            } else {
                if j == 0 || j == m - 1 {
                    continue;
                }
                let r = radius.min(s).min(total - s);
                (table.at(s - r), table.at(s + r))
            };
            new[j] = (old[j] + a + b) * (1.0 / 3.0);
        }
        if out.closed {
            new[m - 1] = new[0];
        }
        for (k, seg) in out.segments.iter_mut().enumerate() {
            let d0 = new[k] - old[k];
            let d1 = new[k + 1] - old[k + 1];
            *seg = CubicBezier::new(new[k], seg.p[1] + d0, seg.p[2] + d1, new[k + 1]);
        }
        realign_handles(&mut out);
    }
    out
}

fn realign_handles(path: &mut SplinePath) {
    let n = path.segments.len();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|k| (k - 1, k)).collect();
    if path.closed && n > 1 {
        pairs.push((n - 1, 0));
    }
    for (a, b) in pairs {
        let joint = path.segments[b].p[0];
        let h_in = path.segments[a].p[2] - joint;
        let h_out = path.segments[b].p[1] - joint;
        let dir = (h_out - h_in).normalized();
        if dir.norm() == 0.0 {
            continue;
        }
        path.segments[a].p[2] = joint - dir * h_in.norm();
        path.segments[b].p[1] = joint + dir * h_out.norm();
    }
}

fn stamp(mask: &mut BinaryMask, q: Point, half: f32) {
    mask.set_checked(q.x.round() as isize, q.y.round() as isize, true);
    let (x0, x1) = ((q.x - half).ceil() as isize, (q.x + half).floor() as isize);
    let (y0, y1) = ((q.y - half).ceil() as isize, (q.y + half).floor() as isize);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if Point::new(x as f32, y as f32).dist(q) <= half {
                mask.set_checked(x, y, true);
            }
        }
    }
}

/// Binary strokes of width `stroke_width` along every path: each curve is
/// sampled at most a quarter pixel apart, and each sample sets its own pixel
/// plus every pixel whose center is within half the width.
pub fn rasterize(paths: &[SplinePath], width: usize, height: usize, stroke_width: f32) -> Result<BinaryMask> {
    if !(stroke_width >= 1.0) {
        return Err(invalid("stroke width must be at least 1"));
    }
    let mut mask = BinaryMask::empty(width, height);
    let half = stroke_width / 2.0;
    for path in paths {
        for seg in &path.segments {
            for q in seg.sample(0.25) {
                stamp(&mut mask, q, half);
            }
        }
    }
    Ok(mask)
}

/// Sum of absolute turning angles of the polyline through `points`.
pub fn turning(points: &[Point]) -> f32 {
    points
        .windows(3)
        .map(|w| {
            let (a, b) = (w[1] - w[0], w[2] - w[1]);
            let cross = a.x * b.y - a.y * b.x;
            cross.atan2(a.dot(b)).abs()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::fit::nearest_distance;

    fn polyline_path(pts: &[Point], closed: bool) -> SplinePath {
        SplinePath { segments: pts.windows(2).map(|w| CubicBezier::line(w[0], w[1])).collect(), closed }
    }

    fn square(x: f32, y: f32, side: f32) -> SplinePath {
        let p = [Point::new(x, y), Point::new(x + side, y), Point::new(x + side, y + side), Point::new(x, y + side), Point::new(x, y)];
        polyline_path(&p, true)
    }

    #[test]
    fn prune_keeps_large_paths() {
        let big = square(0.0, 0.0, 100.0);
        let small = square(50.0, 50.0, 3.0);
        assert_eq!(prune_small(alloc::vec![big.clone(), small.clone()], 25.0), alloc::vec![big.clone()]);
        assert_eq!(prune_small(alloc::vec![small.clone(), big.clone()], 0.0), alloc::vec![small, big]);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let p = square(3.0, 4.0, 10.0);
        assert_eq!(smooth_controls(&p, 0, 2.0), p);
    }

    #[test]
    fn collinear_path_is_a_fixed_point() {
        let pts: Vec<Point> = [0.0, 3.0, 4.0, 9.0, 15.0].iter().map(|t| Point::new(1.0 + t, 2.0 + 0.5 * t)).collect();
        let p = polyline_path(&pts, false);
        let s = smooth_controls(&p, 5, 2.0);
        for (a, b) in p.control_points().zip(s.control_points()) {
            assert!(a.dist(b) < 1e-3, "{a:?} {b:?}");
        }
    }

    #[test]
    fn zigzag_turning_decreases() {
        let pts: Vec<Point> = (0..8).map(|i| Point::new(i as f32 * 6.0, if i % 2 == 0 { 0.0 } else { 8.0 })).collect();
        let p = polyline_path(&pts, false);
        let s = smooth_controls(&p, 3, 2.0);
        assert!(turning(&s.joints()) < turning(&p.joints()));
        let first = s.joints();
        assert_eq!(first[0], pts[0]);
        assert_eq!(*first.last().unwrap(), *pts.last().unwrap());
    }

    #[test]
    fn closed_square_stays_closed_and_continuous() {
        let s = smooth_controls(&square(10.0, 10.0, 20.0), 2, 2.0);
        assert_eq!(s.segments[0].p[0], s.segments.last().unwrap().p[3]);
        for w in s.segments.windows(2) {
            assert_eq!(w[0].p[3], w[1].p[0]);
        }
    }

    #[test]
    fn empty_paths_rasterize_to_nothing() {
        assert!(rasterize(&[], 8, 8, 1.0).unwrap().is_empty());
        assert!(rasterize(&[], 8, 8, 0.5).is_err());
    }

    #[test]
    fn straight_segment_matches_line_oracle() {
        let (a, b) = (Point::new(2.3, 3.1), Point::new(25.7, 14.6));
        let m = rasterize(&[polyline_path(&[a, b], false)], 32, 20, 1.0).unwrap();
        // oracle: nearest pixel of dense samples
        let mut oracle = BinaryMask::empty(32, 20);
        for i in 0..=2000 {
            let q = a.lerp(b, i as f32 / 2000.0);
            oracle.set(q.x.round() as usize, q.y.round() as usize, true);
        }
        let set = |m: &BinaryMask| -> Vec<Point> {
            (0..20).flat_map(|y| (0..32).map(move |x| (x, y))).filter(|(x, y)| m.get(*x, *y)).map(|(x, y)| Point::new(x as f32, y as f32)).collect()
        };
        let (sa, sb) = (set(&m), set(&oracle));
        let haus = |from: &[Point], to: &[Point]| from.iter().map(|p| to.iter().map(|q| p.dist(*q)).fold(f32::INFINITY, f32::min)).fold(0.0, f32::max);
        assert!(haus(&sa, &sb) <= 1.0 && haus(&sb, &sa) <= 1.0);
    }

    #[test]
    fn stroke_distance_bounds() {
        let p = polyline_path(&[Point::new(3.0, 3.0), Point::new(20.0, 9.5), Point::new(8.0, 17.0)], false);
        for width in [1.0, 2.0, 3.5] {
            let m = rasterize(core::slice::from_ref(&p), 24, 24, width).unwrap();
            let dense = p.sample(0.05);
            for y in 0..24 {
                for x in 0..24 {
                    if m.get(x, y) {
                        let d = nearest_distance(&dense, Point::new(x as f32, y as f32));
                        assert!(d <= width / 2.0 + 1.0);
                    }
                }
            }
            for q in p.sample(0.5) {
                let near = (0..24).flat_map(|y| (0..24).map(move |x| (x, y))).filter(|(x, y)| m.get(*x, *y));
                // distance to the pixel square, not its center
                let best = near
                    .map(|(x, y)| {
                        let dx = ((x as f32 - q.x).abs() - 0.5).max(0.0);
                        let dy = ((y as f32 - q.y).abs() - 0.5).max(0.0);
                        (dx * dx + dy * dy).sqrt()
                    })
                    .fold(f32::INFINITY, f32::min);
                assert!(best <= width / 2.0);
            }
        }
    }
}
