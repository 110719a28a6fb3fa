#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::geom::Point;

/// Cubic Bezier segment: `p[0]` and `p[3]` lie on the curve, `p[1]` and
/// `p[2]` are the handles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicBezier {
    pub p: [Point; 4],
}

impl CubicBezier {
    pub fn new(p0: Point, p1: Point, p2: Point, p3: Point) -> Self {
        Self { p: [p0, p1, p2, p3] }
    }

    /// Straight segment with handles at the thirds.
    pub fn line(a: Point, b: Point) -> Self {
        Self::new(a, a.lerp(b, 1.0 / 3.0), a.lerp(b, 2.0 / 3.0), b)
    }

    pub fn eval(&self, t: f32) -> Point {
        let s = 1.0 - t;
        let [a, b, c, d] = self.p;
        a * (s * s * s) + b * (3.0 * s * s * t) + c * (3.0 * s * t * t) + d * (t * t * t)
    }

    pub fn derivative(&self, t: f32) -> Point {
        let s = 1.0 - t;
        let [a, b, c, d] = self.p;
        (b - a) * (3.0 * s * s) + (c - b) * (6.0 * s * t) + (d - c) * (3.0 * t * t)
    }

    fn second_derivative(&self, t: f32) -> Point {
        let [a, b, c, d] = self.p;
        (c - b * 2.0 + a) * (6.0 * (1.0 - t)) + (d - c * 2.0 + b) * (6.0 * t)
    }

    /// Length of the control polygon, an upper bound of the arc length.
    pub fn hull_length(&self) -> f32 {
        self.p[0].dist(self.p[1]) + self.p[1].dist(self.p[2]) + self.p[2].dist(self.p[3])
    }

    /// Points at parameter steps small enough that consecutive samples are at
    /// most `step` apart (the first and last control points included).
    pub fn sample(&self, step: f32) -> Vec<Point> {
        let n = ((self.hull_length() / step).ceil() as usize).max(1);
        (0..=n).map(|i| self.eval(i as f32 / n as f32)).collect()
    }
}

/// Chain of cubic segments sharing endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SplinePath {
    pub segments: Vec<CubicBezier>,
    pub closed: bool,
}

impl SplinePath {
    /// On-curve points: the start of every segment plus the final end point.
    pub fn joints(&self) -> Vec<Point> {
        let mut out: Vec<Point> = self.segments.iter().map(|s| s.p[0]).collect();
        if let Some(last) = self.segments.last() {
            out.push(last.p[3]);
        }
        out
    }

    pub fn control_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.segments.iter().flat_map(|s| s.p)
    }

    /// Dense samples along the whole path.
    pub fn sample(&self, step: f32) -> Vec<Point> {
        let mut out = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            let pts = s.sample(step);
            out.extend(if i == 0 { &pts[..] } else { &pts[1..] });
        }
        out
    }

    /// Axis-aligned bounds `(min, max)` of the control points.
    pub fn control_bounds(&self) -> Option<(Point, Point)> {
        let mut it = self.control_points();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y)))
        }))
    }
}

/// Distance from `q` to the nearest of `samples` (a densely sampled path).
pub fn nearest_distance(samples: &[Point], q: Point) -> f32 {
    samples.windows(2).map(|w| point_segment_distance(q, w[0], w[1])).fold(
        samples.first().map_or(f32::INFINITY, |p| p.dist(q)),
        f32::min,
    )
}

pub fn point_segment_distance(q: Point, a: Point, b: Point) -> f32 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        return q.dist(a);
    }
    let t = ((q - a).dot(ab) / len2).clamp(0.0, 1.0);
    q.dist(a + ab * t)
}

/// Least-squares cubic Bezier fitting with recursive subdivision at the point
/// of maximum error. Every input point ends up within `max_error` of the
/// fitted curve.
pub fn fit_splines(points: &[Point], closed: bool, max_error: f32) -> Result<SplinePath> {
    if points.len() < 2 {
        return Err(invalid("a polyline needs at least two points"));
    }
    if !(max_error > 0.0) {
        return Err(invalid("max_error must be positive"));
    }
    let mut pts: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        if pts.last() != Some(p) {
            pts.push(*p);
        }
    }
    if pts.len() == 1 {
        return Ok(SplinePath { segments: vec![CubicBezier::new(pts[0], pts[0], pts[0], pts[0])], closed });
    }
    if closed && pts.len() > 2 && pts.first() == pts.last() {
        // a closed chain has no natural end tangent; use the chord through the seam
        let n = pts.len();
        let t = (pts[1] - pts[n - 2]).normalized();
        let mut segs = Vec::new();
        fit_cubic(&pts, 0, n - 1, t, t * -1.0, max_error, &mut segs);
        return Ok(SplinePath { segments: segs, closed });
    }
    let n = pts.len();
    let t1 = end_tangent(&pts, true);
    let t2 = end_tangent(&pts, false);
    let mut segs = Vec::new();
    fit_cubic(&pts, 0, n - 1, t1, t2, max_error, &mut segs);
    Ok(SplinePath { segments: segs, closed })
}

fn end_tangent(pts: &[Point], start: bool) -> Point {
    let n = pts.len();
    let t = if start { pts[1] - pts[0] } else { pts[n - 2] - pts[n - 1] };
    t.normalized()
}

fn chord_params(pts: &[Point]) -> Vec<f32> {
    let mut u = Vec::with_capacity(pts.len());
    u.push(0.0f32);
    for i in 1..pts.len() {
        let prev = u[i - 1];
        u.push(prev + pts[i].dist(pts[i - 1]));
    }
    let total = *u.last().expect("non-empty");
    if total > 0.0 {
        u.iter_mut().for_each(|v| *v /= total);
    }
    u
}

fn generate(pts: &[Point], u: &[f32], t1: Point, t2: Point) -> CubicBezier {
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    let (mut c00, mut c01, mut c11, mut x0, mut x1) = (0.0f32, 0.0f32, 0.0f32, 0.0f32, 0.0f32);
    for (p, &t) in pts.iter().zip(u) {
        let s = 1.0 - t;
        let b0 = s * s * s;
        let b1 = 3.0 * s * s * t;
        let b2 = 3.0 * s * t * t;
        let b3 = t * t * t;
        let a1 = t1 * b1;
        let a2 = t2 * b2;
        c00 += a1.dot(a1);
        c01 += a1.dot(a2);
        c11 += a2.dot(a2);
        let tmp = *p - (first * (b0 + b1) + last * (b2 + b3));
        x0 += a1.dot(tmp);
        x1 += a2.dot(tmp);
    }
    let det = c00 * c11 - c01 * c01;
    let seg = first.dist(last);
    let eps = 1e-6 * seg;
    let (mut alpha1, mut alpha2) = if det.abs() > 1e-12 {
        ((x0 * c11 - x1 * c01) / det, (c00 * x1 - c01 * x0) / det)
    } else {
        (0.0, 0.0)
    };
    if !(alpha1 > eps && alpha2 > eps) || !alpha1.is_finite() || !alpha2.is_finite() {
        alpha1 = seg / 3.0;
        alpha2 = seg / 3.0;
    }
    // handles longer than half the arc only appear in degenerate solves
    let arc: f32 = pts.windows(2).map(|w| w[0].dist(w[1])).sum();
    alpha1 = alpha1.min(0.5 * arc);
    alpha2 = alpha2.min(0.5 * arc);
    CubicBezier::new(first, first + t1 * alpha1, last + t2 * alpha2, last)
}

fn max_error(pts: &[Point], u: &[f32], bez: &CubicBezier) -> (f32, usize) {
    let mut worst = 0.0f32;
    let mut at = pts.len() / 2;
    for i in 1..pts.len() - 1 {
        let d = bez.eval(u[i]).dist(pts[i]);
        if d > worst {
            worst = d;
            at = i;
        }
    }
    (worst, at)
}

fn reparameterize(pts: &[Point], u: &mut [f32], bez: &CubicBezier) {
    for (p, t) in pts.iter().zip(u.iter_mut()) {
        let d = bez.eval(*t) - *p;
        let d1 = bez.derivative(*t);
        let d2 = bez.second_derivative(*t);
        let num = d.dot(d1);
        let den = d1.dot(d1) + d.dot(d2);
        if den.abs() > 1e-12 {
            *t = (*t - num / den).clamp(0.0, 1.0);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_cubic(pts: &[Point], first: usize, last: usize, t1: Point, t2: Point, tol: f32, out: &mut Vec<CubicBezier>) {
    let span = &pts[first..=last];
    if span.len() == 2 {
        let d = span[0].dist(span[1]) / 3.0;
        out.push(CubicBezier::new(span[0], span[0] + t1 * d, span[1] + t2 * d, span[1]));
        return;
    }
    let mut u = chord_params(span);
    let mut bez = generate(span, &u, t1, t2);
    let (mut err, mut split) = max_error(span, &u, &bez);
    if err <= tol {
        out.push(bez);
        return;
    }
    if err < 4.0 * tol {
        for _ in 0..4 {
            reparameterize(span, &mut u, &bez);
            bez = generate(span, &u, t1, t2);
            let (e, s) = max_error(span, &u, &bez);
            err = e;
            split = s;
            if err <= tol {
                out.push(bez);
                return;
            }
        }
    }
    let split = split.clamp(1, span.len() - 2) + first;
    let mut center = (pts[split - 1] - pts[split + 1]).normalized();
    if center.norm() == 0.0 {
        center = (pts[split - 1] - pts[split]).normalized();
    }
    fit_cubic(pts, first, split, t1, center, tol, out);
    fit_cubic(pts, split, last, center * -1.0, t2, tol, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_dev(path: &SplinePath, pts: &[Point]) -> f32 {
        let dense = path.sample(0.05);
        pts.iter().map(|p| nearest_distance(&dense, *p)).fold(0.0, f32::max)
    }

    #[test]
    fn two_points_fit_a_straight_line() {
        let (a, b) = (Point::new(1.0, 2.0), Point::new(7.0, -1.0));
        let path = fit_splines(&[a, b], false, 0.5).unwrap();
        assert_eq!(path.segments.len(), 1);
        for i in 0..=10 {
            let q = path.segments[0].eval(i as f32 / 10.0);
            assert!(point_segment_distance(q, a, b) < 1e-5);
        }
    }

    #[test]
    fn coincident_points_give_zero_length_segment() {
        let p = Point::new(3.0, 3.0);
        let path = fit_splines(&[p, p, p], false, 1.0).unwrap();
        assert_eq!(path.segments, vec![CubicBezier::new(p, p, p, p)]);
    }

    #[test]
    fn known_cubic_is_recovered() {
        let truth = CubicBezier::new(Point::new(0.0, 0.0), Point::new(10.0, 25.0), Point::new(30.0, -15.0), Point::new(40.0, 10.0));
        let pts: Vec<Point> = (0..=60).map(|i| truth.eval(i as f32 / 60.0)).collect();
        let path = fit_splines(&pts, false, 0.5).unwrap();
        assert!(max_dev(&path, &pts) <= 0.5);
        // and the other way round: the fitted curve stays near the truth
        let truth_dense = truth.sample(0.05);
        let worst = path.sample(0.5).iter().map(|p| nearest_distance(&truth_dense, *p)).fold(0.0, f32::max);
        assert!(worst <= 0.5, "{worst}");
    }

    #[test]
    fn quarter_circle_within_tolerance() {
        let pts: Vec<Point> = (0..=40)
            .map(|i| {
                let a = core::f32::consts::FRAC_PI_2 * i as f32 / 40.0;
                Point::new(30.0 * a.cos(), 30.0 * a.sin())
            })
            .collect();
        let path = fit_splines(&pts, false, 1.0).unwrap();
        assert!(max_dev(&path, &pts) <= 1.0);
        assert!(path.segments.len() <= 2);
    }

    #[test]
    fn segments_are_connected() {
        let pts: Vec<Point> = (0..50).map(|i| Point::new(i as f32, if i % 7 < 3 { 0.0 } else { 4.0 })).collect();
        let path = fit_splines(&pts, false, 0.5).unwrap();
        for w in path.segments.windows(2) {
            assert_eq!(w[0].p[3], w[1].p[0]);
        }
        assert!(max_dev(&path, &pts) <= 0.5);
    }
}
