use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::edges::EdgeMap;
use crate::geom::Point;
use crate::raster::BinaryMask;

/// Chain of pixel centers. A closed chain repeats its first point at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
    pub closed: bool,
}

/// Pixels with strength at or above `threshold`.
pub fn binarize(edges: &EdgeMap, threshold: f32) -> BinaryMask {
    BinaryMask::from_fn(edges.width(), edges.height(), |x, y| edges.get(x, y) >= threshold)
}

/// Zhang-Suen thinning to a one-pixel-wide skeleton.
pub fn thin(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut img: Vec<bool> = mask.bits().to_vec();
    let at = |img: &[bool], x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && x < w as isize && y < h as isize && img[y as usize * w + x as usize]
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    if !at(&img, x, y) {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        at(&img, x, y - 1),
                        at(&img, x + 1, y - 1),
                        at(&img, x + 1, y),
                        at(&img, x + 1, y + 1),
                        at(&img, x, y + 1),
                        at(&img, x - 1, y + 1),
                        at(&img, x - 1, y),
                        at(&img, x - 1, y - 1),
                    ];
                    let b = p.iter().filter(|v| **v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|i| !p[*i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (n, e, s, wst) = (p[0], p[2], p[4], p[6]);
                    let ok = if pass == 0 { !(n && e && s) && !(e && s && wst) } else { !(n && e && wst) && !(n && s && wst) };
                    if ok {
                        remove.push(y as usize * w + x as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                img[i] = false;
            }
        }
        if !changed {
            break;
        }
    }
    BinaryMask::new(w, h, img).expect("same dimensions")
}

/// m-adjacency: 4-neighbors always; diagonal neighbors only when neither of
/// the two pixels they share is set. This removes the staircase ambiguity of
/// 8-connectivity so that only true junctions have three or more neighbors.
fn neighbors(m: &BinaryMask, x: usize, y: usize) -> Vec<(usize, usize)> {
    let (w, h) = (m.width() as isize, m.height() as isize);
    let set = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize);
    let (xi, yi) = (x as isize, y as isize);
    let mut out = Vec::with_capacity(8);
    for (dx, dy) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
        if set(xi + dx, yi + dy) {
            out.push(((xi + dx) as usize, (yi + dy) as usize));
        }
    }
    for (dx, dy) in [(1, -1), (1, 1), (-1, 1), (-1, -1)] {
        if set(xi + dx, yi + dy) && !set(xi + dx, yi) && !set(xi, yi + dy) {
            out.push(((xi + dx) as usize, (yi + dy) as usize));
        }
    }
    out
}

/// Binarizes, thins and walks the skeleton into chains. Chains run between
/// end points and junctions (junction pixels are shared by the chains that
/// meet there); cycles without any junction become closed chains. Isolated
/// pixels are dropped.
pub fn trace(edges: &EdgeMap, threshold: f32) -> Vec<Polyline> {
    trace_skeleton(&thin(&binarize(edges, threshold)))
}

pub fn trace_skeleton(skel: &BinaryMask) -> Vec<Polyline> {
    let w = skel.width();
    let id = |p: (usize, usize)| p.1 * w + p.0;
    let pt = |p: (usize, usize)| Point::new(p.0 as f32, p.1 as f32);
    let mut degree = vec![0usize; w * skel.height()];
    for y in 0..skel.height() {
        for x in 0..w {
            if skel.get(x, y) {
                degree[y * w + x] = neighbors(skel, x, y).len();
            }
        }
    }
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let edge = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let mut visited = vec![false; degree.len()];
    let mut out = Vec::new();

    let walk = |start: (usize, usize), first: (usize, usize), used: &mut BTreeSet<(usize, usize)>, visited: &mut Vec<bool>| {
        let mut pts = vec![pt(start), pt(first)];
        used.insert(edge(id(start), id(first)));
        visited[id(start)] = true;
        let (mut prev, mut cur) = (start, first);
        loop {
            visited[id(cur)] = true;
            if degree[id(cur)] != 2 || cur == start {
                break;
            }
            let next = neighbors(skel, cur.0, cur.1).into_iter().find(|n| *n != prev && !used.contains(&edge(id(cur), id(*n))));
            let Some(next) = next else { break };
            used.insert(edge(id(cur), id(next)));
            pts.push(pt(next));
            prev = cur;
            cur = next;
        }
        pts
    };

    for y in 0..skel.height() {
        for x in 0..w {
            let d = degree[y * w + x];
            if !skel.get(x, y) || d == 2 || d == 0 {
                continue;
            }
            for n in neighbors(skel, x, y) {
                if used.contains(&edge(id((x, y)), id(n))) {
                    continue;
                }
                let pts = walk((x, y), n, &mut used, &mut visited);
                out.push(Polyline { points: pts, closed: false });
            }
        }
    }
    for y in 0..skel.height() {
        for x in 0..w {
            if !skel.get(x, y) || visited[y * w + x] || degree[y * w + x] != 2 {
                continue;
            }
            let n = neighbors(skel, x, y)[0];
            let pts = walk((x, y), n, &mut used, &mut visited);
            let closed = pts.len() > 2 && pts.first() == pts.last();
            out.push(Polyline { points: pts, closed });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::empty(w, h);
        for (x, y) in on {
            m.set(*x, *y, true);
        }
        m
    }

    fn edge_map(m: &BinaryMask) -> EdgeMap {
        EdgeMap::new(m.width(), m.height(), m.bits().iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()).unwrap()
    }

    #[test]
    fn empty_map_traces_nothing() {
        let e = EdgeMap::new(8, 8, vec![0.0; 64]).unwrap();
        assert!(trace(&e, 0.5).is_empty());
    }

    #[test]
    fn horizontal_line_is_one_chain() {
        let on: Vec<_> = (5..25).map(|x| (x, 10)).collect();
        let lines = trace(&edge_map(&mask(32, 20, &on)), 0.5);
        assert_eq!(lines.len(), 1);
        let p = &lines[0].points;
        let (a, b) = (p[0], p[p.len() - 1]);
        let (lo, hi) = if a.x < b.x { (a, b) } else { (b, a) };
        assert!(lo.dist(Point::new(5.0, 10.0)) <= 1.0);
        assert!(hi.dist(Point::new(24.0, 10.0)) <= 1.0);
    }

    #[test]
    fn plus_sign_has_four_arms() {
        let mut on = Vec::new();
        for i in 2..19 {
            on.push((i, 10));
            on.push((10, i));
        }
        let lines = trace(&edge_map(&mask(21, 21, &on)), 0.5);
        assert_eq!(lines.len(), 4);
        for l in &lines {
            assert!(l.points.iter().any(|p| *p == Point::new(10.0, 10.0)));
            assert!(l.points.len() >= 2);
        }
    }

    #[test]
    fn thick_bar_thins_to_a_line() {
        let mut on = Vec::new();
        for x in 3..30 {
            for y in 8..12 {
                on.push((x, y));
            }
        }
        let skel = thin(&mask(34, 20, &on));
        for x in 6..27 {
            let col = (0..20).filter(|y| skel.get(x, *y)).count();
            assert_eq!(col, 1, "column {x}");
        }
        let lines = trace_skeleton(&skel);
        assert_eq!(lines.len(), 1);
    }

    #[test]
    fn square_ring_is_closed() {
        let mut on = Vec::new();
        for i in 4..16 {
            on.extend([(i, 4), (i, 15), (4, i), (15, i)]);
        }
        let lines = trace(&edge_map(&mask(20, 20, &on)), 0.5);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        assert_eq!(lines[0].points.len(), 45);
    }

    #[test]
    fn diagonal_staircase_is_not_split() {
        // 8-connected staircase with 4-connected corners
        let mut on = Vec::new();
        for i in 0..10 {
            on.push((2 + i, 2 + i));
            on.push((3 + i, 2 + i));
        }
        let skel = thin(&mask(16, 16, &on));
        let lines = trace_skeleton(&skel);
        assert_eq!(lines.len(), 1);
    }
}
