use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::HalfSpace2;
use crate::math::{sqrt, Vec2};
use crate::pointproc::AxisBox;

/// Relative tolerance of the clipping predicate.
pub(crate) const CLIP_EPS: f64 = 1e-9;

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    /// Wraps vertices that the caller guarantees to be convex and ccw.
    pub fn from_ccw(vertices: Vec<Vec2>) -> Self {
        ConvexPolygon { vertices }
    }

    pub fn from_box(b: &AxisBox) -> Self {
        ConvexPolygon {
            vertices: alloc::vec![
                b.lower,
                Vec2::new(b.upper.x, b.lower.y),
                b.upper,
                Vec2::new(b.lower.x, b.upper.y),
            ],
        }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn translated(&self, v: Vec2) -> Self {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|p| *p + v).collect(),
        }
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        // shoelace relative to the first vertex to limit cancellation
        let o = self.vertices[0];
        let mut s = 0.0;
        for i in 1..n - 1 {
            s += (self.vertices[i] - o).cross(self.vertices[i + 1] - o);
        }
        0.5 * s
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| self.vertices[i].dist(self.vertices[(i + 1) % n]))
            .sum()
    }

    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.vertices.len() {
            for j in 0..i {
                best = best.max(self.vertices[i].dist2(self.vertices[j]));
            }
        }
        sqrt(best)
    }

    pub fn circumradius(&self) -> f64 {
        min_enclosing_circle(&self.vertices).1
    }

    /// Largest distance from `c` to a point of the polygon.
    pub fn max_distance_from(&self, c: Vec2) -> f64 {
        sqrt(self.vertices.iter().map(|v| v.dist2(c)).fold(0.0, f64::max))
    }

    pub fn bounding_box(&self) -> Option<(Vec2, Vec2)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        Some((lo, hi))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= 0.0
        })
    }

    /// Radius of the largest inscribed disc, by bisection on the inward
    /// displacement of every edge. The displaced edges still enclose a
    /// nonempty region exactly when the displacement is below the inradius.
    pub fn inradius(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let Some((lo, hi)) = self.bounding_box() else {
            return 0.0;
        };
        let edges: Vec<HalfSpace2> = (0..n)
            .filter_map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let e = b - a;
                let len = e.norm();
                if len == 0.0 {
                    return None;
                }
                // outward unit normal of a ccw edge
                let normal = Vec2::new(e.y / len, -e.x / len);
                Some(HalfSpace2 {
                    normal,
                    offset: normal.dot(a),
                })
            })
            .collect();
        let start = ConvexPolygon::from_box(&AxisBox {
            lower: lo,
            upper: hi,
        });
        let feasible = |d: f64| {
            let mut cur = start.vertices.clone();
            let mut next = Vec::with_capacity(cur.len() + 2);
            for e in &edges {
                let shifted = HalfSpace2 {
                    normal: e.normal,
                    offset: e.offset - d,
                };
                clip_into(&cur, &shifted, 0.0, &mut next);
                core::mem::swap(&mut cur, &mut next);
                if cur.is_empty() {
                    return false;
                }
            }
            true
        };
        let mut a = 0.0;
        let mut b = 0.5 * (hi.x - lo.x).min(hi.y - lo.y);
        let tol = 1e-12 * (1.0 + b);
        while b - a > tol {
            let mid = 0.5 * (a + b);
            if feasible(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Intersection with a half-plane, reusing `scratch`.
    pub(crate) fn clip(&mut self, hs: &HalfSpace2, scratch: &mut Vec<Vec2>) {
        let scale = 1.0 + self.vertices.iter().map(|v| v.x.abs().max(v.y.abs())).fold(0.0, f64::max);
        let tol = CLIP_EPS * scale * hs.normal.norm();
        clip_into(&self.vertices, hs, tol, scratch);
        core::mem::swap(&mut self.vertices, scratch);
    }

    /// Drops repeated and collinear vertices so the ring is strictly convex.
    pub(crate) fn simplify(&mut self) {
        let scale = 1.0 + self.vertices.iter().map(|v| v.x.abs().max(v.y.abs())).fold(0.0, f64::max);
        let eps = CLIP_EPS * scale;
        let mut changed = true;
        while changed && self.vertices.len() >= 3 {
            changed = false;
            let n = self.vertices.len();
            for i in 0..n {
                let prev = self.vertices[(i + n - 1) % n];
                let cur = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                let dup = cur.dist(prev) <= eps;
                let e = next - prev;
                let len = e.norm();
                let collinear = len > 0.0 && (e.cross(cur - prev) / len).abs() <= eps;
                if dup || collinear {
                    self.vertices.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        if self.vertices.len() < 3 {
            self.vertices.clear();
        }
    }
}

/// Sutherland-Hodgman step against one half-plane. Vertices with signed value
/// at most `tol` count as inside.
pub(crate) fn clip_into(src: &[Vec2], hs: &HalfSpace2, tol: f64, dst: &mut Vec<Vec2>) {
    dst.clear();
    let n = src.len();
    if n == 0 {
        return;
    }
    let vals: smallvals::Vals = smallvals::Vals::new(src, hs);
    if vals.all_inside(tol) {
        dst.extend_from_slice(src);
        return;
    }
    for i in 0..n {
        let p = src[i];
        let q = src[(i + 1) % n];
        let sp = vals.get(i);
        let sq = vals.get((i + 1) % n);
        let p_in = sp <= tol;
        let q_in = sq <= tol;
        if p_in {
            dst.push(p);
        }
        // a crossing point is new only if the inside endpoint is strictly
        // inside; otherwise that endpoint already lies on the line
        let strict_cross = (p_in && !q_in && sp < 0.0) || (!p_in && q_in && sq < 0.0);
        if strict_cross {
            let t = sp / (sp - sq);
            if t > 0.0 && t < 1.0 {
                dst.push(p + (q - p) * t);
            }
        }
    }
    if dst.len() < 3 {
        dst.clear();
    }
}

mod smallvals {
    use super::HalfSpace2;
    use crate::math::Vec2;
    use alloc::vec::Vec;

    /// Signed values of the polygon vertices, stack-allocated for small rings.
    pub(super) enum Vals {
        Small([f64; 24], usize),
        Large(Vec<f64>),
    }

    impl Vals {
        pub(super) fn new(src: &[Vec2], hs: &HalfSpace2) -> Self {
            if src.len() <= 24 {
                let mut a = [0.0; 24];
                for (k, v) in src.iter().enumerate() {
                    a[k] = hs.eval(*v);
                }
                Vals::Small(a, src.len())
            } else {
                Vals::Large(src.iter().map(|v| hs.eval(*v)).collect())
            }
        }

        #[inline]
        pub(super) fn get(&self, i: usize) -> f64 {
            match self {
                Vals::Small(a, _) => a[i],
                Vals::Large(v) => v[i],
            }
        }

        pub(super) fn all_inside(&self, tol: f64) -> bool {
            match self {
                Vals::Small(a, n) => a[..*n].iter().all(|s| *s <= tol),
                Vals::Large(v) => v.iter().all(|s| *s <= tol),
            }
        }
    }
}

/// Smallest disc containing all `points`, as (centre, radius). Incremental
/// construction over the points in the given order.
pub fn min_enclosing_circle(points: &[Vec2]) -> (Vec2, f64) {
    match points.len() {
        0 => return (Vec2::ZERO, 0.0),
        1 => return (points[0], 0.0),
        _ => {}
    }
    let slack = 1e-12;
    let inside = |c: Vec2, r: f64, p: Vec2| p.dist(c) <= r * (1.0 + slack) + slack;
    let mut c = points[0];
    let mut r = 0.0;
    for i in 1..points.len() {
        if inside(c, r, points[i]) {
            continue;
        }
        c = points[i];
        r = 0.0;
        for j in 0..i {
            if inside(c, r, points[j]) {
                continue;
            }
            c = (points[i] + points[j]) * 0.5;
            r = points[i].dist(c);
            for k in 0..j {
                if inside(c, r, points[k]) {
                    continue;
                }
                match circumcircle(points[i], points[j], points[k]) {
                    Some((cc, rr)) => {
                        c = cc;
                        r = rr;
                    }
                    None => {
                        // collinear: the farthest pair spans the circle
                        let cand = [
                            (points[i], points[j]),
                            (points[i], points[k]),
                            (points[j], points[k]),
                        ];
                        let (a, b) = cand
                            .iter()
                            .copied()
                            .max_by(|x, y| x.0.dist2(x.1).total_cmp(&y.0.dist2(y.1)))
                            .unwrap();
                        c = (a + b) * 0.5;
                        r = a.dist(c);
                    }
                }
            }
        }
    }
    (c, r)
}

fn circumcircle(a: Vec2, b: Vec2, c: Vec2) -> Option<(Vec2, f64)> {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * ab.cross(ac);
    if d.abs() < 1e-300 {
        return None;
    }
    let ab2 = ab.norm2();
    let ac2 = ac.norm2();
    let ux = (ac.y * ab2 - ab.y * ac2) / d;
    let uy = (ab.x * ac2 - ac.x * ab2) / d;
    let u = Vec2::new(ux, uy);
    Some((a + u, u.norm()))
}
