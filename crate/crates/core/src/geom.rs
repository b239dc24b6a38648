//! Planar primitives: points, segments, convex polygons and the clipping
//! routines that every partition refinement is built from.
//!
//! All polygons are convex and stored counter-clockwise. Pieces that come
//! out of a cut with negligible area or thickness are discarded and counted,
//! never silently merged into a neighbour.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::{Add, Mul, Neg, Sub};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::GeomError;

/// Numerical tolerances used by the geometry kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Distances below this are treated as zero (vertex snapping).
    pub eps_geo: f64,
    /// Pieces with smaller area are dropped.
    pub eps_area: f64,
    /// Pieces with `area / diameter` below this are dropped as slivers.
    pub eps_thin: f64,
    /// Coincidence radius for points produced by long chains of affine maps.
    pub eps_snap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eps_geo: 1e-12, eps_area: 1e-14, eps_thin: 1e-10, eps_snap: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3d cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Option<Point> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn from_angle(theta: f64) -> Point {
        Point::new(theta.cos(), theta.sin())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Lexicographic order on (x, y), total on finite values.
    pub fn lex_cmp(&self, o: &Point) -> Ordering {
        self.x.total_cmp(&o.x).then(self.y.total_cmp(&o.y))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// An affine map `p -> L p + c` of the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { linear: [[1.0, 0.0], [0.0, 1.0]], offset: [0.0, 0.0] };

    pub fn new(linear: [[f64; 2]; 2], offset: [f64; 2]) -> Self {
        Affine2 { linear, offset }
    }

    pub fn apply(&self, p: Point) -> Point {
        let l = &self.linear;
        Point::new(l[0][0] * p.x + l[0][1] * p.y + self.offset[0], l[1][0] * p.x + l[1][1] * p.y + self.offset[1])
    }

    pub fn apply_linear(&self, v: Point) -> Point {
        let l = &self.linear;
        Point::new(l[0][0] * v.x + l[0][1] * v.y, l[1][0] * v.x + l[1][1] * v.y)
    }

    pub fn det(&self) -> f64 {
        let l = &self.linear;
        l[0][0] * l[1][1] - l[0][1] * l[1][0]
    }

    /// `self ∘ inner`: first apply `inner`, then `self`.
    pub fn compose(&self, inner: &Affine2) -> Affine2 {
        let a = &self.linear;
        let b = &inner.linear;
        let mut linear = [[0.0; 2]; 2];
        for (i, row) in linear.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        let c = self.apply(Point::new(inner.offset[0], inner.offset[1]));
        Affine2 { linear, offset: [c.x, c.y] }
    }

    pub fn inverse(&self) -> Option<Affine2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let l = &self.linear;
        let linear = [[l[1][1] / d, -l[0][1] / d], [-l[1][0] / d, l[0][0] / d]];
        let inv = Affine2 { linear, offset: [0.0, 0.0] };
        let c = inv.apply_linear(Point::new(self.offset[0], self.offset[1]));
        Some(Affine2 { linear, offset: [-c.x, -c.y] })
    }

    /// Solves `self(p) = p`. `None` when 1 is an eigenvalue of the linear part.
    pub fn fixed_point(&self) -> Option<Point> {
        let l = &self.linear;
        let m = [[l[0][0] - 1.0, l[0][1]], [l[1][0], l[1][1] - 1.0]];
        let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if d.abs() < 1e-300 {
            return None;
        }
        let (bx, by) = (-self.offset[0], -self.offset[1]);
        Some(Point::new((bx * m[1][1] - m[0][1] * by) / d, (m[0][0] * by - m[1][0] * bx) / d))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn direction(&self) -> Point {
        self.b - self.a
    }

    pub fn midpoint(&self) -> Point {
        (self.a + self.b) * 0.5
    }

    pub fn at(&self, t: f64) -> Point {
        self.a + (self.b - self.a) * t
    }

    pub fn transform(&self, m: &Affine2) -> Segment {
        Segment::new(m.apply(self.a), m.apply(self.b))
    }

    pub fn distance_to_point(&self, p: Point) -> f64 {
        let d = self.b - self.a;
        let l2 = d.dot(d);
        if l2 == 0.0 {
            return p.dist(self.a);
        }
        let t = ((p - self.a).dot(d) / l2).clamp(0.0, 1.0);
        p.dist(self.at(t))
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(&[self.a, self.b])
    }
}

/// An infinite line through `point` with direction `dir`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: Point,
    pub dir: Point,
}

impl Line {
    pub fn new(point: Point, dir: Point) -> Self {
        Line { point, dir }
    }

    pub fn through(s: &Segment) -> Self {
        Line { point: s.a, dir: s.b - s.a }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn from_points(pts: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    pub fn overlaps(&self, o: &BBox, slack: f64) -> bool {
        self.min.x <= o.max.x + slack
            && o.min.x <= self.max.x + slack
            && self.min.y <= o.max.y + slack
            && o.min.y <= self.max.y + slack
    }

    pub fn inflate(&self, r: f64) -> BBox {
        BBox { min: Point::new(self.min.x - r, self.min.y - r), max: Point::new(self.max.x + r, self.max.y + r) }
    }
}

/// Bookkeeping for pieces thrown away by the kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliverLog {
    pub dropped: usize,
    pub dropped_area: f64,
}

impl SliverLog {
    pub fn record(&mut self, area: f64) {
        self.dropped += 1;
        self.dropped_area += area;
    }

    pub fn merge(&mut self, o: &SliverLog) {
        self.dropped += o.dropped;
        self.dropped_area += o.dropped_area;
    }
}

/// Outcome of clipping a polygon against a half-plane.
#[derive(Clone, Debug)]
pub enum Clip {
    Empty,
    /// Something survived, but below the area/thickness thresholds.
    Sliver(f64),
    Piece(ConvexPolygon),
}

/// A convex polygon with counter-clockwise vertices and positive area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    verts: Vec<Point>,
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        s += v[i].cross(v[(i + 1) % n]);
    }
    0.5 * s
}

/// Removes repeated vertices and vertices lying on the segment between
/// their neighbours.
fn simplify(mut v: Vec<Point>, eps: f64) -> Vec<Point> {
    let mut changed = true;
    while changed && v.len() >= 3 {
        changed = false;
        let n = v.len();
        let mut out: Vec<Point> = Vec::with_capacity(n);
        for &p in v.iter() {
            if let Some(q) = out.last() {
                if q.dist(p) <= eps {
                    changed = true;
                    continue;
                }
            }
            out.push(p);
        }
        while out.len() >= 2 && out[0].dist(*out.last().unwrap()) <= eps {
            out.pop();
            changed = true;
        }
        let n = out.len();
        if n < 3 {
            return out;
        }
        let mut keep = Vec::with_capacity(n);
        for i in 0..n {
            let prev = out[(i + n - 1) % n];
            let cur = out[i];
            let next = out[(i + 1) % n];
            let base = next - prev;
            let len = base.norm();
            // distance of `cur` from the chord prev-next
            let h = if len > 0.0 { (cur - prev).cross(base).abs() / len } else { 0.0 };
            if h <= eps && (cur - prev).dot(next - cur) >= 0.0 {
                changed = true;
            } else {
                keep.push(cur);
            }
        }
        v = keep;
    }
    v
}

impl ConvexPolygon {
    /// Validates and normalises a vertex list (orientation, duplicates,
    /// collinear vertices).
    pub fn new(vertices: Vec<Point>, tol: &Tolerances) -> Result<Self, GeomError> {
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let mut v = simplify(vertices, tol.eps_geo);
        if v.len() < 3 {
            return Err(GeomError::Degenerate { vertices: v.len() });
        }
        if signed_area(&v) < 0.0 {
            v.reverse();
        }
        let n = v.len();
        for i in 0..n {
            let e0 = v[(i + 1) % n] - v[i];
            let e1 = v[(i + 2) % n] - v[(i + 1) % n];
            if e0.cross(e1) < -tol.eps_geo * e0.norm().max(e1.norm()) {
                return Err(GeomError::NotConvex { vertex: (i + 1) % n });
            }
        }
        let area = signed_area(&v);
        if area <= tol.eps_area {
            return Err(GeomError::ZeroArea { area });
        }
        // winding number must be one: the turning angles add up to 2π
        let mut turn = 0.0;
        for i in 0..n {
            let e0 = v[(i + 1) % n] - v[i];
            let e1 = v[(i + 2) % n] - v[(i + 1) % n];
            turn += e0.cross(e1).atan2(e0.dot(e1));
        }
        if (turn - core::f64::consts::TAU).abs() > 1e-6 {
            return Err(GeomError::NotConvex { vertex: 0 });
        }
        Ok(ConvexPolygon { verts: v })
    }

    /// Axis-parallel rectangle `[x0,x1] × [y0,y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        ConvexPolygon { verts: vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)] }
    }

    pub fn unit_square() -> Self {
        Self::rect(0.0, 0.0, 1.0, 1.0)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.verts
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.verts)
    }

    pub fn centroid(&self) -> Point {
        let v = &self.verts;
        let n = v.len();
        let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
        // shift to the first vertex for accuracy on tiny cells
        let o = v[0];
        for i in 0..n {
            let p = v[i] - o;
            let q = v[(i + 1) % n] - o;
            let c = p.cross(q);
            a += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        if a == 0.0 {
            let s = v.iter().fold(Point::default(), |s, p| s + *p);
            return s * (1.0 / n as f64);
        }
        o + Point::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(&self.verts)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, p) in self.verts.iter().enumerate() {
            for q in &self.verts[i + 1..] {
                d = d.max(p.dist(*q));
            }
        }
        d
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.verts.len();
        (0..n).map(move |i| Segment::new(self.verts[i], self.verts[(i + 1) % n]))
    }

    /// Closed containment with slack `tol` (points within `tol` outside count).
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.edges().all(|e| {
            let d = e.direction();
            let len = d.norm();
            d.cross(p - e.a) >= -tol * len
        })
    }

    /// Euclidean distance from `p` to the polygon (zero inside).
    pub fn distance_to_point(&self, p: Point) -> f64 {
        if self.contains(p, 0.0) {
            return 0.0;
        }
        self.edges().map(|e| e.distance_to_point(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.edges().map(|e| e.distance_to_point(p)).fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from `p` to a point of the polygon.
    pub fn max_distance_to_point(&self, p: Point) -> f64 {
        self.verts.iter().map(|v| v.dist(p)).fold(0.0, f64::max)
    }

    pub fn is_sliver(area: f64, diameter: f64, tol: &Tolerances) -> bool {
        area <= tol.eps_area || area <= tol.eps_thin * diameter
    }

    pub fn transform(&self, m: &Affine2) -> ConvexPolygon {
        let mut verts: Vec<Point> = self.verts.iter().map(|p| m.apply(*p)).collect();
        if m.det() < 0.0 {
            verts.reverse();
        }
        ConvexPolygon { verts }
    }

    /// Keeps the part where `normal · p >= offset`.
    pub fn clip_halfplane(&self, normal: Point, offset: f64, tol: &Tolerances) -> Clip {
        let scale = normal.norm();
        let d: Vec<f64> = self
            .verts
            .iter()
            .map(|p| {
                let s = (normal.dot(*p) - offset) / scale;
                if s.abs() <= tol.eps_geo {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        if d.iter().all(|&s| s >= 0.0) {
            return Clip::Piece(self.clone());
        }
        if d.iter().all(|&s| s <= 0.0) {
            return Clip::Empty;
        }
        let n = self.verts.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (p, q) = (self.verts[i], self.verts[j]);
            let (dp, dq) = (d[i], d[j]);
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0) {
                let t = dp / (dp - dq);
                out.push(p + (q - p) * t);
            }
        }
        let out = simplify(out, tol.eps_geo);
        if out.len() < 3 {
            return Clip::Sliver(0.0);
        }
        let poly = ConvexPolygon { verts: out };
        let area = poly.area();
        if Self::is_sliver(area, poly.diameter(), tol) {
            Clip::Sliver(area.max(0.0))
        } else {
            Clip::Piece(poly)
        }
    }

    /// Intersection with another convex polygon.
    pub fn intersect(&self, other: &ConvexPolygon, tol: &Tolerances, log: &mut SliverLog) -> Option<ConvexPolygon> {
        if !self.bbox().overlaps(&other.bbox(), tol.eps_geo) {
            return None;
        }
        let mut cur = self.clone();
        for e in other.edges() {
            let normal = e.direction().perp();
            match cur.clip_halfplane(normal, normal.dot(e.a), tol) {
                Clip::Piece(p) => cur = p,
                Clip::Empty => return None,
                Clip::Sliver(a) => {
                    log.record(a);
                    return None;
                }
            }
        }
        Some(cur)
    }

    /// Longest chord parallel to `dir`.
    pub fn chord_along(&self, dir: Point) -> f64 {
        let Some(u) = dir.normalized() else { return 0.0 };
        let mut best: f64 = 0.0;
        for v in &self.verts {
            if let Some((t0, t1)) = self.line_interval(&Line::new(*v, u)) {
                best = best.max(t1 - t0);
            }
        }
        best
    }

    /// Parameter interval `[t0, t1]` of `line.point + t·dir` inside the polygon,
    /// with `dir` taken as given (not normalised).
    pub fn line_interval(&self, line: &Line) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for e in self.edges() {
            let ed = e.direction();
            // inside: ed × (p - e.a) >= 0
            let num = ed.cross(line.point - e.a);
            let den = ed.cross(line.dir);
            if den.abs() < 1e-300 {
                if num < -1e-15 * ed.norm() {
                    return None;
                }
                continue;
            }
            let t = -num / den;
            if den > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
        if t0 <= t1 && t0.is_finite() && t1.is_finite() {
            Some((t0, t1))
        } else {
            None
        }
    }

    /// Part of `s` inside the polygon.
    pub fn clip_segment(&self, s: &Segment) -> Option<Segment> {
        let (t0, t1) = self.line_interval(&Line::through(s))?;
        let (a, b) = (t0.max(0.0), t1.min(1.0));
        if a < b {
            Some(Segment::new(s.at(a), s.at(b)))
        } else {
            None
        }
    }
}

/// Width of the projection of `poly` onto the direction `dir`.
pub fn diameter_along(poly: &ConvexPolygon, dir: Point) -> Result<f64, GeomError> {
    let u = dir.normalized().ok_or(GeomError::ZeroDirection)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in poly.vertices() {
        let s = u.dot(*p);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok(hi - lo)
}

/// Splits `poly` along `line`. Returns the surviving pieces, left side first.
pub fn cut_polygon(
    poly: &ConvexPolygon,
    line: &Line,
    tol: &Tolerances,
    log: &mut SliverLog,
) -> Result<Vec<ConvexPolygon>, GeomError> {
    let u = line.dir.normalized().ok_or(GeomError::ZeroDirection)?;
    let normal = u.perp();
    let c = normal.dot(line.point);
    let mut out = Vec::with_capacity(2);
    for (nrm, off) in [(normal, c), (-normal, -c)] {
        match poly.clip_halfplane(nrm, off, tol) {
            Clip::Piece(p) => out.push(p),
            Clip::Sliver(a) => log.record(a),
            Clip::Empty => {}
        }
    }
    Ok(out)
}

/// Result of [`refine_cells`].
#[derive(Clone, Debug, Default)]
pub struct Refinement {
    pub cells: Vec<ConvexPolygon>,
    pub slivers: SliverLog,
    /// Segments that end strictly inside some final cell. Non-empty means the
    /// arrangement has non-convex faces that cannot be represented.
    pub dangling: Vec<usize>,
}

/// Canonical cell order: by centroid, x first.
pub fn sort_by_centroid(cells: &mut [ConvexPolygon]) {
    cells.sort_by(|a, b| a.centroid().lex_cmp(&b.centroid()));
}

/// Refines `cells` by `segments` until no segment crosses a cell from
/// boundary to boundary. A segment only cuts a cell it fully traverses, so
/// T-junctions are honoured.
pub fn refine_cells(cells: &[ConvexPolygon], segments: &[Segment], tol: &Tolerances) -> Result<Refinement, GeomError> {
    for s in segments {
        if !s.a.is_finite() || !s.b.is_finite() {
            return Err(GeomError::NonFinite);
        }
    }
    let mut log = SliverLog::default();
    let mut done = Vec::new();
    let mut work: Vec<ConvexPolygon> = cells.to_vec();
    let slack = 10.0 * tol.eps_geo;
    while let Some(cell) = work.pop() {
        let bb = cell.bbox();
        let mut cut = None;
        for s in segments {
            if s.length() <= tol.eps_geo || !bb.overlaps(&s.bbox(), tol.eps_geo) {
                continue;
            }
            let u = s.direction() * (1.0 / s.length());
            let line = Line::new(s.a, u);
            let Some((t0, t1)) = cell.line_interval(&line) else { continue };
            if t1 - t0 <= slack {
                continue;
            }
            // the chord must be covered by the segment
            if t0 < -slack || t1 > s.length() + slack {
                continue;
            }
            let pieces = cut_polygon(&cell, &line, tol, &mut log)?;
            if pieces.len() == 2 {
                cut = Some(pieces);
                break;
            }
        }
        match cut {
            Some(p) => work.extend(p),
            None => done.push(cell),
        }
    }
    let mut dangling = Vec::new();
    for (k, s) in segments.iter().enumerate() {
        if s.length() <= tol.eps_geo {
            continue;
        }
        let u = s.direction() * (1.0 / s.length());
        let line = Line::new(s.a, u);
        let crosses_interior = done.iter().any(|c| {
            let Some((t0, t1)) = c.line_interval(&line) else { return false };
            let (a, b) = (t0.max(0.0), t1.min(s.length()));
            if b - a <= slack {
                return false;
            }
            let m = line.point + u * (0.5 * (a + b));
            c.distance_to_boundary(m) > slack
        });
        if crosses_interior {
            dangling.push(k);
        }
    }
    sort_by_centroid(&mut done);
    Ok(Refinement { cells: done, slivers: log, dangling })
}

/// Canonical orientation of a line: the direction angle in `[0, π)` and the
/// signed offset of the line along the matching normal.
fn line_key(s: &Segment) -> (f64, f64, Point) {
    let mut u = s.direction() * (1.0 / s.length());
    if u.y < 0.0 || (u.y == 0.0 && u.x < 0.0) {
        u = -u;
    }
    // adding 0.0 turns -0.0 into 0.0
    let theta = u.y.atan2(u.x) + 0.0;
    let (theta, u) = if theta >= core::f64::consts::PI - 1e-15 { (0.0, -u) } else { (theta, u) };
    (theta, u.perp().dot(s.a), u)
}

/// Merges collinear segments that overlap or touch. Zero-length input is
/// dropped. The output is sorted.
pub fn merge_collinear(segments: &[Segment], tol: f64) -> Vec<Segment> {
    let mut keyed: Vec<(f64, f64, Point, Segment)> = segments
        .iter()
        .filter(|s| s.length() > tol)
        .map(|s| {
            let (t, o, u) = line_key(s);
            (t, o, u, *s)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    let mut i = 0;
    // angle tolerance relative to unit length
    let ang_tol = tol;
    while i < keyed.len() {
        let mut j = i + 1;
        while j < keyed.len() && (keyed[j].0 - keyed[i].0).abs() <= ang_tol {
            j += 1;
        }
        // keyed[i..j] share one direction; split it into lines by offset
        let mut group: Vec<(f64, f64, Point, Segment)> = keyed[i..j].to_vec();
        group.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut g0 = 0;
        while g0 < group.len() {
            let mut g1 = g0 + 1;
            while g1 < group.len() && (group[g1].1 - group[g1 - 1].1).abs() <= tol {
                g1 += 1;
            }
            let u = group[g0].2;
            let mut iv: Vec<(f64, f64)> = group[g0..g1]
                .iter()
                .map(|(_, _, _, s)| {
                    let (p, q) = (u.dot(s.a), u.dot(s.b));
                    (p.min(q), p.max(q))
                })
                .collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            let off = group[g0].1;
            let base = u.perp() * off;
            let mut cur = iv[0];
            for &(a, b) in &iv[1..] {
                if a <= cur.1 + tol {
                    cur.1 = cur.1.max(b);
                } else {
                    out.push(Segment::new(base + u * cur.0, base + u * cur.1));
                    cur = (a, b);
                }
            }
            out.push(Segment::new(base + u * cur.0, base + u * cur.1));
            g0 = g1;
        }
        i = j;
    }
    out.sort_by(|a, b| a.a.lex_cmp(&b.a).then(a.b.lex_cmp(&b.b)));
    out
}

fn segment_intersection(s: &Segment, t: &Segment, tol: f64) -> Option<Point> {
    let d1 = s.direction();
    let d2 = t.direction();
    let den = d1.cross(d2);
    if den.abs() <= 1e-14 * d1.norm() * d2.norm() {
        return None;
    }
    let w = t.a - s.a;
    let u = w.cross(d2) / den;
    let v = w.cross(d1) / den;
    let eu = tol / d1.norm();
    let ev = tol / d2.norm();
    if u >= -eu && u <= 1.0 + eu && v >= -ev && v <= 1.0 + ev {
        Some(s.at(u.clamp(0.0, 1.0)))
    } else {
        None
    }
}

/// A point where several singular curves meet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplePoint {
    pub point: Point,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Census {
    /// Largest number of (merged) segments through one point; 1 if no two
    /// segments meet, 0 for an empty input.
    pub max_multiplicity: usize,
    /// Meeting points of two or more segments, sorted.
    pub points: Vec<MultiplePoint>,
}

/// Sparse uniform grid over bounding boxes.
#[derive(Clone, Debug)]
pub struct GridIndex {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl GridIndex {
    /// Indexes `boxes`, aiming at a few boxes per bucket.
    pub fn new(boxes: &[BBox]) -> Self {
        let all = boxes.iter().fold(BBox::from_points(&[]), |acc, b| BBox {
            min: Point::new(acc.min.x.min(b.min.x), acc.min.y.min(b.min.y)),
            max: Point::new(acc.max.x.max(b.max.x), acc.max.y.max(b.max.y)),
        });
        let (origin, w, h) = if boxes.is_empty() {
            (Point::default(), 1.0, 1.0)
        } else {
            (all.min, (all.max.x - all.min.x).max(1e-12), (all.max.y - all.min.y).max(1e-12))
        };
        let target = ((boxes.len() as f64).sqrt().ceil() as usize).clamp(1, 2048);
        let cell = w.max(h) / target as f64;
        let nx = ((w / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((h / cell).ceil() as usize).clamp(1, 4096);
        let mut g = GridIndex {
            origin,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
            stamp: vec![0; boxes.len()],
            epoch: 0,
        };
        for (k, b) in boxes.iter().enumerate() {
            let (i0, j0, i1, j1) = g.range(b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    g.buckets[j * nx + i].push(k as u32);
                }
            }
        }
        g
    }

    fn range(&self, b: &BBox) -> (usize, usize, usize, usize) {
        let f = |v: f64, n: usize| -> usize {
            let c = (v / self.cell).floor();
            if c < 0.0 {
                0
            } else {
                (c as usize).min(n - 1)
            }
        };
        (
            f(b.min.x - self.origin.x, self.nx),
            f(b.min.y - self.origin.y, self.ny),
            f(b.max.x - self.origin.x, self.nx),
            f(b.max.y - self.origin.y, self.ny),
        )
    }

    /// Indices of boxes whose bucket range meets `b`, without duplicates.
    pub fn query(&mut self, b: &BBox, out: &mut Vec<usize>) {
        out.clear();
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let b = b.inflate(1e-12);
        let (i0, j0, i1, j1) = self.range(&b);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &k in &self.buckets[j * self.nx + i] {
                    if self.stamp[k as usize] != self.epoch {
                        self.stamp[k as usize] = self.epoch;
                        out.push(k as usize);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Counts how many segments pass through each point where at least two meet.
/// Collinear overlapping segments are merged first and count once.
pub fn vertex_multiplicity_census(segments: &[Segment], tol: f64) -> Census {
    let merged = merge_collinear(segments, tol);
    if merged.is_empty() {
        return Census::default();
    }
    let boxes: Vec<BBox> = merged.iter().map(|s| s.bbox().inflate(tol)).collect();
    let mut grid = GridIndex::new(&boxes);
    let mut cand = Vec::new();
    let mut found = Vec::new();
    for (i, s) in merged.iter().enumerate() {
        grid.query(&boxes[i], &mut found);
        for &j in &found {
            if j <= i {
                continue;
            }
            if let Some(p) = segment_intersection(s, &merged[j], tol) {
                cand.push(p);
            }
        }
    }
    // cluster candidate points
    cand.sort_by(|a, b| a.lex_cmp(b));
    let mut reps: Vec<Point> = Vec::new();
    for p in cand {
        if let Some(r) = reps.iter().rev().take_while(|r| p.x - r.x <= tol).find(|r| r.dist(p) <= tol) {
            let _ = r;
            continue;
        }
        reps.push(p);
    }
    let mut points = Vec::new();
    let mut best = 1;
    for p in reps {
        let pb = BBox::from_points(&[p]).inflate(tol);
        grid.query(&pb, &mut found);
        let m = found.iter().filter(|&&k| merged[k].distance_to_point(p) <= tol).count();
        if m >= 2 {
            best = best.max(m);
            points.push(MultiplePoint { point: p, multiplicity: m });
        }
    }
    Census { max_multiplicity: best, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn tri() -> ConvexPolygon {
        ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], &tol()).unwrap()
    }

    #[test]
    fn orientation_is_normalised() {
        let p = ConvexPolygon::new(
            vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0)],
            &tol(),
        )
        .unwrap();
        assert_abs_diff_eq!(p.area(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        let t = tol();
        assert!(matches!(
            ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], &t),
            Err(GeomError::Degenerate { .. })
        ));
        let bow = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(ConvexPolygon::new(bow, &t).is_err());
        let dent = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 0.5),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        assert!(matches!(ConvexPolygon::new(dent, &t), Err(GeomError::NotConvex { .. })));
        assert!(matches!(
            ConvexPolygon::new(vec![Point::new(f64::NAN, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], &t),
            Err(GeomError::NonFinite)
        ));
    }

    #[test]
    fn cut_square_on_diagonal() {
        let mut log = SliverLog::default();
        let sq = ConvexPolygon::unit_square();
        let pieces =
            cut_polygon(&sq, &Line::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0)), &tol(), &mut log).unwrap();
        assert_eq!(pieces.len(), 2);
        for p in &pieces {
            assert_abs_diff_eq!(p.area(), 0.5, epsilon = 1e-15);
            assert_eq!(p.vertices().len(), 3);
        }
    }

    #[test]
    fn cut_missing_and_edge_lines_keep_polygon() {
        let mut log = SliverLog::default();
        let sq = ConvexPolygon::unit_square();
        let t = tol();
        let miss = cut_polygon(&sq, &Line::new(Point::new(0.0, 2.0), Point::new(1.0, 0.0)), &t, &mut log).unwrap();
        assert_eq!(miss.len(), 1);
        let edge = cut_polygon(&sq, &Line::new(Point::new(0.0, 1.0), Point::new(1.0, 0.0)), &t, &mut log).unwrap();
        assert_eq!(edge.len(), 1);
        assert_eq!(log.dropped, 0);
        assert!(matches!(
            cut_polygon(&sq, &Line::new(Point::new(0.0, 0.0), Point::new(0.0, 0.0)), &t, &mut log),
            Err(GeomError::ZeroDirection)
        ));
    }

    #[test]
    fn cut_close_to_edge_records_sliver() {
        let mut log = SliverLog::default();
        let sq = ConvexPolygon::unit_square();
        let pieces =
            cut_polygon(&sq, &Line::new(Point::new(0.0, 1.0 - 1e-11), Point::new(1.0, 0.0)), &tol(), &mut log).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(log.dropped, 1);
    }

    #[test]
    fn diameter_examples() {
        let sq = ConvexPolygon::unit_square();
        let d = diameter_along(&sq, Point::new(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(d, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(diameter_along(&tri(), Point::new(1.0, 0.0)).unwrap(), 1.0);
        assert!(diameter_along(&sq, Point::new(0.0, 0.0)).is_err());
        assert_abs_diff_eq!(sq.chord_along(Point::new(1.0, 1.0)), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(tri().chord_along(Point::new(0.0, 1.0)), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn refine_examples() {
        let t = tol();
        let sq = ConvexPolygon::unit_square();
        let s = |a: (f64, f64), b: (f64, f64)| Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1));
        let cross = [s((0.5, 0.0), (0.5, 1.0)), s((0.0, 0.5), (1.0, 0.5))];
        let r = refine_cells(core::slice::from_ref(&sq), &cross, &t).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert!(r.dangling.is_empty());
        // all three lines pass through the centre, so six triangles
        let three = [cross[0], cross[1], s((0.0, 0.0), (1.0, 1.0))];
        let r = refine_cells(core::slice::from_ref(&sq), &three, &t).unwrap();
        assert_eq!(r.cells.len(), 6);
        // T-junction: the second segment stops at the first
        let tj = [s((0.5, 0.0), (0.5, 1.0)), s((0.5, 0.5), (1.0, 0.5))];
        let r = refine_cells(core::slice::from_ref(&sq), &tj, &t).unwrap();
        assert_eq!(r.cells.len(), 3);
        assert!(r.dangling.is_empty());
        // a segment ending in the middle of a face cannot be represented
        let r = refine_cells(&[sq], &[s((0.0, 0.5), (0.5, 0.5))], &t).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.dangling, vec![0]);
    }

    #[test]
    fn intersect_and_clip_segment() {
        let t = tol();
        let mut log = SliverLog::default();
        let a = ConvexPolygon::rect(0.0, 0.0, 2.0, 2.0);
        let b = ConvexPolygon::rect(1.0, 1.0, 3.0, 3.0);
        let c = a.intersect(&b, &t, &mut log).unwrap();
        assert_abs_diff_eq!(c.area(), 1.0, epsilon = 1e-15);
        let d = ConvexPolygon::rect(2.0, 0.0, 3.0, 1.0);
        assert!(a.intersect(&d, &t, &mut log).is_none());
        let s = Segment::new(Point::new(-1.0, 1.0), Point::new(3.0, 1.0));
        let cs = a.clip_segment(&s).unwrap();
        assert_abs_diff_eq!(cs.length(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn affine_algebra() {
        let m = Affine2::new([[2.0, 1.0], [1.0, 1.0]], [0.5, -0.25]);
        let inv = m.inverse().unwrap();
        let p = Point::new(0.3, 0.7);
        let q = inv.apply(m.apply(p));
        assert_abs_diff_eq!(q.x, p.x, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, p.y, epsilon = 1e-15);
        let c = m.compose(&inv);
        assert_abs_diff_eq!(c.apply(p).x, p.x, epsilon = 1e-15);
        let f = m.fixed_point().unwrap();
        assert_abs_diff_eq!(m.apply(f).dist(f), 0.0, epsilon = 1e-14);
        assert!(Affine2::IDENTITY.fixed_point().is_none());
    }

    #[test]
    fn census_counts_concurrent_lines() {
        let s = |a: (f64, f64), b: (f64, f64)| Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1));
        let segs = [
            s((0.5, 0.0), (0.5, 1.0)),
            s((0.0, 0.5), (1.0, 0.5)),
            s((0.0, 0.0), (1.0, 1.0)),
            // duplicate piece of the vertical line, merged away
            s((0.5, 0.2), (0.5, 0.6)),
        ];
        let c = vertex_multiplicity_census(&segs, 1e-9);
        assert_eq!(c.max_multiplicity, 3);
        assert_eq!(c.points.len(), 1);
        let lone = vertex_multiplicity_census(&segs[..1], 1e-9);
        assert_eq!(lone.max_multiplicity, 1);
        assert_eq!(vertex_multiplicity_census(&[], 1e-9).max_multiplicity, 0);
    }

    #[test]
    fn merge_joins_abutting_pieces() {
        let s = |a: (f64, f64), b: (f64, f64)| Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1));
        let m =
            merge_collinear(&[s((0.0, 0.0), (0.5, 0.5)), s((1.0, 1.0), (0.5, 0.5)), s((0.0, 1.0), (1.0, 1.0))], 1e-12);
        assert_eq!(m.len(), 2);
        assert!(m.iter().any(|x| (x.length() - 2f64.sqrt()).abs() < 1e-12));
    }
}
