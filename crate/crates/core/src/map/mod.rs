//! Piecewise affine maps of the unit square or the torus, their loading and
//! validation, and the inverse map.

mod builtin;
pub mod cert;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use builtin::{builtin, list_builtins, BuiltinInfo};

use crate::error::MapError;
use crate::geom::{merge_collinear, Affine2, ConvexPolygon, Point, Segment, SliverLog, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ambient {
    #[serde(alias = "unit_square")]
    Square,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub stable_axis_deg: f64,
    pub unstable_axis_deg: f64,
    pub half_width_deg: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declarations {
    #[serde(default)]
    pub mixing: bool,
    #[serde(default)]
    pub smooth_srb: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDoc {
    pub domain: usize,
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

/// Serialisable description of a map, as read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub name: String,
    pub ambient: Ambient,
    pub domains: Vec<Vec<[f64; 2]>>,
    pub branches: Vec<BranchDoc>,
    #[serde(default)]
    pub cones: Option<ConeSpec>,
    #[serde(default)]
    pub declarations: Declarations,
}

/// A cone of directions `axis ± half_width`, as lines (mod π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    /// Axis angle in radians.
    pub axis: f64,
    /// Half opening in radians, below π/2.
    pub half_width: f64,
}

/// Wraps an angle to `(-π/2, π/2]`, i.e. compares lines rather than rays.
pub fn wrap_line_angle(a: f64) -> f64 {
    let mut t = a % PI;
    if t > PI / 2.0 {
        t -= PI;
    } else if t <= -PI / 2.0 {
        t += PI;
    }
    t
}

impl Cone {
    pub fn from_degrees(axis_deg: f64, half_width_deg: f64) -> Self {
        Cone { axis: axis_deg.to_radians(), half_width: half_width_deg.to_radians() }
    }

    pub fn axis_vector(&self) -> Point {
        Point::from_angle(self.axis)
    }

    /// Angle of `v` from the axis, as lines, in `[0, π/2]`.
    pub fn offset_of(&self, v: Point) -> f64 {
        wrap_line_angle(v.y.atan2(v.x) - self.axis).abs()
    }

    pub fn contains(&self, v: Point, slack: f64) -> bool {
        self.offset_of(v) <= self.half_width + slack
    }

    pub fn edges(&self) -> [Point; 2] {
        [Point::from_angle(self.axis - self.half_width), Point::from_angle(self.axis + self.half_width)]
    }
}

/// A validated piecewise affine map. Branch `b` acts on `domains[b]` by
/// `forward[b]` and maps it onto `images[b]`.
#[derive(Clone, Debug)]
pub struct PiecewiseAffineMap {
    pub name: String,
    pub ambient: Ambient,
    pub domains: Vec<ConvexPolygon>,
    pub images: Vec<ConvexPolygon>,
    pub forward: Vec<Affine2>,
    pub backward: Vec<Affine2>,
    pub stable: Cone,
    pub unstable: Cone,
    pub declarations: Declarations,
    pub tol: Tolerances,
    /// Discontinuity curves of the map (domain boundaries, plus the seams on the torus).
    pub s_plus: Vec<Segment>,
    /// Discontinuity curves of the inverse.
    pub s_minus: Vec<Segment>,
    /// Contraction factor of each branch along its stable direction.
    pub stable_jacobian: Vec<f64>,
    /// Expansion factor of each branch along its unstable direction.
    pub unstable_jacobian: Vec<f64>,
}

/// Real eigenvalues of a 2x2 matrix, larger modulus first.
pub fn eigenvalues(l: &[[f64; 2]; 2]) -> Option<(f64, f64)> {
    let tr = l[0][0] + l[1][1];
    let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (a, b) = ((tr + s) / 2.0, (tr - s) / 2.0);
    if a.abs() >= b.abs() {
        Some((a, b))
    } else {
        Some((b, a))
    }
}

/// Eigenvector for a real eigenvalue `ev` of `l`.
pub fn eigenvector(l: &[[f64; 2]; 2], ev: f64) -> Point {
    let r0 = Point::new(l[0][0] - ev, l[0][1]);
    let r1 = Point::new(l[1][0], l[1][1] - ev);
    let r = if r0.norm() >= r1.norm() { r0 } else { r1 };
    if r.norm() == 0.0 {
        return Point::new(1.0, 0.0);
    }
    let v = Point::new(-r.y, r.x);
    v.normalized().unwrap_or(Point::new(1.0, 0.0))
}

fn on_square_boundary(s: &Segment, eps: f64) -> bool {
    let on = |f: fn(Point) -> f64, c: f64| (f(s.a) - c).abs() <= eps && (f(s.b) - c).abs() <= eps;
    on(|p| p.x, 0.0) || on(|p| p.x, 1.0) || on(|p| p.y, 0.0) || on(|p| p.y, 1.0)
}

fn interior_edges(polys: &[ConvexPolygon], ambient: Ambient, eps: f64) -> Vec<Segment> {
    let mut segs: Vec<Segment> = polys.iter().flat_map(|p| p.edges()).filter(|e| !on_square_boundary(e, eps)).collect();
    if ambient == Ambient::Torus {
        segs.extend(ConvexPolygon::unit_square().edges());
    }
    merge_collinear(&segs, 1e-9)
}

fn check_tiling(polys: &[ConvexPolygon], tol: &Tolerances, images: bool) -> Result<(), MapError> {
    let mut log = SliverLog::default();
    for a in 0..polys.len() {
        for b in a + 1..polys.len() {
            if let Some(p) = polys[a].intersect(&polys[b], tol, &mut log) {
                let area = p.area();
                if area > 1e-10 {
                    return Err(if images {
                        MapError::ImagesOverlap { a, b, area }
                    } else {
                        MapError::DomainsOverlap { a, b, area }
                    });
                }
            }
        }
    }
    let covered: f64 = polys.iter().map(|p| p.area()).sum();
    if (covered - 1.0).abs() > 1e-9 {
        return Err(if images {
            MapError::ImagesDoNotCover { covered }
        } else {
            MapError::DomainsDoNotCover { covered }
        });
    }
    Ok(())
}

fn inside_square(p: &ConvexPolygon, eps: f64) -> bool {
    p.vertices().iter().all(|v| v.x >= -eps && v.x <= 1.0 + eps && v.y >= -eps && v.y <= 1.0 + eps)
}

/// Checks that every segment direction stays outside `cone`.
fn check_transversal(segs: &[Segment], cone: &Cone, which: &'static str) -> Result<(), MapError> {
    for (index, s) in segs.iter().enumerate() {
        let off = cone.offset_of(s.direction());
        if off <= cone.half_width {
            return Err(MapError::NotTransversal { which, index, angle_deg: off.to_degrees() });
        }
    }
    Ok(())
}

/// Validates a map document and builds the map.
pub fn load_map(doc: &MapDocument, tol: &Tolerances) -> Result<PiecewiseAffineMap, MapError> {
    let mut domains = Vec::with_capacity(doc.domains.len());
    for (index, d) in doc.domains.iter().enumerate() {
        let pts = d.iter().map(|p| Point::new(p[0], p[1])).collect();
        let poly = ConvexPolygon::new(pts, tol).map_err(|source| MapError::InvalidDomain { index, source })?;
        if !inside_square(&poly, 1e-12) {
            return Err(MapError::OutsideAmbient { index });
        }
        domains.push(poly);
    }
    let mut forward: Vec<Option<Affine2>> = alloc::vec![None; domains.len()];
    let mut counts = alloc::vec![0usize; domains.len()];
    for (branch, b) in doc.branches.iter().enumerate() {
        if b.domain >= domains.len() {
            return Err(MapError::MissingDomain { branch, domain: b.domain });
        }
        if b.linear.iter().flatten().chain(b.offset.iter()).any(|v| !v.is_finite()) {
            return Err(MapError::InvalidParameter(format!("branch {branch} has non-finite coefficients")));
        }
        counts[b.domain] += 1;
        forward[b.domain] = Some(Affine2::new(b.linear, b.offset));
    }
    if let Some((domain, &count)) = counts.iter().enumerate().find(|(_, &c)| c != 1) {
        return Err(MapError::BranchCount { domain, count });
    }
    let forward: Vec<Affine2> = forward.into_iter().map(|f| f.unwrap()).collect();
    let mut backward = Vec::with_capacity(forward.len());
    for (branch, f) in forward.iter().enumerate() {
        let det = f.det();
        if det.abs() < 1e-12 {
            return Err(MapError::NonInvertible { branch, det });
        }
        backward.push(f.inverse().ok_or(MapError::NonInvertible { branch, det })?);
    }
    let images: Vec<ConvexPolygon> = domains.iter().zip(&forward).map(|(d, f)| d.transform(f)).collect();
    for (index, im) in images.iter().enumerate() {
        if !inside_square(im, 1e-9) {
            return Err(MapError::BadImage { index });
        }
    }
    check_tiling(&domains, tol, false)?;
    check_tiling(&images, tol, true)?;

    let mut stable_jacobian = Vec::new();
    let mut unstable_jacobian = Vec::new();
    for (branch, f) in forward.iter().enumerate() {
        let (lu, ls) = eigenvalues(&f.linear).ok_or(MapError::NotHyperbolic { branch })?;
        if !(lu.abs() > 1.0 && ls.abs() < 1.0) {
            return Err(MapError::NotHyperbolic { branch });
        }
        unstable_jacobian.push(lu.abs());
        stable_jacobian.push(ls.abs());
    }
    let cones = match doc.cones {
        Some(c) => c,
        None => {
            let l = &forward[0].linear;
            let (lu, ls) = eigenvalues(l).unwrap();
            let u = eigenvector(l, lu);
            let s = eigenvector(l, ls);
            ConeSpec {
                stable_axis_deg: s.y.atan2(s.x).to_degrees(),
                unstable_axis_deg: u.y.atan2(u.x).to_degrees(),
                half_width_deg: 10.0,
            }
        }
    };
    if !(cones.half_width_deg > 0.0 && cones.half_width_deg < 45.0) {
        return Err(MapError::InvalidParameter(format!("cone half width {} deg", cones.half_width_deg)));
    }
    let stable = Cone::from_degrees(cones.stable_axis_deg, cones.half_width_deg);
    let unstable = Cone::from_degrees(cones.unstable_axis_deg, cones.half_width_deg);
    let s_plus = interior_edges(&domains, doc.ambient, 1e-12);
    let s_minus = interior_edges(&images, doc.ambient, 1e-9);
    check_transversal(&s_plus, &unstable, "forward")?;
    check_transversal(&s_minus, &stable, "backward")?;

    let map = PiecewiseAffineMap {
        name: doc.name.clone(),
        ambient: doc.ambient,
        domains,
        images,
        forward,
        backward,
        stable,
        unstable,
        declarations: doc.declarations,
        tol: *tol,
        s_plus,
        s_minus,
        stable_jacobian,
        unstable_jacobian,
    };
    cert::check_cones(&map)?;
    Ok(map)
}

impl PiecewiseAffineMap {
    pub fn num_branches(&self) -> usize {
        self.domains.len()
    }

    /// Branch whose closed domain contains `p` (the first one on shared edges).
    pub fn branch_of(&self, p: Point) -> Option<usize> {
        let eps = self.tol.eps_geo;
        self.domains
            .iter()
            .position(|d| d.contains(p, 0.0))
            .or_else(|| self.domains.iter().position(|d| d.contains(p, eps)))
    }

    pub fn apply(&self, p: Point) -> Option<Point> {
        self.branch_of(p).map(|b| self.forward[b].apply(p))
    }

    pub fn apply_inverse(&self, p: Point) -> Option<Point> {
        let eps = self.tol.eps_geo;
        let b = self
            .images
            .iter()
            .position(|d| d.contains(p, 0.0))
            .or_else(|| self.images.iter().position(|d| d.contains(p, eps)))?;
        Some(self.backward[b].apply(p))
    }

    /// The inverse as a map in its own right: images become domains and
    /// the cones trade places.
    pub fn inverse(&self) -> PiecewiseAffineMap {
        PiecewiseAffineMap {
            name: format!("{}^-1", self.name),
            ambient: self.ambient,
            domains: self.images.clone(),
            images: self.domains.clone(),
            forward: self.backward.clone(),
            backward: self.forward.clone(),
            stable: self.unstable,
            unstable: self.stable,
            declarations: self.declarations,
            tol: self.tol,
            s_plus: self.s_minus.clone(),
            s_minus: self.s_plus.clone(),
            stable_jacobian: self.unstable_jacobian.iter().map(|j| 1.0 / j).collect(),
            unstable_jacobian: self.stable_jacobian.iter().map(|j| 1.0 / j).collect(),
        }
    }

    /// Diameter of the ambient space in its own metric.
    pub fn diameter(&self) -> f64 {
        match self.ambient {
            Ambient::Square => 2f64.sqrt(),
            Ambient::Torus => 2f64.sqrt() / 2.0,
        }
    }

    /// Round trip back to a document.
    pub fn to_document(&self) -> MapDocument {
        MapDocument {
            name: self.name.clone(),
            ambient: self.ambient,
            domains: self.domains.iter().map(|d| d.vertices().iter().map(|p| [p.x, p.y]).collect()).collect(),
            branches: self
                .forward
                .iter()
                .enumerate()
                .map(|(domain, f)| BranchDoc { domain, linear: f.linear, offset: f.offset })
                .collect(),
            cones: Some(ConeSpec {
                stable_axis_deg: self.stable.axis.to_degrees(),
                unstable_axis_deg: self.unstable.axis.to_degrees(),
                half_width_deg: self.stable.half_width.to_degrees(),
            }),
            declarations: self.declarations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn builtins_load() {
        for info in list_builtins() {
            let m = load_map(&builtin(info.example).unwrap(), &tol()).unwrap();
            let area: f64 = m.images.iter().map(|p| p.area()).sum();
            assert!((area - 1.0).abs() < 1e-12, "{}", info.name);
        }
    }

    #[test]
    fn forward_inverse_round_trip() {
        let m = load_map(&builtin("cat").unwrap(), &tol()).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.7, 0.05), (0.33, 0.91), (0.9, 0.9)] {
            let p = Point::new(x, y);
            let q = m.apply(p).unwrap();
            let back = m.apply_inverse(q).unwrap();
            assert!(back.dist(p) < 1e-14);
            // cat map mod 1
            let (ex, ey) = ((2.0 * x + y) % 1.0, (x + y) % 1.0);
            assert!((q.x - ex).abs() < 1e-14 && (q.y - ey).abs() < 1e-14);
        }
        let inv = m.inverse();
        assert_eq!(inv.inverse().domains, m.domains);
    }

    #[test]
    fn baker_images() {
        let m = load_map(&builtin("baker3").unwrap(), &tol()).unwrap();
        let q = m.apply(Point::new(0.5, 0.3)).unwrap();
        assert!((q.x - 0.5).abs() < 1e-15 && (q.y - 1.3 / 3.0).abs() < 1e-15);
        assert_eq!(m.s_plus.len(), 2);
        assert_eq!(m.s_minus.len(), 2);
        assert!((m.stable_jacobian[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    fn doc_with(linear: [[f64; 2]; 2]) -> MapDocument {
        MapDocument {
            name: "t".into(),
            ambient: Ambient::Square,
            domains: alloc::vec![alloc::vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]],
            branches: alloc::vec![BranchDoc { domain: 0, linear, offset: [0.0, 0.0] }],
            cones: None,
            declarations: Declarations::default(),
        }
    }

    #[test]
    fn rejects_invalid_maps() {
        let t = tol();
        assert!(matches!(load_map(&doc_with([[1.0, 0.0], [0.0, 1.0]]), &t), Err(MapError::NotHyperbolic { .. })));
        assert!(matches!(load_map(&doc_with([[0.0, 0.0], [0.0, 0.0]]), &t), Err(MapError::NonInvertible { .. })));
        // expands the square out of itself
        assert!(matches!(load_map(&doc_with([[2.0, 0.0], [0.0, 0.5]]), &t), Err(MapError::BadImage { .. })));
        let mut d = builtin("baker3").unwrap();
        d.branches.pop();
        assert!(matches!(load_map(&d, &t), Err(MapError::BranchCount { .. })));
        let mut d = builtin("baker3").unwrap();
        d.domains[0][1] = [0.5, 0.0];
        d.domains[0][2] = [0.5, 1.0];
        assert!(load_map(&d, &t).is_err());
        // a cone that contains the singular lines
        let mut d = builtin("baker3").unwrap();
        d.cones = Some(ConeSpec { stable_axis_deg: 0.0, unstable_axis_deg: 90.0, half_width_deg: 10.0 });
        assert!(load_map(&d, &t).is_err());
    }

    #[test]
    fn line_angles() {
        assert!((wrap_line_angle(PI) - 0.0).abs() < 1e-15);
        assert!((wrap_line_angle(3.0 * PI / 4.0) + PI / 4.0).abs() < 1e-15);
        let c = Cone::from_degrees(0.0, 10.0);
        assert!(c.contains(Point::new(-1.0, 0.1), 0.0));
        assert!(!c.contains(Point::new(0.0, 1.0), 0.0));
    }
}
