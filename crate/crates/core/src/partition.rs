//! Dynamical refinements `M_{-k}^n`, singularity-set iterates and the entropy
//! fit from partition counts.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::PartitionError;
use crate::geom::{
    merge_collinear, vertex_multiplicity_census, Affine2, BBox, ConvexPolygon, GridIndex, Point, Segment, SliverLog,
};
use crate::map::PiecewiseAffineMap;

pub const DEFAULT_CELL_CAP: usize = 5_000_000;

/// A cell of `M_{-k}^n` with its symbolic coding.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub polygon: ConvexPolygon,
    /// Branches used by `T, T², …, Tⁿ` on the cell, in time order.
    pub forward: Vec<u16>,
    /// Inverse branches used by `T⁻¹, …, T⁻ᵏ`, in time order.
    pub backward: Vec<u16>,
    /// `Tⁿ` restricted to the cell.
    pub forward_map: Affine2,
    /// `T⁻ᵏ` restricted to the cell.
    pub backward_map: Affine2,
}

impl Cell {
    fn root() -> Self {
        Cell {
            polygon: ConvexPolygon::unit_square(),
            forward: Vec::new(),
            backward: Vec::new(),
            forward_map: Affine2::IDENTITY,
            backward_map: Affine2::IDENTITY,
        }
    }
}

fn sort_cells(cells: &mut Vec<Cell>) {
    let mut keyed: Vec<(Point, Cell)> = cells.drain(..).map(|c| (c.polygon.centroid(), c)).collect();
    keyed.sort_by(|a, b| a.0.lex_cmp(&b.0));
    cells.extend(keyed.into_iter().map(|(_, c)| c));
}

/// One step `M_0^n -> M_0^{n+1}`: each new cell is `T_b⁻¹(M_b⁻ ∩ B)`.
fn forward_step(
    map: &PiecewiseAffineMap,
    cells: &[Cell],
    step: usize,
    cap: usize,
    log: &mut SliverLog,
) -> Result<Vec<Cell>, PartitionError> {
    let mut out = Vec::with_capacity(cells.len() * 2);
    let image_boxes: Vec<BBox> = map.images.iter().map(|p| p.bbox()).collect();
    for c in cells {
        let bb = c.polygon.bbox();
        for (b, im) in map.images.iter().enumerate() {
            if !bb.overlaps(&image_boxes[b], map.tol.eps_geo) {
                continue;
            }
            let Some(piece) = c.polygon.intersect(im, &map.tol, log) else { continue };
            let inv = &map.backward[b];
            let mut forward = Vec::with_capacity(c.forward.len() + 1);
            forward.push(b as u16);
            forward.extend_from_slice(&c.forward);
            out.push(Cell {
                polygon: piece.transform(inv),
                forward,
                backward: Vec::new(),
                forward_map: c.forward_map.compose(&map.forward[b]),
                backward_map: Affine2::IDENTITY,
            });
            if out.len() > cap {
                return Err(PartitionError::CapExceeded { step, projected: out.len(), cap });
            }
        }
    }
    Ok(out)
}

/// `M_0^n` in canonical order.
pub fn forward_cells(map: &PiecewiseAffineMap, n: usize, cap: usize) -> Result<(Vec<Cell>, SliverLog), PartitionError> {
    let mut log = SliverLog::default();
    let mut cells = vec![Cell::root()];
    let mut prev = 1usize;
    for step in 1..=n {
        // growth of the previous step predicts the next one
        let projected = cells.len().saturating_mul(cells.len()) / prev;
        if projected > cap {
            return Err(PartitionError::CapExceeded { step, projected, cap });
        }
        prev = cells.len();
        cells = forward_step(map, &cells, step, cap, &mut log)?;
    }
    sort_cells(&mut cells);
    Ok((cells, log))
}

/// `M_{-k}^0` in canonical order, coded by inverse branches.
pub fn backward_cells(
    map: &PiecewiseAffineMap,
    k: usize,
    cap: usize,
) -> Result<(Vec<Cell>, SliverLog), PartitionError> {
    let (cells, log) = forward_cells(&map.inverse(), k, cap)?;
    let cells = cells
        .into_iter()
        .map(|c| Cell {
            polygon: c.polygon,
            forward: Vec::new(),
            backward: c.forward,
            forward_map: Affine2::IDENTITY,
            backward_map: c.forward_map,
        })
        .collect();
    Ok((cells, log))
}

/// The refinement `M_{-k}^n` together with per-cell diameters.
#[derive(Clone, Debug)]
pub struct PartitionRefinement {
    pub k: usize,
    pub n: usize,
    pub cells: Vec<Cell>,
    pub count: usize,
    /// Meeting points of boundary curves, an upper bound for isolated points.
    /// Only filled in by [`partition_theorem_checks`].
    pub isolated_points: Option<usize>,
    /// Longest chord of each cell along the stable axis.
    pub stable_diameters: Vec<f64>,
    /// Longest chord of each cell along the unstable axis.
    pub unstable_diameters: Vec<f64>,
    pub slivers: SliverLog,
}

/// Builds `M_{-k}^n = {A ∩ B : A ∈ M_0^n, B ∈ M_{-k}^0}`.
pub fn refine(map: &PiecewiseAffineMap, k: usize, n: usize, cap: usize) -> Result<PartitionRefinement, PartitionError> {
    let (fwd, mut log) = forward_cells(map, n, cap)?;
    let (bwd, blog) = backward_cells(map, k, cap)?;
    log.merge(&blog);
    let cells = if k == 0 {
        fwd
    } else if n == 0 {
        bwd
    } else {
        let boxes: Vec<BBox> = bwd.iter().map(|c| c.polygon.bbox()).collect();
        let mut grid = GridIndex::new(&boxes);
        let mut found = Vec::new();
        let mut out = Vec::new();
        for a in &fwd {
            grid.query(&a.polygon.bbox(), &mut found);
            for &j in &found {
                let b = &bwd[j];
                if let Some(p) = a.polygon.intersect(&b.polygon, &map.tol, &mut log) {
                    out.push(Cell {
                        polygon: p,
                        forward: a.forward.clone(),
                        backward: b.backward.clone(),
                        forward_map: a.forward_map,
                        backward_map: b.backward_map,
                    });
                    if out.len() > cap {
                        return Err(PartitionError::CapExceeded { step: k + n, projected: out.len(), cap });
                    }
                }
            }
        }
        sort_cells(&mut out);
        out
    };
    let su = map.stable.axis_vector();
    let uu = map.unstable.axis_vector();
    let stable_diameters = cells.iter().map(|c| c.polygon.chord_along(su)).collect();
    let unstable_diameters = cells.iter().map(|c| c.polygon.chord_along(uu)).collect();
    Ok(PartitionRefinement {
        k,
        n,
        count: cells.len(),
        cells,
        isolated_points: None,
        stable_diameters,
        unstable_diameters,
        slivers: log,
    })
}

/// Counts `#M_0^n` for `n = 1..=n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountSequence {
    /// `counts[i] = #M_0^{i+1}`.
    pub counts: Vec<u64>,
    /// True when the cap stopped the sequence early.
    pub truncated: bool,
    pub slivers: usize,
}

pub fn count_sequence(map: &PiecewiseAffineMap, n_max: usize, cap: usize) -> CountSequence {
    let mut log = SliverLog::default();
    let mut cells = vec![Cell::root()];
    let mut counts = Vec::with_capacity(n_max);
    for step in 1..=n_max {
        match forward_step(map, &cells, step, cap, &mut log) {
            Ok(next) => {
                counts.push(next.len() as u64);
                cells = next;
            }
            Err(_) => return CountSequence { counts, truncated: true, slivers: log.dropped },
        }
    }
    CountSequence { counts, truncated: false, slivers: log.dropped }
}

/// Least-squares entropy fit of `log #M_0^n` against `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HstarEstimate {
    pub counts: Vec<u64>,
    pub hstar: f64,
    pub intercept: f64,
    /// Inclusive range of `n` used in the fit.
    pub fit_window: (usize, usize),
    /// `log count − (intercept + hstar·n)` for every `n`.
    pub residuals: Vec<f64>,
    pub max_window_residual: f64,
    #[serde(rename = "C_sharp_lo")]
    pub c_sharp_lo: f64,
    #[serde(rename = "C_sharp_hi")]
    pub c_sharp_hi: f64,
    /// `min count(n) / (count(n−j) count(j))` over `1 ≤ j ≤ n`.
    pub c1: f64,
}

/// Simple linear regression; returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// `counts[i]` is `#M_0^{i+1}`; the window is an inclusive range of `n`.
pub fn estimate_hstar(counts: &[u64], fit_window: (usize, usize)) -> Result<HstarEstimate, PartitionError> {
    let (lo, hi) = fit_window;
    if lo < 1 || hi < lo || hi - lo + 1 < 4 {
        return Err(PartitionError::InsufficientData { have: hi.saturating_sub(lo) + 1, need: 4 });
    }
    if counts.len() < hi {
        return Err(PartitionError::InsufficientData { have: counts.len(), need: hi });
    }
    if counts.contains(&0) {
        return Err(PartitionError::BadCounts);
    }
    let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|n| (counts[n - 1] as f64).ln()).collect();
    let (hstar, intercept) = linear_fit(&xs, &ys);
    let residuals: Vec<f64> =
        counts.iter().enumerate().map(|(i, &c)| (c as f64).ln() - (intercept + hstar * (i + 1) as f64)).collect();
    let max_window_residual = (lo..=hi).map(|n| residuals[n - 1].abs()).fold(0.0, f64::max);
    let scaled: Vec<f64> = (lo..=hi).map(|n| counts[n - 1] as f64 * (-(n as f64) * hstar).exp()).collect();
    let c_sharp_lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let c_sharp_hi = scaled.iter().copied().fold(0.0, f64::max);
    let c1 = supermultiplicativity(counts);
    Ok(HstarEstimate {
        counts: counts.to_vec(),
        hstar,
        intercept,
        fit_window,
        residuals,
        max_window_residual,
        c_sharp_lo,
        c_sharp_hi,
        c1,
    })
}

/// `min count(n)/(count(n−j)·count(j))` over `1 ≤ j ≤ n ≤ len`, with `count(0) = 1`.
pub fn supermultiplicativity(counts: &[u64]) -> f64 {
    let c = |n: usize| if n == 0 { 1.0 } else { counts[n - 1] as f64 };
    let mut best = f64::INFINITY;
    for n in 1..=counts.len() {
        for j in 1..=n {
            best = best.min(c(n) / (c(n - j) * c(j)));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

/// `S_n^+ = ∪_{i<n} T^{-i} S^+` or `S_n^- = ∪_{i<n} T^i S^-`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularCurveSet {
    pub n: usize,
    pub sign: Sign,
    pub segments: Vec<Segment>,
    /// Iterate `i` that produced each segment.
    pub labels: Vec<u32>,
}

/// Iterates of the singular set. Each piece of `S^±` inside a cell of
/// `M_{-i}^0` (resp. `M_0^i`) is carried by the affine map of that cell;
/// pieces lying on a cell boundary are already present at a lower iterate.
pub fn singular_set(map: &PiecewiseAffineMap, n: usize, sign: Sign) -> SingularCurveSet {
    let (base, m) = match sign {
        Sign::Plus => (&map.s_plus, map.inverse()),
        Sign::Minus => (&map.s_minus, map.clone()),
    };
    let eps = map.tol.eps_snap;
    let mut segments = Vec::new();
    let mut labels = Vec::new();
    let mut log = SliverLog::default();
    let mut cells = vec![Cell::root()];
    for i in 0..n {
        if i > 0 {
            cells = match forward_step(&m, &cells, i, usize::MAX, &mut log) {
                Ok(c) => c,
                Err(_) => break,
            };
        }
        let mut pieces = Vec::new();
        for c in &cells {
            let bb = c.polygon.bbox();
            for s in base {
                if !bb.overlaps(&s.bbox(), eps) {
                    continue;
                }
                let Some(p) = c.polygon.clip_segment(s) else { continue };
                if p.length() <= eps || c.polygon.distance_to_boundary(p.midpoint()) <= eps {
                    continue;
                }
                pieces.push(p.transform(&c.forward_map));
            }
        }
        for s in merge_collinear(&pieces, eps) {
            segments.push(s);
            labels.push(i as u32);
        }
    }
    SingularCurveSet { n, sign, segments, labels }
}

/// Point location over a set of cells.
#[derive(Clone, Debug)]
pub struct CellLocator {
    polys: Vec<ConvexPolygon>,
    grid: GridIndex,
    scratch: Vec<usize>,
}

impl CellLocator {
    pub fn new(polys: Vec<ConvexPolygon>) -> Self {
        let boxes: Vec<BBox> = polys.iter().map(|p| p.bbox()).collect();
        CellLocator { grid: GridIndex::new(&boxes), polys, scratch: Vec::new() }
    }

    /// Index of a cell whose closure contains `p` (the deepest inside wins
    /// on shared boundaries).
    pub fn locate(&mut self, p: Point, tol: f64) -> Option<usize> {
        let pb = BBox::from_points(&[p]).inflate(tol);
        let mut found = core::mem::take(&mut self.scratch);
        self.grid.query(&pb, &mut found);
        let mut best: Option<(usize, f64)> = None;
        for &i in &found {
            let poly = &self.polys[i];
            if poly.contains(p, tol) {
                let depth =
                    if poly.contains(p, 0.0) { poly.distance_to_boundary(p) } else { -poly.distance_to_point(p) };
                if best.map_or(true, |(_, d)| depth > d) {
                    best = Some((i, depth));
                }
            }
        }
        self.scratch = found;
        best.map(|b| b.0)
    }

    /// All cells whose bounding box meets `b`.
    pub fn candidates(&mut self, b: &BBox, out: &mut Vec<usize>) {
        self.grid.query(b, out);
    }

    pub fn polygons(&self) -> &[ConvexPolygon] {
        &self.polys
    }
}

fn share_edge(a: &ConvexPolygon, b: &ConvexPolygon, eps: f64) -> bool {
    for e in a.edges() {
        let d = e.direction();
        let len = d.norm();
        for f in b.edges() {
            // collinear and overlapping with positive length
            if d.cross(f.a - e.a).abs() > eps * len || d.cross(f.b - e.a).abs() > eps * len {
                continue;
            }
            let (t0, t1) = (d.dot(f.a - e.a) / len, d.dot(f.b - e.a) / len);
            let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(len));
            if hi - lo > eps {
                return true;
            }
        }
    }
    false
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Both sides of the partition-count inequalities for one `(k, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub k: usize,
    pub n: usize,
    /// `#P̊_k^n`: classes of equal coding, possibly disconnected.
    pub interior_classes: usize,
    /// Connected components of those classes.
    pub interior_components: usize,
    /// `#M_{-k}^{k+n}`.
    pub refinement_count: usize,
    pub count_inequality_holds: bool,
    /// Meeting points of curves of `S_{k+n}^+ ∪ S_k^-`.
    pub isolated_candidates: usize,
    pub isolated_bound: f64,
    pub isolated_bound_holds: bool,
}

/// Computes `P̊_k^n` as the common refinement of the pullbacks of `M_{-k}^k`
/// and compares it with `M_{-k}^{k+n}`.
pub fn partition_theorem_checks(
    map: &PiecewiseAffineMap,
    k: usize,
    n: usize,
    cap: usize,
) -> Result<TheoremReport, PartitionError> {
    let base = refine(map, k, k, cap)?;
    let fine = refine(map, k, k + n, cap)?;
    let mut loc = CellLocator::new(base.cells.iter().map(|c| c.polygon.clone()).collect());
    let tol = map.tol.eps_snap;
    let mut classes: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    for (idx, c) in fine.cells.iter().enumerate() {
        let mut p = c.polygon.centroid();
        let mut label = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let cell = loc.locate(p, tol).map_or(u32::MAX, |x| x as u32);
            label.push(cell);
            if i < n {
                p = map.forward[c.forward[i] as usize].apply(p);
            }
        }
        classes.entry(label).or_default().push(idx);
    }
    // connected components of each class by shared edges
    let polys: Vec<ConvexPolygon> = fine.cells.iter().map(|c| c.polygon.clone()).collect();
    let boxes: Vec<BBox> = polys.iter().map(|p| p.bbox()).collect();
    let mut grid = GridIndex::new(&boxes);
    let mut class_of = vec![0usize; polys.len()];
    for (ci, members) in classes.values().enumerate() {
        for &m in members {
            class_of[m] = ci;
        }
    }
    let mut parent: Vec<usize> = (0..polys.len()).collect();
    let mut found = Vec::new();
    for i in 0..polys.len() {
        grid.query(&boxes[i].inflate(tol), &mut found);
        for &j in &found {
            if j <= i || class_of[i] != class_of[j] {
                continue;
            }
            if share_edge(&polys[i], &polys[j], tol) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let interior_components = (0..polys.len()).filter(|&i| find(&mut parent, i) == i).count();

    let mut segs = singular_set(map, k + n, Sign::Plus).segments;
    segs.extend(singular_set(map, k, Sign::Minus).segments);
    let census = vertex_multiplicity_census(&segs, tol);
    let counts = count_sequence(map, k + n, cap);
    let sum: f64 = counts.counts.iter().map(|&c| c as f64).sum();
    let isolated_bound = 2.0 * (map.s_plus.len() + map.s_minus.len()) as f64 * sum;
    Ok(TheoremReport {
        k,
        n,
        interior_classes: classes.len(),
        interior_components,
        refinement_count: fine.count,
        count_inequality_holds: classes.len() <= fine.count,
        isolated_candidates: census.points.len(),
        isolated_bound,
        isolated_bound_holds: (census.points.len() as f64) <= isolated_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{refine_cells, Tolerances};
    use crate::map::{builtin, load_map};

    fn load(name: &str) -> PiecewiseAffineMap {
        load_map(&builtin(name).unwrap(), &Tolerances::default()).unwrap()
    }

    #[test]
    fn baker3_refinements() {
        let m = load("baker3");
        assert_eq!(refine(&m, 0, 2, DEFAULT_CELL_CAP).unwrap().count, 9);
        let r = refine(&m, 1, 1, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(r.count, 9);
        for c in &r.cells {
            assert!((c.polygon.area() - 1.0 / 9.0).abs() < 1e-15);
        }
        assert_eq!(count_sequence(&m, 6, DEFAULT_CELL_CAP).counts, vec![3, 9, 27, 81, 243, 729]);
    }

    #[test]
    fn cat_first_level() {
        let m = load("cat");
        let r = refine(&m, 0, 1, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(r.count, 4);
        // point-location cross-check: every sample lands in the cell of its branch
        for i in 0..20 {
            for j in 0..20 {
                let p = Point::new((i as f64 + 0.37) / 20.0, (j as f64 + 0.61) / 20.0);
                let hits = r.cells.iter().filter(|c| c.polygon.contains(p, 0.0)).count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn singular_sets_baker3() {
        let m = load("baker3");
        let s1 = singular_set(&m, 1, Sign::Plus);
        assert_eq!(s1.segments.len(), 2);
        assert!(s1.segments.iter().all(|s| (s.a.x - s.b.x).abs() < 1e-15 && (s.length() - 1.0).abs() < 1e-12));
        let s2 = singular_set(&m, 2, Sign::Plus);
        assert_eq!(s2.segments.len(), 8);
        let mut xs: Vec<f64> = s2.segments.iter().map(|s| s.a.x).collect();
        xs.sort_by(f64::total_cmp);
        let expect = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0].map(|j| j / 9.0);
        for (x, e) in xs.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
        let m1 = singular_set(&m, 1, Sign::Minus);
        assert!(m1.segments.iter().all(|s| (s.a.y - s.b.y).abs() < 1e-15));
    }

    #[test]
    fn arrangement_cross_check() {
        // refining the square by the iterated singular set gives the same cells
        for name in ["baker3", "cat", "baker2u:0.4"] {
            let m = load(name);
            for n in 1..=4 {
                let segs = singular_set(&m, n, Sign::Plus).segments;
                let r = refine_cells(&[ConvexPolygon::unit_square()], &segs, &Tolerances::default()).unwrap();
                let direct = refine(&m, 0, n, DEFAULT_CELL_CAP).unwrap().count;
                assert_eq!(r.cells.len(), direct, "{name} n={n}");
                assert!(r.dangling.is_empty(), "{name} n={n}");
            }
        }
    }

    #[test]
    fn hstar_fit_exact() {
        let c: Vec<u64> = (1..=10).map(|n| 3u64.pow(n)).collect();
        let h = estimate_hstar(&c, (1, 10)).unwrap();
        assert!((h.hstar - 3f64.ln()).abs() < 1e-12);
        assert!(h.max_window_residual < 1e-12);
        assert_eq!(h.c1, 1.0);
        assert!(estimate_hstar(&c, (1, 3)).is_err());
        assert!(estimate_hstar(&c, (5, 12)).is_err());
        assert!(estimate_hstar(&[0, 1, 2, 3], (1, 4)).is_err());
    }

    #[test]
    fn theorem_checks_baker3() {
        let m = load("baker3");
        let r = partition_theorem_checks(&m, 1, 1, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(r.refinement_count, 27);
        assert_eq!(r.interior_classes, 27);
        assert!(r.count_inequality_holds && r.isolated_bound_holds);
    }

    #[test]
    fn cap_is_enforced() {
        let m = load("baker3");
        assert!(matches!(refine(&m, 0, 5, 100), Err(PartitionError::CapExceeded { .. })));
        let s = count_sequence(&m, 8, 100);
        assert!(s.truncated);
        assert_eq!(s.counts, vec![3, 9, 27, 81]);
    }
}
