//! Certificates for the standing hypotheses: uniform hyperbolicity with
//! invariant cones, and the complexity condition relating singularity
//! multiplicity to expansion.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{Cone, PiecewiseAffineMap};
use crate::error::MapError;
use crate::geom::{vertex_multiplicity_census, Point};

/// Extremes of `|M v| / |v|` for unit `v` in the cone.
///
/// `|M v(θ)|²` is a quadratic form in `(cos θ, sin θ)`, so its extrema on an
/// angular interval sit at the endpoints or at the eigen-directions of `MᵀM`.
pub fn stretch_range(m: &[[f64; 2]; 2], cone: &Cone) -> (f64, f64) {
    let g00 = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let g11 = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let g01 = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let phi = 0.5 * (2.0 * g01).atan2(g00 - g11);
    let mut cands = vec![cone.axis - cone.half_width, cone.axis + cone.half_width];
    for crit in [phi, phi + core::f64::consts::FRAC_PI_2] {
        let off = super::wrap_line_angle(crit - cone.axis);
        if off.abs() <= cone.half_width {
            cands.push(cone.axis + off);
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for t in cands {
        let (c, s) = (t.cos(), t.sin());
        let v = (g00 * c * c + 2.0 * g01 * c * s + g11 * s * s).max(0.0).sqrt();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn apply(m: &[[f64; 2]; 2], v: Point) -> Point {
    Point::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
}

/// Smallest angular margin by which `m` maps `cone` into itself; negative
/// when some boundary ray escapes.
pub fn invariance_margin(m: &[[f64; 2]; 2], cone: &Cone) -> f64 {
    let mut margin = f64::INFINITY;
    for v in cone.edges().into_iter().chain([cone.axis_vector()]) {
        let w = apply(m, v);
        margin = margin.min(cone.half_width - cone.offset_of(w));
    }
    // the image arc must not sweep through the far side of the circle: the
    // axis image has to sit between the edge images
    let [e0, e1] = cone.edges();
    let (w0, w1, wa) = (apply(m, e0), apply(m, e1), apply(m, cone.axis_vector()));
    let s0 = w0.cross(wa).signum();
    let s1 = wa.cross(w1).signum();
    if s0 != s1 {
        margin = margin.min(-1.0);
    }
    margin
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchCert {
    pub branch: usize,
    /// Min stretch of DT on the unstable cone.
    pub unstable_min: f64,
    /// Min stretch of DT⁻¹ on the stable cone.
    pub stable_inverse_min: f64,
    pub kappa_inf: f64,
    pub kappa_sup: f64,
    pub unstable_margin_deg: f64,
    pub stable_margin_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCert {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub kappa: f64,
    pub kappa_sup: f64,
    pub unstable_invariant: bool,
    pub stable_invariant: bool,
    pub cone_margin_deg: f64,
    #[serde(rename = "C_e")]
    pub c_e: f64,
    #[serde(rename = "C_d")]
    pub c_d: f64,
    pub branches: Vec<BranchCert>,
}

impl HyperbolicityCert {
    pub fn certified(&self) -> bool {
        self.lambda > 1.0 && self.kappa > 0.0 && self.kappa < 1.0 && self.unstable_invariant && self.stable_invariant
    }
}

pub(crate) fn check_cones(map: &PiecewiseAffineMap) -> Result<(), MapError> {
    for (branch, (f, b)) in map.forward.iter().zip(&map.backward).enumerate() {
        if invariance_margin(&f.linear, &map.unstable) <= 0.0 {
            return Err(MapError::CertificationFailed {
                branch,
                reason: "DT does not map the unstable cone into itself",
            });
        }
        if invariance_margin(&b.linear, &map.stable) <= 0.0 {
            return Err(MapError::CertificationFailed {
                branch,
                reason: "DT^-1 does not map the stable cone into itself",
            });
        }
        let (lo, _) = stretch_range(&f.linear, &map.unstable);
        let (slo, _) = stretch_range(&b.linear, &map.stable);
        if lo <= 1.0 || slo <= 1.0 {
            return Err(MapError::CertificationFailed { branch, reason: "cone vectors are not expanded" });
        }
    }
    Ok(())
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Worst ratio `min_{v∈cone} |M_w v| / Λ^n` over all products of length
/// `1..=depth` of the given matrices.
fn worst_product_ratio(mats: &[[[f64; 2]; 2]], cone: &Cone, lambda: f64, depth: usize) -> f64 {
    let mut worst = f64::INFINITY;
    let mut layer: Vec<[[f64; 2]; 2]> = vec![[[1.0, 0.0], [0.0, 1.0]]];
    for n in 1..=depth {
        let mut next = Vec::with_capacity(layer.len() * mats.len());
        for p in &layer {
            for m in mats {
                let q = mat_mul(m, p);
                let (lo, _) = stretch_range(&q, cone);
                worst = worst.min(lo / lambda.powi(n as i32));
                next.push(q);
            }
        }
        layer = next;
        if layer.len() > 4096 {
            break;
        }
    }
    worst
}

/// Expansion and contraction constants of the map on its cones.
pub fn hyperbolicity_certificate(map: &PiecewiseAffineMap) -> Result<HyperbolicityCert, MapError> {
    let mut branches = Vec::new();
    for (branch, (f, b)) in map.forward.iter().zip(&map.backward).enumerate() {
        let (unstable_min, _) = stretch_range(&f.linear, &map.unstable);
        let (stable_inverse_min, _) = stretch_range(&b.linear, &map.stable);
        let (kappa_inf, kappa_sup) = stretch_range(&f.linear, &map.stable);
        branches.push(BranchCert {
            branch,
            unstable_min,
            stable_inverse_min,
            kappa_inf,
            kappa_sup,
            unstable_margin_deg: invariance_margin(&f.linear, &map.unstable).to_degrees(),
            stable_margin_deg: invariance_margin(&b.linear, &map.stable).to_degrees(),
        });
    }
    let lambda = branches.iter().map(|c| c.unstable_min.min(c.stable_inverse_min)).fold(f64::INFINITY, f64::min);
    let kappa = branches.iter().map(|c| c.kappa_inf).fold(f64::INFINITY, f64::min);
    let kappa_sup = branches.iter().map(|c| c.kappa_sup).fold(0.0, f64::max);
    let unstable_margin = branches.iter().map(|c| c.unstable_margin_deg).fold(f64::INFINITY, f64::min);
    let stable_margin = branches.iter().map(|c| c.stable_margin_deg).fold(f64::INFINITY, f64::min);
    let fwd: Vec<_> = map.forward.iter().map(|f| f.linear).collect();
    let bwd: Vec<_> = map.backward.iter().map(|f| f.linear).collect();
    let depth = 6;
    let c_e = worst_product_ratio(&fwd, &map.unstable, lambda, depth)
        .min(worst_product_ratio(&bwd, &map.stable, lambda, depth))
        .min(1.0);
    let cert = HyperbolicityCert {
        lambda,
        kappa,
        kappa_sup,
        unstable_invariant: unstable_margin > 0.0,
        stable_invariant: stable_margin > 0.0,
        cone_margin_deg: unstable_margin.min(stable_margin),
        c_e,
        c_d: 0.0,
        branches,
    };
    if !cert.certified() {
        let branch = cert
            .branches
            .iter()
            .find(|c| c.unstable_margin_deg <= 0.0 || c.stable_margin_deg <= 0.0 || c.unstable_min <= 1.0)
            .map_or(0, |c| c.branch);
        return Err(MapError::CertificationFailed { branch, reason: "hyperbolicity constants out of range" });
    }
    Ok(cert)
}

/// Certified data for the complexity hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCert {
    /// `K(n)` for `n = 1..=n_max`: max number of curves of `S_n^+`, or of `S_n^-`, through one point.
    #[serde(rename = "K_of_n")]
    pub k_of_n: Vec<usize>,
    pub delta0: f64,
    /// Max number of pieces of `T⁻¹W` over the stable segment grid.
    #[serde(rename = "K1_delta0")]
    pub k1_delta0: usize,
    pub alpha0: f64,
    /// Smallest `n` with `(Λκ^α₀)^n > K(n)`, if any within `n_max`.
    pub n0: Option<usize>,
    pub rho: f64,
    /// Smallest `m` with `K_m Λ^{-m} κ^{-α₀ m} < 1`.
    pub min_iterate_m: Option<usize>,
    /// Per grid value of α₀: `(α₀, n₀, ρ)`.
    pub alpha_scan: Vec<(f64, Option<usize>, f64)>,
    pub lambda: f64,
    pub kappa: f64,
    pub valid: bool,
    /// Largest `(Λκ^α₀)^n / K(n)` seen, reported when nothing certifies.
    pub best_margin: f64,
}

/// Largest number of pieces `T^{-m}W` over the stable grid with `|W| ≤ δ₀`.
pub fn max_fragments(map: &PiecewiseAffineMap, delta0: f64, m: usize, lattice: usize) -> usize {
    let segs = crate::curves::stable_segment_grid(map, delta0, lattice);
    segs.iter().map(|w| crate::curves::pull_back_n(map, w.segment(), m).len()).max().unwrap_or(1)
}

/// Checks the complexity hypothesis on a grid of α₀ values. The chosen α₀ is
/// the largest grid value that certifies, preferring those with ρ < 1.
pub fn complexity_certificate(
    map: &PiecewiseAffineMap,
    delta0: f64,
    alpha_grid: &[f64],
    n_max: usize,
) -> Result<ComplexityCert, MapError> {
    if !(delta0 > 0.0) || n_max == 0 || alpha_grid.is_empty() {
        return Err(MapError::InvalidParameter("complexity certificate needs delta0 > 0, n_max >= 1, alphas".into()));
    }
    let hyp = hyperbolicity_certificate(map)?;
    let (lambda, kappa) = (hyp.lambda, hyp.kappa);
    let eps = map.tol.eps_snap;
    let mut k_of_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        // curves of S_n^+ and of S_n^- are counted separately
        let k = [crate::partition::Sign::Plus, crate::partition::Sign::Minus]
            .into_iter()
            .map(|s| {
                vertex_multiplicity_census(&crate::partition::singular_set(map, n, s).segments, eps).max_multiplicity
            })
            .max()
            .unwrap_or(1);
        k_of_n.push(k.max(1));
    }
    let lattice = 10;
    let k1 = max_fragments(map, delta0, 1, lattice);
    let mut scan = Vec::new();
    let mut best_margin: f64 = 0.0;
    for &a in alpha_grid {
        let base = lambda * kappa.powf(a);
        let mut n0 = None;
        if base > 1.0 {
            for (i, &k) in k_of_n.iter().enumerate() {
                let n = i + 1;
                let lhs = base.powi(n as i32);
                best_margin = best_margin.max(lhs / k as f64);
                if lhs > k as f64 {
                    n0 = Some(n);
                    break;
                }
            }
        }
        let rho = k1 as f64 / lambda * kappa.powf(-a);
        scan.push((a, n0, rho));
    }
    let pick = scan
        .iter()
        .filter(|s| s.1.is_some() && s.2 < 1.0)
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .or_else(|| scan.iter().filter(|s| s.1.is_some()).max_by(|x, y| x.0.total_cmp(&y.0)))
        .or_else(|| scan.iter().min_by(|x, y| x.0.total_cmp(&y.0)))
        .copied()
        .unwrap();
    let (alpha0, n0, rho) = pick;
    let mut min_iterate_m = None;
    for m in 1..=n_max.min(6) {
        let km = max_fragments(map, delta0, m, lattice) as f64;
        if km * lambda.powi(-(m as i32)) * kappa.powf(-alpha0 * m as f64) < 1.0 {
            min_iterate_m = Some(m);
            break;
        }
    }
    let valid = n0.is_some() && lambda * kappa.powf(alpha0) > 1.0;
    Ok(ComplexityCert {
        k_of_n,
        delta0,
        k1_delta0: k1,
        alpha0,
        n0,
        rho,
        min_iterate_m,
        alpha_scan: scan,
        lambda,
        kappa,
        valid,
        best_margin,
    })
}

/// Default δ₀: the largest grid value with `K₁(δ₀) Λ⁻¹ κ^{-α₀} < 1`.
pub fn default_delta0(map: &PiecewiseAffineMap, alpha0: f64, grid: &[f64]) -> Option<f64> {
    let hyp = hyperbolicity_certificate(map).ok()?;
    let mut best = None;
    for &d in grid {
        let k1 = max_fragments(map, d, 1, 10) as f64;
        if k1 / hyp.lambda * hyp.kappa.powf(-alpha0) < 1.0 && best.map_or(true, |b| d > b) {
            best = Some(d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Tolerances;
    use crate::map::{builtin, load_map, ConeSpec};

    fn load(name: &str, width: Option<f64>) -> PiecewiseAffineMap {
        let mut d = builtin(name).unwrap();
        if let (Some(w), Some(c)) = (width, d.cones.as_mut()) {
            c.half_width_deg = w;
        }
        load_map(&d, &Tolerances::default()).unwrap()
    }

    #[test]
    fn baker3_axis_cones() {
        let c = hyperbolicity_certificate(&load("baker3", Some(1e-6))).unwrap();
        assert!((c.lambda - 3.0).abs() < 1e-9);
        assert!((c.kappa - 1.0 / 3.0).abs() < 1e-12);
        assert!(c.c_e >= (2.0 * 1e-6f64.to_radians()).cos() - 1e-12);
        // with the default 10 degree cones the bound is cos-corrected
        let w = 10f64.to_radians();
        let c = hyperbolicity_certificate(&load("baker3", None)).unwrap();
        let closed = (9.0 * w.cos().powi(2) + w.sin().powi(2) / 9.0).sqrt();
        assert!((c.lambda - closed).abs() < 1e-12);
        assert!(c.cone_margin_deg > 0.0);
    }

    #[test]
    fn baker2u_and_cat_constants() {
        let c = hyperbolicity_certificate(&load("baker2u:0.4", Some(1e-6))).unwrap();
        assert!((c.lambda - 5.0 / 3.0).abs() < 1e-9);
        assert!((c.kappa - 0.4).abs() < 1e-12);
        let c = hyperbolicity_certificate(&load("cat", None)).unwrap();
        let la = (3.0 + 5f64.sqrt()) / 2.0;
        assert!(c.lambda < la && c.lambda > 0.95 * la);
        assert!(c.kappa_sup > c.kappa);
    }

    #[test]
    fn jacobian_bookkeeping() {
        for name in ["baker3", "cat", "baker2u:0.4"] {
            let m = load(name, None);
            for b in 0..m.num_branches() {
                let prod = m.stable_jacobian[b] * m.unstable_jacobian[b];
                assert!((prod - m.forward[b].det().abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stretch_range_matches_sampling() {
        let m = [[2.0, 1.0], [1.0, 1.0]];
        let cone = Cone::from_degrees(20.0, 30.0);
        let (lo, hi) = stretch_range(&m, &cone);
        let (mut slo, mut shi) = (f64::INFINITY, 0.0f64);
        for i in 0..=10000 {
            let t = cone.axis - cone.half_width + 2.0 * cone.half_width * i as f64 / 10000.0;
            let v = apply(&m, Point::from_angle(t)).norm();
            slo = slo.min(v);
            shi = shi.max(v);
        }
        assert!((lo - slo).abs() < 1e-6 && (hi - shi).abs() < 1e-6);
        assert!(lo <= slo + 1e-12 && hi >= shi - 1e-12);
    }

    #[test]
    fn baker3_complexity() {
        let m = load("baker3", None);
        let c = complexity_certificate(&m, 0.3, &[0.1, 0.2, 0.3], 4).unwrap();
        assert!(c.k_of_n.iter().all(|&k| k == 1));
        assert_eq!(c.n0, Some(1));
        assert_eq!(c.k1_delta0, 2);
        assert!(c.valid);
        assert!(c.rho < 1.0);
    }

    #[test]
    fn baker2u_needs_iterates() {
        let m = load("baker2u:0.4", Some(1e-6));
        let c = complexity_certificate(&m, 0.3, &[0.05], 3).unwrap();
        assert_eq!(c.n0, Some(1));
        assert!(c.rho > 1.0);
        assert!(c.min_iterate_m.map_or(true, |m| m >= 2));
    }

    #[test]
    fn rejects_wide_cone() {
        let mut d = builtin("cat").unwrap();
        d.cones = Some(ConeSpec { stable_axis_deg: 0.0, unstable_axis_deg: 90.0, half_width_deg: 10.0 });
        assert!(load_map(&d, &Tolerances::default()).is_err());
    }
}
