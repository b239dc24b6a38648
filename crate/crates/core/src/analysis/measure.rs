use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::geom::{ConvexPolygon, Segment};
use crate::map::PiecewiseAffineMap;
use crate::partition::{count_sequence, linear_fit, Sign};
use crate::spectral::{total_variation, DiscreteMeasure, SparseMatrix, UlamOperator};

/// Total variation between μ and its image under the cell transition kernel.
pub fn invariance_residual(op: &UlamOperator, mu: &DiscreteMeasure) -> f64 {
    let mut image = vec![0.0; op.len()];
    op.transitions.mul(&mu.masses, &mut image);
    total_variation(&image, &mu.masses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub n: usize,
    /// `H_μ(M_{-k}^{k+n})`.
    pub entropy: f64,
    pub per_step: f64,
    /// `H_n − H_{n−1}`, which converges faster than `H_n / n`.
    pub increment: f64,
    /// `log #M_{-k}^{k+n} / n`, when the count is available.
    pub log_count_bound: Option<f64>,
    pub words: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub k: usize,
    pub depth: usize,
    pub rows: Vec<EntropyRow>,
    /// Stopped before `n_max` because a budget ran out.
    pub truncated: bool,
    /// `per_step ≤ log_count_bound` on every row that has a bound.
    pub sandwich_holds: bool,
}

const STATE_BUDGET: usize = 4_000_000;

/// Shannon entropy of the cylinder masses of `M_{-k}^{k+n}` divided by `n`.
///
/// Cylinders longer than the operator depth are resolved by following the
/// μ*-preserving kernel; every new step contributes the forward branch label
/// of the cell reached.
pub fn entropy_estimate(
    map: &PiecewiseAffineMap,
    op: &UlamOperator,
    mu: &DiscreteMeasure,
    kernel: &SparseMatrix,
    k: usize,
    n_max: usize,
    cap: usize,
) -> Result<EntropyReport, AnalysisError> {
    let d = op.depth;
    if k > d || (d == 0 && n_max > 0) {
        return Err(AnalysisError::InvalidInput("entropy needs an operator depth of at least max(k, 1)"));
    }
    let counts = count_sequence(map, 2 * k + n_max, cap);
    let mut rows = Vec::new();
    let mut truncated = false;
    // (word so far, current cell) -> mass; the word starts with the
    // backward labels of the initial cell followed by its forward labels
    let mut states: BTreeMap<(Vec<u16>, u32), f64> = BTreeMap::new();
    for (i, &m) in mu.masses.iter().enumerate() {
        if m > 0.0 {
            let c = &op.cells[i];
            let mut w: Vec<u16> = c.backward[..k].to_vec();
            w.extend_from_slice(&c.forward[..d.min(k + n_max)]);
            *states.entry((w, i as u32)).or_insert(0.0) += m;
        }
    }
    let mut level = 0;
    for n in 1..=n_max {
        let need = (k + n).saturating_sub(d);
        while level < need {
            let mut next: BTreeMap<(Vec<u16>, u32), f64> = BTreeMap::new();
            for ((ext, j), m) in &states {
                for (i, q) in kernel.column(*j as usize) {
                    if q <= 0.0 {
                        continue;
                    }
                    let mut e = ext.clone();
                    e.push(op.cells[i].forward[d - 1]);
                    *next.entry((e, i as u32)).or_insert(0.0) += m * q;
                }
            }
            level += 1;
            states = next;
            if states.len() > STATE_BUDGET {
                truncated = true;
                break;
            }
        }
        if truncated {
            break;
        }
        let len = 2 * k + n;
        let mut words: BTreeMap<&[u16], f64> = BTreeMap::new();
        for ((w, _), m) in &states {
            *words.entry(&w[..len]).or_insert(0.0) += m;
        }
        let total: f64 = words.values().sum();
        let entropy: f64 = words.values().filter(|&&m| m > 0.0).map(|&m| -(m / total) * (m / total).ln()).sum();
        let idx = 2 * k + n;
        let log_count_bound = if idx >= 1 && idx <= counts.counts.len() {
            Some((counts.counts[idx - 1] as f64).ln() / n as f64)
        } else {
            None
        };
        let prev = rows.last().map_or(0.0, |r: &EntropyRow| r.entropy);
        let increment = entropy - prev;
        rows.push(EntropyRow {
            n,
            entropy,
            per_step: entropy / n as f64,
            increment,
            log_count_bound,
            words: words.len(),
        });
    }
    if rows.len() < n_max {
        truncated = true;
    }
    let sandwich_holds = rows.iter().all(|r| r.log_count_bound.map_or(true, |b| r.per_step <= b + 1e-9));
    Ok(EntropyReport { k, depth: d, rows, truncated, sandwich_holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodRow {
    pub eps: f64,
    /// Mass of cells lying within `eps` of the singular set.
    pub lower: f64,
    /// Mass of cells meeting the `eps`-neighbourhood.
    pub upper: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodReport {
    pub which: Option<Sign>,
    pub rows: Vec<NeighborhoodRow>,
    /// Slope of `log mass` against `log eps`.
    pub exponent: Option<f64>,
    /// Some bracket is wider than half its upper end.
    pub coarse: bool,
    /// Depth worth trying when the brackets are too coarse.
    pub suggested_depth: Option<usize>,
}

fn segment_polygon_distance(s: &Segment, poly: &ConvexPolygon) -> f64 {
    if poly.clip_segment(s).is_some() || poly.contains(s.a, 0.0) || poly.contains(s.b, 0.0) {
        return 0.0;
    }
    let from_vertices = poly.vertices().iter().map(|&v| s.distance_to_point(v)).fold(f64::INFINITY, f64::min);
    from_vertices.min(poly.distance_to_point(s.a)).min(poly.distance_to_point(s.b))
}

/// μ* of the `eps`-neighbourhood of `S⁺`, `S⁻` or both, bracketed by cells.
pub fn singularity_neighborhood(
    map: &PiecewiseAffineMap,
    op: &UlamOperator,
    mu: &DiscreteMeasure,
    which: Option<Sign>,
    eps_list: &[f64],
) -> Result<NeighborhoodReport, AnalysisError> {
    if eps_list.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(AnalysisError::InvalidInput("eps must be finite and non-negative"));
    }
    let positive: Vec<f64> = eps_list.iter().copied().filter(|&e| e > 0.0).collect();
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    if positive.len() < 2 || hi / lo < 10f64.powf(1.5) - 1e-9 {
        return Err(AnalysisError::InvalidInput("eps list must span at least 1.5 decades"));
    }
    let segments: Vec<Segment> = match which {
        Some(Sign::Plus) => map.s_plus.clone(),
        Some(Sign::Minus) => map.s_minus.clone(),
        None => map.s_plus.iter().chain(&map.s_minus).copied().collect(),
    };
    // per cell: (nearest distance, smallest single-segment covering radius)
    let geometry: Vec<(f64, f64)> = op
        .cells
        .iter()
        .map(|c| {
            let near = segments.iter().map(|s| segment_polygon_distance(s, &c.polygon)).fold(f64::INFINITY, f64::min);
            let cover = segments
                .iter()
                .map(|s| c.polygon.vertices().iter().map(|&v| s.distance_to_point(v)).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            (near, cover)
        })
        .collect();
    let mut rows = Vec::new();
    for &eps in eps_list {
        if eps == 0.0 {
            // the singular set is a finite union of segments and μ* has no atoms there
            rows.push(NeighborhoodRow { eps, lower: 0.0, upper: 0.0, mass: 0.0 });
            continue;
        }
        let (mut lower, mut upper) = (0.0, 0.0);
        let reach = eps + map.tol.eps_geo;
        for ((near, cover), m) in geometry.iter().zip(&mu.masses) {
            if *near <= reach {
                upper += m;
            }
            if *cover <= reach {
                lower += m;
            }
        }
        rows.push(NeighborhoodRow { eps, lower, upper, mass: 0.5 * (lower + upper) });
    }
    let coarse = rows.iter().any(|r| r.upper > 0.0 && r.upper - r.lower > 0.5 * r.upper);
    let fit: Vec<&NeighborhoodRow> = rows.iter().filter(|r| r.eps > 0.0 && r.mass > 0.0).collect();
    let exponent = (fit.len() >= 2).then(|| {
        let xs: Vec<f64> = fit.iter().map(|r| r.eps.ln()).collect();
        let ys: Vec<f64> = fit.iter().map(|r| r.mass.ln()).collect();
        linear_fit(&xs, &ys).0
    });
    Ok(NeighborhoodReport { which, rows, exponent, coarse, suggested_depth: coarse.then_some(op.depth + 1) })
}
