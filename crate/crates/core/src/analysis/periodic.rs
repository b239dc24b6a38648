use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::geom::Point;
use crate::map::{Ambient, PiecewiseAffineMap};
use crate::partition::forward_cells;

/// Coincidence radius for periodic points found in neighbouring cells.
const DEDUP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCensus {
    pub n: usize,
    /// `#Fix(Tⁿ)`.
    pub fixed_count: u64,
    /// Points of minimal period `n`, by direct classification.
    pub prime_count: u64,
    /// `Σ_{d|n} μ(n/d) #Fix(T^d)`.
    pub mobius_prime_count: i64,
    /// One point per orbit of minimal period `n`.
    pub representatives: Vec<Point>,
    /// Solutions found in several cells and merged.
    pub boundary_merges: usize,
    /// Cells with `|det(I − M)| < 1e-10`; hyperbolicity rules these out.
    pub degenerate_cells: usize,
}

/// Möbius function.
pub fn mobius(mut n: u64) -> i64 {
    let mut sign = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

fn canonical(map: &PiecewiseAffineMap, p: Point) -> Point {
    match map.ambient {
        Ambient::Square => p,
        Ambient::Torus => {
            let w = |v: f64| {
                let f = v - v.floor();
                if f > 1.0 - DEDUP {
                    0.0
                } else {
                    f
                }
            };
            Point::new(w(p.x), w(p.y))
        }
    }
}

fn close(map: &PiecewiseAffineMap, a: Point, b: Point) -> bool {
    match map.ambient {
        Ambient::Square => a.dist(b) <= DEDUP,
        Ambient::Torus => super::distance::torus_distance(a, b) <= DEDUP,
    }
}

/// Sorts and merges points closer than the dedup radius; returns the number merged.
fn dedup(map: &PiecewiseAffineMap, pts: &mut Vec<Point>) -> usize {
    pts.sort_by(|a, b| a.lex_cmp(b));
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    let mut merged = 0;
    for &p in pts.iter() {
        // only recent points can be within the radius in x, plus wrap-around at 0
        let dup = out.iter().rev().take_while(|q| p.x - q.x <= DEDUP).any(|&q| close(map, p, q))
            || (map.ambient == Ambient::Torus
                && p.x > 1.0 - 2.0 * DEDUP
                && out.iter().take_while(|q| q.x < 2.0 * DEDUP).any(|&q| close(map, p, q)));
        if dup {
            merged += 1;
        } else {
            out.push(p);
        }
    }
    *pts = out;
    merged
}

/// Index of a point of the x-sorted `set` within the dedup radius of `p`.
fn find(map: &PiecewiseAffineMap, set: &[Point], p: Point) -> Option<usize> {
    let window = |x: f64| {
        let i = set.partition_point(|q| q.x < x - DEDUP);
        (i..set.len()).take_while(move |&j| set[j].x <= x + DEDUP)
    };
    let hit = window(p.x).find(|&j| close(map, set[j], p));
    if hit.is_some() || map.ambient == Ambient::Square {
        return hit;
    }
    if p.x < DEDUP {
        window(p.x + 1.0).find(|&j| close(map, set[j], p))
    } else if p.x > 1.0 - DEDUP {
        window(p.x - 1.0).find(|&j| close(map, set[j], p))
    } else {
        None
    }
}

/// Fixed points of `Tⁿ` cell by cell on `M_0^n`, with the prime counts.
pub fn count_periodic(
    map: &PiecewiseAffineMap,
    n_max: usize,
    cap: usize,
) -> Result<Vec<PeriodicCensus>, AnalysisError> {
    if n_max == 0 {
        return Err(AnalysisError::InvalidInput("n_max must be positive"));
    }
    let shifts: &[(f64, f64)] = match map.ambient {
        Ambient::Square => &[(0.0, 0.0)],
        Ambient::Torus => &[
            (0.0, 0.0),
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, 1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
            (-1.0, -1.0),
        ],
    };
    let mut fixed: Vec<Vec<Point>> = Vec::new();
    let mut out = Vec::new();
    for n in 1..=n_max {
        let (cells, _) = forward_cells(map, n, cap)?;
        let mut pts = Vec::new();
        let mut degenerate = 0;
        for c in &cells {
            let m = c.forward_map.linear;
            let det = (1.0 - m[0][0]) * (1.0 - m[1][1]) - m[0][1] * m[1][0];
            if det.abs() < 1e-10 {
                degenerate += 1;
                continue;
            }
            // on the torus Tⁿ p may equal p plus a lattice vector
            for &(sx, sy) in shifts {
                let bx = c.forward_map.offset[0] - sx;
                let by = c.forward_map.offset[1] - sy;
                let px = ((1.0 - m[1][1]) * bx + m[0][1] * by) / det;
                let py = (m[1][0] * bx + (1.0 - m[0][0]) * by) / det;
                let p = Point::new(px, py);
                if c.polygon.contains(p, DEDUP) {
                    pts.push(canonical(map, p));
                }
            }
        }
        let merges = dedup(map, &mut pts);
        let proper: Vec<usize> = (1..n).filter(|d| n % d == 0).collect();
        let prime: Vec<Point> =
            pts.iter().copied().filter(|&p| !proper.iter().any(|&d| find(map, &fixed[d - 1], p).is_some())).collect();
        let mobius_prime_count: i64 = (1..=n)
            .filter(|d| n % d == 0)
            .map(|d| mobius((n / d) as u64) * if d == n { pts.len() as i64 } else { fixed[d - 1].len() as i64 })
            .sum();
        let representatives = orbit_representatives(map, &prime, n);
        out.push(PeriodicCensus {
            n,
            fixed_count: pts.len() as u64,
            prime_count: prime.len() as u64,
            mobius_prime_count,
            representatives,
            boundary_merges: merges,
            degenerate_cells: degenerate,
        });
        fixed.push(pts);
    }
    Ok(out)
}

fn orbit_representatives(map: &PiecewiseAffineMap, prime: &[Point], n: usize) -> Vec<Point> {
    let mut used = alloc::vec![false; prime.len()];
    let mut reps = Vec::new();
    for i in 0..prime.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        reps.push(prime[i]);
        let mut p = prime[i];
        for _ in 1..n {
            let Some(q) = map.apply(p) else { break };
            p = canonical(map, q);
            if let Some(j) = find(map, prime, p) {
                used[j] = true;
            }
        }
    }
    reps
}
