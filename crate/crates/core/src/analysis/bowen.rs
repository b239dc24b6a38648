use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::geom::{ConvexPolygon, Point, SliverLog};
use crate::map::{Ambient, PiecewiseAffineMap};
use crate::partition::linear_fit;
use crate::spectral::{MmeData, UlamOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowenBallQuery {
    pub center: Point,
    pub n: usize,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowenBallResult {
    pub query: BowenBallQuery,
    /// Mass of backward cylinders inside `B_j(x, eps)`, for `j = 0..=n`.
    pub lower: Vec<f64>,
    /// Mass of backward cylinders meeting `B_j(x, eps)`.
    pub upper: Vec<f64>,
    /// Midpoint of the final bracket.
    pub mass: f64,
    /// `−log(mass) / n`, for `n ≥ 1`.
    pub rate: Option<f64>,
    /// Slope of `−log` of the bracket midpoints against `j ≥ 1`.
    pub slope: Option<f64>,
    pub inconclusive: bool,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowenScaling {
    pub results: Vec<BowenBallResult>,
    /// Pooled slope of `−log mass` against `j` over every query and level `j ≥ 1`.
    pub slope: Option<f64>,
    /// Largest `mass · e^{n h} / n` when a reference entropy was supplied.
    pub prefactor_max: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Inside,
    Straddle,
    Outside,
}

const NODE_BUDGET: usize = 5_000_000;

fn classify(map: &PiecewiseAffineMap, region: &ConvexPolygon, domain: usize, x: Point, eps: f64) -> Status {
    if !map.domains[domain].contains(x, map.tol.eps_geo) {
        return Status::Outside;
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
    let mut status = Status::Outside;
    for &(sx, sy) in shifts {
        let c = Point::new(x.x + sx, x.y + sy);
        if region.max_distance_to_point(c) <= eps + map.tol.eps_geo {
            return Status::Inside;
        }
        if region.distance_to_point(c) <= eps + map.tol.eps_geo {
            status = Status::Straddle;
        }
    }
    status
}

struct Node {
    region: ConvexPolygon,
    cell: u32,
    mass: f64,
    inside: bool,
}

/// Brackets `μ*(B_j(x, eps))` for every `j ≤ n` by following backward
/// cylinders through the μ* backward chain and comparing each cylinder with
/// the ball in the coordinates of its own time.
pub fn bowen_ball(
    map: &PiecewiseAffineMap,
    op: &UlamOperator,
    mme: &MmeData,
    query: BowenBallQuery,
) -> Result<BowenBallResult, AnalysisError> {
    if op.depth == 0 {
        return Err(AnalysisError::InvalidInput("Bowen balls need an operator depth of at least 1"));
    }
    if !(query.eps > 0.0) || query.eps >= 10.0 * map.diameter() {
        return Err(AnalysisError::InvalidInput("eps must lie in (0, 10 diam)"));
    }
    let mut x = query.center;
    let mut nodes: Vec<Node> = Vec::new();
    for (i, c) in op.cells.iter().enumerate() {
        let m = mme.mu.masses[i];
        if m <= 0.0 {
            continue;
        }
        match classify(map, &c.polygon, c.forward[0] as usize, x, query.eps) {
            Status::Outside => {}
            s => nodes.push(Node { region: c.polygon.clone(), cell: i as u32, mass: m, inside: s == Status::Inside }),
        }
    }
    let tally = |nodes: &[Node]| {
        let lower: f64 = nodes.iter().filter(|n| n.inside).map(|n| n.mass).sum();
        let upper: f64 = nodes.iter().map(|n| n.mass).sum();
        (lower, upper)
    };
    let (l0, u0) = tally(&nodes);
    let mut lower = alloc::vec![l0];
    let mut upper = alloc::vec![u0];
    let mut explored = nodes.len();
    let mut log = SliverLog::default();
    for _ in 0..query.n {
        x = map.apply_inverse(x).ok_or(AnalysisError::InvalidInput("centre left the ambient square"))?;
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for node in &nodes {
            let cell = &op.cells[node.cell as usize];
            let pre = node.region.transform(&map.backward[cell.backward[0] as usize]);
            for (j, w) in mme.backward.column(node.cell as usize) {
                if w <= 0.0 {
                    continue;
                }
                let target = &op.cells[j];
                let Some(piece) = pre.intersect(&target.polygon, &map.tol, &mut log) else { continue };
                let s = classify(map, &piece, target.forward[0] as usize, x, query.eps);
                if s == Status::Outside {
                    continue;
                }
                next.push(Node {
                    region: piece,
                    cell: j as u32,
                    mass: node.mass * w,
                    inside: node.inside && s == Status::Inside,
                });
            }
        }
        explored += next.len();
        if explored > NODE_BUDGET {
            return Err(AnalysisError::Budget(NODE_BUDGET));
        }
        nodes = next;
        let (l, u) = tally(&nodes);
        lower.push(l);
        upper.push(u);
    }
    let lo = *lower.last().unwrap();
    let hi = *upper.last().unwrap();
    let mass = 0.5 * (lo + hi);
    let rate = (query.n >= 1 && mass > 0.0).then(|| -mass.ln() / query.n as f64);
    let pts: Vec<(f64, f64)> = (1..=query.n)
        .map(|j| (j as f64, 0.5 * (lower[j] + upper[j])))
        .filter(|&(_, m)| m > 0.0)
        .map(|(j, m)| (j, -m.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&xs, &ys).0
    });
    Ok(BowenBallResult { query, lower, upper, mass, rate, slope, inconclusive: hi - lo > 0.5 * hi, nodes: explored })
}

/// Runs every query and pools the level-wise masses into one slope.
pub fn bowen_ball_scaling(
    map: &PiecewiseAffineMap,
    op: &UlamOperator,
    mme: &MmeData,
    queries: &[BowenBallQuery],
    reference_entropy: Option<f64>,
) -> Result<BowenScaling, AnalysisError> {
    let results = queries.iter().map(|&q| bowen_ball(map, op, mme, q)).collect::<Result<Vec<_>, _>>()?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in &results {
        for j in 1..r.lower.len() {
            let m = 0.5 * (r.lower[j] + r.upper[j]);
            if m > 0.0 {
                xs.push(j as f64);
                ys.push(-m.ln());
            }
        }
    }
    let slope = (xs.len() >= 2).then(|| linear_fit(&xs, &ys).0);
    let prefactor_max = reference_entropy.map(|h| {
        results
            .iter()
            .filter(|r| r.query.n >= 1)
            .map(|r| r.mass * (r.query.n as f64 * h).exp() / r.query.n as f64)
            .fold(0.0, f64::max)
    });
    Ok(BowenScaling { results, slope, prefactor_max })
}
