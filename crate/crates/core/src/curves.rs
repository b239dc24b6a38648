//! Stable segments under backward iteration: fragmentation into generations,
//! the growth lemma statistics and the one-step expansion constant.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::CurveError;
use crate::geom::{ConvexPolygon, Point, Segment};
use crate::map::PiecewiseAffineMap;

/// A straight segment whose direction lies in the stable cone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableSegment {
    segment: Segment,
}

impl StableSegment {
    pub fn new(map: &PiecewiseAffineMap, segment: Segment, max_len: Option<f64>) -> Result<Self, CurveError> {
        let len = segment.length();
        if !(len > 0.0) {
            return Err(CurveError::Empty);
        }
        if let Some(max) = max_len {
            if len > max * (1.0 + 1e-12) {
                return Err(CurveError::TooLong { length: len, max });
            }
        }
        let off = map.stable.offset_of(segment.direction());
        if off > map.stable.half_width + 1e-12 {
            return Err(CurveError::NotStable { excess_deg: (off - map.stable.half_width).to_degrees() });
        }
        Ok(StableSegment { segment })
    }

    pub fn segment(&self) -> &Segment {
        &self.segment
    }

    pub fn length(&self) -> f64 {
        self.segment.length()
    }
}

/// Segments along the stable axis with midpoints on an `L × L` lattice,
/// clipped to the unit square.
pub fn stable_segment_grid(map: &PiecewiseAffineMap, length: f64, lattice: usize) -> Vec<StableSegment> {
    let u = map.stable.axis_vector();
    let sq = ConvexPolygon::unit_square();
    let mut out = Vec::with_capacity(lattice * lattice);
    for i in 0..lattice {
        for j in 0..lattice {
            let c = Point::new((i as f64 + 0.5) / lattice as f64, (j as f64 + 0.5) / lattice as f64);
            let s = Segment::new(c - u * (0.5 * length), c + u * (0.5 * length));
            if let Some(clipped) = sq.clip_segment(&s) {
                if clipped.length() > 0.0 {
                    out.push(StableSegment { segment: clipped });
                }
            }
        }
    }
    out
}

/// A maximal smooth piece of `T⁻¹W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preimage {
    pub segment: Segment,
    pub branch: usize,
    /// Length of the part of `W` it came from.
    pub image_length: f64,
}

/// Splits `w` along the images of the branch domains and pulls each part
/// back by its inverse branch.
pub fn pull_back(map: &PiecewiseAffineMap, w: &Segment) -> Vec<Preimage> {
    let eps = map.tol.eps_geo;
    let mut out: Vec<Preimage> = Vec::with_capacity(2);
    let mut taken: Vec<Segment> = Vec::new();
    let bb = w.bbox();
    for (b, im) in map.images.iter().enumerate() {
        if !bb.overlaps(&im.bbox(), eps) {
            continue;
        }
        let Some(piece) = im.clip_segment(w) else { continue };
        let len = piece.length();
        if len <= eps {
            continue;
        }
        // a piece running along a shared edge belongs to the first image only
        if taken.iter().any(|t| t.a.dist(piece.a) <= eps && t.b.dist(piece.b) <= eps) {
            continue;
        }
        taken.push(piece);
        out.push(Preimage { segment: piece.transform(&map.backward[b]), branch: b, image_length: len });
    }
    out
}

/// Components of `T^{-m}w`, without subdivision.
pub fn pull_back_n(map: &PiecewiseAffineMap, w: &Segment, m: usize) -> Vec<Segment> {
    let mut cur = alloc::vec![*w];
    for _ in 0..m {
        cur = cur.iter().flat_map(|s| pull_back(map, s)).map(|p| p.segment).collect();
    }
    cur
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub segment: Segment,
    /// Index of the parent in the previous generation.
    pub parent: Option<u32>,
    /// Short at every generation from 1 up to this one.
    pub never_long: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub n: usize,
    /// `#G_n`
    pub total: usize,
    /// `#L_n`: pieces of length at least δ/3.
    pub long: usize,
    /// `#S_n`
    pub short: usize,
    /// `#I_n`
    pub never_long: usize,
    pub total_length: f64,
    /// `Σ (|W_i|/|W|)^{1/p}` for the `p` requested, or 0.
    pub holder_sum: f64,
}

impl GenerationStats {
    pub fn long_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.long as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentationReport {
    pub origin: Segment,
    pub delta: f64,
    /// `generations[n]` is `G_n`; empty unless kept.
    pub generations: Vec<Vec<Fragment>>,
    pub stats: Vec<GenerationStats>,
}

fn subdivide(s: &Segment, delta: f64, out: &mut Vec<Segment>) {
    // pieces end up with length in (δ/2, δ]; the slack absorbs rounding in
    // lengths that are nominally exactly δ
    let ratio = s.length() / delta;
    if ratio <= 1.0 + 1e-9 {
        out.push(*s);
        return;
    }
    let m = (ratio - 1e-9).ceil() as usize;
    for i in 0..m {
        out.push(Segment::new(s.at(i as f64 / m as f64), s.at((i + 1) as f64 / m as f64)));
    }
}

fn run_fragmentation(
    map: &PiecewiseAffineMap,
    w: &Segment,
    n: usize,
    delta: f64,
    p: Option<f64>,
    keep: bool,
) -> FragmentationReport {
    let w_len = w.length();
    let short_of = |s: &Segment| s.length() < delta / 3.0;
    let stats_of = |n: usize, g: &[Fragment]| {
        let total = g.len();
        let long = g.iter().filter(|f| !short_of(&f.segment)).count();
        GenerationStats {
            n,
            total,
            long,
            short: total - long,
            never_long: g.iter().filter(|f| f.never_long).count(),
            total_length: g.iter().map(|f| f.segment.length()).sum(),
            holder_sum: p.map_or(0.0, |p| g.iter().map(|f| (f.segment.length() / w_len).powf(1.0 / p)).sum()),
        }
    };
    let mut pieces = Vec::new();
    subdivide(w, delta, &mut pieces);
    // I_0 = G_0: the condition on ancestors is empty
    let mut cur: Vec<Fragment> =
        pieces.iter().map(|s| Fragment { segment: *s, parent: None, never_long: true }).collect();
    let mut generations = Vec::new();
    let mut stats = alloc::vec![stats_of(0, &cur)];
    for gen in 1..=n {
        let mut next = Vec::with_capacity(cur.len() * 2);
        let mut buf = Vec::new();
        for (pi, f) in cur.iter().enumerate() {
            for pre in pull_back(map, &f.segment) {
                buf.clear();
                subdivide(&pre.segment, delta, &mut buf);
                for s in &buf {
                    let ancestors_short = gen == 1 || f.never_long;
                    next.push(Fragment {
                        segment: *s,
                        parent: Some(pi as u32),
                        never_long: ancestors_short && short_of(s),
                    });
                }
            }
        }
        stats.push(stats_of(gen, &next));
        if keep {
            generations.push(core::mem::replace(&mut cur, next));
        } else {
            cur = next;
        }
    }
    if keep {
        generations.push(cur);
    }
    FragmentationReport { origin: *w, delta, generations, stats }
}

/// Generations `G_0..G_n` of `w` at scale `delta`, with ancestry.
pub fn fragment(map: &PiecewiseAffineMap, w: &StableSegment, n: usize, delta: f64) -> FragmentationReport {
    run_fragmentation(map, w.segment(), n, delta, None, true)
}

/// Same counts as [`fragment`] without keeping the pieces.
pub fn fragment_stats(
    map: &PiecewiseAffineMap,
    w: &StableSegment,
    n: usize,
    delta: f64,
    p: Option<f64>,
) -> Vec<GenerationStats> {
    run_fragmentation(map, w.segment(), n, delta, p, false).stats
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    pub max_never_long: usize,
    pub k1_pow: f64,
    /// `#I_n ≤ K₁ⁿ` for every sample.
    pub bound_a_holds: bool,
    pub max_total: usize,
    pub count: u64,
    /// `max #G_n · δ₀ / #M_0^n`
    pub c_b: f64,
    /// `max Σ(|W_i|/|W|)^{1/p} / (δ₀^{-1+1/p} κ^{-n/p} (#M_0^n)^{1-1/p})`
    pub c_c: f64,
    /// `#M_0^n / (δ₀ Λⁿ)`
    pub c_d: f64,
    /// `min #G_n / #M_0^n`
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub delta0: f64,
    pub k1: usize,
    pub p: f64,
    pub samples: usize,
    pub rows: Vec<GrowthRow>,
    pub all_bound_a_hold: bool,
}

/// Checks the growth lemma bounds over `samples` for `n = 0..=n_max`.
/// `counts[i]` is `#M_0^{i+1}`; `k1` is the single-step fragment bound.
#[allow(clippy::too_many_arguments)]
pub fn growth_lemma_checks(
    map: &PiecewiseAffineMap,
    samples: &[StableSegment],
    n_max: usize,
    delta0: f64,
    p: f64,
    counts: &[u64],
    k1: usize,
    lambda: f64,
    kappa: f64,
) -> Result<GrowthReport, CurveError> {
    if counts.len() < n_max {
        return Err(CurveError::InvalidParameter("not enough partition counts for n_max"));
    }
    if !(p >= 1.0) || !(delta0 > 0.0) {
        return Err(CurveError::InvalidParameter("need p >= 1 and delta0 > 0"));
    }
    let all: Vec<Vec<GenerationStats>> =
        samples.iter().map(|w| fragment_stats(map, w, n_max, delta0, Some(p))).collect();
    let mut rows = Vec::new();
    for n in 0..=n_max {
        let count = if n == 0 { 1 } else { counts[n - 1] };
        let cf = count as f64;
        let max_never_long = all.iter().map(|s| s[n].never_long).max().unwrap_or(0);
        let max_total = all.iter().map(|s| s[n].total).max().unwrap_or(0);
        let min_total = all.iter().map(|s| s[n].total).min().unwrap_or(0);
        let k1_pow = (k1 as f64).powi(n as i32);
        let bound_c = delta0.powf(-1.0 + 1.0 / p) * kappa.powf(-(n as f64) / p) * cf.powf(1.0 - 1.0 / p);
        let max_holder = all.iter().map(|s| s[n].holder_sum).fold(0.0, f64::max);
        rows.push(GrowthRow {
            n,
            max_never_long,
            k1_pow,
            bound_a_holds: (max_never_long as f64) <= k1_pow,
            max_total,
            count,
            c_b: max_total as f64 * delta0 / cf,
            c_c: max_holder / bound_c,
            c_d: cf / (delta0 * lambda.powi(n as i32)),
            c0: min_total as f64 / cf,
        });
    }
    let all_bound_a_hold = rows.iter().all(|r| r.bound_a_holds);
    Ok(GrowthReport { delta0, k1, p, samples: samples.len(), rows, all_bound_a_hold })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongFractionRow {
    pub delta: f64,
    /// Minimum over samples of `#L_n / #G_n`, for `n = 0..=n_max`.
    pub fractions: Vec<f64>,
    /// Smallest `n₁` with fraction ≥ 2/3 for every `n` in `n₁..=n_max`.
    pub n1: Option<usize>,
    /// Smallest `n` at which the fraction first reaches 2/3.
    pub first_reached: Option<usize>,
    pub best_fraction: f64,
}

/// Scans `#L_n^δ / #G_n^δ` for each `δ` over a grid of stable segments of length `δ`.
pub fn long_fraction_scan(
    map: &PiecewiseAffineMap,
    deltas: &[f64],
    n_max: usize,
    lattice: usize,
) -> Vec<LongFractionRow> {
    let target = 2.0 / 3.0;
    deltas
        .iter()
        .map(|&delta| {
            let samples: Vec<StableSegment> =
                stable_segment_grid(map, delta, lattice).into_iter().filter(|w| w.length() >= delta / 3.0).collect();
            let mut fractions = alloc::vec![f64::INFINITY; n_max + 1];
            for w in &samples {
                for s in fragment_stats(map, w, n_max, delta, None) {
                    fractions[s.n] = fractions[s.n].min(s.long_fraction());
                }
            }
            if samples.is_empty() {
                fractions.iter_mut().for_each(|f| *f = 0.0);
            }
            let mut n1 = None;
            for n in (0..=n_max).rev() {
                if fractions[n] >= target {
                    n1 = Some(n);
                } else {
                    break;
                }
            }
            let first_reached = fractions.iter().position(|&f| f >= target);
            let best_fraction = fractions.iter().copied().fold(0.0, f64::max);
            LongFractionRow { delta, fractions, n1, first_reached, best_fraction }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepReport {
    pub rho_hat: f64,
    pub argmax: Segment,
    pub below_one: bool,
    pub samples: usize,
    pub q: f64,
    pub delta0: f64,
}

/// `Σ_i (|W|/|V_i|)^q |TV_i|/|W|` over the maximal components `V_i` of `T⁻¹W`.
pub fn one_step_term(map: &PiecewiseAffineMap, w: &Segment, q: f64) -> f64 {
    let wl = w.length();
    pull_back(map, w).iter().map(|p| (wl / p.segment.length()).powf(q) * p.image_length / wl).sum()
}

/// Supremum of the one-step expansion sum over a grid of stable segments
/// of length `delta0`.
pub fn one_step_expansion(
    map: &PiecewiseAffineMap,
    delta0: f64,
    q: f64,
    lattice: usize,
) -> Result<OneStepReport, CurveError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(CurveError::InvalidParameter("q must lie in (0, 1]"));
    }
    if !(delta0 > 0.0) {
        return Err(CurveError::InvalidParameter("delta0 must be positive"));
    }
    let samples = stable_segment_grid(map, delta0, lattice);
    let mut best = (0.0, Segment::new(Point::default(), Point::default()));
    for w in &samples {
        let t = one_step_term(map, w.segment(), q);
        if t > best.0 {
            best = (t, *w.segment());
        }
    }
    Ok(OneStepReport { rho_hat: best.0, argmax: best.1, below_one: best.0 < 1.0, samples: samples.len(), q, delta0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrowthRow {
    pub n: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// `|T^{-n}W| e^{-n h*}` over samples with `|W| ≥ δ₁/3`, for `n` in the range.
pub fn uniform_growth_check(
    map: &PiecewiseAffineMap,
    hstar: f64,
    samples: &[StableSegment],
    delta1: f64,
    n_range: (usize, usize),
) -> Vec<UniformGrowthRow> {
    let (lo, hi) = n_range;
    let mut rows: Vec<UniformGrowthRow> =
        (lo..=hi).map(|n| UniformGrowthRow { n, min_ratio: f64::INFINITY, max_ratio: 0.0 }).collect();
    for w in samples.iter().filter(|w| w.length() >= delta1 / 3.0) {
        let mut cur = alloc::vec![*w.segment()];
        for n in 0..=hi {
            if n > 0 {
                cur = cur.iter().flat_map(|s| pull_back(map, s)).map(|p| p.segment).collect();
            }
            if n >= lo {
                let len: f64 = cur.iter().map(|s| s.length()).sum();
                let r = len * (-(n as f64) * hstar).exp();
                let row = &mut rows[n - lo];
                row.min_ratio = row.min_ratio.min(r);
                row.max_ratio = row.max_ratio.max(r);
            }
        }
    }
    rows
}
