//! Ulam discretisation of the weighted transfer operator on the cells of
//! `M_{-k}^k`, leading eigenvectors and the product measure built from them.
//!
//! Right vectors are masses per cell. Left vectors are per-cell weights, so
//! that a measure `m` pairs with a left vector `d` as `Σ m_i d_i`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::SpectralError;
use crate::geom::{BBox, ConvexPolygon, GridIndex, Point, SliverLog};
use crate::map::PiecewiseAffineMap;
use crate::partition::{refine, Cell};

/// Square sparse matrix in compressed-column form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)`; duplicates are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx: Vec<u32> = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c as usize + 1] += 1;
            last = Some((r, c));
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        SparseMatrix { n, col_ptr, row_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of column `j` as `(row, value)`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().map(|&i| i as usize).zip(self.values[r].iter().copied())
    }

    /// All entries as `(row, col, value)`, column by column.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    /// `y = A x`
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn mul_t(&self, x: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = self.column(j).map(|(i, v)| v * x[i]).sum();
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.column(j).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j as u32, i as u32, v)).collect())
    }

    /// Same sparsity, values replaced by `f(row, col, value)`.
    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> SparseMatrix {
        let mut out = self.clone();
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out.values[k] = f(self.row_idx[k] as usize, j, self.values[k]);
            }
        }
        out
    }
}

/// Finite-dimensional surrogate of the weighted transfer operator.
#[derive(Clone, Debug)]
pub struct UlamOperator {
    pub depth: usize,
    pub cells: Vec<Cell>,
    pub areas: Vec<f64>,
    pub centroids: Vec<Point>,
    /// `A[i][j] = Σ_b (1/JˢT_b) Area(C_j ∩ D_b ∩ T⁻¹C_i) / Area(C_j)`.
    pub weighted: SparseMatrix,
    /// The same fractions without the Jacobian weight (column-stochastic).
    pub transitions: SparseMatrix,
    /// Largest relative defect of `Σ_i Area(T(C_j) ∩ C_i)` against `Area(T(C_j))`.
    pub max_area_error: f64,
    pub slivers: SliverLog,
}

impl UlamOperator {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Builds the operator on the cells of `M_{-depth}^{depth}`.
pub fn build_ulam(map: &PiecewiseAffineMap, depth: usize, cap: usize) -> Result<UlamOperator, SpectralError> {
    let cells = refine(map, depth, depth, cap)?.cells;
    let n = cells.len();
    let areas: Vec<f64> = cells.iter().map(|c| c.polygon.area()).collect();
    let centroids: Vec<Point> = cells.iter().map(|c| c.polygon.centroid()).collect();
    let boxes: Vec<BBox> = cells.iter().map(|c| c.polygon.bbox()).collect();
    let mut grid = GridIndex::new(&boxes);
    let mut found = Vec::new();
    let mut log = SliverLog::default();
    let mut wt = Vec::with_capacity(3 * n);
    let mut pt = Vec::with_capacity(3 * n);
    let mut max_area_error: f64 = 0.0;
    for (j, cj) in cells.iter().enumerate() {
        // pieces of C_j on which a single branch acts
        let pieces: Vec<(usize, ConvexPolygon)> = if let Some(&b) = cj.forward.first() {
            vec![(b as usize, cj.polygon.clone())]
        } else {
            map.domains
                .iter()
                .enumerate()
                .filter_map(|(b, d)| cj.polygon.intersect(d, &map.tol, &mut log).map(|p| (b, p)))
                .collect()
        };
        for (b, piece) in pieces {
            let weight = 1.0 / map.stable_jacobian[b];
            let frac = piece.area() / areas[j];
            let image = piece.transform(&map.forward[b]);
            let image_area = image.area();
            grid.query(&image.bbox(), &mut found);
            let mut covered = 0.0;
            for &i in &found {
                let Some(ov) = image.intersect(&cells[i].polygon, &map.tol, &mut log) else { continue };
                let a = ov.area();
                covered += a;
                let p = frac * a / image_area;
                pt.push((i as u32, j as u32, p));
                wt.push((i as u32, j as u32, weight * p));
            }
            let err = (covered - image_area).abs() / image_area;
            max_area_error = max_area_error.max(err);
            if err > 1e-8 {
                return Err(SpectralError::AreaAccounting { cell: j, error: err });
            }
        }
    }
    Ok(UlamOperator {
        depth,
        areas,
        centroids,
        weighted: SparseMatrix::from_triplets(n, wt),
        transitions: SparseMatrix::from_triplets(n, pt),
        cells,
        max_area_error,
        slivers: log,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterationMode {
    Power,
    Cesaro,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub mode: IterationMode,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { mode: IterationMode::Power, tol: 1e-10, max_iter: 200_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Non-negative masses adding up to one.
    Probability,
    /// Per-cell weights of a left eigenvector, scaled so that the measure
    /// with these densities has total mass one.
    EigenNormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub masses: Vec<f64>,
    pub depth: usize,
    pub normalization: Normalization,
    pub provenance: String,
}

impl DiscreteMeasure {
    /// Lebesgue measure of each cell.
    pub fn lebesgue(op: &UlamOperator) -> Self {
        DiscreteMeasure {
            masses: op.areas.clone(),
            depth: op.depth,
            normalization: Normalization::Probability,
            provenance: "lebesgue".into(),
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Power or Cesàro iteration of a non-negative operator on positive vectors,
/// normalised in ℓ¹. `apply(x, y)` must write the image of `x` into `y`.
fn positive_iteration(
    n: usize,
    start: Vec<f64>,
    apply: impl Fn(&[f64], &mut [f64]),
    opts: &SolverOptions,
) -> Result<Eigenpair, SpectralError> {
    let mut x = start;
    let s = l1(&x);
    if !(s > 0.0) {
        return Err(SpectralError::EmptySeed);
    }
    x.iter_mut().for_each(|v| *v /= s);
    let mut y = vec![0.0; n];
    let residual_of = |x: &[f64], y: &mut [f64]| -> (f64, f64) {
        apply(x, y);
        let lam = l1(y) / l1(x);
        let r = x.iter().zip(y.iter()).map(|(a, b)| (b - lam * a).abs()).sum::<f64>() / (lam * l1(x));
        (lam, r)
    };
    match opts.mode {
        IterationMode::Power => {
            let mut best_r = f64::INFINITY;
            for it in 0..opts.max_iter {
                let (lam, r) = residual_of(&x, &mut y);
                best_r = best_r.min(r);
                if !(lam > 0.0) {
                    return Err(SpectralError::NoConvergence { residual: r, iterations: it });
                }
                if r < opts.tol {
                    return Ok(Eigenpair { value: lam, vector: x, residual: r, iterations: it });
                }
                for (a, b) in x.iter_mut().zip(&y) {
                    *a = b / lam;
                }
            }
            Err(SpectralError::NoConvergence { residual: best_r, iterations: opts.max_iter })
        }
        IterationMode::Cesaro => {
            // average the normalised iterates over (T/2, T], doubling T
            let mut t_end = 16usize;
            let mut t = 0usize;
            let mut iterates_done = x.clone();
            let mut last_r = f64::INFINITY;
            while t_end <= opts.max_iter {
                let mut avg = vec![0.0; n];
                let mut count = 0usize;
                while t < t_end {
                    apply(&iterates_done, &mut y);
                    let lam = l1(&y);
                    if !(lam > 0.0) {
                        return Err(SpectralError::NoConvergence { residual: last_r, iterations: t });
                    }
                    for (a, b) in iterates_done.iter_mut().zip(&y) {
                        *a = b / lam;
                    }
                    t += 1;
                    if t > t_end / 2 {
                        for (s, v) in avg.iter_mut().zip(&iterates_done) {
                            *s += v;
                        }
                        count += 1;
                    }
                }
                if count > 0 {
                    avg.iter_mut().for_each(|v| *v /= count as f64);
                    let (lam, r) = residual_of(&avg, &mut y);
                    last_r = r;
                    if r < opts.tol {
                        let s = l1(&avg);
                        avg.iter_mut().for_each(|v| *v /= s);
                        return Ok(Eigenpair { value: lam, vector: avg, residual: r, iterations: t });
                    }
                }
                t_end *= 2;
            }
            Err(SpectralError::NoConvergence { residual: last_r, iterations: t })
        }
    }
}

/// Leading eigenvalue and right eigenvector (masses, probability-normalised).
pub fn leading_right(a: &SparseMatrix, opts: &SolverOptions) -> Result<Eigenpair, SpectralError> {
    let n = a.n;
    positive_iteration(n, vec![1.0 / n as f64; n], |x, y| a.mul(x, y), opts)
}

/// Leading eigenvalue and left eigenvector, seeded with a measure. The seed
/// is turned into weights by dividing by cell areas, so Lebesgue measure is
/// the constant weight. The returned weights are scaled so that
/// `Σ_i weight_i · area_i = 1`.
pub fn leading_left(
    a: &SparseMatrix,
    seed: &DiscreteMeasure,
    areas: &[f64],
    opts: &SolverOptions,
) -> Result<(Eigenpair, DiscreteMeasure), SpectralError> {
    if seed.masses.len() != a.n || areas.len() != a.n {
        return Err(SpectralError::Dimension(seed.masses.len(), a.n));
    }
    if !seed.masses.iter().any(|&m| m > 0.0) || seed.masses.iter().any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(SpectralError::EmptySeed);
    }
    let start: Vec<f64> = seed.masses.iter().zip(areas).map(|(m, s)| m / s).collect();
    let mut pair = positive_iteration(a.n, start, |x, y| a.mul_t(x, y), opts)?;
    let mass: f64 = pair.vector.iter().zip(areas).map(|(d, s)| d * s).sum();
    pair.vector.iter_mut().for_each(|d| *d /= mass);
    let measure = DiscreteMeasure {
        masses: pair.vector.clone(),
        depth: seed.depth,
        normalization: Normalization::EigenNormalized,
        provenance: alloc::format!("left eigenvector seeded by {}", seed.provenance),
    };
    Ok((pair, measure))
}

/// `μ*(C_i) = ν₀(C_i) ν̃₀_i / Σ_j ν₀(C_j) ν̃₀_j`.
pub fn build_mme(nu0: &DiscreteMeasure, nu0_tilde: &DiscreteMeasure) -> Result<DiscreteMeasure, SpectralError> {
    if nu0.masses.len() != nu0_tilde.masses.len() {
        return Err(SpectralError::Dimension(nu0.masses.len(), nu0_tilde.masses.len()));
    }
    let pairing: f64 = nu0.masses.iter().zip(&nu0_tilde.masses).map(|(a, b)| a * b).sum();
    if !(pairing >= 1e-14) {
        return Err(SpectralError::DegenerateSeed { pairing });
    }
    Ok(DiscreteMeasure {
        masses: nu0.masses.iter().zip(&nu0_tilde.masses).map(|(a, b)| a * b / pairing).collect(),
        depth: nu0.depth,
        normalization: Normalization::Probability,
        provenance: "product of leading right and left eigenvectors".into(),
    })
}

/// Everything downstream analyses need about the leading eigen-data.
#[derive(Clone, Debug)]
pub struct MmeData {
    pub lambda: f64,
    pub lambda_left: f64,
    pub right: Eigenpair,
    pub left: Eigenpair,
    pub nu0: DiscreteMeasure,
    pub nu0_tilde: DiscreteMeasure,
    pub mu: DiscreteMeasure,
    /// Column-stochastic kernel `Q(j→i) = A_ij d_i / (λ d_j)` preserving μ*.
    pub parry: SparseMatrix,
    /// Transpose of `B(i→j) = A_ij r_j / (λ r_i)`, the backward chain of μ*.
    pub backward: SparseMatrix,
}

/// Leading eigen-data, μ* and the Markov kernels it induces.
pub fn compute_mme(op: &UlamOperator, opts: &SolverOptions) -> Result<MmeData, SpectralError> {
    let right = leading_right(&op.weighted, opts)?;
    let nu0 = DiscreteMeasure {
        masses: right.vector.clone(),
        depth: op.depth,
        normalization: Normalization::Probability,
        provenance: "leading right eigenvector".into(),
    };
    let (left, nu0_tilde) = leading_left(&op.weighted, &DiscreteMeasure::lebesgue(op), &op.areas, opts)?;
    let mu = build_mme(&nu0, &nu0_tilde)?;
    let lambda = right.value;
    let d = &left.vector;
    let r = &right.vector;
    let parry =
        stochastic_columns(op.weighted.map_values(|i, j, v| if d[j] > 0.0 { v * d[i] / (lambda * d[j]) } else { 0.0 }));
    // stored transposed so that column i lists the successors j of i
    let backward = stochastic_columns(
        op.weighted.map_values(|i, j, v| if r[i] > 0.0 { v * r[j] / (lambda * r[i]) } else { 0.0 }).transpose(),
    );
    Ok(MmeData { lambda, lambda_left: left.value, right, left, nu0, nu0_tilde, mu, parry, backward })
}

/// Rescales non-empty columns to sum to one, removing the eigen-solver
/// residual from kernels that are stochastic by construction.
fn stochastic_columns(m: SparseMatrix) -> SparseMatrix {
    let sums = m.column_sums();
    m.map_values(|_, j, v| if sums[j] > 0.0 { v / sums[j] } else { v })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// Estimate of `|λ₂| / λ`.
    pub ratio: f64,
    /// Spread of the last two window estimates.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Growth rate of `A − λ r lᵀ / ⟨l, r⟩` on a generic start vector, measured
/// by the geometric mean of norm ratios so that complex pairs are handled.
pub fn spectral_gap(a: &SparseMatrix, lambda: f64, right: &[f64], left: &[f64], max_iter: usize) -> GapEstimate {
    let n = a.n;
    let lr: f64 = left.iter().zip(right).map(|(l, r)| l * r).sum();
    let project = |x: &mut [f64]| {
        let c: f64 = left.iter().zip(x.iter()).map(|(l, v)| l * v).sum::<f64>() / lr;
        for (v, r) in x.iter_mut().zip(right) {
            *v -= c * r;
        }
    };
    // deterministic, non-symmetric start
    let mut x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5).collect();
    project(&mut x);
    let mut y = vec![0.0; n];
    let window = 20usize;
    let mut log_sum = 0.0;
    let mut estimates: Vec<f64> = Vec::new();
    let mut it = 0;
    let norm0 = l1(&x);
    if norm0 == 0.0 {
        return GapEstimate { ratio: 0.0, residual: 0.0, iterations: 0, converged: true };
    }
    x.iter_mut().for_each(|v| *v /= norm0);
    while it < max_iter {
        a.mul(&x, &mut y);
        project(&mut y);
        let s = l1(&y);
        it += 1;
        if s <= 1e-300 || !s.is_finite() {
            return GapEstimate { ratio: 0.0, residual: 0.0, iterations: it, converged: true };
        }
        log_sum += s.ln();
        for (a, b) in x.iter_mut().zip(&y) {
            *a = b / s;
        }
        if it % window == 0 {
            let est = (log_sum / window as f64).exp() / lambda;
            log_sum = 0.0;
            estimates.push(est);
            let k = estimates.len();
            if k >= 3 {
                let spread = (estimates[k - 1] - estimates[k - 2]).abs();
                if spread < 1e-3 * estimates[k - 1].max(0.1) || estimates[k - 1] < 1e-12 {
                    return GapEstimate { ratio: estimates[k - 1], residual: spread, iterations: it, converged: true };
                }
            }
        }
    }
    let k = estimates.len();
    let ratio = estimates.last().copied().unwrap_or(0.0);
    let residual = if k >= 2 { (estimates[k - 1] - estimates[k - 2]).abs() } else { f64::INFINITY };
    GapEstimate { ratio, residual, iterations: it, converged: false }
}

/// Compensated (Neumaier) sum.
pub fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Total variation distance between two probability vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Tolerances;
    use crate::map::{builtin, load_map};
    use crate::partition::DEFAULT_CELL_CAP;

    fn op(name: &str, depth: usize) -> UlamOperator {
        let m = load_map(&builtin(name).unwrap(), &Tolerances::default()).unwrap();
        build_ulam(&m, depth, DEFAULT_CELL_CAP).unwrap()
    }

    #[test]
    fn baker3_column_sums() {
        let u = op("baker3", 1);
        assert_eq!(u.len(), 9);
        for s in u.weighted.column_sums() {
            assert!((s - 3.0).abs() < 1e-12);
        }
        for s in u.transitions.column_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn baker2u_column_sums() {
        let u = op("baker2u:0.4", 1);
        for (j, s) in u.weighted.column_sums().iter().enumerate() {
            let expect = if u.centroids[j].x < 0.4 { 2.5 } else { 1.0 / 0.6 };
            assert!((s - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_zero_is_rank_one() {
        let u = op("baker3", 0);
        assert_eq!(u.len(), 1);
        let e = leading_right(&u.weighted, &SolverOptions::default()).unwrap();
        assert!((e.value - 3.0).abs() < 1e-12);
        let g = spectral_gap(&u.weighted, e.value, &e.vector, &[1.0], 100);
        assert_eq!(g.ratio, 0.0);
    }

    #[test]
    fn power_and_cesaro_agree() {
        let u = op("baker2u:0.4", 3);
        let p = leading_right(&u.weighted, &SolverOptions::default()).unwrap();
        let c =
            leading_right(&u.weighted, &SolverOptions { mode: IterationMode::Cesaro, ..Default::default() }).unwrap();
        assert!((p.value - c.value).abs() < 1e-9);
        assert!(total_variation(&p.vector, &c.vector) < 1e-8);
    }

    #[test]
    fn left_fixed_point_and_errors() {
        let u = op("baker2u:0.4", 2);
        let opts = SolverOptions::default();
        let (e, nt) = leading_left(&u.weighted, &DiscreteMeasure::lebesgue(&u), &u.areas, &opts).unwrap();
        // seeding with the eigen-weights (as a measure) converges immediately
        let seed = DiscreteMeasure {
            masses: nt.masses.iter().zip(&u.areas).map(|(d, a)| d * a).collect(),
            depth: 2,
            normalization: Normalization::Probability,
            provenance: "self".into(),
        };
        let (again, _) = leading_left(&u.weighted, &seed, &u.areas, &opts).unwrap();
        assert!(again.iterations <= 1);
        assert!((again.value - e.value).abs() < 1e-9);
        let zero = DiscreteMeasure { masses: vec![0.0; u.len()], ..seed.clone() };
        assert!(matches!(leading_left(&u.weighted, &zero, &u.areas, &opts), Err(SpectralError::EmptySeed)));
        let right = DiscreteMeasure { masses: vec![0.0; u.len()], ..seed };
        assert!(matches!(build_mme(&right, &nt), Err(SpectralError::DegenerateSeed { .. })));
    }

    #[test]
    fn sparse_products() {
        let a = SparseMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 1, 3.0), (0, 1, 1.0)]);
        let mut y = [0.0; 2];
        a.mul(&[1.0, 1.0], &mut y);
        assert_eq!(y, [5.0, 2.0]);
        a.mul_t(&[1.0, 1.0], &mut y);
        assert_eq!(y, [3.0, 4.0]);
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.nnz(), 3);
    }
}
