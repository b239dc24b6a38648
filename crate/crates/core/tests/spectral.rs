use approx::assert_abs_diff_eq;
use hypent_core::geom::Tolerances;
use hypent_core::map::{builtin, load_map, PiecewiseAffineMap};
use hypent_core::partition::DEFAULT_CELL_CAP;
use hypent_core::spectral::*;
use hypent_core::SpectralError;
use nalgebra::DMatrix;

fn load(name: &str) -> PiecewiseAffineMap {
    load_map(&builtin(name).unwrap(), &Tolerances::default()).unwrap()
}

fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n, a.n);
    for (i, j, v) in a.triplets() {
        m[(i, j)] += v;
    }
    m
}

/// Moduli of all eigenvalues, largest first, from a dense Schur decomposition.
fn moduli(a: &SparseMatrix) -> Vec<f64> {
    let mut m: Vec<f64> = dense(a).complex_eigenvalues().iter().map(|z| z.norm()).collect();
    m.sort_by(|x, y| y.total_cmp(x));
    m
}

#[test]
fn leading_eigenvalue_matches_dense_solver() {
    for (name, depth) in [("baker3", 1), ("baker2u:0.4", 2), ("cat", 1), ("cat", 2)] {
        let op = build_ulam(&load(name), depth, DEFAULT_CELL_CAP).unwrap();
        let ev = moduli(&op.weighted);
        let right = leading_right(&op.weighted, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(right.value, ev[0], epsilon = 1e-9);
        let mme = compute_mme(&op, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(mme.lambda_left, ev[0], epsilon = 1e-9);
        let gap = spectral_gap(&op.weighted, mme.lambda, &mme.right.vector, &mme.left.vector, 20_000);
        let ratio = ev.get(1).copied().unwrap_or(0.0) / ev[0];
        assert!((gap.ratio - ratio).abs() < 0.02 + 0.02 * ratio, "{name}: {} vs {}", gap.ratio, ratio);
    }
}

#[test]
fn eigenvectors_satisfy_their_equations() {
    let op = build_ulam(&load("cat"), 2, DEFAULT_CELL_CAP).unwrap();
    let mme = compute_mme(&op, &SolverOptions::default()).unwrap();
    let n = op.len();
    let (mut ar, mut atl) = (vec![0.0; n], vec![0.0; n]);
    op.weighted.mul(&mme.right.vector, &mut ar);
    op.weighted.mul_t(&mme.left.vector, &mut atl);
    for i in 0..n {
        assert_abs_diff_eq!(ar[i], mme.lambda * mme.right.vector[i], epsilon = 1e-9);
        assert_abs_diff_eq!(atl[i], mme.lambda_left * mme.left.vector[i], epsilon = 1e-8);
    }
    assert_abs_diff_eq!(mme.mu.total(), 1.0, epsilon = 1e-12);
    assert!(mme.mu.masses.iter().all(|&m| m >= 0.0));
}

#[test]
fn baker3_measure_is_lebesgue() {
    // every column of the baker3 operator spreads mass 3 evenly over three cells
    for depth in 1..=3 {
        let op = build_ulam(&load("baker3"), depth, DEFAULT_CELL_CAP).unwrap();
        let mme = compute_mme(&op, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(mme.lambda, 3.0, epsilon = 1e-10);
        for (m, a) in mme.mu.masses.iter().zip(&op.areas) {
            assert_abs_diff_eq!(*m, *a, epsilon = 1e-12);
        }
    }
}

#[test]
fn baker2u_cylinders_carry_parry_masses() {
    // the full 2-shift gives each cylinder of M_{-k}^k mass 2^{-2k}
    let k = 3;
    let op = build_ulam(&load("baker2u:0.4"), k, DEFAULT_CELL_CAP).unwrap();
    let mme = compute_mme(&op, &SolverOptions::default()).unwrap();
    assert_abs_diff_eq!(mme.lambda, 2.0, epsilon = 1e-10);
    for &m in &mme.mu.masses {
        assert_abs_diff_eq!(m, 0.25f64.powi(k as i32), epsilon = 1e-10);
    }
}

#[test]
fn kernels_are_stochastic_and_preserve_mu() {
    let op = build_ulam(&load("baker2u:0.3"), 3, DEFAULT_CELL_CAP).unwrap();
    let mme = compute_mme(&op, &SolverOptions::default()).unwrap();
    for s in mme.parry.column_sums().into_iter().chain(mme.backward.column_sums()) {
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
    }
    let mut image = vec![0.0; op.len()];
    mme.parry.mul(&mme.mu.masses, &mut image);
    assert!(total_variation(&image, &mme.mu.masses) < 1e-9);
    mme.backward.mul(&mme.mu.masses, &mut image);
    assert!(total_variation(&image, &mme.mu.masses) < 1e-9);
}

#[test]
fn degenerate_inputs_are_rejected() {
    let op = build_ulam(&load("baker3"), 1, DEFAULT_CELL_CAP).unwrap();
    let seed = DiscreteMeasure {
        masses: vec![1.0; 3],
        depth: 1,
        normalization: Normalization::Probability,
        provenance: "wrong size".into(),
    };
    assert!(matches!(
        leading_left(&op.weighted, &seed, &op.areas, &SolverOptions::default()),
        Err(SpectralError::Dimension(3, 9))
    ));
    let tight = SolverOptions { tol: 0.0, max_iter: 5, ..Default::default() };
    let cat = build_ulam(&load("cat"), 2, DEFAULT_CELL_CAP).unwrap();
    assert!(matches!(leading_right(&cat.weighted, &tight), Err(SpectralError::NoConvergence { .. })));
}

#[test]
fn area_accounting_is_tight() {
    for name in ["baker3", "cat", "baker2u:0.4"] {
        let op = build_ulam(&load(name), 2, DEFAULT_CELL_CAP).unwrap();
        assert!(op.max_area_error < 1e-10, "{name}: {}", op.max_area_error);
        for s in op.transitions.column_sums() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }
}
