use approx::assert_abs_diff_eq;
use hypent_core::analysis::*;
use hypent_core::geom::{Point, Tolerances};
use hypent_core::map::{builtin, load_map, PiecewiseAffineMap};
use hypent_core::partition::{Sign, DEFAULT_CELL_CAP};
use hypent_core::spectral::{
    build_ulam, compute_mme, DiscreteMeasure, MmeData, Normalization, SolverOptions, UlamOperator,
};

fn load(name: &str) -> PiecewiseAffineMap {
    load_map(&builtin(name).unwrap(), &Tolerances::default()).unwrap()
}

fn setup(name: &str, depth: usize) -> (PiecewiseAffineMap, UlamOperator, MmeData) {
    let map = load(name);
    let op = build_ulam(&map, depth, DEFAULT_CELL_CAP).unwrap();
    let mme = compute_mme(&op, &SolverOptions::default()).unwrap();
    (map, op, mme)
}

/// `|det(Aⁿ − I)|` for the cat matrix in exact integer arithmetic.
fn cat_fixed_points(n: usize) -> u64 {
    let mut m = [[1i64, 0], [0, 1]];
    for _ in 0..n {
        m = [[2 * m[0][0] + m[1][0], 2 * m[0][1] + m[1][1]], [m[0][0] + m[1][0], m[0][1] + m[1][1]]];
    }
    ((m[0][0] - 1) * (m[1][1] - 1) - m[0][1] * m[1][0]).unsigned_abs()
}

#[test]
fn cat_periodic_counts_match_integer_determinants() {
    let census = count_periodic(&load("cat"), 8, DEFAULT_CELL_CAP).unwrap();
    let expected: Vec<u64> = (1..=8).map(cat_fixed_points).collect();
    assert_eq!(expected, vec![1, 5, 16, 45, 121, 320, 841, 2205]);
    for c in &census {
        assert_eq!(c.fixed_count, expected[c.n - 1], "n = {}", c.n);
        assert_eq!(c.prime_count as i64, c.mobius_prime_count);
        assert_eq!(c.representatives.len() as u64 * c.n as u64, c.prime_count);
        assert_eq!(c.degenerate_cells, 0);
    }
}

#[test]
fn baker3_fixed_points() {
    let census = count_periodic(&load("baker3"), 5, DEFAULT_CELL_CAP).unwrap();
    // x = b/2 and y = b/2 solve 3x − b = x and (y + b)/3 = y on strip b
    let mut pts = census[0].representatives.clone();
    pts.sort_by(|a, b| a.lex_cmp(b));
    let expect = [Point::new(0.0, 0.0), Point::new(0.5, 0.5), Point::new(1.0, 1.0)];
    for (p, q) in pts.iter().zip(&expect) {
        assert!(p.dist(*q) < 1e-12);
    }
    for c in &census {
        assert_eq!(c.fixed_count, 3u64.pow(c.n as u32));
        assert!(c.fixed_count >= c.prime_count);
        assert_eq!(c.prime_count as i64, c.mobius_prime_count);
    }
    assert_eq!(census[0].fixed_count, census[0].prime_count);
}

#[test]
fn constants_do_not_correlate() {
    for (name, depth) in [("baker3", 2), ("cat", 3), ("baker2u:0.4", 4)] {
        let (_, op, mme) = setup(name, depth);
        let c = Observable::Constant { value: 1.0 };
        let r = correlation_decay(&op, &mme, ObservablePair::new(c, c), 15).unwrap();
        assert!(r.c.iter().all(|&v| v < 1e-14), "{name}: {:?}", r.c);
        assert!(r.gamma.is_none());
    }
}

#[test]
fn zero_lag_correlation_is_the_variance() {
    let (_, op, mme) = setup("baker2u:0.4", 4);
    let phi = Observable::Cos { kx: 1, ky: 0 };
    let r = correlation_decay(&op, &mme, ObservablePair::new(phi, phi), 10).unwrap();
    let vals: Vec<f64> = op.centroids.iter().map(|&c| phi.eval(c)).collect();
    let mean: f64 = vals.iter().zip(&mme.mu.masses).map(|(v, m)| v * m).sum();
    let var: f64 = vals.iter().zip(&mme.mu.masses).map(|(v, m)| (v - mean).powi(2) * m).sum();
    assert_abs_diff_eq!(r.c[0], var, epsilon = 1e-12);
    assert!(r.gamma.unwrap() > 0.0);
}

#[test]
fn baker3_entropy_is_log_three() {
    let (map, op, mme) = setup("baker3", 2);
    for k in [0, 1] {
        let e = entropy_estimate(&map, &op, &mme.mu, &mme.parry, k, 5, DEFAULT_CELL_CAP).unwrap();
        assert!(e.sandwich_holds && !e.truncated);
        for row in &e.rows {
            // uniform masses over 3^{2k+n} cylinders
            assert_abs_diff_eq!(row.entropy, ((2 * k + row.n) as f64) * 3f64.ln(), epsilon = 1e-9);
            assert_eq!(row.words, 3usize.pow((2 * k + row.n) as u32));
        }
    }
}

#[test]
fn point_mass_has_no_entropy() {
    let (map, op, mme) = setup("cat", 3);
    let mut masses = vec![0.0; op.len()];
    masses[17] = 1.0;
    let point =
        DiscreteMeasure { masses, depth: 3, normalization: Normalization::Probability, provenance: "point".into() };
    let e = entropy_estimate(&map, &op, &point, &mme.parry, 0, 3, DEFAULT_CELL_CAP).unwrap();
    for row in &e.rows {
        assert_eq!(row.entropy, 0.0);
    }
}

#[test]
fn baker3_strip_neighbourhood() {
    // μ* is Lebesgue, so the ε-strip around x = 1/3 and x = 2/3 has mass 4ε
    // whenever ε is a multiple of the cell width
    let (map, op, mme) = setup("baker3", 3);
    let eps = [0.0, 1.0 / 27.0, 3.0 / 27.0, 1.0 / 2700.0];
    let r = singularity_neighborhood(&map, &op, &mme.mu, Some(Sign::Plus), &eps).unwrap();
    assert_eq!(r.rows[0].mass, 0.0);
    assert_abs_diff_eq!(r.rows[1].lower, 4.0 / 27.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.rows[2].lower, 12.0 / 27.0, epsilon = 1e-12);
    assert!(r.rows.iter().all(|row| row.lower <= row.upper));
    assert!(r.exponent.unwrap() > 0.0);
    assert!(r.coarse && r.suggested_depth == Some(4));
    assert!(singularity_neighborhood(&map, &op, &mme.mu, None, &[0.01, 0.02]).is_err());
}

#[test]
fn invariance_residuals() {
    let (_, op, mme) = setup("baker3", 3);
    assert!(invariance_residual(&op, &mme.mu) < 1e-10);
    let (_, op, mme) = setup("cat", 3);
    assert!(invariance_residual(&op, &mme.mu) < 1e-2);
}

#[test]
fn whole_domain_ball() {
    // with n = 0 and ε above the diameter the ball is the centre's domain
    let (map, op, mme) = setup("baker3", 2);
    let q = BowenBallQuery { center: Point::new(0.2, 0.6), n: 0, eps: 1.5 };
    let b = bowen_ball(&map, &op, &mme, q).unwrap();
    assert_abs_diff_eq!(b.lower[0], 1.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.upper[0], 1.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn bowen_brackets_shrink() {
    let (map, op, mme) = setup("baker2u:0.4", 5);
    let q = BowenBallQuery { center: Point::new(0.31, 0.62), n: 6, eps: 0.1 };
    let b = bowen_ball(&map, &op, &mme, q).unwrap();
    for j in 0..=6 {
        assert!(b.lower[j] <= b.upper[j] + 1e-15);
        if j > 0 {
            assert!(b.upper[j] <= b.upper[j - 1] + 1e-15);
        }
    }
    assert!(b.upper[6] > 0.0);
    let bad = BowenBallQuery { eps: 100.0, ..q };
    assert!(bowen_ball(&map, &op, &mme, bad).is_err());
}

#[test]
fn bowen_prefactor_is_reported() {
    let (map, op, mme) = setup("baker3", 3);
    let queries: Vec<BowenBallQuery> = [(0.2, 0.3), (0.5, 0.5), (0.8, 0.1)]
        .iter()
        .map(|&(x, y)| BowenBallQuery { center: Point::new(x, y), n: 4, eps: 0.1 })
        .collect();
    let s = bowen_ball_scaling(&map, &op, &mme, &queries, Some(3f64.ln())).unwrap();
    let c = s.prefactor_max.unwrap();
    for r in &s.results {
        assert!(r.mass <= 10.0 * c * 4.0 * (-4.0 * 3f64.ln()).exp());
    }
    assert!(s.slope.unwrap() > 0.0);
}
