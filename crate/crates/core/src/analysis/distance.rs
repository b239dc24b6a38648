#[allow(unused_imports)]
use num_traits::Float;

use crate::geom::Point;
use crate::map::{Ambient, PiecewiseAffineMap};

/// Euclidean distance in the flat torus `ℝ²/ℤ²`.
pub fn torus_distance(a: Point, b: Point) -> f64 {
    let wrap = |d: f64| {
        let d = d - d.round();
        d.abs()
    };
    let (dx, dy) = (wrap(a.x - b.x), wrap(a.y - b.y));
    (dx * dx + dy * dy).sqrt()
}

fn ambient_distance(map: &PiecewiseAffineMap, a: Point, b: Point) -> f64 {
    match map.ambient {
        Ambient::Square => a.dist(b),
        Ambient::Torus => torus_distance(a, b),
    }
}

/// Distance that only sees points in a common closed domain; any two points
/// without one are `10·diam(M)` apart.
pub fn bar_distance(map: &PiecewiseAffineMap, x: Point, y: Point) -> f64 {
    if x == y {
        return 0.0;
    }
    let eps = map.tol.eps_geo;
    let shared = map.domains.iter().any(|d| d.contains(x, eps) && d.contains(y, eps));
    if shared {
        ambient_distance(map, x, y)
    } else {
        10.0 * map.diameter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Tolerances;
    use crate::map::{builtin, load_map};

    #[test]
    fn baker_strips() {
        let m = load_map(&builtin("baker3").unwrap(), &Tolerances::default()).unwrap();
        let d = bar_distance(&m, Point::new(0.1, 0.1), Point::new(0.2, 0.1));
        assert!((d - 0.1).abs() < 1e-15);
        let far = bar_distance(&m, Point::new(0.1, 0.5), Point::new(0.9, 0.5));
        assert!((far - 10.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(bar_distance(&m, Point::new(0.3, 0.3), Point::new(0.3, 0.3)), 0.0);
    }

    #[test]
    fn torus_wraps() {
        let d = torus_distance(Point::new(0.05, 0.5), Point::new(0.95, 0.5));
        assert!((d - 0.1).abs() < 1e-12);
    }
}
