use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use alloc::string::{String, ToString};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::geom::Point;

/// Test functions: constants, monomials and the trigonometric basis.
///
/// Text form: `const:c`, `mono:a,b` (`xᵃ yᵇ`), `cos:kx,ky` and `sin:kx,ky`
/// (of `2π(kx·x + ky·y)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Observable {
    Constant { value: f64 },
    Monomial { a: u32, b: u32 },
    Cos { kx: i32, ky: i32 },
    Sin { kx: i32, ky: i32 },
}

impl Observable {
    pub fn eval(&self, p: Point) -> f64 {
        match *self {
            Observable::Constant { value } => value,
            Observable::Monomial { a, b } => p.x.powi(a as i32) * p.y.powi(b as i32),
            Observable::Cos { kx, ky } => (2.0 * PI * (kx as f64 * p.x + ky as f64 * p.y)).cos(),
            Observable::Sin { kx, ky } => (2.0 * PI * (kx as f64 * p.x + ky as f64 * p.y)).sin(),
        }
    }

    /// Bound on `|φ|` over the unit square.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Observable::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Observable::Constant { value } => write!(f, "const:{value}"),
            Observable::Monomial { a, b } => write!(f, "mono:{a},{b}"),
            Observable::Cos { kx, ky } => write!(f, "cos:{kx},{ky}"),
            Observable::Sin { kx, ky } => write!(f, "sin:{kx},{ky}"),
        }
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || alloc::format!("cannot parse observable `{s}`");
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let ints = || -> Result<(i64, i64), String> {
            let (a, b) = args.split_once(',').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        };
        match kind.trim() {
            "const" => Ok(Observable::Constant { value: args.trim().parse().map_err(|_| bad())? }),
            "mono" => {
                let (a, b) = ints()?;
                if a < 0 || b < 0 {
                    return Err(bad());
                }
                Ok(Observable::Monomial { a: a as u32, b: b as u32 })
            }
            "cos" => ints().map(|(kx, ky)| Observable::Cos { kx: kx as i32, ky: ky as i32 }),
            "sin" => ints().map(|(kx, ky)| Observable::Sin { kx: kx as i32, ky: ky as i32 }),
            _ => Err(bad()),
        }
    }
}

/// Pair of test functions with the Hölder exponent they are used at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservablePair {
    pub phi: Observable,
    pub psi: Observable,
    #[serde(default = "one")]
    pub q: f64,
}

fn one() -> f64 {
    1.0
}

impl ObservablePair {
    pub fn new(phi: Observable, psi: Observable) -> Self {
        ObservablePair { phi, psi, q: 1.0 }
    }

    pub fn label(&self) -> String {
        alloc::format!("{}|{}", self.phi, self.psi).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in ["const:2.5", "mono:1,2", "cos:1,0", "sin:0,-3"] {
            let o: Observable = s.parse().unwrap();
            assert_eq!(o.to_string(), s);
        }
        assert!("cos:1".parse::<Observable>().is_err());
        assert!("tan:1,1".parse::<Observable>().is_err());
    }

    #[test]
    fn values() {
        let p = Point::new(0.25, 0.5);
        assert!((Observable::Cos { kx: 1, ky: 0 }.eval(p)).abs() < 1e-15);
        assert_eq!(Observable::Monomial { a: 1, b: 1 }.eval(p), 0.125);
    }
}
