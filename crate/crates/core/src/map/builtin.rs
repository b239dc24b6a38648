use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Ambient, BranchDoc, ConeSpec, Declarations, MapDocument};
use crate::error::MapError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuiltinInfo {
    pub name: &'static str,
    /// A name that `builtin` accepts verbatim.
    pub example: &'static str,
    pub description: &'static str,
    pub ambient: Ambient,
    /// Topological entropy of `example`.
    pub hstar: f64,
}

const GOLDEN: f64 = 1.618_033_988_749_895;

pub fn list_builtins() -> Vec<BuiltinInfo> {
    vec![
        BuiltinInfo {
            name: "baker3",
            example: "baker3",
            description: "three-strip baker map (3x - i, (y + i)/3)",
            ambient: Ambient::Square,
            hstar: 3f64.ln(),
        },
        BuiltinInfo {
            name: "cat",
            example: "cat",
            description: "cat map [[2,1],[1,1]] on the torus, cut into four affine pieces",
            ambient: Ambient::Torus,
            hstar: 2.0 * GOLDEN.ln(),
        },
        BuiltinInfo {
            name: "baker2u:<beta>",
            example: "baker2u:0.4",
            description: "two-strip baker map with unequal strips [0,beta] and [beta,1]",
            ambient: Ambient::Square,
            hstar: 2f64.ln(),
        },
    ]
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

fn baker3() -> MapDocument {
    let domains = (0..3).map(|i| rect(i as f64 / 3.0, 0.0, (i + 1) as f64 / 3.0, 1.0)).collect();
    let branches = (0..3)
        .map(|i| BranchDoc { domain: i, linear: [[3.0, 0.0], [0.0, 1.0 / 3.0]], offset: [-(i as f64), i as f64 / 3.0] })
        .collect();
    MapDocument {
        name: "baker3".to_string(),
        ambient: Ambient::Square,
        domains,
        branches,
        cones: Some(ConeSpec { stable_axis_deg: 90.0, unstable_axis_deg: 0.0, half_width_deg: 10.0 }),
        declarations: Declarations { mixing: true, smooth_srb: true },
    }
}

fn cat() -> MapDocument {
    // pieces of the square on which [[2,1],[1,1]] needs the same integer translate
    let domains = vec![
        vec![[0.0, 0.0], [0.5, 0.0], [0.0, 1.0]],
        vec![[0.5, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[1.0, 0.0], [0.5, 1.0], [0.0, 1.0]],
        vec![[1.0, 0.0], [1.0, 1.0], [0.5, 1.0]],
    ];
    let shifts = [[0.0, 0.0], [-1.0, 0.0], [-1.0, -1.0], [-2.0, -1.0]];
    let branches = shifts
        .iter()
        .enumerate()
        .map(|(i, s)| BranchDoc { domain: i, linear: [[2.0, 1.0], [1.0, 1.0]], offset: *s })
        .collect();
    // eigen-directions of [[2,1],[1,1]]: (1, 1/φ) expands, (-1/φ, 1) contracts
    let unstable = (1.0 / GOLDEN).atan().to_degrees();
    MapDocument {
        name: "cat".to_string(),
        ambient: Ambient::Torus,
        domains,
        branches,
        cones: Some(ConeSpec { stable_axis_deg: unstable - 90.0, unstable_axis_deg: unstable, half_width_deg: 10.0 }),
        declarations: Declarations { mixing: true, smooth_srb: true },
    }
}

fn baker2u(beta: f64) -> MapDocument {
    let b = beta;
    let c = 1.0 - beta;
    MapDocument {
        name: format!("baker2u:{beta}"),
        ambient: Ambient::Square,
        domains: vec![rect(0.0, 0.0, b, 1.0), rect(b, 0.0, 1.0, 1.0)],
        branches: vec![
            BranchDoc { domain: 0, linear: [[1.0 / b, 0.0], [0.0, b]], offset: [0.0, 0.0] },
            BranchDoc { domain: 1, linear: [[1.0 / c, 0.0], [0.0, c]], offset: [-b / c, b] },
        ],
        cones: Some(ConeSpec { stable_axis_deg: 90.0, unstable_axis_deg: 0.0, half_width_deg: 10.0 }),
        declarations: Declarations { mixing: true, smooth_srb: true },
    }
}

/// Resolves a builtin by name: `baker3`, `cat`, or `baker2u:<beta>` with
/// `0 < beta < 1` (plain `baker2u` means beta = 0.4).
pub fn builtin(name: &str) -> Result<MapDocument, MapError> {
    match name {
        "baker3" => Ok(baker3()),
        "cat" => Ok(cat()),
        "baker2u" => Ok(baker2u(0.4)),
        _ => {
            let Some(rest) = name.strip_prefix("baker2u:") else {
                return Err(MapError::UnknownBuiltin(name.to_string()));
            };
            let beta: f64 = rest.trim().parse().map_err(|_| MapError::InvalidParameter(format!("beta `{rest}`")))?;
            if !(beta > 0.0 && beta < 1.0) {
                return Err(MapError::InvalidParameter(format!("beta = {beta} outside (0, 1)")));
            }
            Ok(baker2u(beta))
        }
    }
}
