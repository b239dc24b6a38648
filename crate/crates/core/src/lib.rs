//! Partition counting, transfer operators and maximal-entropy measures for
//! piecewise affine hyperbolic maps of the square and the torus.
//!
//! The crate is `no_std` and only needs an allocator. Everything works on
//! exact convex cells: a map is a finite list of affine branches on convex
//! domains, and every dynamical refinement is built by clipping polygons.
//!
//! ```
//! use hypent_core::geom::Tolerances;
//! use hypent_core::map::{builtin, load_map};
//! use hypent_core::partition::{count_sequence, DEFAULT_CELL_CAP};
//!
//! let map = load_map(&builtin("baker3").unwrap(), &Tolerances::default()).unwrap();
//! let counts = count_sequence(&map, 4, DEFAULT_CELL_CAP);
//! assert_eq!(counts.counts, vec![3, 9, 27, 81]);
//! ```
#![no_std]
#![forbid(unsafe_code)]
// NaN-rejecting range checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod curves;
pub mod error;
pub mod geom;
pub mod map;
pub mod partition;
pub mod spectral;

pub use error::{AnalysisError, CurveError, GeomError, MapError, PartitionError, SpectralError};
