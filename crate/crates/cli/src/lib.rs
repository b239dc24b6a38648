//! Batch runner for the `hypent-core` analyses: resolves a map, runs one named
//! experiment, and writes CSV/JSON artifacts plus a `report.json` summary.
//!
//! ```no_run
//! use hypent::{run, Experiment, ExperimentSpec};
//!
//! let mut spec = ExperimentSpec::new(Experiment::Counts, "baker3", "out/baker3");
//! spec.params.n_max = 10;
//! let report = run(spec).unwrap();
//! assert!(report.passed);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod error;
pub mod run;
pub mod spec;

pub use error::{exit, RunError};
pub use run::{compare_estimators, run, Check, ComparisonTable, ExperimentReport, ESTIMATOR_AGREEMENT};
pub use spec::{resolve_map, Experiment, ExperimentSpec, Parameters};

/// Builtin names with one-line descriptions, one per line.
pub fn list_builtins() -> String {
    hypent_core::map::list_builtins()
        .iter()
        .map(|b| format!("{:<16} {} (e.g. `{}`, h* = {:.6})\n", b.name, b.description, b.example, b.hstar))
        .collect()
}
