//! Statistical checks of μ*: invariance, entropy, correlations, Bowen balls,
//! neighbourhoods of the singular set and periodic points.

mod bowen;
mod correlations;
mod distance;
mod measure;
mod observables;
mod periodic;

pub use bowen::{bowen_ball, bowen_ball_scaling, BowenBallQuery, BowenBallResult, BowenScaling};
pub use correlations::{correlation_decay, CorrelationReport, NOISE_FLOOR};
pub use distance::{bar_distance, torus_distance};
pub use measure::{
    entropy_estimate, invariance_residual, singularity_neighborhood, EntropyReport, EntropyRow, NeighborhoodReport,
    NeighborhoodRow,
};
pub use observables::{Observable, ObservablePair};
pub use periodic::{count_periodic, mobius, PeriodicCensus};
