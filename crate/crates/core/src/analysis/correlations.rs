use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::observables::ObservablePair;
use crate::error::AnalysisError;
use crate::partition::linear_fit;
use crate::spectral::{fsum, MmeData, UlamOperator};

/// Correlations below this are indistinguishable from rounding.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pair: ObservablePair,
    pub depth: usize,
    /// `C(n)` for `n = 0..=n_max`.
    pub c: Vec<f64>,
    /// Decay rate fitted on the decreasing range above the noise floor.
    pub gamma: Option<f64>,
    /// Last `n` used by the fit.
    pub fit_end: usize,
    /// The fit stopped at the noise floor rather than at `n_max`.
    pub truncated: bool,
    /// Fewer than two points were usable and `gamma` only bounds the rate from below.
    pub gamma_is_lower_bound: bool,
}

/// `C(n) = |Σ_i φ(c_i) (Qⁿ(ψμ*))_i − μ*(φ) μ*(ψ)|`, with `Q` the μ*-preserving
/// cell kernel and `c_i` the cell centroids.
pub fn correlation_decay(
    op: &UlamOperator,
    mme: &MmeData,
    pair: ObservablePair,
    n_max: usize,
) -> Result<CorrelationReport, AnalysisError> {
    let mu = &mme.mu.masses;
    if mu.len() != op.len() {
        return Err(AnalysisError::InvalidInput("measure and operator sizes differ"));
    }
    let phi: Vec<f64> = op.centroids.iter().map(|&c| pair.phi.eval(c)).collect();
    let psi: Vec<f64> = op.centroids.iter().map(|&c| pair.psi.eval(c)).collect();
    let total = fsum(mu.iter().copied());
    let mean = |f: &[f64]| fsum(f.iter().zip(mu).map(|(a, m)| a * m / total));
    let product = mean(&phi) * mean(&psi);
    let mut v: Vec<f64> = psi.iter().zip(mu).map(|(a, m)| a * m / total).collect();
    let mut next = vec![0.0; v.len()];
    let mut c = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            mme.parry.mul(&v, &mut next);
            core::mem::swap(&mut v, &mut next);
        }
        let pairing = fsum(phi.iter().zip(&v).map(|(a, b)| a * b));
        c.push((pairing - product).abs());
    }

    // decreasing run above the floor, starting at n = 0
    let mut end = 0;
    while end < n_max && c[end + 1] > NOISE_FLOOR && c[end + 1] < c[end] {
        end += 1;
    }
    let truncated = end < n_max && c[end + 1] <= NOISE_FLOOR;
    let (gamma, lower) = if c[0] <= NOISE_FLOOR {
        (None, false)
    } else if end == 0 {
        if truncated {
            (Some((c[0] / NOISE_FLOOR).ln()), true)
        } else {
            (None, false)
        }
    } else {
        let xs: Vec<f64> = (0..=end).map(|n| n as f64).collect();
        let ys: Vec<f64> = c[..=end].iter().map(|v| v.ln()).collect();
        (Some(-linear_fit(&xs, &ys).0), false)
    };
    Ok(CorrelationReport { pair, depth: op.depth, c, gamma, fit_end: end, truncated, gamma_is_lower_bound: lower })
}
