use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hypent_core::analysis::{Observable, ObservablePair};
use hypent_core::geom::Tolerances;
use hypent_core::map::{builtin, load_map, MapDocument, PiecewiseAffineMap};
use hypent_core::partition::DEFAULT_CELL_CAP;
use hypent_core::spectral::SolverOptions;
use hypent_core::MapError;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Counts,
    Hstar,
    Growth,
    Onestep,
    Spectrum,
    Mme,
    Correlations,
    Bowen,
    Periodic,
    Neighborhood,
    FullReport,
    Compare,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::Counts,
        Experiment::Hstar,
        Experiment::Growth,
        Experiment::Onestep,
        Experiment::Spectrum,
        Experiment::Mme,
        Experiment::Correlations,
        Experiment::Bowen,
        Experiment::Periodic,
        Experiment::Neighborhood,
        Experiment::FullReport,
        Experiment::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Counts => "counts",
            Experiment::Hstar => "hstar",
            Experiment::Growth => "growth",
            Experiment::Onestep => "onestep",
            Experiment::Spectrum => "spectrum",
            Experiment::Mme => "mme",
            Experiment::Correlations => "correlations",
            Experiment::Bowen => "bowen",
            Experiment::Periodic => "periodic",
            Experiment::Neighborhood => "neighborhood",
            Experiment::FullReport => "full-report",
            Experiment::Compare => "compare",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| RunError::Usage(format!("unknown experiment `{s}`")))
    }
}

/// Every tunable of a run. All fields are filled in before the run starts, so
/// the echo in `report.json` is the complete parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Parameters {
    pub n_max: usize,
    /// Operator depth `k`: the Ulam cells are `M_{-k}^k`.
    pub depth: usize,
    pub delta0: f64,
    pub q: f64,
    /// Exponent of the growth-lemma sums.
    pub p: f64,
    /// Inclusive range of `n` for the h* regression; `None` picks `[n_max/2, n_max]`.
    pub fit_window: Option<(usize, usize)>,
    pub alphas: Vec<f64>,
    /// Horizon of the growth-lemma checks, capped at `n_max`. Pull-backs grow
    /// like `e^{n h*}` per sample, so this is kept below `n_max` by default.
    pub growth_n: usize,
    /// Long-curve thresholds for the long-fraction scan.
    pub deltas: Vec<f64>,
    /// Points per side of the stable segment grid.
    pub lattice: usize,
    pub eps_list: Vec<f64>,
    pub bowen_eps: f64,
    pub bowen_n: usize,
    pub bowen_centers: usize,
    /// Backward depth of the cylinders in the entropy estimate.
    pub entropy_k: usize,
    pub observables: Vec<ObservablePair>,
    pub cap: usize,
    pub tolerances: Tolerances,
    pub solver: SolverOptions,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            n_max: 10,
            depth: 4,
            delta0: 0.1,
            q: 1.0,
            p: 2.0,
            fit_window: None,
            alphas: vec![0.25, 0.5, 0.75, 1.0],
            growth_n: 8,
            deltas: vec![0.3, 0.1, 0.03],
            lattice: 10,
            eps_list: vec![0.001, 0.003, 0.01, 0.03, 0.1],
            bowen_eps: 0.1,
            bowen_n: 8,
            bowen_centers: 10,
            entropy_k: 0,
            observables: vec![
                ObservablePair::new(Observable::Cos { kx: 1, ky: 0 }, Observable::Cos { kx: 1, ky: 0 }),
                ObservablePair::new(Observable::Sin { kx: 1, ky: 1 }, Observable::Cos { kx: 0, ky: 1 }),
                ObservablePair::new(Observable::Constant { value: 1.0 }, Observable::Constant { value: 1.0 }),
            ],
            cap: DEFAULT_CELL_CAP,
            tolerances: Tolerances::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Largest values accepted for the size parameters.
pub const MAX_N: usize = 30;
pub const MAX_DEPTH: usize = 12;

impl Parameters {
    /// Reads a JSON parameter block. Missing fields keep their defaults.
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("parameters: {e}")))
    }

    pub fn fit_window_or_default(&self) -> (usize, usize) {
        self.fit_window.unwrap_or(((self.n_max / 2).max(1), self.n_max))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.n_max == 0 || self.n_max > MAX_N {
            return bad(format!("n_max = {} outside 1..={MAX_N}", self.n_max));
        }
        if self.depth > MAX_DEPTH {
            return bad(format!("depth = {} above {MAX_DEPTH}", self.depth));
        }
        if !(self.delta0 > 0.0 && self.delta0 <= 1.0) {
            return bad(format!("delta0 = {} outside (0, 1]", self.delta0));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return bad(format!("q = {} outside (0, 1]", self.q));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return bad(format!("p = {} below 1", self.p));
        }
        if let Some((lo, hi)) = self.fit_window {
            if lo < 1 || hi > self.n_max || hi < lo + 3 {
                return bad(format!("fit window ({lo}, {hi}) needs 1 <= lo, lo + 3 <= hi <= n_max"));
            }
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return bad("alphas must be non-empty and lie in (0, 1]".into());
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return bad("deltas must be non-empty and lie in (0, 1]".into());
        }
        if self.growth_n == 0 {
            return bad("growth_n must be positive".into());
        }
        if self.lattice == 0 {
            return bad("lattice must be positive".into());
        }
        if self.eps_list.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return bad("eps_list entries must be finite and non-negative".into());
        }
        if !(self.bowen_eps > 0.0 && self.bowen_eps.is_finite()) || self.bowen_n == 0 || self.bowen_centers == 0 {
            return bad("bowen_eps, bowen_n and bowen_centers must be positive".into());
        }
        if self.cap == 0 {
            return bad("cap must be positive".into());
        }
        let t = &self.tolerances;
        if [t.eps_geo, t.eps_area, t.eps_thin, t.eps_snap].iter().any(|v| !(*v >= 0.0 && *v < 1e-3)) {
            return bad("tolerances must lie in [0, 1e-3)".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver tol and max_iter must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Builtin name (`baker3`, `cat`, `baker2u:<beta>`) or path to a JSON map document.
    pub map: String,
    pub experiment: Experiment,
    #[serde(default)]
    pub params: Parameters,
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Recorded for the report; every stage currently runs on one thread.
    #[serde(default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, map: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            map: map.into(),
            experiment,
            params: Parameters::default(),
            out: out.into(),
            seed: 0,
            threads: 1,
        }
    }

    /// Fills in derived defaults and checks ranges.
    pub fn resolve(mut self) -> Result<Self, RunError> {
        if self.threads == 0 {
            return Err(RunError::Config("threads must be at least 1".into()));
        }
        self.params.validate()?;
        if self.params.fit_window.is_none() && self.params.n_max >= 4 {
            self.params.fit_window = Some(self.params.fit_window_or_default());
        }
        Ok(self)
    }
}

/// Resolves a map reference: a builtin name first, then a JSON file.
pub fn resolve_map(reference: &str, tol: &Tolerances) -> Result<PiecewiseAffineMap, RunError> {
    let doc = match builtin(reference) {
        Ok(doc) => doc,
        Err(MapError::UnknownBuiltin(_)) => read_map_document(Path::new(reference))?,
        Err(e) => return Err(e.into()),
    };
    Ok(load_map(&doc, tol)?)
}

fn read_map_document(path: &Path) -> Result<MapDocument, RunError> {
    if !path.is_file() {
        return Err(RunError::Config(format!("`{}` is neither a builtin nor a map file", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{}\"", e.name()));
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn partial_parameter_blocks_keep_defaults() {
        let p = Parameters::from_json(r#"{"n_max": 6, "delta0": 0.05}"#).unwrap();
        assert_eq!(p.n_max, 6);
        assert_eq!(p.depth, Parameters::default().depth);
        assert!(Parameters::from_json(r#"{"n_max": 6, "bogus": 1}"#).is_err());
        assert!(Parameters::from_json("{ n_max").is_err());
    }

    #[test]
    fn resolve_fills_the_fit_window() {
        let s = ExperimentSpec::new(Experiment::Hstar, "cat", "out").resolve().unwrap();
        assert_eq!(s.params.fit_window, Some((5, 10)));
        let mut bad = ExperimentSpec::new(Experiment::Hstar, "cat", "out");
        bad.params.q = 0.0;
        assert!(matches!(bad.resolve(), Err(RunError::Config(_))));
    }

    #[test]
    fn unknown_maps_are_config_errors() {
        let tol = Tolerances::default();
        assert!(resolve_map("baker2u:0.4", &tol).is_ok());
        assert!(matches!(resolve_map("baker2u:2", &tol), Err(RunError::Config(_))));
        assert!(matches!(resolve_map("/no/such/map.json", &tol), Err(RunError::Config(_))));
    }
}
