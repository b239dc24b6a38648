use std::collections::BTreeMap;
use std::time::Instant;

use hypent_core::analysis::*;
use hypent_core::curves::{growth_lemma_checks, long_fraction_scan, one_step_expansion, stable_segment_grid};
use hypent_core::geom::Point;
use hypent_core::map::cert::{complexity_certificate, hyperbolicity_certificate};
use hypent_core::map::PiecewiseAffineMap;
use hypent_core::partition::{count_sequence, estimate_hstar, CountSequence, HstarEstimate, Sign, DEFAULT_CELL_CAP};
use hypent_core::spectral::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{coo_artifact, csv_artifact, json_artifact, write_all, Artifact, SeriesRow};
use crate::error::{exit, RunError};
use crate::spec::{resolve_map, Experiment, ExperimentSpec, Parameters};

/// Largest allowed pairwise gap between the three entropy estimators.
pub const ESTIMATOR_AGREEMENT: f64 = 0.05;

/// One entry of the pass/fail ledger. Only hard checks decide the exit code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub sections: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            exit::OK
        } else {
            exit::ASSERTION
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub a: String,
    pub b: String,
    pub value: f64,
}

/// Three routes to the topological entropy and how far apart they land.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub n_max: usize,
    pub depth: usize,
    pub fit_window: (usize, usize),
    pub hstar_fit: f64,
    pub log_lambda: f64,
    /// `H_n − H_{n−1}` of the μ* cylinder entropy at `n = n_max`.
    pub entropy: f64,
    pub differences: Vec<Difference>,
    pub spread: f64,
    pub passed: bool,
}

fn comparison(
    n_max: usize,
    depth: usize,
    fit: &HstarEstimate,
    mme: &MmeData,
    entropy: &EntropyReport,
) -> ComparisonTable {
    let hstar_fit = fit.hstar;
    let log_lambda = mme.lambda.ln();
    let entropy = entropy.rows.last().map_or(f64::NAN, |r| r.increment);
    let named = [("hstar_fit", hstar_fit), ("log_lambda", log_lambda), ("entropy", entropy)];
    let mut differences = Vec::new();
    for i in 0..named.len() {
        for j in i + 1..named.len() {
            let value = (named[i].1 - named[j].1).abs();
            differences.push(Difference { a: named[i].0.into(), b: named[j].0.into(), value });
        }
    }
    let spread = differences.iter().map(|d| d.value).fold(0.0, f64::max);
    let passed = differences.iter().all(|d| d.value < ESTIMATOR_AGREEMENT);
    ComparisonTable {
        n_max,
        depth,
        fit_window: fit.fit_window,
        hstar_fit,
        log_lambda,
        entropy,
        differences,
        spread,
        passed,
    }
}

/// Compares the h* regression, `log λ̂` of the depth-`depth` operator and the
/// μ* cylinder entropy, all taken at `n_max`.
pub fn compare_estimators(map: &PiecewiseAffineMap, n_max: usize, depth: usize) -> Result<ComparisonTable, RunError> {
    let p = Parameters { n_max, depth, ..Parameters::default() };
    p.validate()?;
    let counts = checked_counts(map, n_max, DEFAULT_CELL_CAP)?;
    let fit = estimate_hstar(&counts.counts, p.fit_window_or_default())?;
    let op = build_ulam(map, depth, DEFAULT_CELL_CAP)?;
    let mme = compute_mme(&op, &p.solver)?;
    let e = entropy_estimate(map, &op, &mme.mu, &mme.parry, p.entropy_k, n_max, DEFAULT_CELL_CAP)?;
    Ok(comparison(n_max, depth, &fit, &mme, &e))
}

fn checked_counts(map: &PiecewiseAffineMap, n_max: usize, cap: usize) -> Result<CountSequence, RunError> {
    let cs = count_sequence(map, n_max, cap);
    if cs.truncated {
        return Err(RunError::Cap(format!("#M_0^n exceeded {cap} cells after n = {}", cs.counts.len())));
    }
    Ok(cs)
}

/// Known entropy of a builtin, used for advisory checks only.
fn reference_entropy(map_ref: &str) -> Option<f64> {
    hypent_core::map::list_builtins()
        .into_iter()
        .find(|b| {
            b.name == map_ref
                || b.example == map_ref
                || (map_ref.starts_with("baker2u") && b.name.starts_with("baker2u"))
        })
        .map(|b| b.hstar)
}

fn is_constant(o: &Observable) -> bool {
    matches!(o, Observable::Constant { .. } | Observable::Monomial { a: 0, b: 0 } | Observable::Cos { kx: 0, ky: 0 })
}

struct Run {
    spec: ExperimentSpec,
    map: PiecewiseAffineMap,
    artifacts: Vec<Artifact>,
    sections: BTreeMap<String, Value>,
    checks: Vec<Check>,
    counts: Option<CountSequence>,
    fit: Option<HstarEstimate>,
    ulam: Option<(UlamOperator, MmeData)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

impl Run {
    fn check(&mut self, name: &str, hard: bool, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), hard, passed, detail });
    }

    fn counts(&mut self) -> Result<&CountSequence, RunError> {
        if self.counts.is_none() {
            self.counts = Some(checked_counts(&self.map, self.spec.params.n_max, self.spec.params.cap)?);
        }
        Ok(self.counts.as_ref().unwrap())
    }

    fn fit(&mut self) -> Result<&HstarEstimate, RunError> {
        if self.fit.is_none() {
            let window =
                self.spec.params.fit_window.ok_or_else(|| RunError::Config("the h* fit needs n_max >= 4".into()))?;
            let fit = estimate_hstar(&self.counts()?.counts, window)?;
            self.fit = Some(fit);
        }
        Ok(self.fit.as_ref().unwrap())
    }

    /// Builds the operator and μ* on first use.
    fn ulam(&mut self) -> Result<(), RunError> {
        if self.ulam.is_none() {
            let op = build_ulam(&self.map, self.spec.params.depth, self.spec.params.cap)?;
            let mme = compute_mme(&op, &self.spec.params.solver)?;
            self.ulam = Some((op, mme));
        }
        Ok(())
    }

    fn stage_counts(&mut self) -> Result<(), RunError> {
        let cs = self.counts()?.clone();
        #[derive(Serialize)]
        struct Row {
            n: usize,
            value: u64,
            bracket_lo: u64,
            bracket_hi: u64,
        }
        let rows: Vec<Row> = cs
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| Row { n: i + 1, value: c, bracket_lo: c, bracket_hi: c })
            .collect();
        self.artifacts.push(csv_artifact("counts.csv", &rows)?);
        let monotone = cs.counts.first().is_some_and(|&c| c >= 1) && cs.counts.windows(2).all(|w| w[1] >= w[0]);
        self.check("counts refine", true, monotone, format!("#M_0^n for n = 1..={}", cs.counts.len()));
        self.sections.insert("counts".into(), to_value(&cs));
        Ok(())
    }

    fn stage_hstar(&mut self) -> Result<(), RunError> {
        let fit = self.fit()?.clone();
        self.artifacts.push(json_artifact("hstar.json", &json!({ "seed": self.spec.seed, "estimate": fit }))?);
        self.check("supermultiplicativity", true, fit.c1 > 0.0, format!("c1 = {:.6}", fit.c1));
        if let Some(h) = reference_entropy(&self.spec.map) {
            let rel = (fit.hstar - h).abs() / h;
            self.check(
                "h* near reference",
                false,
                rel <= 0.02,
                format!("fit {:.6} vs {h:.6} (rel {rel:.4})", fit.hstar),
            );
        }
        self.sections.insert("hstar".into(), to_value(&fit));
        Ok(())
    }

    fn stage_spectrum(&mut self) -> Result<(), RunError> {
        let tol = self.spec.params.solver.tol;
        let max_iter = self.spec.params.solver.max_iter;
        self.ulam()?;
        let (op, mme) = self.ulam.as_ref().map(|u| (&u.0, &u.1)).unwrap();
        let gap = spectral_gap(&op.weighted, mme.lambda, &mme.right.vector, &mme.left.vector, max_iter.min(20_000));
        let coo = coo_artifact("ulam.coo", &op.weighted, op.len());
        let section = json!({
            "depth": op.depth,
            "cells": op.len(),
            "nnz": op.weighted.nnz(),
            "lambda_right": mme.lambda,
            "lambda_left": mme.lambda_left,
            "log_lambda": mme.lambda.ln(),
            "right_residual": mme.right.residual,
            "left_residual": mme.left.residual,
            "right_iterations": mme.right.iterations,
            "left_iterations": mme.left.iterations,
            "gap": gap,
            "max_area_error": op.max_area_error,
            "slivers": op.slivers,
        });
        let lr = (mme.lambda - mme.lambda_left).abs();
        let lambda = mme.lambda;
        self.artifacts.push(coo);
        self.artifacts.push(json_artifact("spectrum.json", &json!({ "seed": self.spec.seed, "spectrum": section }))?);
        self.check("left and right eigenvalues agree", true, lr <= 2.0 * tol, format!("|λ_R − λ_L| = {lr:.2e}"));
        if let Some(fit) = &self.fit {
            let e = fit.hstar.exp();
            let rel = (lambda - e).abs() / e;
            self.check("λ̂ near e^h*", false, rel <= 0.03, format!("λ̂ {lambda:.6} vs e^h* {e:.6} (rel {rel:.4})"));
        }
        self.sections.insert("spectrum".into(), section);
        Ok(())
    }

    fn stage_mme(&mut self) -> Result<(), RunError> {
        let seed = self.spec.seed;
        self.ulam()?;
        let (op, mme) = self.ulam.as_ref().map(|u| (&u.0, &u.1)).unwrap();
        #[derive(Serialize)]
        struct Row {
            cell: usize,
            cx: f64,
            cy: f64,
            area: f64,
            nu0: f64,
            nu0_tilde: f64,
            mu: f64,
        }
        let rows: Vec<Row> = (0..op.len())
            .map(|i| Row {
                cell: i,
                cx: op.centroids[i].x,
                cy: op.centroids[i].y,
                area: op.areas[i],
                nu0: mme.nu0.masses[i],
                nu0_tilde: mme.nu0_tilde.masses[i],
                mu: mme.mu.masses[i],
            })
            .collect();
        let total = mme.mu.total();
        let nonneg = mme.mu.masses.iter().all(|&m| m >= 0.0);
        let section = json!({
            "depth": op.depth,
            "lambda": mme.lambda,
            "total": total,
            "invariance_residual": invariance_residual(op, &mme.mu),
            "distance_from_lebesgue": total_variation(&mme.mu.masses, &op.areas),
        });
        let mut artifacts = vec![csv_artifact("measure_mme.csv", &rows)?];
        if !self.artifacts.iter().any(|a| a.name == "ulam.coo") {
            artifacts.push(coo_artifact("ulam.coo", &op.weighted, op.len()));
        }
        artifacts.push(json_artifact("mme.json", &json!({ "seed": seed, "mme": section }))?);
        self.artifacts.extend(artifacts);
        self.check(
            "μ* is a probability vector",
            true,
            nonneg && (total - 1.0).abs() <= 1e-9,
            format!("total {total:.12}, non-negative {nonneg}"),
        );
        self.sections.insert("mme".into(), section);
        Ok(())
    }

    fn stage_correlations(&mut self) -> Result<(), RunError> {
        let n_max = self.spec.params.n_max;
        let pairs = self.spec.params.observables.clone();
        self.ulam()?;
        let (op, mme) = self.ulam.as_ref().map(|u| (&u.0, &u.1)).unwrap();
        let mut reports = Vec::with_capacity(pairs.len());
        for pair in pairs {
            reports.push(correlation_decay(op, mme, pair, n_max)?);
        }
        let rows: Vec<SeriesRow> = reports
            .iter()
            .flat_map(|r| {
                let label = r.pair.label();
                r.c.iter().enumerate().map(move |(n, &c)| SeriesRow::point(label.clone(), n, c))
            })
            .collect();
        self.artifacts.push(csv_artifact("correlations.csv", &rows)?);
        self.artifacts
            .push(json_artifact("correlations.json", &json!({ "seed": self.spec.seed, "reports": reports }))?);
        for r in &reports {
            if is_constant(&r.pair.phi) || is_constant(&r.pair.psi) {
                let worst = r.c.iter().map(|c| c.abs()).fold(0.0, f64::max);
                self.check(
                    &format!("constant correlation vanishes ({})", r.pair.label()),
                    true,
                    worst <= NOISE_FLOOR,
                    format!("max |C(n)| = {worst:.2e}"),
                );
            }
        }
        self.sections.insert("correlations".into(), to_value(&reports));
        Ok(())
    }

    fn stage_bowen(&mut self) -> Result<(), RunError> {
        let p = self.spec.params.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        let queries: Vec<BowenBallQuery> = (0..p.bowen_centers)
            .map(|_| BowenBallQuery { center: Point::new(rng.gen(), rng.gen()), n: p.bowen_n, eps: p.bowen_eps })
            .collect();
        let reference = reference_entropy(&self.spec.map);
        self.ulam()?;
        let (op, mme) = self.ulam.as_ref().map(|u| (&u.0, &u.1)).unwrap();
        let h = reference.unwrap_or_else(|| mme.lambda.ln());
        let scaling = bowen_ball_scaling(&self.map, op, mme, &queries, Some(h))?;
        let mut rows = Vec::new();
        for (i, r) in scaling.results.iter().enumerate() {
            for j in 0..r.lower.len() {
                let (lo, hi) = (r.lower[j], r.upper[j]);
                rows.push(SeriesRow::bracketed(format!("center{i}"), j, 0.5 * (lo + hi), lo, hi));
            }
        }
        self.artifacts.push(csv_artifact("bowen.csv", &rows)?);
        self.artifacts
            .push(json_artifact("bowen.json", &json!({ "seed": self.spec.seed, "entropy": h, "scaling": scaling }))?);
        let ordered = scaling.results.iter().all(|r| r.lower.iter().zip(&r.upper).all(|(l, u)| *l <= u + 1e-12));
        self.check("Bowen brackets ordered", true, ordered, format!("{} queries", scaling.results.len()));
        let within = scaling.results.iter().filter(|r| r.rate.is_some_and(|x| (x - h).abs() <= 0.1 * h)).count();
        self.check(
            "−log μ*(B_n)/n near h*",
            false,
            within == scaling.results.len(),
            format!("{within}/{} within 10% of {h:.4}; pooled slope {:?}", scaling.results.len(), scaling.slope),
        );
        self.sections.insert("bowen".into(), json!({ "entropy": h, "scaling": scaling }));
        Ok(())
    }

    fn stage_periodic(&mut self) -> Result<(), RunError> {
        let census = count_periodic(&self.map, self.spec.params.n_max, self.spec.params.cap)?;
        let mut rows = Vec::new();
        for c in &census {
            rows.push(SeriesRow::point("fixed", c.n, c.fixed_count as f64));
            rows.push(SeriesRow::point("prime", c.n, c.prime_count as f64));
        }
        self.artifacts.push(csv_artifact("periodic.csv", &rows)?);
        self.artifacts.push(json_artifact("periodic.json", &json!({ "seed": self.spec.seed, "census": census }))?);
        let consistent = census.iter().all(|c| c.mobius_prime_count == c.prime_count as i64);
        self.check("prime counts match Möbius inversion", true, consistent, format!("n = 1..={}", census.len()));
        if let Some(h) = reference_entropy(&self.spec.map) {
            let scaled: Vec<f64> = census.iter().map(|c| c.fixed_count as f64 * (-(c.n as f64) * h).exp()).collect();
            let tail = &scaled[scaled.len().saturating_sub(4)..];
            let ok = tail.iter().all(|s| (0.5..=1.5).contains(s));
            self.check("#P_n e^{-n h*} in [0.5, 1.5]", false, ok, format!("last values {tail:.3?}"));
        }
        self.sections.insert("periodic".into(), to_value(&census));
        Ok(())
    }

    fn stage_neighborhood(&mut self) -> Result<(), RunError> {
        let eps = self.spec.params.eps_list.clone();
        self.ulam()?;
        let (op, mme) = self.ulam.as_ref().map(|u| (&u.0, &u.1)).unwrap();
        let mut reports = Vec::new();
        for which in [Sign::Plus, Sign::Minus] {
            reports.push(singularity_neighborhood(&self.map, op, &mme.mu, Some(which), &eps)?);
        }
        #[derive(Serialize)]
        struct Row {
            series: &'static str,
            eps: f64,
            value: f64,
            bracket_lo: f64,
            bracket_hi: f64,
        }
        let mut rows = Vec::new();
        for (r, series) in reports.iter().zip(["S+", "S-"]) {
            rows.extend(r.rows.iter().map(|x| Row {
                series,
                eps: x.eps,
                value: x.mass,
                bracket_lo: x.lower,
                bracket_hi: x.upper,
            }));
        }
        self.artifacts.push(csv_artifact("neighborhood.csv", &rows)?);
        self.artifacts
            .push(json_artifact("neighborhood.json", &json!({ "seed": self.spec.seed, "reports": reports }))?);
        let ordered = reports.iter().all(|r| r.rows.iter().all(|x| x.lower <= x.upper + 1e-12));
        self.check("neighbourhood brackets ordered", true, ordered, format!("{} radii", eps.len()));
        for (r, series) in reports.iter().zip(["S+", "S-"]) {
            match r.exponent {
                Some(e) => {
                    self.check(&format!("{series} exponent positive"), true, e > 0.0, format!("exponent {e:.4}"))
                }
                None => self.check(
                    &format!("{series} exponent positive"),
                    false,
                    false,
                    format!("too coarse; suggested depth {:?}", r.suggested_depth),
                ),
            }
        }
        self.sections.insert("neighborhood".into(), to_value(&reports));
        Ok(())
    }

    fn stage_growth(&mut self) -> Result<(), RunError> {
        let p = self.spec.params.clone();
        let n = p.growth_n.min(p.n_max);
        let hyp = hyperbolicity_certificate(&self.map)?;
        let cc = complexity_certificate(&self.map, p.delta0, &p.alphas, n)?;
        let counts = self.counts()?.counts.clone();
        let samples = stable_segment_grid(&self.map, p.delta0, p.lattice);
        let growth =
            growth_lemma_checks(&self.map, &samples, n, p.delta0, p.p, &counts, cc.k1_delta0, hyp.lambda, hyp.kappa)?;
        let scan = long_fraction_scan(&self.map, &p.deltas, n, p.lattice);
        let mut rows = Vec::new();
        for r in &growth.rows {
            rows.push(SeriesRow::bracketed("never_long", r.n, r.max_never_long as f64, 0.0, r.k1_pow));
            rows.push(SeriesRow::bracketed("total", r.n, r.max_total as f64, 0.0, r.count as f64));
        }
        for s in &scan {
            for (i, &f) in s.fractions.iter().enumerate() {
                rows.push(SeriesRow::point(format!("long_fraction delta={}", s.delta), i + 1, f));
            }
        }
        self.artifacts.push(csv_artifact("growth.csv", &rows)?);
        let section = json!({ "hyperbolicity": hyp, "complexity": cc, "growth": growth, "long_fraction": scan });
        self.artifacts.push(json_artifact("growth.json", &json!({ "seed": self.spec.seed, "growth": section }))?);
        self.check("never-long pieces within K1^n", true, growth.all_bound_a_hold, format!("K1 = {}", growth.k1));
        self.check(
            "complexity certificate",
            false,
            cc.valid,
            format!("alpha0 {}, n0 {:?}, rho {:.4}", cc.alpha0, cc.n0, cc.rho),
        );
        self.sections.insert("growth".into(), section);
        Ok(())
    }

    fn stage_onestep(&mut self) -> Result<(), RunError> {
        let p = &self.spec.params;
        let r = one_step_expansion(&self.map, p.delta0, p.q, p.lattice)?;
        self.artifacts.push(json_artifact("onestep.json", &json!({ "seed": self.spec.seed, "onestep": r }))?);
        self.check("ρ̂ computed", true, r.rho_hat.is_finite() && r.samples > 0, format!("{} samples", r.samples));
        self.check("ρ̂ < 1", false, r.below_one, format!("ρ̂ = {:.6} at δ₀ = {}", r.rho_hat, r.delta0));
        self.sections.insert("onestep".into(), to_value(&r));
        Ok(())
    }

    fn stage_compare(&mut self) -> Result<(), RunError> {
        let p = self.spec.params.clone();
        let fit = self.fit()?.clone();
        self.ulam()?;
        let (op, mme) = self.ulam.as_ref().map(|u| (&u.0, &u.1)).unwrap();
        let e = entropy_estimate(&self.map, op, &mme.mu, &mme.parry, p.entropy_k, p.n_max, p.cap)?;
        let table = comparison(p.n_max, p.depth, &fit, mme, &e);
        self.artifacts.push(json_artifact(
            "compare.json",
            &json!({ "seed": self.spec.seed, "comparison": table, "entropy": e }),
        )?);
        self.check(
            "estimators agree",
            true,
            table.passed,
            format!("fit {:.5}, log λ̂ {:.5}, entropy {:.5}", table.hstar_fit, table.log_lambda, table.entropy),
        );
        self.sections.insert("compare".into(), to_value(&table));
        Ok(())
    }
}

/// Runs one experiment. Artifacts are written only once every stage has
/// finished, so an error leaves the output directory untouched.
pub fn run(spec: ExperimentSpec) -> Result<ExperimentReport, RunError> {
    let start = Instant::now();
    let spec = spec.resolve()?;
    let map = resolve_map(&spec.map, &spec.params.tolerances)?;
    let mut r = Run {
        spec,
        map,
        artifacts: Vec::new(),
        sections: BTreeMap::new(),
        checks: Vec::new(),
        counts: None,
        fit: None,
        ulam: None,
    };
    match r.spec.experiment {
        Experiment::Counts => r.stage_counts()?,
        Experiment::Hstar => {
            r.stage_counts()?;
            r.stage_hstar()?;
        }
        Experiment::Growth => r.stage_growth()?,
        Experiment::Onestep => r.stage_onestep()?,
        Experiment::Spectrum => r.stage_spectrum()?,
        Experiment::Mme => {
            r.stage_spectrum()?;
            r.stage_mme()?;
        }
        Experiment::Correlations => r.stage_correlations()?,
        Experiment::Bowen => r.stage_bowen()?,
        Experiment::Periodic => r.stage_periodic()?,
        Experiment::Neighborhood => r.stage_neighborhood()?,
        Experiment::FullReport => {
            r.stage_counts()?;
            r.stage_hstar()?;
            r.stage_spectrum()?;
            r.stage_mme()?;
            r.stage_periodic()?;
            r.stage_compare()?;
        }
        Experiment::Compare => r.stage_compare()?,
    }
    let passed = r.checks.iter().all(|c| c.passed || !c.hard);
    let mut names: Vec<String> = r.artifacts.iter().map(|a| a.name.clone()).collect();
    names.push("report.json".into());
    let report = ExperimentReport {
        spec: r.spec,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        sections: r.sections,
        checks: r.checks,
        passed,
        artifacts: names,
    };
    r.artifacts.push(json_artifact("report.json", &report)?);
    write_all(&report.spec.out, &r.artifacts)?;
    Ok(report)
}
