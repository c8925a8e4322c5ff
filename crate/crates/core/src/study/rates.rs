//! Convergence-rate experiments: for each sample size and replicate,
//! simulate data from a fixed truth, run a chain, and record the errors of
//! the posterior-mean estimators.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::error::{Error, Result};
use crate::grid::{norm_l2_space, norm_l2_spacetime, Grid, SpaceTimeField, SpatialField};
use crate::inference::{diagnostics, posterior_mean, push_forward, push_forward_mean, run_chain, ChainConfig};
use crate::measurement::{generate_data, ForwardModel};
use crate::prior::{level_frequencies, link_phi_field, synthesize_series, CoefficientVector, Prior, PriorKind};
use crate::rng;
use crate::solver::{forward_map_g, AbsorptionField, BoundaryData};

/// One (N, replicate) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub scenario: String,
    pub n: usize,
    pub replicate: usize,
    pub truncation: u32,
    /// `|G(F_bar) - G(F0)|_{L2(Q)}`.
    pub err_forward: f64,
    /// `|Phi o F_bar - f0|_{L2(O)}`.
    pub err_f: f64,
    /// `|mean(Phi o F) - f0|_{L2(O)}`.
    pub err_f_pf: f64,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub step_size: f64,
    pub data_seed: u64,
    pub chain_seed: u64,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
}

impl ReportRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Least-squares fit of `log error = intercept + slope log N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; 0 for an exact fit.
    pub stderr: f64,
}

pub fn fit_log_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if let Some(&(_, e)) = pairs.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::NonPositive(format!("errors must be positive for a log fit, got {e}")));
    }
    let mut ns: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::InvalidParameter("a slope fit needs at least three distinct N".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if xs.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit { slope, intercept, stderr })
}

/// Fit of the per-N medians of one loss, with the theoretical slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub loss: String,
    pub medians: Vec<(usize, f64)>,
    pub fit: Option<SlopeFit>,
    pub fit_error: Option<String>,
    pub theory: Option<f64>,
    /// Fraction of bootstrap refits (replicates resampled within each N)
    /// with a negative slope.
    pub bootstrap_negative: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub records: Vec<ReportRecord>,
    pub slopes: Vec<SlopeSummary>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// The truth `F0 = chi * sum 2^(-alpha l) c_{l,r} Psi_{l,r}` (never rescaled).
pub fn truth_field(cfg: &Config, grid: Grid) -> Result<SpatialField> {
    let d = grid.dim();
    let mut j = 0u32;
    let mut count = level_frequencies(0, d).len();
    while count < cfg.study.truth.len() {
        j += 1;
        count += level_frequencies(j, d).len();
    }
    let mut flat = cfg.study.truth.clone();
    flat.resize(count, 0.0);
    let c = CoefficientVector::from_flat(cfg.prior.alpha as f64, d, j, &flat)?;
    synthesize_series(&c, &cfg.cutoff, grid)
}

/// Theoretical slopes of the forward and recovery losses.
pub fn theory_slopes(alpha: f64, d: usize, kind: PriorKind) -> (f64, Option<f64>) {
    let denom = 2.0 * alpha + 4.0 + d as f64;
    let forward = -(alpha + 2.0) / denom;
    let recovery = match kind {
        PriorKind::TruncatedSeries => Some(-alpha / denom),
        PriorKind::MaternGrid => None,
    };
    (forward, recovery)
}

struct Truth {
    grid: Grid,
    bd: BoundaryData,
    f0: AbsorptionField,
    u0: SpaceTimeField,
}

fn run_cell(cfg: &Config, truth: &Truth, n: usize, replicate: usize) -> ReportRecord {
    let data_seed = rng::derive_seed(cfg.seed, &[n as u64, replicate as u64, 0]);
    let chain_seed = rng::derive_seed(cfg.seed, &[n as u64, replicate as u64, 1]);
    let spec = cfg.prior.spec_for(n, truth.grid.dim());
    let mut rec = ReportRecord {
        scenario: format!("d{}-alpha{}-{:?}", truth.grid.dim(), cfg.prior.alpha, cfg.prior.kind).to_lowercase(),
        n,
        replicate,
        truncation: spec.truncation,
        err_forward: f64::NAN,
        err_f: f64::NAN,
        err_f_pf: f64::NAN,
        acceptance_rate: f64::NAN,
        ess: f64::NAN,
        step_size: f64::NAN,
        data_seed,
        chain_seed,
        status: "ok".into(),
    };
    let outcome = (|| -> Result<()> {
        let sigma = cfg.study.sigma;
        let data = generate_data(&truth.f0, &truth.bd, &truth.grid, &cfg.scheme, n, sigma, data_seed)?;
        let mut model = ForwardModel::new(&data, cfg.link, truth.bd.clone(), cfg.scheme)?;
        if sigma == 0.0 {
            model = model.with_noiseless_limit();
        }
        let prior = Prior::new(&spec, &cfg.cutoff, truth.grid)?;
        let chain_cfg = ChainConfig {
            seed: chain_seed,
            ..cfg.chain
        };
        let chain = run_chain(&chain_cfg, &model, &prior, None)?;
        let f_bar = posterior_mean(&chain, &prior)?;
        let u_bar = forward_map_g(&f_bar, &cfg.link, &truth.bd, &truth.grid, &cfg.scheme)?;
        rec.err_forward = norm_l2_spacetime(&u_bar.sub(&truth.u0));
        rec.err_f = norm_l2_space(&push_forward(&f_bar, &cfg.link)?.field().sub(truth.f0.field()));
        rec.err_f_pf = norm_l2_space(&push_forward_mean(&chain, &prior, &cfg.link)?.field().sub(truth.f0.field()));
        let diag = diagnostics(&chain, &prior, &[])?;
        rec.acceptance_rate = chain.acceptance_rate;
        rec.ess = diag.ess_log_likelihood;
        rec.step_size = *chain.step_sizes.last().expect("at least one step");
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.status = format!("error: {e}");
    }
    rec
}

fn summarize(cfg: &Config, records: &[ReportRecord], loss: &str, pick: fn(&ReportRecord) -> f64, theory: Option<f64>) -> SlopeSummary {
    let ns = &cfg.study.n_grid;
    let by_n: Vec<Vec<f64>> = ns
        .iter()
        .map(|&n| records.iter().filter(|r| r.n == n && r.is_ok()).map(pick).collect())
        .collect();
    let medians: Vec<(usize, f64)> = ns
        .iter()
        .zip(&by_n)
        .filter_map(|(&n, v)| median(v.clone()).map(|m| (n, m)))
        .collect();
    let pairs: Vec<(f64, f64)> = medians.iter().map(|&(n, m)| (n as f64, m)).collect();
    let (fit, fit_error) = match fit_log_slope(&pairs) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let bootstrap_negative = fit.and_then(|_| {
        if cfg.study.bootstrap == 0 {
            return None;
        }
        let mut rng = rng::stream(rng::derive_seed(cfg.seed, &[u64::MAX]), 0);
        let mut negative = 0usize;
        let mut done = 0usize;
        for _ in 0..cfg.study.bootstrap {
            let pairs: Vec<(f64, f64)> = ns
                .iter()
                .zip(&by_n)
                .filter(|(_, v)| !v.is_empty())
                .map(|(&n, v)| {
                    let resample = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
                    (n as f64, median(resample).expect("nonempty"))
                })
                .collect();
            if let Ok(f) = fit_log_slope(&pairs) {
                done += 1;
                negative += (f.slope < 0.0) as usize;
            }
        }
        (done > 0).then(|| negative as f64 / done as f64)
    });
    SlopeSummary {
        loss: loss.into(),
        medians,
        fit,
        fit_error,
        theory,
        bootstrap_negative,
    }
}

/// Runs every (N, replicate) cell in parallel and fits the rates. Cell
/// failures are recorded in the cell's `status`; the study continues.
pub fn run_rate_study(cfg: &Config) -> Result<RateStudy> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let bd = cfg.boundary.build(grid)?;
    let big_f0 = truth_field(cfg, grid)?;
    let f0 = link_phi_field(&big_f0, &cfg.link)?;
    let u0 = crate::solver::solve_forward(&f0, &bd, &grid, &cfg.scheme)?;
    let truth = Truth { grid, bd, f0, u0 };
    let cells: Vec<(usize, usize)> = cfg
        .study
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.study.replicates).map(move |r| (n, r)))
        .collect();
    // collect keeps cell order regardless of scheduling
    let records: Vec<ReportRecord> = cells.par_iter().map(|&(n, r)| run_cell(cfg, &truth, n, r)).collect();
    let (fwd, rec) = theory_slopes(cfg.prior.alpha as f64, grid.dim(), cfg.prior.kind);
    let slopes = vec![
        summarize(cfg, &records, "forward", |r| r.err_forward, Some(fwd)),
        summarize(cfg, &records, "f", |r| r.err_f, rec),
        summarize(cfg, &records, "f_pushforward_mean", |r| r.err_f_pf, rec),
    ];
    Ok(RateStudy { records, slopes })
}

impl RateStudy {
    pub fn slope(&self, loss: &str) -> Option<&SlopeSummary> {
        self.slopes.iter().find(|s| s.loss == loss)
    }

    /// Writes `records.csv`, `errors_long.csv` and `slopes.json` into `dir`;
    /// returns the file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("errors_long.csv"))?;
        w.write_record(["scenario", "n", "replicate", "loss", "value"])?;
        for r in self.records.iter().filter(|r| r.is_ok()) {
            for (loss, v) in [("forward", r.err_forward), ("f", r.err_f), ("f_pushforward_mean", r.err_f_pf)] {
                w.write_record([r.scenario.clone(), r.n.to_string(), r.replicate.to_string(), loss.into(), v.to_string()])?;
            }
        }
        w.flush()?;
        std::fs::write(dir.join("slopes.json"), serde_json::to_string_pretty(&self.slopes)?)?;
        Ok(vec!["records.csv".into(), "errors_long.csv".into(), "slopes.json".into()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pairs: Vec<(f64, f64)> = [128.0, 256.0, 512.0, 1024.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.5))).collect();
        let fit = fit_log_slope(&pairs).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-11);
        assert!(fit.stderr < 1e-12);
    }

    #[test]
    fn constant_errors_have_zero_slope() {
        let fit = fit_log_slope(&[(10.0, 0.2), (20.0, 0.2), (40.0, 0.2)]).unwrap();
        assert!(fit.slope.abs() < 1e-14);
    }

    #[test]
    fn noisy_power_law_within_two_stderr() {
        let mut r = rng::stream(17, 0);
        let pairs: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let n = 2f64.powf(7.0 + i as f64 / 8.0);
                let noise: f64 = r.sample(rand_distr::StandardNormal);
                (n, n.powf(-0.45) * (0.1 * noise).exp())
            })
            .collect();
        let fit = fit_log_slope(&pairs).unwrap();
        assert!((fit.slope + 0.45).abs() <= 2.0 * fit.stderr, "{fit:?}");
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_log_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_log_slope(&[(1.0, 1.0), (1.0, 2.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn theory_exponents() {
        let (fwd, rec) = theory_slopes(3.0, 1, PriorKind::TruncatedSeries);
        assert!((fwd + 5.0 / 11.0).abs() < 1e-15);
        assert!((rec.unwrap() + 3.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
