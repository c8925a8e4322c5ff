use serde::{Deserialize, Serialize};

use super::ChainResult;
use crate::error::Result;
use crate::grid::{c2_norm, sobolev_norm_discrete};
use crate::prior::Prior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_kept: usize,
    pub acceptance_rate: f64,
    /// Effective sample size of the log-likelihood trace.
    pub ess_log_likelihood: f64,
    pub thresholds: Vec<f64>,
    /// Fraction of kept fields with discrete C^2 norm above each threshold.
    pub c2_exceedance: Vec<f64>,
    /// Same for the spectral H^alpha norm.
    pub sobolev_exceedance: Vec<f64>,
}

/// Effective sample size from Geyer's initial positive sequence. A chain
/// with zero variance reports 1.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |k: usize| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = autocov(0);
    if g0 <= 0.0 {
        return 1.0;
    }
    let mut tau = -g0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        // pairs must stay positive and, for the monotone variant, nonincreasing
        let pair = (autocov(2 * m) + autocov(2 * m + 1)).min(prev);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        prev = pair;
        m += 1;
    }
    (n as f64 * g0 / tau).max(1.0)
}

/// Fraction of `norms` strictly above `m`.
pub fn exceedance_fraction(norms: &[f64], m: f64) -> f64 {
    if norms.is_empty() {
        return 0.0;
    }
    norms.iter().filter(|&&v| v > m).count() as f64 / norms.len() as f64
}

pub fn diagnostics(result: &ChainResult, prior: &Prior, thresholds: &[f64]) -> Result<Diagnostics> {
    let alpha = prior.spec().alpha as f64;
    let mut c2 = Vec::with_capacity(result.n_kept());
    let mut hs = Vec::with_capacity(result.n_kept());
    for field in result.fields(prior) {
        c2.push(c2_norm(&field)?);
        hs.push(sobolev_norm_discrete(&field, alpha)?);
    }
    Ok(Diagnostics {
        n_kept: result.n_kept(),
        acceptance_rate: result.acceptance_rate,
        ess_log_likelihood: effective_sample_size(&result.log_likelihood),
        thresholds: thresholds.to_vec(),
        c2_exceedance: thresholds.iter().map(|&m| exceedance_fraction(&c2, m)).collect(),
        sobolev_exceedance: thresholds.iter().map(|&m| exceedance_fraction(&hs, m)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::inference::{run_chain, ChainConfig};
    use crate::measurement::{Dataset, ForwardModel};
    use crate::prior::{CutoffSpec, LinkSpec, PriorSpec};
    use crate::rng;
    use crate::solver::{BoundaryProfile, SchemeConfig};
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    #[test]
    fn ess_of_iid_draws_is_close_to_length() {
        for seed in 0..3 {
            let mut r = rng::stream(seed, 0);
            let x: Vec<f64> = (0..5000).map(|_| r.sample(StandardNormal)).collect();
            let ess = effective_sample_size(&x);
            assert!((ess / 5000.0 - 1.0).abs() < 0.2, "ess {ess}");
        }
    }

    #[test]
    fn ess_of_ar1_matches_theory() {
        let rho: f64 = 0.9;
        let mut r = rng::stream(1, 0);
        let mut x = vec![0.0f64; 50_000];
        for i in 1..x.len() {
            let e: f64 = r.sample(StandardNormal);
            x[i] = rho * x[i - 1] + (1.0 - rho * rho).sqrt() * e;
        }
        let want = x.len() as f64 * (1.0 - rho) / (1.0 + rho);
        let ess = effective_sample_size(&x);
        assert!((ess / want - 1.0).abs() < 0.25, "{ess} vs {want}");
    }

    #[test]
    fn constant_chain_and_monotone_exceedance() {
        assert_eq!(effective_sample_size(&[2.0; 100]), 1.0);
        let grid = Grid::new(1, 17, 17, 1.0).unwrap();
        let prior = Prior::new(&PriorSpec::series(3, 1, 1), &CutoffSpec::default(), grid).unwrap();
        let bd = BoundaryProfile::default().build(grid).unwrap();
        let model = ForwardModel::new(&Dataset::empty(grid, 0.1), LinkSpec::default(), bd, SchemeConfig::default()).unwrap();
        let mut res = run_chain(&ChainConfig { n_steps: 400, burn_in: 100, seed: 3, ..Default::default() }, &model, &prior, None).unwrap();
        let thresholds = [0.0, 1.0, 5.0, 20.0, 100.0, 1e6];
        let d = diagnostics(&res, &prior, &thresholds).unwrap();
        for w in d.c2_exceedance.windows(2).chain(d.sobolev_exceedance.windows(2)) {
            assert!(w[1] <= w[0]);
        }
        let first = res.states[0].clone();
        res.states.iter_mut().for_each(|s| *s = first.clone());
        res.log_likelihood.iter_mut().for_each(|l| *l = 0.0);
        let d = diagnostics(&res, &prior, &thresholds).unwrap();
        assert_eq!(d.ess_log_likelihood, 1.0);
        assert!(d.c2_exceedance.iter().chain(&d.sobolev_exceedance).all(|&f| f == 0.0 || f == 1.0));
    }
}
