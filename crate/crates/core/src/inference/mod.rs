//! Posterior sampling with a prior-preserving Crank–Nicolson proposal.
//!
//! The chain runs on the white vector `xi` of a [`Prior`]; the field is
//! `F = prior.synthesize(xi)`, which is linear in `xi`. The proposal
//!
//! ```text
//! xi* = sqrt(1 - s^2) xi + s eta,   eta ~ N(0, I)
//! ```
//!
//! is reversible for the prior, so the acceptance probability involves only
//! the log-likelihood difference.

mod diagnostics;

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

pub use diagnostics::{diagnostics, effective_sample_size, exceedance_fraction, Diagnostics};

use crate::error::{Error, Result};
use crate::grid::SpatialField;
use crate::measurement::ForwardModel;
use crate::prior::{link_phi_field, LinkSpec, Prior, PriorSpec};
use crate::rng;
use crate::solver::AbsorptionField;

/// Where the chain starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    /// The prior mean, `F = 0`.
    #[default]
    Zero,
    /// A draw from the prior.
    PriorDraw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub step_size: f64,
    /// Adapt the step size during burn-in.
    pub adapt: bool,
    pub adapt_target: f64,
    pub seed: u64,
    pub start: StartPolicy,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_steps: 2000,
            burn_in: 500,
            thinning: 1,
            step_size: 0.2,
            adapt: true,
            adapt_target: 0.3,
            seed: 0,
            start: StartPolicy::Zero,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be smaller than the step count {}",
                self.burn_in, self.n_steps
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidParameter(format!("step size must lie in (0,1], got {}", self.step_size)));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target acceptance must lie in (0,1), got {}",
                self.adapt_target
            )));
        }
        Ok(())
    }

    /// Number of states the chain keeps.
    pub fn n_kept(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thinning
    }
}

/// One proposal and accept/reject. On rejection the current state is
/// returned unchanged. A step size of 0 proposes the current state.
pub fn pcn_step(
    current: &[f64],
    current_ll: f64,
    log_likelihood: impl Fn(&[f64]) -> Result<f64>,
    s: f64,
    rng: &mut rng::Rng,
) -> Result<(Vec<f64>, f64, bool)> {
    let keep = (1.0 - s * s).sqrt();
    let proposal: Vec<f64> = current
        .iter()
        .map(|&c| {
            let eta: f64 = rng.sample(rand_distr::StandardNormal);
            keep * c + s * eta
        })
        .collect();
    let ll = log_likelihood(&proposal)?;
    let u: f64 = rng.sample(Open01);
    if u.ln() < ll - current_ll {
        Ok((proposal, ll, true))
    } else {
        Ok((current.to_vec(), current_ll, false))
    }
}

/// Kept states and traces of one chain run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub config: ChainConfig,
    pub prior: PriorSpec,
    /// Kept white vectors.
    #[serde(skip)]
    pub states: Vec<Vec<f64>>,
    /// Log-likelihood of each kept state.
    pub log_likelihood: Vec<f64>,
    /// Step size used at every step.
    pub step_sizes: Vec<f64>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    pub burn_in_acceptance: f64,
    pub initial_log_likelihood: f64,
    /// Final state and its log-likelihood, for resuming.
    pub last_state: Vec<f64>,
    pub last_log_likelihood: f64,
    /// How many times this chain has been extended.
    #[serde(default)]
    pub segment: u64,
}

fn loglik_fn<'a>(model: &'a ForwardModel, prior: &'a Prior) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |w: &[f64]| {
        if model.n_obs() == 0 {
            Ok(0.0)
        } else {
            model.log_likelihood(&prior.synthesize(w))
        }
    }
}

fn check_prior(prior: &Prior, model: &ForwardModel) -> Result<()> {
    if prior.grid() != model.grid() {
        return Err(Error::InvalidParameter("prior and forward model use different grids".into()));
    }
    Ok(())
}

/// Runs `cfg.n_steps` proposals from `initial` (or the configured start).
pub fn run_chain(cfg: &ChainConfig, model: &ForwardModel, prior: &Prior, initial: Option<Vec<f64>>) -> Result<ChainResult> {
    cfg.validate()?;
    check_prior(prior, model)?;
    let mut rng = rng::stream(cfg.seed, 0);
    let state = match initial {
        Some(w) if w.len() != prior.dim() => {
            return Err(Error::InvalidParameter(format!(
                "initial state has length {}, prior needs {}",
                w.len(),
                prior.dim()
            )))
        }
        Some(w) => w,
        None => match cfg.start {
            StartPolicy::Zero => vec![0.0; prior.dim()],
            StartPolicy::PriorDraw => prior.sample_white(&mut rng::stream(cfg.seed, 1)),
        },
    };
    let ll_of = loglik_fn(model, prior);
    let ll = ll_of(&state)?;
    let mut out = ChainResult {
        config: *cfg,
        prior: prior.spec().clone(),
        states: Vec::with_capacity(cfg.n_kept()),
        log_likelihood: Vec::with_capacity(cfg.n_kept()),
        step_sizes: Vec::with_capacity(cfg.n_steps),
        acceptance_rate: 0.0,
        burn_in_acceptance: 0.0,
        initial_log_likelihood: ll,
        last_state: state,
        last_log_likelihood: ll,
        segment: 0,
    };
    advance(&mut out, cfg.n_steps, cfg.burn_in, cfg.step_size, &ll_of, &mut rng)?;
    Ok(out)
}

/// Extends a finished chain by `n_more` steps with the frozen step size,
/// starting from its last state.
pub fn continue_chain(prev: &ChainResult, n_more: usize, model: &ForwardModel, prior: &Prior) -> Result<ChainResult> {
    check_prior(prior, model)?;
    if prior.spec() != &prev.prior {
        return Err(Error::InvalidParameter("prior differs from the one the chain was run with".into()));
    }
    let segment = prev.segment + 1;
    let mut rng = rng::stream(rng::derive_seed(prev.config.seed, &[segment]), 0);
    let mut out = ChainResult {
        states: Vec::new(),
        log_likelihood: Vec::new(),
        step_sizes: Vec::new(),
        segment,
        ..prev.clone()
    };
    out.config.n_steps = n_more;
    out.config.burn_in = 0;
    let s = *prev.step_sizes.last().unwrap_or(&prev.config.step_size);
    advance(&mut out, n_more, 0, s, &loglik_fn(model, prior), &mut rng)?;
    Ok(out)
}

fn advance(
    out: &mut ChainResult,
    n_steps: usize,
    burn_in: usize,
    s0: f64,
    ll_of: &impl Fn(&[f64]) -> Result<f64>,
    rng: &mut rng::Rng,
) -> Result<()> {
    let cfg = out.config;
    let mut log_s = s0.ln();
    let (mut acc_burn, mut acc_main) = (0usize, 0usize);
    let mut state = std::mem::take(&mut out.last_state);
    let mut ll = out.last_log_likelihood;
    for i in 0..n_steps {
        let s = log_s.exp();
        out.step_sizes.push(s);
        let (next, next_ll, accepted) = pcn_step(&state, ll, ll_of, s, rng)?;
        state = next;
        ll = next_ll;
        if i < burn_in {
            acc_burn += accepted as usize;
            if cfg.adapt {
                // Robbins-Monro on log s, frozen once burn-in ends
                let gain = 1.0 / ((i + 1) as f64).powf(0.6);
                log_s = (log_s + gain * (accepted as u8 as f64 - cfg.adapt_target)).clamp(-10.0, 0.0);
            }
        } else {
            acc_main += accepted as usize;
            if (i - burn_in + 1).is_multiple_of(cfg.thinning) {
                out.states.push(state.clone());
                out.log_likelihood.push(ll);
            }
        }
    }
    out.burn_in_acceptance = if burn_in > 0 { acc_burn as f64 / burn_in as f64 } else { 0.0 };
    out.acceptance_rate = acc_main as f64 / (n_steps - burn_in) as f64;
    out.last_state = state;
    out.last_log_likelihood = ll;
    Ok(())
}

impl ChainResult {
    pub fn n_kept(&self) -> usize {
        self.states.len()
    }

    /// Kept fields `F = prior.synthesize(xi)`.
    pub fn fields<'a>(&'a self, prior: &'a Prior) -> impl Iterator<Item = SpatialField> + 'a {
        self.states.iter().map(|w| prior.synthesize(w))
    }

    /// Writes `<stem>.json` (configuration, traces, last state) and
    /// `<stem>.bin` (kept white vectors as little-endian `f64`, one after
    /// another).
    pub fn save(&self, stem: &Path) -> Result<PathBuf> {
        let header = stem.with_extension("json");
        let mut v = serde_json::to_value(self)?;
        v["n_kept"] = self.states.len().into();
        v["state_dim"] = self.last_state.len().into();
        fs::write(&header, serde_json::to_string_pretty(&v)?)?;
        let bytes: Vec<u8> = self.states.iter().flatten().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(stem.with_extension("bin"), bytes)?;
        Ok(header)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let n_kept = v["n_kept"].as_u64().ok_or_else(|| Error::Schema("missing n_kept".into()))? as usize;
        let dim = v["state_dim"].as_u64().ok_or_else(|| Error::Schema("missing state_dim".into()))? as usize;
        let mut out: ChainResult = serde_json::from_value(v)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        if bytes.len() != 8 * n_kept * dim || out.log_likelihood.len() != n_kept {
            return Err(Error::Schema("chain state file does not match its header".into()));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        out.states = if dim == 0 { vec![Vec::new(); n_kept] } else { flat.chunks(dim).map(<[f64]>::to_vec).collect() };
        Ok(out)
    }
}

/// Average of the kept fields.
pub fn posterior_mean(result: &ChainResult, prior: &Prior) -> Result<SpatialField> {
    if result.states.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = result.states.len() as f64;
    let mut mean = vec![0.0; prior.dim()];
    for w in &result.states {
        mean.iter_mut().zip(w).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    // synthesis is linear, so this is the mean of the fields
    Ok(prior.synthesize(&mean))
}

/// `Phi o F_bar`.
pub fn push_forward(f_bar: &SpatialField, link: &LinkSpec) -> Result<AbsorptionField> {
    link_phi_field(f_bar, link)
}

/// Chain average of `Phi o F`, the mean of the push-forward posterior.
pub fn push_forward_mean(result: &ChainResult, prior: &Prior, link: &LinkSpec) -> Result<AbsorptionField> {
    if result.states.is_empty() {
        return Err(Error::EmptyChain);
    }
    let grid = *prior.grid();
    let mut acc = vec![0.0; grid.n_space()];
    for field in result.fields(prior) {
        acc.iter_mut().zip(field.values()).for_each(|(a, &t)| *a += link.phi(t));
    }
    let n = result.states.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    AbsorptionField::new(SpatialField::new(grid, acc)?, link.f_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::measurement::{generate_data, Dataset};
    use crate::prior::CutoffSpec;
    use crate::solver::{BoundaryProfile, SchemeConfig};

    fn setup(n_x: usize) -> (Grid, Prior, crate::solver::BoundaryData) {
        let grid = Grid::new(1, n_x, n_x, 1.0).unwrap();
        let prior = Prior::new(&PriorSpec::series(3, 1, 1), &CutoffSpec::default(), grid).unwrap();
        (grid, prior, BoundaryProfile::default().build(grid).unwrap())
    }

    fn prior_only_model(grid: Grid, bd: crate::solver::BoundaryData) -> ForwardModel {
        ForwardModel::new(&Dataset::empty(grid, 0.1), LinkSpec::default(), bd, SchemeConfig::default()).unwrap()
    }

    #[test]
    fn zero_step_always_accepts_the_current_state() {
        let mut rng = rng::stream(1, 0);
        let cur = vec![0.3, -1.2, 2.0];
        let (next, ll, acc) = pcn_step(&cur, -5.0, |_| Ok(-5.0), 0.0, &mut rng).unwrap();
        assert!(acc && next == cur && ll == -5.0);
    }

    #[test]
    fn constant_likelihood_always_accepts() {
        let mut rng = rng::stream(2, 0);
        let mut cur = vec![0.0; 4];
        for _ in 0..100 {
            let (next, _, acc) = pcn_step(&cur, 1.0, |_| Ok(1.0), 0.7, &mut rng).unwrap();
            assert!(acc);
            cur = next;
        }
    }

    #[test]
    fn rejection_leaves_state_untouched() {
        let mut rng = rng::stream(3, 0);
        let cur = vec![1.0, 2.0];
        let (next, ll, acc) = pcn_step(&cur, 0.0, |_| Ok(-1e300), 0.5, &mut rng).unwrap();
        assert!(!acc && next == cur && ll == 0.0);
    }

    #[test]
    fn kept_count_and_determinism() {
        let (grid, prior, bd) = setup(17);
        let model = prior_only_model(grid, bd);
        let cfg = ChainConfig { n_steps: 11, burn_in: 10, ..Default::default() };
        assert_eq!(run_chain(&cfg, &model, &prior, None).unwrap().n_kept(), 1);
        let cfg = ChainConfig { n_steps: 300, burn_in: 100, thinning: 3, seed: 4, ..Default::default() };
        let a = run_chain(&cfg, &model, &prior, None).unwrap();
        let b = run_chain(&cfg, &model, &prior, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_kept(), 200 / 3);
        assert_eq!(a.acceptance_rate, 1.0);
        assert!(ChainConfig { burn_in: 300, ..cfg }.validate().is_err());
    }

    #[test]
    fn prior_only_chain_preserves_prior_variance() {
        let (grid, prior, bd) = setup(17);
        let model = prior_only_model(grid, bd);
        let cfg = ChainConfig { n_steps: 10_500, burn_in: 500, step_size: 0.5, adapt: false, seed: 7, ..Default::default() };
        let res = run_chain(&cfg, &model, &prior, None).unwrap();
        for r in 0..prior.dim() {
            let xs: Vec<f64> = res.states.iter().map(|w| w[r]).collect();
            let var = xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64;
            let ess = effective_sample_size(&xs.iter().map(|v| v * v).collect::<Vec<_>>());
            assert!((var - 1.0).abs() < 4.0 * (2.0 / ess).sqrt(), "coordinate {r}: {var}, ess {ess}");
        }
    }

    #[test]
    fn chain_moves_toward_the_truth() {
        let (grid, prior, bd) = setup(17);
        let cfg_pde = SchemeConfig::default();
        let link = LinkSpec::default();
        let f0 = link_phi_field(&SpatialField::zeros(grid), &link).unwrap();
        let clean = generate_data(&f0, &bd, &grid, &cfg_pde, 30, 0.0, 5).unwrap();
        let meta = crate::measurement::DatasetMeta { sigma: 0.01, noiseless: false, ..clean.meta().clone() };
        let data = Dataset::new(clean.points().to_vec(), clean.observations().to_vec(), meta).unwrap();
        let model = ForwardModel::new(&data, link, bd, cfg_pde).unwrap();
        let start = vec![4.0; prior.dim()];
        let cfg = ChainConfig { n_steps: 600, burn_in: 300, seed: 1, ..Default::default() };
        let res = run_chain(&cfg, &model, &prior, Some(start)).unwrap();
        let mean_ll = res.log_likelihood.iter().sum::<f64>() / res.n_kept() as f64;
        assert!(mean_ll > res.initial_log_likelihood);
        assert_eq!(model.solves(), 601);
    }

    #[test]
    fn posterior_mean_examples() {
        let (grid, prior, bd) = setup(17);
        let model = prior_only_model(grid, bd);
        let cfg = ChainConfig { n_steps: 2, burn_in: 1, ..Default::default() };
        let mut res = run_chain(&cfg, &model, &prior, None).unwrap();
        let w = vec![0.5, -1.0, 2.0];
        res.states = vec![w.clone()];
        assert_eq!(posterior_mean(&res, &prior).unwrap(), prior.synthesize(&w));
        res.states = vec![w.clone(), w.iter().map(|v| -v).collect()];
        assert_eq!(posterior_mean(&res, &prior).unwrap().max_abs(), 0.0);
        res.states.clear();
        assert!(matches!(posterior_mean(&res, &prior), Err(Error::EmptyChain)));
    }

    #[test]
    fn push_forward_estimators() {
        let (grid, prior, bd) = setup(17);
        let link = LinkSpec::default();
        let zero = push_forward(&SpatialField::zeros(grid), &link).unwrap();
        assert!(zero.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let model = prior_only_model(grid, bd);
        let mut res = run_chain(&ChainConfig { n_steps: 2, burn_in: 1, ..Default::default() }, &model, &prior, None).unwrap();
        let w = vec![1.0, 0.5, -0.5];
        res.states = vec![w.clone(), w.clone()];
        let a = push_forward(&posterior_mean(&res, &prior).unwrap(), &link).unwrap();
        let b = push_forward_mean(&res, &prior, &link).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        // Phi is convex, so the mean of Phi exceeds Phi of the mean
        res.states = vec![w.clone(), w.iter().map(|v| -v).collect()];
        let a = push_forward(&posterior_mean(&res, &prior).unwrap(), &link).unwrap();
        let b = push_forward_mean(&res, &prior, &link).unwrap();
        let centre = grid.n_x() / 2;
        assert!(b.values()[centre] > a.values()[centre]);
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| y >= x));
    }

    #[test]
    fn save_load_and_resume() {
        let (grid, prior, bd) = setup(17);
        let model = prior_only_model(grid, bd);
        let cfg = ChainConfig { n_steps: 120, burn_in: 20, thinning: 2, seed: 9, ..Default::default() };
        let res = run_chain(&cfg, &model, &prior, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("chain");
        res.save(&stem).unwrap();
        let back = ChainResult::load(&stem).unwrap();
        assert_eq!(back, res);
        let more = continue_chain(&back, 40, &model, &prior).unwrap();
        assert_eq!(more.n_kept(), 20);
        assert_eq!(more.segment, 1);
        assert_eq!(more, continue_chain(&res, 40, &model, &prior).unwrap());
    }
}
