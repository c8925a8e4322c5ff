//! Empirical checks of the forward-map inequalities.
//!
//! Each check evaluates a ratio whose boundedness the theory asserts, over
//! a family of smooth test fields, on a sequence of refined grids. The same
//! white vectors are used on every grid, so the fields are the same
//! continuum functions and the maximum ratio should settle under
//! refinement. Constants are never compared with the theory: the theory
//! only bounds them.
//!
//! | check | ratio |
//! |---|---|
//! | Lipschitz | `|G(F1)-G(F2)|_{L2(Q)} / ((1 + max|Fi|_{C2}^4) |F1-F2|_{(H2)*})` |
//! | stability | `|f-f0|_{L2(O)} / (exp(c max|.|_inf) |G(f)-G(f0)|_{H^{2,1}})` |
//! | norm bound | `|G(f)|_{H^{4,2}} / (1 + |f|_{C2}^2)` |
//! | interpolation | `|u|_{H^{2,1}} / (|u|_{H^{4,2}} |u|_{L2})^{1/2}` |

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::error::Result;
use crate::grid::{c2_norm, norm_dual_h2, norm_l2_space, norm_l2_spacetime, norm_parabolic_sobolev, Grid, SpaceTimeField, SpatialField};
use crate::prior::{link_phi_field, Prior, PriorSpec};
use crate::rng;
use crate::solver::{forward_map_g, solve_forward};

/// Maximum ratio of one check on each grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub grids: Vec<usize>,
    pub max_ratios: Vec<f64>,
    /// Largest relative change of the maximum ratio between consecutive grids.
    pub relative_change: f64,
    /// Identity case (`F1 = F2`, `u = 1`, ...) gives its exact value.
    pub identity_exact: bool,
    /// Ratios for a pair `F, F + eps H` at decreasing `eps`, on the first grid.
    pub perturbation: Vec<(f64, f64)>,
    pub pass: bool,
}

struct Family {
    grids: Vec<Grid>,
    priors: Vec<Prior>,
    white: Vec<Vec<f64>>,
}

fn family(cfg: &Config, tag: u64, n_white: usize) -> Result<Family> {
    let base = cfg.grid()?;
    let spec = PriorSpec::series(cfg.prior.alpha, base.dim(), cfg.checks.truncation);
    let grids: Vec<Grid> = cfg
        .checks
        .grids
        .iter()
        .map(|&n| Grid::new(base.dim(), n, n, base.t_end()))
        .collect::<Result<_>>()?;
    let priors: Vec<Prior> = grids.iter().map(|&g| Prior::new(&spec, &cfg.cutoff, g)).collect::<Result<_>>()?;
    let mut r = rng::stream(rng::derive_seed(cfg.seed, &[0xc4ec, tag]), 0);
    let white = (0..n_white).map(|_| priors[0].sample_white(&mut r)).collect();
    Ok(Family { grids, priors, white })
}

fn relative_change(v: &[f64]) -> f64 {
    v.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).fold(0.0, f64::max)
}

fn finish(cfg: &Config, name: &str, max_ratios: Vec<f64>, identity_exact: bool, perturbation: Vec<(f64, f64)>) -> CheckReport {
    let relative_change = relative_change(&max_ratios);
    let finite = max_ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    CheckReport {
        name: name.into(),
        grids: cfg.checks.grids.clone(),
        pass: finite && identity_exact && relative_change <= cfg.checks.max_change,
        max_ratios,
        relative_change,
        identity_exact,
        perturbation,
    }
}

fn max_finite(v: impl Iterator<Item = f64>) -> f64 {
    v.filter(|r| r.is_finite()).fold(0.0, f64::max)
}

const EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// `|G(F1) - G(F2)|_{L2(Q)} / ((1 + max(|F1|_{C2}, |F2|_{C2})^4) |F1 - F2|_{(H2)*})`.
pub fn lipschitz_ratio(f1: &SpatialField, f2: &SpatialField, cfg: &Config) -> Result<f64> {
    let grid = *f1.grid();
    let bd = cfg.boundary.build(grid)?;
    let u1 = forward_map_g(f1, &cfg.link, &bd, &grid, &cfg.scheme)?;
    let u2 = forward_map_g(f2, &cfg.link, &bd, &grid, &cfg.scheme)?;
    let num = norm_l2_spacetime(&u1.sub(&u2));
    let c2 = c2_norm(f1)?.max(c2_norm(f2)?);
    Ok(num / ((1.0 + c2.powi(4)) * norm_dual_h2(&f1.sub(f2))?))
}

pub fn check_forward_lipschitz(cfg: &Config) -> Result<CheckReport> {
    let fam = family(cfg, 1, 2 * cfg.checks.n_draws + 1)?;
    let mut max_ratios = Vec::new();
    for prior in &fam.priors {
        let mut ratios = Vec::new();
        for pair in fam.white[..2 * cfg.checks.n_draws].chunks(2) {
            ratios.push(lipschitz_ratio(&prior.synthesize(&pair[0]), &prior.synthesize(&pair[1]), cfg)?);
        }
        max_ratios.push(max_finite(ratios.into_iter()));
    }
    let prior = &fam.priors[0];
    let grid = fam.grids[0];
    let f = prior.synthesize(&fam.white[0]);
    let bd = cfg.boundary.build(grid)?;
    let u = forward_map_g(&f, &cfg.link, &bd, &grid, &cfg.scheme)?;
    let identity_exact = norm_l2_spacetime(&u.sub(&forward_map_g(&f, &cfg.link, &bd, &grid, &cfg.scheme)?)) == 0.0;
    let h = prior.synthesize(&fam.white[2 * cfg.checks.n_draws]);
    let perturbation = EPSILONS
        .iter()
        .map(|&eps| Ok((eps, lipschitz_ratio(&f, &f.add(&h.scaled(eps)), cfg)?)))
        .collect::<Result<_>>()?;
    Ok(finish(cfg, "forward-lipschitz", max_ratios, identity_exact, perturbation))
}

/// `|f - f0|_{L2(O)} / (exp(c max(|f|_inf, |f0|_inf)) |G(f) - G(f0)|_{H^{2,1}})`
/// with `f = Phi o F1`, `f0 = Phi o F2`.
pub fn stability_ratio(f1: &SpatialField, f2: &SpatialField, cfg: &Config) -> Result<f64> {
    let grid = *f1.grid();
    let bd = cfg.boundary.build(grid)?;
    let (a, b) = (link_phi_field(f1, &cfg.link)?, link_phi_field(f2, &cfg.link)?);
    let ua = solve_forward(&a, &bd, &grid, &cfg.scheme)?;
    let ub = solve_forward(&b, &bd, &grid, &cfg.scheme)?;
    let num = norm_l2_space(&a.field().sub(b.field()));
    let weight = (cfg.checks.stability_c * a.sup().max(b.sup())).exp();
    Ok(num / (weight * norm_parabolic_sobolev(&ua.sub(&ub), 2)?))
}

pub fn check_stability(cfg: &Config) -> Result<CheckReport> {
    let fam = family(cfg, 2, 2 * cfg.checks.n_draws + 1)?;
    let mut max_ratios = Vec::new();
    for prior in &fam.priors {
        let mut ratios = Vec::new();
        for pair in fam.white[..2 * cfg.checks.n_draws].chunks(2) {
            ratios.push(stability_ratio(&prior.synthesize(&pair[0]), &prior.synthesize(&pair[1]), cfg)?);
        }
        max_ratios.push(max_finite(ratios.into_iter()));
    }
    let prior = &fam.priors[0];
    let f = prior.synthesize(&fam.white[0]);
    let a = link_phi_field(&f, &cfg.link)?;
    let identity_exact = norm_l2_space(&a.field().sub(link_phi_field(&f, &cfg.link)?.field())) == 0.0;
    let h = prior.synthesize(&fam.white[2 * cfg.checks.n_draws]);
    let perturbation = EPSILONS
        .iter()
        .map(|&eps| Ok((eps, stability_ratio(&f, &f.add(&h.scaled(eps)), cfg)?)))
        .collect::<Result<_>>()?;
    Ok(finish(cfg, "stability", max_ratios, identity_exact, perturbation))
}

/// `|G(f)|_{H^{4,2}} / (1 + |f|_{C2}^2)` with `f = Phi o F`.
pub fn norm_bound_ratio(big_f: &SpatialField, cfg: &Config) -> Result<f64> {
    let grid = *big_f.grid();
    let bd = cfg.boundary.build(grid)?;
    let f = link_phi_field(big_f, &cfg.link)?;
    let u = solve_forward(&f, &bd, &grid, &cfg.scheme)?;
    Ok(norm_parabolic_sobolev(&u, 4)? / (1.0 + c2_norm(f.field())?.powi(2)))
}

pub fn check_norm_bound(cfg: &Config) -> Result<CheckReport> {
    let fam = family(cfg, 3, cfg.checks.n_draws)?;
    let mut max_ratios = Vec::new();
    for prior in &fam.priors {
        // f = 1 is the baseline member of the family
        let mut ratios = vec![norm_bound_ratio(&SpatialField::zeros(*prior.grid()), cfg)?];
        for w in &fam.white {
            ratios.push(norm_bound_ratio(&prior.synthesize(w), cfg)?);
        }
        max_ratios.push(max_finite(ratios.into_iter()));
    }
    let grid = fam.grids[0];
    let bd = cfg.boundary.build(grid)?;
    let f = link_phi_field(&fam.priors[0].synthesize(&fam.white[0]), &cfg.link)?;
    let u = solve_forward(&f, &bd, &grid, &cfg.scheme)?;
    let identity_exact = norm_parabolic_sobolev(&u.sub(&solve_forward(&f, &bd, &grid, &cfg.scheme)?), 4)? == 0.0;
    // doubling the deviation of F from zero
    let w = &fam.white[0];
    let doubled: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
    let perturbation = vec![
        (1.0, norm_bound_ratio(&fam.priors[0].synthesize(w), cfg)?),
        (2.0, norm_bound_ratio(&fam.priors[0].synthesize(&doubled), cfg)?),
    ];
    Ok(finish(cfg, "norm-bound", max_ratios, identity_exact, perturbation))
}

/// `|u|_{H^{2,1}} / (|u|_{H^{4,2}}^{1/2} |u|_{L2(Q)}^{1/2})`; `None` for `u = 0`.
pub fn interpolation_ratio(u: &SpaceTimeField) -> Result<Option<f64>> {
    let l2 = norm_l2_spacetime(u);
    if l2 == 0.0 {
        return Ok(None);
    }
    let h4 = norm_parabolic_sobolev(u, 4)?;
    Ok(Some(norm_parabolic_sobolev(u, 2)? / (h4 * l2).sqrt()))
}

/// Random smooth space-time field: a few low cosine modes in `x` and `t`.
fn smooth_field(grid: Grid, coeffs: &[f64]) -> SpaceTimeField {
    SpaceTimeField::from_fn(grid, |x, t| {
        let mut v = 0.0;
        let mut c = coeffs.iter();
        for k in 0..3 {
            for m in 0..3 {
                let a = *c.next().expect("9 coefficients");
                let space: f64 = x.iter().map(|&xi| (PI * k as f64 * xi).cos()).product();
                v += a * space * (PI * m as f64 * t / grid.t_end()).cos();
            }
        }
        v
    })
}

pub fn check_interpolation(cfg: &Config) -> Result<CheckReport> {
    let n = cfg.checks.n_draws;
    let fam = family(cfg, 4, n / 2)?;
    let mut r = rng::stream(rng::derive_seed(cfg.seed, &[0xc4ec, 5]), 0);
    let coeffs: Vec<Vec<f64>> = (0..n - n / 2).map(|_| (0..9).map(|_| r.sample(StandardNormal)).collect()).collect();
    let mut max_ratios = Vec::new();
    for (prior, &grid) in fam.priors.iter().zip(&fam.grids) {
        let bd = cfg.boundary.build(grid)?;
        let mut ratios = Vec::new();
        for w in &fam.white {
            let u = forward_map_g(&prior.synthesize(w), &cfg.link, &bd, &grid, &cfg.scheme)?;
            ratios.extend(interpolation_ratio(&u)?);
        }
        for c in &coeffs {
            ratios.extend(interpolation_ratio(&smooth_field(grid, c))?);
        }
        max_ratios.push(max_finite(ratios.into_iter()));
    }
    let grid = fam.grids[0];
    let zero = interpolation_ratio(&SpaceTimeField::constant(grid, 0.0))?.is_none();
    let one = interpolation_ratio(&SpaceTimeField::constant(grid, 1.0))?.map(|v| (v - 1.0).abs() <= 1e-12);
    let identity_exact = zero && one == Some(true);
    Ok(finish(cfg, "interpolation", max_ratios, identity_exact, Vec::new()))
}

/// All four checks, in a fixed order.
pub fn run_checks(cfg: &Config) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_forward_lipschitz(cfg)?,
        check_stability(cfg)?,
        check_norm_bound(cfg)?,
        check_interpolation(cfg)?,
    ])
}
