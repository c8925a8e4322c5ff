//! Hypercube alternatives for the minimax lower bound.
//!
//! Around `f0 = 1`, place `n_j` disjoint smooth bumps on subcubes of side
//! `2^-j` inside `K`, each normalized to unit `L2` norm, and form
//! `f_m = 1 + kappa 2^{-j(alpha + d/2)} sum_r b_{m,r} psi_{j,r}` for sign
//! vectors `b_m` with pairwise Hamming distance at least `n_j / 8`. The
//! family is separated in `L2` by `c' kappa 2^{-j alpha}` with
//! `c' = (n_j 2^{-jd} / 2)^{1/2}`, while the Kullback-Leibler divergences
//! of the data laws stay below `eps log M`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::error::{Error, Result};
use crate::grid::{c2_norm, norm_l2_space, norm_l2_spacetime, Grid, SpatialField};
use crate::rng;
use crate::solver::{smooth_bump, solve_forward, AbsorptionField, BoundaryData, SchemeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypercubeSpec {
    pub level: u32,
    pub kappa: f64,
    pub alpha: u32,
    /// Requested number of sign vectors.
    pub m_target: usize,
    /// Candidate sign vectors the greedy packing may draw.
    pub budget: usize,
    /// Half-width of the margin outside `K = [r, 1 - r]^d`.
    pub r_inner: f64,
    pub f_min: f64,
    pub seed: u64,
}

impl HypercubeSpec {
    /// The construction at `lowerbound.n` with the configured `kappa`.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let lb = &cfg.lowerbound;
        let d = cfg.grid.d;
        let level = lb
            .level
            .unwrap_or_else(|| ((lb.n as f64).log2() / (2 * cfg.prior.alpha as usize + 4 + d) as f64).round().max(1.0) as u32);
        let n_j = bump_count(level, cfg.cutoff.r_inner, d);
        Ok(HypercubeSpec {
            level,
            kappa: lb.kappa,
            alpha: cfg.prior.alpha,
            m_target: lb.m_target.unwrap_or_else(|| default_m_target(n_j)),
            budget: lb.budget,
            r_inner: cfg.cutoff.r_inner,
            f_min: cfg.link.f_min,
            seed: rng::derive_seed(cfg.seed, &[0x1b]),
        })
    }

    pub fn side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Coefficient `kappa 2^{-j(alpha + d/2)}` of each unit bump.
    pub fn amplitude(&self, d: usize) -> f64 {
        self.kappa * self.side().powf(self.alpha as f64 + d as f64 / 2.0)
    }
}

/// Subcubes of side `2^-level` per axis of `[r, 1 - r]`, to the power `d`.
pub fn bump_count(level: u32, r_inner: f64, d: usize) -> usize {
    let per_axis = ((1.0 - 2.0 * r_inner) / 0.5f64.powi(level as i32) + 1e-12).floor() as usize;
    per_axis.pow(d as u32)
}

/// `max(2, 2^(n_j/8))`.
pub fn default_m_target(n_j: usize) -> usize {
    2usize.max(2f64.powf(n_j as f64 / 8.0).floor() as usize)
}

/// Smallest admissible Hamming distance, `ceil(n_j / 8)`.
pub fn min_hamming(n_j: usize) -> usize {
    n_j.div_ceil(8).max(1)
}

pub fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Greedy packing of sign vectors with pairwise Hamming distance at least
/// `min_dist`, drawing at most `budget` candidates.
pub fn greedy_packing(n_j: usize, min_dist: usize, target: usize, budget: usize, seed: u64) -> Vec<Vec<i8>> {
    let mut r = rng::stream(seed, 0);
    let mut accepted: Vec<Vec<i8>> = Vec::new();
    for _ in 0..budget {
        if accepted.len() >= target {
            break;
        }
        let cand: Vec<i8> = (0..n_j).map(|_| if r.random::<bool>() { 1 } else { -1 }).collect();
        if accepted.iter().all(|a| hamming(a, &cand) >= min_dist) {
            accepted.push(cand);
        }
    }
    accepted
}

/// The constructed family.
#[derive(Clone, Debug)]
pub struct Hypercube {
    pub spec: HypercubeSpec,
    /// Unit-norm bumps `psi_{j,r}`.
    pub bumps: Vec<SpatialField>,
    pub signs: Vec<Vec<i8>>,
    pub alternatives: Vec<AbsorptionField>,
}

impl Hypercube {
    pub fn n_bumps(&self) -> usize {
        self.bumps.len()
    }

    pub fn m(&self) -> usize {
        self.signs.len()
    }

    /// `h_m = f_m - 1`.
    pub fn perturbation(&self, m: usize) -> SpatialField {
        self.alternatives[m].field().map(|v| v - 1.0)
    }

    /// `||f_m - f_m'||_{L2}` by quadrature.
    pub fn separation_direct(&self, m: usize, k: usize) -> f64 {
        norm_l2_space(&self.alternatives[m].field().sub(self.alternatives[k].field()))
    }

    /// `||f_m - f_m'||_{L2}` from the disjoint supports: `2 a sqrt(hamming)`.
    pub fn separation_formula(&self, m: usize, k: usize) -> f64 {
        let d = self.alternatives[m].grid().dim();
        2.0 * self.spec.amplitude(d) * (hamming(&self.signs[m], &self.signs[k]) as f64).sqrt()
    }

    /// `c' = (n_j 2^{-jd} / 2)^{1/2}`.
    pub fn c_prime(&self) -> f64 {
        let d = self.alternatives[0].grid().dim();
        (self.n_bumps() as f64 * self.spec.side().powi(d as i32) / 2.0).sqrt()
    }

    /// `c' kappa 2^{-j alpha}`.
    pub fn separation_bound(&self) -> f64 {
        self.c_prime() * self.spec.kappa * self.spec.side().powi(self.spec.alpha as i32)
    }
}

pub fn build_hypercube_alternatives(spec: &HypercubeSpec, grid: Grid) -> Result<Hypercube> {
    let d = grid.dim();
    let s = spec.side();
    if s < 4.0 * grid.h() {
        return Err(Error::StencilDoesNotFit(format!(
            "subcube side {s} is below four grid steps ({})",
            4.0 * grid.h()
        )));
    }
    let per_axis = bump_count(spec.level, spec.r_inner, 1);
    if per_axis == 0 {
        return Err(Error::InvalidParameter(format!("no subcube of side {s} fits inside K")));
    }
    let start = spec.r_inner + ((1.0 - 2.0 * spec.r_inner) - per_axis as f64 * s) / 2.0;
    let n_j = per_axis.pow(d as u32);
    let bumps: Vec<SpatialField> = (0..n_j)
        .map(|r| {
            let corner = [r % per_axis, r / per_axis].map(|c| start + c as f64 * s);
            let b = SpatialField::from_fn(grid, |x| {
                x.iter().enumerate().map(|(a, &xa)| smooth_bump(2.0 * (xa - corner[a]) / s - 1.0)).product()
            });
            let norm = norm_l2_space(&b);
            b.scaled(1.0 / norm)
        })
        .collect();
    let min_dist = min_hamming(n_j);
    let signs = greedy_packing(n_j, min_dist, spec.m_target, spec.budget, spec.seed);
    if signs.len() < spec.m_target.max(2) {
        return Err(Error::InvalidParameter(format!(
            "packing reached {} of {} sign vectors within the budget",
            signs.len(),
            spec.m_target
        )));
    }
    let a = spec.amplitude(d);
    let alternatives = signs
        .iter()
        .map(|b| {
            let mut v = vec![1.0; grid.n_space()];
            for (psi, &sign) in bumps.iter().zip(b) {
                for (vi, p) in v.iter_mut().zip(psi.values()) {
                    *vi += a * sign as f64 * p;
                }
            }
            AbsorptionField::new(SpatialField::new(grid, v)?, spec.f_min)
        })
        .collect::<Result<_>>()?;
    Ok(Hypercube {
        spec: spec.clone(),
        bumps,
        signs,
        alternatives,
    })
}

/// `KL(P_{f_m}^N, P_{f_0}^N) = N ||u_{f_m} - u_{f_0}||^2_{L2(Q)} / (2 sigma^2 vol(Q))`.
pub fn kl_divergence(
    f_m: &AbsorptionField,
    f_0: &AbsorptionField,
    bd: &BoundaryData,
    grid: &Grid,
    cfg: &SchemeConfig,
    n: usize,
    sigma: f64,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let du = solve_forward(f_m, bd, grid, cfg)?.sub(&solve_forward(f_0, bd, grid, cfg)?);
    Ok(n as f64 * norm_l2_spacetime(&du).powi(2) / (2.0 * sigma * sigma * grid.volume()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub n: usize,
    pub sigma: f64,
    pub level: u32,
    pub n_bumps: usize,
    pub m: usize,
    pub min_hamming: usize,
    pub kappa: f64,
    pub c_prime: f64,
    pub separation_bound: f64,
    pub min_separation: f64,
    pub violations: usize,
    /// Largest relative gap between quadrature and formula separations.
    pub max_formula_mismatch: f64,
    /// Largest discrete `C^2` norm of the perturbations `h_m`.
    pub max_c2_perturbation: f64,
    pub kl: Vec<f64>,
    pub max_kl: f64,
    pub log_m: f64,
    /// `max KL / log M`.
    pub epsilon: f64,
    pub pass: bool,
}

pub fn lower_bound_report(cfg: &Config) -> Result<LowerBoundReport> {
    let grid = cfg.grid()?;
    let spec = HypercubeSpec::from_config(cfg)?;
    let cube = build_hypercube_alternatives(&spec, grid)?;
    let bd = cfg.boundary.build(grid)?;
    let f0 = AbsorptionField::new(SpatialField::constant(grid, 1.0), cfg.link.f_min)?;
    let (n, sigma) = (cfg.lowerbound.n, cfg.study.sigma);

    let bound = cube.separation_bound();
    let (mut min_separation, mut violations, mut mismatch) = (f64::INFINITY, 0, 0.0f64);
    for m in 0..cube.m() {
        for k in m + 1..cube.m() {
            let direct = cube.separation_direct(m, k);
            let formula = cube.separation_formula(m, k);
            mismatch = mismatch.max(((direct - formula) / formula).abs());
            min_separation = min_separation.min(direct);
            // equality is attained when 8 divides n_j; allow rounding
            if direct < bound * (1.0 - 1e-12) {
                violations += 1;
            }
        }
    }
    let kl = cube
        .alternatives
        .iter()
        .map(|f| kl_divergence(f, &f0, &bd, &grid, &cfg.scheme, n, sigma))
        .collect::<Result<Vec<_>>>()?;
    let max_c2_perturbation = (0..cube.m()).map(|m| c2_norm(&cube.perturbation(m))).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let max_kl = kl.iter().copied().fold(0.0, f64::max);
    let log_m = (cube.m() as f64).ln();
    let epsilon = max_kl / log_m;
    Ok(LowerBoundReport {
        n,
        sigma,
        level: spec.level,
        n_bumps: cube.n_bumps(),
        m: cube.m(),
        min_hamming: min_hamming(cube.n_bumps()),
        kappa: spec.kappa,
        c_prime: cube.c_prime(),
        separation_bound: bound,
        min_separation,
        violations,
        max_formula_mismatch: mismatch,
        max_c2_perturbation,
        kl,
        max_kl,
        log_m,
        epsilon,
        pass: violations == 0 && mismatch <= 1e-10 && epsilon <= 1.0,
    })
}
