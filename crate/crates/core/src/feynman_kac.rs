//! Monte Carlo evaluation of the forward solution through its Feynman–Kac
//! representation, used as an independent check on the finite-difference
//! solver.
//!
//! For `z = (x, t)` a path is an Euler-discretized Brownian motion started at
//! `x` with unit diffusion (the generator is `Delta / 2`). It is killed at
//! rate `f` and stopped when it leaves the domain or reaches time `t`:
//!
//! ```text
//! u(x, t) = E[ u0(X_t) exp(-int_0^t f(X_s) ds) 1{tau > t} ]
//!         + E[ g(X_tau, s(tau)) exp(-int_0^tau f(X_s) ds) 1{tau <= t} ]
//! ```
//!
//! where `s(tau) = tau` by default ([`ExitTimeConvention::Literal`]) or
//! `t - tau` ([`ExitTimeConvention::Backward`]).

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point, SpaceTimeField};
use crate::rng;
use crate::solver::{solve_forward, AbsorptionField, BoundaryData, SchemeConfig};

/// Paths per parallel block; each block has its own random stream.
const BLOCK: usize = 256;

/// Which time argument `g` receives at the exit point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitTimeConvention {
    /// `g(X_tau, tau)`.
    #[default]
    Literal,
    /// `g(X_tau, t - tau)`.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub n_paths: usize,
    /// Euler step; `None` means `1e-4 * T`.
    #[serde(default)]
    pub dt_path: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub exit_time: ExitTimeConvention,
}

impl PathConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        PathConfig {
            n_paths,
            dt_path: None,
            seed,
            exit_time: ExitTimeConvention::Literal,
        }
    }

    pub fn with_dt(mut self, dt_path: f64) -> Self {
        self.dt_path = Some(dt_path);
        self
    }

    pub fn step(&self, grid: &Grid) -> f64 {
        self.dt_path.unwrap_or(1e-4 * grid.t_end())
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::InvalidParameter(format!("need at least 100 paths, got {}", self.n_paths)));
        }
        let dt = self.step(grid);
        if !(dt > 0.0) || dt > grid.dt() {
            return Err(Error::InvalidParameter(format!(
                "path step must lie in (0, {}], got {dt}",
                grid.dt()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_exited: usize,
}

/// Nodal multilinear interpolation without bounds checks; `x` must lie in
/// the closed unit cube.
#[inline]
fn interp(values: &[f64], n: usize, dim: usize, x: &[f64; 2]) -> f64 {
    let cell = |c: f64| {
        let s = c * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    };
    let (i, wx) = cell(x[0]);
    if dim == 1 {
        values[i] * (1.0 - wx) + values[i + 1] * wx
    } else {
        let (j, wy) = cell(x[1]);
        let r0 = j * n + i;
        let r1 = r0 + n;
        (values[r0] * (1.0 - wx) + values[r0 + 1] * wx) * (1.0 - wy) + (values[r1] * (1.0 - wx) + values[r1 + 1] * wx) * wy
    }
}

struct BlockSums {
    sum: f64,
    sum_sq: f64,
    exited: usize,
}

fn run_block(f: &AbsorptionField, bd: &BoundaryData, z: &Point, cfg: &PathConfig, n: usize, mut rng: rng::Rng) -> BlockSums {
    let grid = bd.grid();
    let (dim, nx) = (grid.dim(), grid.n_x());
    let t = z.t;
    let n_steps = (t / cfg.step(grid)).ceil().max(1.0) as usize;
    let step = t / n_steps as f64;
    let sd = step.sqrt();
    let fv = f.values();
    let u0 = bd.u0().values();
    let mut out = BlockSums {
        sum: 0.0,
        sum_sq: 0.0,
        exited: 0,
    };
    for _ in 0..n {
        let mut x = z.x;
        let mut integral = 0.0;
        let mut value = None;
        for k in 0..n_steps {
            integral += interp(fv, nx, dim, &x) * step;
            let mut outside = false;
            for c in x.iter_mut().take(dim) {
                let dw: f64 = rng.sample(StandardNormal);
                *c += sd * dw;
                outside |= !(0.0 < *c && *c < 1.0);
            }
            if outside {
                for c in x.iter_mut().take(dim) {
                    *c = c.clamp(0.0, 1.0);
                }
                let tau = (k + 1) as f64 * step;
                let s = match cfg.exit_time {
                    ExitTimeConvention::Literal => tau,
                    ExitTimeConvention::Backward => t - tau,
                };
                let gv = bd
                    .g()
                    .interpolate(&Point { x, t: s.clamp(0.0, grid.t_end()) })
                    .expect("exit point lies in the closed cylinder");
                value = Some(gv * (-integral).exp());
                out.exited += 1;
                break;
            }
        }
        let v = value.unwrap_or_else(|| interp(u0, nx, dim, &x) * (-integral).exp());
        out.sum += v;
        out.sum_sq += v * v;
    }
    out
}

/// Feynman–Kac estimate of `u(z)` from `cfg.n_paths` Euler paths.
pub fn estimate_point(f: &AbsorptionField, bd: &BoundaryData, z: &Point, cfg: &PathConfig) -> Result<PointEstimate> {
    let grid = bd.grid();
    cfg.validate(grid)?;
    if f.grid() != grid {
        return Err(Error::InvalidParameter("absorption field and boundary data live on different grids".into()));
    }
    if !z.is_interior(grid) {
        return Err(Error::OutOfDomain(format!("{z:?} is not an interior point of the cylinder")));
    }
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let blocks: Vec<BlockSums> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let n = BLOCK.min(cfg.n_paths - b * BLOCK);
            run_block(f, bd, z, cfg, n, rng::stream(cfg.seed, b as u64))
        })
        .collect();
    // reduce in block order so the result does not depend on scheduling
    let (mut sum, mut sum_sq, mut exited) = (0.0, 0.0, 0);
    for b in &blocks {
        sum += b.sum;
        sum_sq += b.sum_sq;
        exited += b.exited;
    }
    let n = cfg.n_paths as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(PointEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_exited: exited,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub point: Point,
    pub pde_value: f64,
    pub fk_mean: f64,
    pub fk_stderr: f64,
    pub zscore: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: Vec<ValidationRecord>,
    pub threshold: f64,
    pub required_fraction: f64,
    pub fraction_within: f64,
    pub pass: bool,
}

/// `(pde - mc) / stderr`; a zero standard error counts as agreement only when
/// the values match to `1e-10`.
pub fn zscore(pde_value: f64, est: &PointEstimate) -> f64 {
    let diff = pde_value - est.mean;
    if est.stderr > 0.0 {
        diff / est.stderr
    } else if diff.abs() <= 1e-10 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Compares a given space-time solution with Feynman–Kac estimates at
/// `points`. Point `i` uses the root seed mixed with `i`.
pub fn validate_against(
    u: &SpaceTimeField,
    f: &AbsorptionField,
    bd: &BoundaryData,
    points: &[Point],
    cfg: &PathConfig,
) -> Result<ValidationReport> {
    let mut records = Vec::with_capacity(points.len());
    for (i, z) in points.iter().enumerate() {
        let point_cfg = PathConfig {
            seed: rng::derive_seed(cfg.seed, &[i as u64]),
            ..*cfg
        };
        let est = estimate_point(f, bd, z, &point_cfg)?;
        let pde_value = u.interpolate(z)?;
        records.push(ValidationRecord {
            point: *z,
            pde_value,
            fk_mean: est.mean,
            fk_stderr: est.stderr,
            zscore: zscore(pde_value, &est),
        });
    }
    let threshold = 4.0;
    let required_fraction = 0.95;
    let within = records.iter().filter(|r| r.zscore.abs() <= threshold).count();
    let fraction_within = if records.is_empty() { 1.0 } else { within as f64 / records.len() as f64 };
    Ok(ValidationReport {
        records,
        threshold,
        required_fraction,
        fraction_within,
        pass: fraction_within >= required_fraction,
    })
}

/// Solves the forward problem and validates it with [`validate_against`].
pub fn validate_solver(
    f: &AbsorptionField,
    bd: &BoundaryData,
    points: &[Point],
    cfg: &PathConfig,
    scheme: &SchemeConfig,
) -> Result<ValidationReport> {
    let u = solve_forward(f, bd, bd.grid(), scheme)?;
    validate_against(&u, f, bd, points, cfg)
}

impl ValidationReport {
    /// Writes `point,x1[,x2],t,pde_value,fk_mean,fk_stderr,zscore` rows.
    pub fn write_csv(&self, path: &Path, dim: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["point".to_string(), "x1".into()];
        if dim == 2 {
            header.push("x2".into());
        }
        header.extend(["t", "pde_value", "fk_mean", "fk_stderr", "zscore"].map(String::from));
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(r.point.x[..dim].iter().map(|c| format!("{c:.16e}")));
            row.extend([r.point.t, r.pde_value, r.fk_mean, r.fk_stderr, r.zscore].map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let max_abs_z = self.records.iter().map(|r| r.zscore.abs()).fold(0.0, f64::max);
        serde_json::json!({
            "n_points": self.records.len(),
            "threshold": self.threshold,
            "required_fraction": self.required_fraction,
            "fraction_within": self.fraction_within,
            "max_abs_zscore": max_abs_z,
            "pass": self.pass,
        })
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        writeln!(file, "{}", serde_json::to_string_pretty(&self.summary_json())?)?;
        Ok(())
    }
}
