//! Noisy point observations of the forward solution and their Gaussian
//! log-likelihood.
//!
//! Design points are uniform on the open cylinder `Q = (0,1)^d x (0,T)` and
//! observations are `Y_i = u_f(Z_i) + sigma W_i`, where `u_f(Z_i)` is the
//! multilinear interpolant of the grid solution. The likelihood uses the same
//! interpolant, so data generated without noise has zero residuals.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng as _;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, Point, SpatialField, SpaceTimeField, Stencil};
use crate::prior::{link_phi_field, LinkSpec};
use crate::rng;
use crate::solver::{solve_forward, AbsorptionField, BoundaryData, SchemeConfig};

/// Random stream used for the design points; noise uses stream 1.
const DESIGN_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Everything needed to regenerate a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    /// True when `sigma = 0`; such data is only for diagnostics.
    pub noiseless: bool,
    pub grid: GridSpec,
    /// Free-form description of the truth (prior coefficients, profile, ...).
    #[serde(default)]
    pub truth: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: Vec<Point>,
    observations: Vec<f64>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(points: Vec<Point>, observations: Vec<f64>, meta: DatasetMeta) -> Result<Self> {
        if points.len() != observations.len() || points.len() != meta.n {
            return Err(Error::InvalidParameter(format!(
                "dataset has {} points, {} observations and n = {}",
                points.len(),
                observations.len(),
                meta.n
            )));
        }
        if !(meta.sigma >= 0.0) || !meta.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {}", meta.sigma)));
        }
        let grid = Grid::try_from(meta.grid)?;
        if let Some(z) = points.iter().find(|z| !z.is_interior(&grid)) {
            return Err(Error::OutOfDomain(format!("{z:?} is not in the open cylinder")));
        }
        if observations.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidParameter("non-finite observation".into()));
        }
        Ok(Dataset {
            points,
            observations,
            meta,
        })
    }

    /// A dataset with no observations, for prior-only runs.
    pub fn empty(grid: Grid, sigma: f64) -> Self {
        Dataset {
            points: Vec::new(),
            observations: Vec::new(),
            meta: DatasetMeta {
                n: 0,
                sigma,
                seed: 0,
                noiseless: sigma == 0.0,
                grid: grid.into(),
                truth: serde_json::Value::Null,
            },
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.meta.sigma
    }

    pub fn with_truth(mut self, truth: serde_json::Value) -> Self {
        self.meta.truth = truth;
        self
    }
}

/// `n` i.i.d. uniform points in the open cylinder.
pub fn sample_design(n: usize, grid: &Grid, seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, DESIGN_STREAM);
    (0..n)
        .map(|_| {
            let mut x = [0.0; 2];
            for c in x.iter_mut().take(grid.dim()) {
                *c = rng.sample(Open01);
            }
            let s: f64 = rng.sample(Open01);
            Point { x, t: s * grid.t_end() }
        })
        .collect()
}

/// Interpolated solution values at `points`.
pub fn evaluate_at(u: &SpaceTimeField, points: &[Point]) -> Result<Vec<f64>> {
    points.iter().map(|z| u.interpolate(z)).collect()
}

/// Draws a design and noisy observations of `u_{f0}`.
pub fn generate_data(
    f0: &AbsorptionField,
    bd: &BoundaryData,
    grid: &Grid,
    cfg: &SchemeConfig,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    let u = solve_forward(f0, bd, grid, cfg)?;
    let points = sample_design(n, grid, seed);
    let mut noise = rng::stream(seed, NOISE_STREAM);
    let observations = evaluate_at(&u, &points)?
        .into_iter()
        .map(|v| {
            let w: f64 = noise.sample(StandardNormal);
            v + sigma * w
        })
        .collect();
    let meta = DatasetMeta {
        n,
        sigma,
        seed,
        noiseless: sigma == 0.0,
        grid: (*grid).into(),
        truth: serde_json::Value::Null,
    };
    Dataset::new(points, observations, meta)
}

/// The map `F -> G(Phi o F)(Z_i)` for one dataset, with interpolation
/// stencils precomputed and a count of forward solves.
#[derive(Debug)]
pub struct ForwardModel {
    grid: Grid,
    link: LinkSpec,
    bd: BoundaryData,
    scheme: SchemeConfig,
    stencils: Vec<Stencil>,
    observations: Vec<f64>,
    sigma: f64,
    noiseless_limit: bool,
    solves: AtomicUsize,
}

impl Clone for ForwardModel {
    fn clone(&self) -> Self {
        ForwardModel {
            grid: self.grid,
            link: self.link,
            bd: self.bd.clone(),
            scheme: self.scheme,
            stencils: self.stencils.clone(),
            observations: self.observations.clone(),
            sigma: self.sigma,
            noiseless_limit: self.noiseless_limit,
            solves: AtomicUsize::new(self.solves()),
        }
    }
}

impl ForwardModel {
    pub fn new(data: &Dataset, link: LinkSpec, bd: BoundaryData, scheme: SchemeConfig) -> Result<Self> {
        let grid = *bd.grid();
        let stencils = data.points().iter().map(|z| grid.stencil(z)).collect::<Result<_>>()?;
        Ok(ForwardModel {
            grid,
            link,
            bd,
            scheme,
            stencils,
            observations: data.observations().to_vec(),
            sigma: data.sigma(),
            noiseless_limit: false,
            solves: AtomicUsize::new(0),
        })
    }

    /// For `sigma = 0` data: the log-likelihood becomes the `sigma -> 0`
    /// limit, 0 when every residual vanishes (to `1e-12` relative) and
    /// `-inf` otherwise.
    pub fn with_noiseless_limit(mut self) -> Self {
        self.noiseless_limit = true;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn boundary(&self) -> &BoundaryData {
        &self.bd
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    /// Number of forward solves performed so far.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// `u_{Phi o F}` on the grid; one forward solve.
    pub fn solve(&self, big_f: &SpatialField) -> Result<SpaceTimeField> {
        let f = link_phi_field(big_f, &self.link)?;
        self.solves.fetch_add(1, Ordering::Relaxed);
        solve_forward(&f, &self.bd, &self.grid, &self.scheme)
    }

    /// `G(Phi o F)(Z_i)` for every design point.
    pub fn predict(&self, big_f: &SpatialField) -> Result<Vec<f64>> {
        let u = self.solve(big_f)?;
        Ok(self.stencils.iter().map(|s| s.apply(u.values())).collect())
    }

    /// `-(1 / 2 sigma^2) sum_i (Y_i - G(Phi o F)(Z_i))^2`. Without
    /// observations this is 0 and no solve is made.
    pub fn log_likelihood(&self, big_f: &SpatialField) -> Result<f64> {
        if self.observations.is_empty() {
            return Ok(0.0);
        }
        if !(self.sigma > 0.0) {
            if !self.noiseless_limit {
                return Err(Error::InvalidParameter("the likelihood needs sigma > 0".into()));
            }
            let pred = self.predict(big_f)?;
            let scale = self.observations.iter().fold(1.0f64, |m, y| m.max(y.abs()));
            let exact = self.observations.iter().zip(&pred).all(|(y, p)| (y - p).abs() <= 1e-12 * scale);
            return Ok(if exact { 0.0 } else { f64::NEG_INFINITY });
        }
        let pred = self.predict(big_f)?;
        Ok(residual_log_likelihood(&self.observations, &pred, self.sigma))
    }
}

/// `-(1 / 2 sigma^2) sum (y - p)^2`.
pub fn residual_log_likelihood(y: &[f64], pred: &[f64], sigma: f64) -> f64 {
    let ss: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    -ss / (2.0 * sigma * sigma)
}

/// Log-likelihood of `F` for `data` from a single forward solve.
pub fn log_likelihood(
    big_f: &SpatialField,
    data: &Dataset,
    link: &LinkSpec,
    bd: &BoundaryData,
    grid: &Grid,
    cfg: &SchemeConfig,
) -> Result<f64> {
    if bd.grid() != grid {
        return Err(Error::InvalidParameter("boundary data and grid disagree".into()));
    }
    ForwardModel::new(data, *link, bd.clone(), *cfg)?.log_likelihood(big_f)
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` as CSV (`x1[,x2],t,y`, 17 significant digits) and the
/// metadata next to it as `<stem>.json`.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let dim = Grid::try_from(data.meta.grid)?.dim();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", if dim == 1 { "x1,t,y" } else { "x1,x2,t,y" })?;
    for (z, y) in data.points.iter().zip(&data.observations) {
        for c in &z.x[..dim] {
            write!(w, "{c:.16e},")?;
        }
        writeln!(w, "{:.16e},{y:.16e}", z.t)?;
    }
    w.flush()?;
    fs::write(sidecar(path), serde_json::to_string_pretty(&data.meta)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let dim = Grid::try_from(meta.grid)?.dim();
    let width = dim + 2;
    let mut rdr = csv::Reader::from_path(path)?;
    let expected: Vec<&str> = if dim == 1 { vec!["x1", "t", "y"] } else { vec!["x1", "x2", "t", "y"] };
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!("expected header {}, found {:?}", expected.join(","), header)));
    }
    let (mut points, mut observations) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Schema(format!("expected {width} columns, found {}", rec.len())));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse().map_err(|e| Error::Schema(format!("bad number {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        points.push(Point::new(&vals[..dim], vals[dim]));
        observations.push(vals[dim + 1]);
    }
    Dataset::new(points, observations, meta)
}
