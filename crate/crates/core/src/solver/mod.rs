//! Forward solver for `du/dt - (1/2) Lap u + f u = 0` on `(0,1)^d x (0,T)`
//! with Dirichlet data `u = g` on the lateral boundary and `u(., 0) = u0`.
//!
//! Space is discretized with the second-order five-point (three-point in
//! one dimension) Laplacian, time with the theta-scheme. The system matrix
//! `I + theta dt (-(1/2) Lap_h + f)` does not change between steps, so it is
//! factored once per solve with a band Cholesky decomposition.

mod banded;

pub use banded::{BandCholesky, BandMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimeField, SpatialField};
use crate::prior::{link_phi_field, LinkSpec};

/// Absorption coefficient `f` on the spatial nodes together with its lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionField {
    field: SpatialField,
    f_min: f64,
}

impl AbsorptionField {
    /// A coefficient of the parameter space: every nodal value at least `f_min > 0`.
    pub fn new(field: SpatialField, f_min: f64) -> Result<Self> {
        if !(f_min > 0.0) {
            return Err(Error::InvalidParameter(format!("f_min must be positive, got {f_min}")));
        }
        if let Some(v) = field.values().iter().find(|&&v| v < f_min) {
            return Err(Error::InvalidParameter(format!("absorption value {v} below f_min = {f_min}")));
        }
        Ok(AbsorptionField { field, f_min })
    }

    /// Any nonnegative potential (e.g. `f = 0` in closed-form checks); the
    /// recorded lower bound is the nodal minimum.
    pub fn nonnegative(field: SpatialField) -> Result<Self> {
        let f_min = field.min();
        if f_min < 0.0 {
            return Err(Error::InvalidParameter(format!("negative absorption value {f_min}")));
        }
        Ok(AbsorptionField { field, f_min })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::nonnegative(SpatialField::constant(grid, value))
    }

    pub fn field(&self) -> &SpatialField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn sup(&self) -> f64 {
        self.field.max_abs()
    }

    /// Boundary nodes equal one and all nodes exceed `f_min`, up to `tol`.
    pub fn in_parameter_space(&self, tol: f64) -> bool {
        let grid = self.grid();
        self.f_min > 0.0
            && self.values().iter().enumerate().all(|(i, &v)| {
                v >= self.f_min && (!grid.is_boundary(i) || (v - 1.0).abs() <= tol)
            })
    }
}

/// Dirichlet data: lateral values `g` (stored on the full space-time grid,
/// only boundary nodes are read) and the initial state `u0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    g: SpaceTimeField,
    u0: SpatialField,
}

impl BoundaryData {
    /// Checks that `g(., 0)` and `u0` agree on boundary nodes.
    pub fn new(g: SpaceTimeField, u0: SpatialField) -> Result<Self> {
        if g.grid() != u0.grid() {
            return Err(Error::InvalidParameter("g and u0 live on different grids".into()));
        }
        let grid = *u0.grid();
        let scale = g.max_abs().max(u0.max_abs()).max(1.0);
        for idx in (0..grid.n_space()).filter(|&i| grid.is_boundary(i)) {
            let gap = (g.level(0)[idx] - u0.values()[idx]).abs();
            if gap > 1e-12 * scale {
                return Err(Error::InvalidParameter(format!(
                    "g(x,0) and u0(x) disagree by {gap:e} at boundary node {idx}"
                )));
            }
        }
        Ok(BoundaryData { g, u0 })
    }

    pub fn from_fns(grid: Grid, g: impl Fn(&[f64], f64) -> f64, u0: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(SpaceTimeField::from_fn(grid, g), SpatialField::from_fn(grid, u0))
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        BoundaryData {
            g: SpaceTimeField::constant(grid, c),
            u0: SpatialField::constant(grid, c),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u0.grid()
    }

    pub fn g(&self) -> &SpaceTimeField {
        &self.g
    }

    pub fn u0(&self) -> &SpatialField {
        &self.u0
    }

    fn lateral_values(&self) -> impl Iterator<Item = f64> + '_ {
        let grid = *self.grid();
        (0..grid.n_t()).flat_map(move |k| {
            (0..grid.n_space())
                .filter(move |&i| grid.is_boundary(i))
                .map(move |i| self.g.level(k)[i])
        })
    }

    /// Minimum of `g` over lateral boundary nodes.
    pub fn g_min(&self) -> f64 {
        self.lateral_values().fold(f64::INFINITY, f64::min)
    }

    /// `sup |g|` over lateral boundary nodes.
    pub fn g_sup(&self) -> f64 {
        self.lateral_values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn u0_min(&self) -> f64 {
        self.u0.min()
    }

    pub fn u0_sup(&self) -> f64 {
        self.u0.max_abs()
    }

    /// `g` at a point of the lateral boundary.
    pub fn g_at(&self, x: &[f64], t: f64) -> Result<f64> {
        self.g.interpolate(&crate::grid::Point::new(x, t))
    }
}

/// Shipped boundary/initial data families.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryProfile {
    /// `g = u0 = value`.
    Constant { value: f64 },
    /// `u0 = 1`, `g = exp(-t)`: solves the equation wherever `f = 1`, so it is
    /// compatible to every order at the corner `dO x {0}` for coefficients
    /// equal to one near the boundary.
    #[default]
    Decaying,
    /// `g = 1`, `u0 = 1 + amplitude * bump` with an interior bump.
    Bump { amplitude: f64 },
    /// `g = 0`, `u0 = prod_a sin(pi x_a)`; the separable closed-form case.
    Sine,
}

impl BoundaryProfile {
    pub fn build(&self, grid: Grid) -> Result<BoundaryData> {
        use std::f64::consts::PI;
        match *self {
            BoundaryProfile::Constant { value } => Ok(BoundaryData::constant(grid, value)),
            BoundaryProfile::Decaying => BoundaryData::from_fns(grid, |_, t| (-t).exp(), |_| 1.0),
            BoundaryProfile::Bump { amplitude } => BoundaryData::from_fns(
                grid,
                |_, _| 1.0,
                move |x| 1.0 + amplitude * x.iter().map(|&c| smooth_bump(4.0 * c - 1.5)).product::<f64>(),
            ),
            BoundaryProfile::Sine => BoundaryData::from_fns(
                grid,
                |_, _| 0.0,
                |x| x.iter().map(|&c| (PI * c).sin()).product(),
            ),
        }
    }
}

/// `exp(1 - 1/(1 - s^2))` on `|s| < 1`, zero outside; peak value 1 at `s = 0`.
pub fn smooth_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// What to do when a Crank-Nicolson step exceeds the positivity restriction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    Ignore,
    #[default]
    Warn,
    Error,
}

/// Time-stepping parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    /// `1/2` is Crank-Nicolson, `1` backward Euler.
    pub theta: f64,
    /// Bound on the max-norm scheme residual at interior nodes.
    pub tolerance: f64,
    /// Iterative refinement sweeps allowed to reach `tolerance`.
    pub max_iterations: usize,
    pub step_policy: StepPolicy,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            theta: 0.5,
            tolerance: 1e-9,
            max_iterations: 3,
            step_policy: StepPolicy::Warn,
        }
    }
}

impl SchemeConfig {
    pub fn crank_nicolson() -> Self {
        Self::default()
    }

    pub fn backward_euler() -> Self {
        SchemeConfig {
            theta: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [1/2, 1], got {}", self.theta)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Interior-node bookkeeping shared by the solver and the operator.
struct Interior {
    grid: Grid,
    /// Flat spatial index of each interior unknown.
    nodes: Vec<usize>,
    /// Bandwidth of the interior ordering.
    bw: usize,
}

impl Interior {
    fn new(grid: Grid) -> Self {
        let n = grid.n_x();
        let nodes: Vec<usize> = if grid.dim() == 1 {
            (1..n - 1).collect()
        } else {
            (1..n - 1).flat_map(|j| (1..n - 1).map(move |i| i + n * j)).collect()
        };
        let bw = if grid.dim() == 1 { 1 } else { n - 2 };
        Interior { grid, nodes, bw }
    }

    /// Spatial neighbours of a node, as flat indices.
    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> {
        let n = self.grid.n_x();
        let d = self.grid.dim();
        let strides = [1usize, n];
        (0..d).flat_map(move |a| [idx - strides[a], idx + strides[a]])
    }

    /// `(A u)_p = (d/h^2 + f_p) u_p - (1/(2h^2)) sum_nbrs u_nbr` at interior nodes.
    fn apply_a(&self, f: &[f64], level: &[f64], out: &mut [f64]) {
        let h2 = self.grid.h().powi(2);
        let diag = self.grid.dim() as f64 / h2;
        for (p, &idx) in self.nodes.iter().enumerate() {
            let nb: f64 = self.neighbours(idx).map(|j| level[j]).sum();
            out[p] = (diag + f[idx]) * level[idx] - 0.5 * nb / h2;
        }
    }
}

/// Solves the initial-boundary value problem with the theta-scheme.
///
/// The returned field equals `u0` at `t = 0` and `g` on lateral boundary
/// nodes at every later level.
pub fn solve_forward(f: &AbsorptionField, bd: &BoundaryData, grid: &Grid, cfg: &SchemeConfig) -> Result<SpaceTimeField> {
    cfg.validate()?;
    if f.grid() != grid || bd.grid() != grid {
        return Err(Error::InvalidParameter("absorption, boundary data and grid disagree".into()));
    }
    let interior = Interior::new(*grid);
    let (theta, dt, h2) = (cfg.theta, grid.dt(), grid.h().powi(2));
    let d = grid.dim() as f64;
    let fv = f.values();

    if theta < 1.0 && cfg.step_policy != StepPolicy::Ignore {
        let load = (1.0 - theta) * dt * (d / h2 + f.sup());
        if load > 1.0 {
            let msg = format!("(1-theta) dt (d/h^2 + sup f) = {load:.3} > 1; nodal positivity not guaranteed");
            match cfg.step_policy {
                StepPolicy::Error => return Err(Error::StepRestriction(msg)),
                // once per process: a study makes thousands of identical solves
                _ => {
                    static WARNED: std::sync::Once = std::sync::Once::new();
                    WARNED.call_once(|| log::warn!("{msg}"));
                }
            }
        }
    }

    let m = interior.nodes.len();
    let mut system = BandMatrix::zeros(m, interior.bw);
    let mut slot = vec![usize::MAX; grid.n_space()];
    for (p, &idx) in interior.nodes.iter().enumerate() {
        slot[idx] = p;
    }
    for (p, &idx) in interior.nodes.iter().enumerate() {
        system.set(p, p, 1.0 + theta * dt * (d / h2 + fv[idx]));
        for j in interior.neighbours(idx) {
            let q = slot[j];
            if q != usize::MAX && q < p {
                system.set(p, q, -theta * dt * 0.5 / h2);
            }
        }
    }
    let factor = system.cholesky()?;

    let n_s = grid.n_space();
    let mut values = Vec::with_capacity(n_s * grid.n_t());
    values.extend_from_slice(bd.u0().values());

    let mut a_prev = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut x = vec![0.0; m];
    let mut resid = vec![0.0; m];
    for k in 1..grid.n_t() {
        let prev = &values[(k - 1) * n_s..k * n_s];
        let g_next = bd.g().level(k);
        interior.apply_a(fv, prev, &mut a_prev);
        for (p, &idx) in interior.nodes.iter().enumerate() {
            let bnd: f64 = interior.neighbours(idx).filter(|&j| slot[j] == usize::MAX).map(|j| g_next[j]).sum();
            rhs[p] = prev[idx] - (1.0 - theta) * dt * a_prev[p] + theta * dt * 0.5 * bnd / h2;
        }
        x.copy_from_slice(&rhs);
        factor.solve_in_place(&mut x);

        let mut sweeps = 0;
        loop {
            system.mul_vec(&x, &mut resid);
            let mut worst = 0.0f64;
            for p in 0..m {
                resid[p] = rhs[p] - resid[p];
                worst = worst.max(resid[p].abs());
            }
            if worst / dt <= cfg.tolerance {
                break;
            }
            if sweeps >= cfg.max_iterations {
                return Err(Error::LinearSolve(format!(
                    "scheme residual {:e} above tolerance {:e} at step {k}",
                    worst / dt,
                    cfg.tolerance
                )));
            }
            factor.solve_in_place(&mut resid);
            x.iter_mut().zip(&resid).for_each(|(xi, ri)| *xi += ri);
            sweeps += 1;
        }

        let start = values.len();
        values.extend_from_slice(g_next);
        for (p, &idx) in interior.nodes.iter().enumerate() {
            values[start + idx] = x[p];
        }
    }
    SpaceTimeField::new(*grid, values)
}

/// Discrete `L_f u = du/dt - (1/2) Lap u + f u` with the solver's stencils.
///
/// Level `k >= 1` holds the theta-weighted residual between levels `k-1`
/// and `k`; level 0 and lateral boundary nodes are set to zero.
pub fn apply_operator(f: &AbsorptionField, u: &SpaceTimeField, cfg: &SchemeConfig) -> Result<SpaceTimeField> {
    let grid = u.grid();
    if f.grid() != grid {
        return Err(Error::InvalidParameter("absorption and field grids disagree".into()));
    }
    let interior = Interior::new(*grid);
    let m = interior.nodes.len();
    let n_s = grid.n_space();
    let (theta, dt) = (cfg.theta, grid.dt());
    let mut out = vec![0.0; n_s * grid.n_t()];
    let mut a_prev = vec![0.0; m];
    let mut a_next = vec![0.0; m];
    interior.apply_a(f.values(), u.level(0), &mut a_prev);
    for k in 1..grid.n_t() {
        interior.apply_a(f.values(), u.level(k), &mut a_next);
        for (p, &idx) in interior.nodes.iter().enumerate() {
            out[k * n_s + idx] =
                (u.level(k)[idx] - u.level(k - 1)[idx]) / dt + theta * a_next[p] + (1.0 - theta) * a_prev[p];
        }
        std::mem::swap(&mut a_prev, &mut a_next);
    }
    SpaceTimeField::new(*grid, out)
}

/// Inverts the ratio identity `f = ((1/2) Lap - d/dt) u / u` at level `t_index`.
///
/// Uses the five-point Laplacian at level `t_index` and the central time
/// difference between its neighbours. Boundary nodes are stamped with 1.
pub fn recover_absorption(u: &SpaceTimeField, t_index: usize) -> Result<SpatialField> {
    let grid = *u.grid();
    if t_index < 1 || t_index + 2 > grid.n_t() {
        return Err(Error::InvalidParameter(format!(
            "t_index must lie in 1..={}, got {t_index}",
            grid.n_t().saturating_sub(2)
        )));
    }
    let level = u.level(t_index);
    if let Some((i, v)) = level.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::NonPositive(format!("u = {v} at node {i} of level {t_index}")));
    }
    let interior = Interior::new(grid);
    let h2 = grid.h().powi(2);
    let d = grid.dim() as f64;
    let (before, after) = (u.level(t_index - 1), u.level(t_index + 1));
    let mut out = vec![1.0; grid.n_space()];
    for &idx in &interior.nodes {
        let nb: f64 = interior.neighbours(idx).map(|j| level[j]).sum();
        let lap = (nb - 2.0 * d * level[idx]) / h2;
        let ut = (after[idx] - before[idx]) / (2.0 * grid.dt());
        out[idx] = (0.5 * lap - ut) / level[idx];
    }
    SpatialField::new(grid, out)
}

/// `G(Phi o F)`: solve with the link-mapped coefficient.
pub fn forward_map_g(
    big_f: &SpatialField,
    link: &LinkSpec,
    bd: &BoundaryData,
    grid: &Grid,
    cfg: &SchemeConfig,
) -> Result<SpaceTimeField> {
    solve_forward(&link_phi_field(big_f, link)?, bd, grid, cfg)
}
