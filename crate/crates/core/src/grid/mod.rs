//! Tensor grids on the unit cube `(0,1)^d` and the cylinder `Q = (0,1)^d x (0,T)`.
//!
//! Spatial nodes are numbered with the first axis fastest; space-time
//! values are stored time-major, one full spatial level after another.

mod io;
mod norms;

pub use io::{load_spacetime, save_spacetime, FieldFormat};
pub use norms::{
    c0_norm, c2_norm, inner_l2_space, norm_dual_h2, norm_l2_space, norm_l2_spacetime,
    norm_parabolic_sobolev, sine_coefficients, sobolev_norm_discrete, spatial_derivative,
    spectral_norm, time_derivative,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretization of `Q = (0,1)^d x (0,T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    n_x: usize,
    n_t: usize,
    t_end: f64,
}

/// Serialized form of a [`Grid`]; validated on the way in. Missing keys
/// take the desk-scale values (`d = 1`, 65 x 65 nodes, `T = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub t_end: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            d: 1,
            n_x: 65,
            n_t: 65,
            t_end: 1.0,
        }
    }
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        Grid::new(s.d, s.n_x, s.n_t, s.t_end)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            d: g.dim,
            n_x: g.n_x,
            n_t: g.n_t,
            t_end: g.t_end,
        }
    }
}

impl Grid {
    /// `n_x` and `n_t` count nodes including the boundary and both time ends.
    pub fn new(dim: usize, n_x: usize, n_t: usize, t_end: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n_x < 3 {
            return Err(Error::InvalidParameter(format!("n_x must be >= 3, got {n_x}")));
        }
        if n_t < 2 {
            return Err(Error::InvalidParameter(format!("n_t must be >= 2, got {n_t}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidParameter(format!("time horizon must be positive, got {t_end}")));
        }
        Ok(Grid {
            dim,
            n_x,
            n_t,
            t_end,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n_x - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_end / (self.n_t - 1) as f64
    }

    /// Coordinate of node `i` along any spatial axis.
    pub fn x_coord(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn t_coord(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Number of spatial nodes, `n_x^d`.
    pub fn n_space(&self) -> usize {
        self.n_x.pow(self.dim as u32)
    }

    /// Number of interior spatial nodes, `(n_x - 2)^d`.
    pub fn n_interior(&self) -> usize {
        (self.n_x - 2).pow(self.dim as u32)
    }

    /// Volume of the space-time cylinder.
    pub fn volume(&self) -> f64 {
        self.t_end
    }

    /// Multi-index `[i, j]` of a flat spatial index (`j = 0` in one dimension).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n_x, idx / self.n_x]
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[0] + self.n_x * mi[1]
        }
    }

    /// Coordinates of a spatial node; unused axes are zero.
    pub fn node_coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = self.x_coord(mi[a]);
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|a| mi[a] == 0 || mi[a] == self.n_x - 1)
    }

    /// Distance of a spatial node to the boundary of the unit cube.
    pub fn boundary_distance(&self, idx: usize) -> f64 {
        let x = self.node_coords(idx);
        (0..self.dim)
            .map(|a| x[a].min(1.0 - x[a]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same grid with `h` and `dt` halved.
    pub fn refined(&self) -> Grid {
        Grid {
            dim: self.dim,
            n_x: 2 * self.n_x - 1,
            n_t: 2 * self.n_t - 1,
            t_end: self.t_end,
        }
    }

    /// Multilinear interpolation stencil for a point of the closed cylinder.
    pub fn stencil(&self, z: &Point) -> Result<Stencil> {
        self.check_point(z)?;
        let (ks, wt) = locate(z.t, self.t_end, self.n_t);
        let spatial = self.spatial_stencil(&z.x[..self.dim])?;
        let n_s = self.n_space();
        let mut st = Stencil::default();
        for (kt, w_t) in [(ks, 1.0 - wt), (ks + 1, wt)] {
            for c in 0..spatial.len {
                st.push(kt * n_s + spatial.indices[c], w_t * spatial.weights[c]);
            }
        }
        Ok(st)
    }

    /// Multilinear interpolation stencil over the spatial nodes.
    pub fn spatial_stencil(&self, x: &[f64]) -> Result<Stencil> {
        if x.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} spatial coordinates, got {}",
                self.dim,
                x.len()
            )));
        }
        for &c in x {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::OutOfDomain(format!("spatial coordinate {c} not in [0,1]")));
            }
        }
        let mut st = Stencil::default();
        let (i0, w0) = locate(x[0], 1.0, self.n_x);
        if self.dim == 1 {
            st.push(i0, 1.0 - w0);
            st.push(i0 + 1, w0);
        } else {
            let (j0, w1) = locate(x[1], 1.0, self.n_x);
            for (j, wj) in [(j0, 1.0 - w1), (j0 + 1, w1)] {
                for (i, wi) in [(i0, 1.0 - w0), (i0 + 1, w0)] {
                    st.push(i + self.n_x * j, wi * wj);
                }
            }
        }
        Ok(st)
    }

    fn check_point(&self, z: &Point) -> Result<()> {
        for a in 0..self.dim {
            if !(0.0..=1.0).contains(&z.x[a]) {
                return Err(Error::OutOfDomain(format!("x[{a}] = {} not in [0,1]", z.x[a])));
            }
        }
        if !(0.0..=self.t_end).contains(&z.t) {
            return Err(Error::OutOfDomain(format!("t = {} not in [0,{}]", z.t, self.t_end)));
        }
        Ok(())
    }
}

/// Cell index and local weight of `c` in `[0, len]` split into `n - 1` cells.
fn locate(c: f64, len: f64, n: usize) -> (usize, f64) {
    let s = c * (n - 1) as f64 / len;
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

/// Point `z = (x, t)` of the space-time cylinder. Unused spatial axes are zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: [f64; 2],
    pub t: f64,
}

impl Point {
    pub fn new(x: &[f64], t: f64) -> Self {
        let mut xs = [0.0; 2];
        xs[..x.len()].copy_from_slice(x);
        Point { x: xs, t }
    }

    pub fn new1(x: f64, t: f64) -> Self {
        Point { x: [x, 0.0], t }
    }

    pub fn new2(x1: f64, x2: f64, t: f64) -> Self {
        Point { x: [x1, x2], t }
    }

    /// True when the point lies in the open cylinder.
    pub fn is_interior(&self, grid: &Grid) -> bool {
        (0..grid.dim()).all(|a| self.x[a] > 0.0 && self.x[a] < 1.0) && self.t > 0.0 && self.t < grid.t_end()
    }
}

/// Precomputed multilinear interpolation weights (at most 8 corners).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stencil {
    indices: [usize; 8],
    weights: [f64; 8],
    len: usize,
}

impl Stencil {
    fn push(&mut self, idx: usize, w: f64) {
        self.indices[self.len] = idx;
        self.weights[self.len] = w;
        self.len += 1;
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        (0..self.len).map(|c| self.weights[c] * values[self.indices[c]]).sum()
    }
}

/// Real function sampled on the spatial nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_space() {
            return Err(Error::InvalidParameter(format!(
                "spatial field needs {} values, got {}",
                grid.n_space(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite nodal value {v}")));
        }
        Ok(SpatialField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        SpatialField {
            grid,
            values: vec![c; grid.n_space()],
        }
    }

    /// Samples `f(x)` at every node; `x` has `d` entries.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.n_space())
            .map(|idx| f(&grid.node_coords(idx)[..grid.dim()]))
            .collect();
        SpatialField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> SpatialField {
        self.map(|v| c * v)
    }

    /// `self - other`, nodally. Panics if the grids differ.
    pub fn sub(&self, other: &SpatialField) -> SpatialField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        SpatialField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &SpatialField) -> SpatialField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        SpatialField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute value over boundary nodes.
    pub fn boundary_max_abs(&self) -> f64 {
        (0..self.grid.n_space())
            .filter(|&i| self.grid.is_boundary(i))
            .fold(0.0, |m, i| m.max(self.values[i].abs()))
    }

    /// Multilinear interpolation at a spatial location.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.grid.spatial_stencil(x)?.apply(&self.values))
    }
}

/// Real function sampled on the space-time nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let n = grid.n_space() * grid.n_t();
        if values.len() != n {
            return Err(Error::InvalidParameter(format!(
                "space-time field needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite nodal value {v}")));
        }
        Ok(SpaceTimeField { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        SpaceTimeField {
            grid,
            values: vec![c; grid.n_space() * grid.n_t()],
        }
    }

    /// Samples `f(x, t)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let n_s = grid.n_space();
        let mut values = Vec::with_capacity(n_s * grid.n_t());
        for k in 0..grid.n_t() {
            let t = grid.t_coord(k);
            for idx in 0..n_s {
                values.push(f(&grid.node_coords(idx)[..grid.dim()], t));
            }
        }
        SpaceTimeField { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_space() * grid.n_t());
        SpaceTimeField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Nodal values at time level `k`.
    pub fn level(&self, k: usize) -> &[f64] {
        let n_s = self.grid.n_space();
        &self.values[k * n_s..(k + 1) * n_s]
    }

    pub fn level_field(&self, k: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: self.level(k).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &SpaceTimeField) -> SpaceTimeField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        SpaceTimeField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn interpolate(&self, z: &Point) -> Result<f64> {
        Ok(self.grid.stencil(z)?.apply(&self.values))
    }
}

/// Multilinear interpolation of `u` at `z` (linear per spatial axis and in time).
pub fn interpolate(u: &SpaceTimeField, z: &Point) -> Result<f64> {
    u.interpolate(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn build_grid_examples() {
        let g = Grid::new(1, 3, 2, 1.0).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.dt(), 1.0);

        let g = Grid::new(2, 5, 5, 1.0).unwrap();
        assert_eq!(g.n_space(), 25);
        assert_eq!(g.n_t(), 5);

        assert!(Grid::new(1, 2, 2, 1.0).is_err());
        assert!(Grid::new(3, 5, 5, 1.0).is_err());
        assert!(Grid::new(1, 5, 1, 1.0).is_err());
        assert!(Grid::new(1, 5, 5, 0.0).is_err());
    }

    #[test]
    fn coordinates_are_integer_multiples() {
        let g = Grid::new(2, 9, 5, 2.0).unwrap();
        for i in 0..9 {
            assert_eq!(g.x_coord(i), i as f64 * g.h());
        }
        assert_eq!(g.t_coord(4), 4.0 * 0.5);
        assert_eq!(g.node_coords(g.flat_index([3, 5])), [3.0 * 0.125, 5.0 * 0.125]);
    }

    #[test]
    fn interpolation_reproduces_constants() {
        let g = Grid::new(2, 7, 4, 1.5).unwrap();
        let u = SpaceTimeField::constant(g, 3.25);
        for z in [Point::new2(0.1, 0.93, 0.2), Point::new2(1.0, 0.0, 1.5), Point::new2(0.5, 0.5, 0.0)] {
            assert!((u.interpolate(&z).unwrap() - 3.25).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_hits_nodal_values() {
        let g = Grid::new(1, 11, 6, 1.0).unwrap();
        let u = SpaceTimeField::from_fn(g, |x, t| (3.0 * x[0]).sin() + t * t);
        for k in 0..6 {
            for i in 0..11 {
                let z = Point::new1(g.x_coord(i), g.t_coord(k));
                let exact = u.values()[k * 11 + i];
                assert!((u.interpolate(&z).unwrap() - exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn out_of_domain_points_are_rejected() {
        let g = Grid::new(1, 5, 5, 1.0).unwrap();
        let u = SpaceTimeField::constant(g, 1.0);
        assert!(matches!(u.interpolate(&Point::new1(1.01, 0.5)), Err(Error::OutOfDomain(_))));
        assert!(matches!(u.interpolate(&Point::new1(0.5, -0.1)), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn grid_roundtrips_through_json() {
        let g = Grid::new(2, 9, 17, 0.5).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<Grid>(&s).unwrap(), g);
        assert!(serde_json::from_str::<Grid>(r#"{"d":1,"n_x":2,"n_t":3,"t_end":1.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_exact_on_multilinear(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -2.0..2.0f64,
                                              x in 0.0..=1.0f64, y in 0.0..=1.0f64, t in 0.0..=2.0f64) {
            let g1 = Grid::new(1, 9, 7, 2.0).unwrap();
            let u = SpaceTimeField::from_fn(g1, |xs, t| a * xs[0] + b * t + c);
            let v = u.interpolate(&Point::new1(x, t)).unwrap();
            prop_assert!((v - (a * x + b * t + c)).abs() < 1e-12);

            let g2 = Grid::new(2, 6, 5, 2.0).unwrap();
            let w = SpaceTimeField::from_fn(g2, |xs, t| a * xs[0] * xs[1] * t + b * xs[1] + c * t);
            let v = w.interpolate(&Point::new2(x, y, t)).unwrap();
            prop_assert!((v - (a * x * y * t + b * y + c * t)).abs() < 1e-12);
        }
    }
}
