use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpatialField};

/// Smooth cutoff `chi` built from nested boxes `K = {dist >= r_inner}` and
/// `K' = {dist >= r_outer}`: `chi = 1` on `K` and `chi = 0` within
/// `r_outer / 2` of the boundary, with a `C^infty` transition in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec {
            r_inner: 0.2,
            r_outer: 0.1,
        }
    }
}

fn flat_ramp(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else {
        (-1.0 / tau).exp()
    }
}

/// Smooth step from 0 (`tau <= 0`) to 1 (`tau >= 1`) with all derivatives
/// vanishing at both ends.
pub fn smooth_step(tau: f64) -> f64 {
    let a = flat_ramp(tau);
    let b = flat_ramp(1.0 - tau);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

impl CutoffSpec {
    pub fn new(r_inner: f64, r_outer: f64) -> Result<Self> {
        let c = CutoffSpec { r_inner, r_outer };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.r_outer && self.r_outer < self.r_inner && self.r_inner < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "cutoff radii must satisfy 0 < r_outer < r_inner < 1/2, got {} and {}",
                self.r_outer, self.r_inner
            )));
        }
        Ok(())
    }

    fn axis_factor(&self, c: f64) -> f64 {
        let dist = c.min(1.0 - c);
        let lo = 0.5 * self.r_outer;
        smooth_step((dist - lo) / (self.r_inner - lo))
    }

    /// `chi(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&c| self.axis_factor(c)).product()
    }

    pub fn field(&self, grid: Grid) -> SpatialField {
        SpatialField::from_fn(grid, |x| self.value(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_support_and_plateau() {
        let c = CutoffSpec::default();
        let grid = Grid::new(2, 41, 2, 1.0).unwrap();
        let chi = c.field(grid);
        for idx in 0..grid.n_space() {
            let d = grid.boundary_distance(idx);
            let v = chi.values()[idx];
            assert!((0.0..=1.0).contains(&v));
            if d <= 0.05 {
                assert_eq!(v, 0.0);
            }
            if d >= 0.2 {
                assert_eq!(v, 1.0);
            }
        }
        assert!(CutoffSpec::new(0.1, 0.2).is_err());
        assert!(CutoffSpec::new(0.6, 0.2).is_err());
    }

    #[test]
    fn smooth_step_is_monotone() {
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = smooth_step(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
    }
}
